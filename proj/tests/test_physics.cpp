#include <doctest.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include "bst/errors.hpp"
#include "bst/physics.hpp"
#include "gen.hpp"

using namespace bst;

namespace {

CrystalCell cubic(double a0, std::vector<Atom> atoms) {
    CrystalCell c;
    c.system = LatticeSystem::cubic;
    c.a0 = a0;
    c.atoms = std::move(atoms);
    c.label = "test";
    return c;
}

std::vector<Atom> fcc(int Z, std::array<double, 3> off) {
    std::vector<Atom> out;
    for (auto p : std::vector<std::array<double, 3>>{{0, 0, 0}, {0.5, 0.5, 0}, {0.5, 0, 0.5}, {0, 0.5, 0.5}}) {
        Atom a;
        for (int i = 0; i < 3; ++i) a.frac[i] = std::fmod(p[i] + off[i], 1.0);
        a.Z = Z;
        out.push_back(a);
    }
    return out;
}

}  // namespace

TEST_CASE("d_spacing cubic and hexagonal") {
    auto c = cubic(10.0, {{{0, 0, 0}, 6}});
    CHECK(d_spacing(c, {1, 0, 0}) == doctest::Approx(10.0).epsilon(1e-15));
    // brute-force |H| oracle
    double n = std::sqrt(1.0 + 1.0 + 1.0);
    CHECK(d_spacing(c, {1, 1, 1}) == doctest::Approx(10.0 / n).epsilon(1e-14));
    CHECK(d_spacing(c, {1, 1, 1}) == doctest::Approx(5.7735026918962582).epsilon(1e-12));
    CHECK_THROWS_AS(d_spacing(c, {0, 0, 0}), InvalidArgument);

    CrystalCell h;
    h.system = LatticeSystem::hexagonal;
    h.a0 = 2.464;
    h.c0 = 6.711;
    h.atoms = {{{0, 0, 0.25}, 6}};
    // (0,0,2): c0/2 ; (1,0,0): a0 sqrt(3)/2
    CHECK(d_spacing(h, {0, 0, 2}) == doctest::Approx(6.711 / 2).epsilon(1e-14));
    CHECK(d_spacing(h, {1, 0, 0}) == doctest::Approx(2.464 * std::sqrt(3.0) / 2).epsilon(1e-14));
}

TEST_CASE("bragg_angle") {
    CHECK(*bragg_angle(1.0, 0.5) == doctest::Approx(std::numbers::pi / 2));
    // arcsin series oracle: x + x^3/6 + 3x^5/40 + 5x^7/112
    double x = 0.05;
    double series = x + x * x * x / 6 + 3 * std::pow(x, 5) / 40 + 5 * std::pow(x, 7) / 112;
    CHECK(*bragg_angle(1.0, 10.0) == doctest::Approx(series).epsilon(1e-12));
    CHECK_FALSE(bragg_angle(0.04, 10.0).has_value());
    CHECK_THROWS_AS(bragg_angle(0.0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(bragg_angle(1.0, -1.0), InvalidArgument);
}

TEST_CASE("structure factor examples") {
    auto one = cubic(3.0, {{{0, 0, 0}, 6}});
    auto F = structure_factor(one, {2, 1, 3}, 0.3);
    CHECK(F.real() == doctest::Approx(6.0));
    CHECK(std::abs(F.imag()) < 1e-14);

    auto bcc = cubic(3.0, {{{0, 0, 0}, 26}, {{0.5, 0.5, 0.5}, 26}});
    CHECK(std::abs(structure_factor(bcc, {1, 0, 0}, 0.2)) < 1e-12);

    // Cl at the FCC origin, Na shifted by (1/2,1/2,1/2): brute-force 8-term sum
    auto atoms = fcc(17, {0, 0, 0});
    auto na = fcc(11, {0.5, 0.5, 0.5});
    atoms.insert(atoms.end(), na.begin(), na.end());
    auto nacl = cubic(5.64, atoms);
    std::complex<double> oracle = 0;
    for (const auto& a : atoms) {
        double ph = -2 * std::numbers::pi * (a.frac[0] + a.frac[1] + a.frac[2]);
        oracle += double(a.Z) * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    auto F111 = structure_factor(nacl, {1, 1, 1}, 0.15);
    CHECK(F111.real() == doctest::Approx(4.0 * (17 - 11)).epsilon(1e-12));
    CHECK(std::abs(F111 - oracle) < 1e-12);
}

TEST_CASE("structure factor conjugate symmetry (property)") {
    gen::Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Atom> atoms;
        int na = 1 + static_cast<int>(rng.uniform(0, 6));
        for (int i = 0; i < na; ++i) atoms.push_back({{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)},
                                                      1 + static_cast<int>(rng.uniform(0, 30))});
        auto c = cubic(4.0, atoms);
        std::array<int, 3> H{static_cast<int>(rng.uniform(-4, 5)), static_cast<int>(rng.uniform(-4, 5)),
                             static_cast<int>(rng.uniform(1, 5))};
        std::array<int, 3> mH{-H[0], -H[1], -H[2]};
        auto a = structure_factor_signed(c, H, 0.2), b = structure_factor_signed(c, mH, 0.2);
        CHECK(std::abs(a - std::conj(b)) < 1e-10);
    }
}

TEST_CASE("build_spectrum simple cubic single peak") {
    auto sc = cubic(10.0, {{{0, 0, 0}, 6}});
    auto s = build_spectrum(sc, 0.06);
    REQUIRE(s.peaks.size() == 1);
    CHECK(s.peaks[0].q == doctest::Approx(0.05).epsilon(1e-12));
    CHECK_THROWS_AS(build_spectrum(sc, 0.04), EmptySpectrum);
    CHECK(s(0.05) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("diamond peaks follow the structure-factor oracle") {
    auto lib = MaterialLibrary::load_default();
    const auto& dia = lib.get("C-diamond");
    auto s = build_spectrum(dia, 1.0);
    // oracle: every H in N^3 with |H|^2 <= (2 a0 qmax)^2 and nonzero F
    std::vector<double> qs;
    int M = static_cast<int>(std::ceil(2 * dia.a0)) + 1;
    for (int h = 0; h <= M; ++h)
        for (int k = 0; k <= M; ++k)
            for (int l = 0; l <= M; ++l) {
                if (h + k + l == 0) continue;
                double q = std::sqrt(double(h * h + k * k + l * l)) / (2 * dia.a0);
                if (q > 1.0) continue;
                std::complex<double> F = 0;
                for (const auto& a : dia.atoms) {
                    double ph = -2 * std::numbers::pi * (h * a.frac[0] + k * a.frac[1] + l * a.frac[2]);
                    F += double(a.Z) * std::complex<double>(std::cos(ph), std::sin(ph));
                }
                if (std::norm(F) < 1e-12) continue;
                bool dup = false;
                for (double x : qs) dup |= std::abs(x - q) < 1e-9;
                if (!dup) qs.push_back(q);
            }
    std::sort(qs.begin(), qs.end());
    REQUIRE(s.peaks.size() == qs.size());
    for (std::size_t i = 0; i < qs.size(); ++i) CHECK(s.peaks[i].q == doctest::Approx(qs[i]).epsilon(1e-12));
    // (1,0,0) is absent
    CHECK(std::abs(s.peaks[0].q - 1.0 / (2 * dia.a0)) > 1e-3);
    CHECK(std::abs(structure_factor(dia, {1, 0, 0}, 0.1)) < 1e-10);
}

TEST_CASE("eval_spectrum examples") {
    MaterialSpectrum s;
    s.sigma2 = 1e-6;
    s.peaks = {{0.2, 1.0}};
    CHECK(eval_spectrum(s, 0.2) == doctest::Approx(1.0));
    CHECK(eval_spectrum(s, 0.2 + 10 * 1e-3) <= std::exp(-100.0) * 1.0000001);
    s.peaks = {{0.2, 1.0}, {0.4, 1.0}};
    CHECK(eval_spectrum(s, 0.3) == doctest::Approx(2 * std::exp(-0.01 / 1e-6)).epsilon(1e-6));
    CHECK(eval_spectrum(s, 0.3) < 1e-300);
}

TEST_CASE("spectrum invariants for the shipped materials (property)") {
    auto lib = MaterialLibrary::load_default();
    for (const auto& label : lib.labels()) {
        CAPTURE(label);
        auto s = build_spectrum(lib.get(label), 1.0);
        double mx = 0.0, mass = 0.0;
        const int N = 2000000;
        double h = 1.0 / N;
        for (int i = 0; i <= N; ++i) {
            double v = s(i * h);
            CHECK_MESSAGE(v >= 0.0, "negative value");
            mx = std::max(mx, v);
            mass += v * h;
        }
        CHECK(mx == doctest::Approx(1.0).epsilon(1e-6));
        for (std::size_t i = 1; i < s.peaks.size(); ++i) CHECK(s.peaks[i].q - s.peaks[i - 1].q > 1e-9);
        double expect = 0.0;
        for (const auto& p : s.peaks)
            if (p.q > 5e-3 && p.q < 1.0 - 5e-3) expect += p.amplitude * std::sqrt(s.sigma2 * std::numbers::pi);
        double edge = 0.0;
        for (const auto& p : s.peaks)
            if (!(p.q > 5e-3 && p.q < 1.0 - 5e-3)) edge += p.amplitude;
        if (edge == 0.0) CHECK(mass == doctest::Approx(expect).epsilon(1e-3));
        // Miller-set equivalence
        for (const auto& p : s.peaks) {
            double d = 1.0 / (2 * p.q);
            CHECK(bragg_angle(p.q * 1.000001, d).has_value());
            CHECK_FALSE(bragg_angle(p.q * 0.999999, d).has_value());
        }
    }
}

TEST_CASE("total cross-section identity") {
    MaterialSpectrum empty;
    auto [a, b] = total_cross_section_check(empty, 1.0);
    CHECK(a == 0.0);
    CHECK(b == 0.0);

    MaterialSpectrum one;
    one.sigma2 = 1e-6;
    one.peaks = {{0.3, 1.0}};
    auto [l1, r1] = total_cross_section_check(one, 1.0);
    CHECK(l1 == doctest::Approx(r1).epsilon(1e-6));
    auto [l2, r2] = total_cross_section_check(one, 0.2);
    CHECK(std::abs(l2) < 1e-12);
    CHECK(std::abs(r2) < 1e-12);

    auto lib = MaterialLibrary::load_default();
    auto s = build_spectrum(lib.get("NaCl"), 1.0);
    auto [l3, r3] = total_cross_section_check(s, 0.95);
    CHECK(l3 == doctest::Approx(r3).epsilon(1e-4));
}

TEST_CASE("form factor table and library errors") {
    FormFactor ff;
    ff.set_table(6, {{0.0, 6.0}, {1.0, 2.0}});
    CHECK(ff(6, 0.5) == doctest::Approx(4.0));
    CHECK(ff(8, 0.5) == doctest::Approx(8.0));
    auto lib = MaterialLibrary::load_default();
    CHECK(lib.contains("Al"));
    CHECK_THROWS_AS(lib.get("unobtainium"), ConfigError);
    CHECK_THROWS_AS(parse_cell_json(R"({"label":"x","lattice_system":"cubic","a0":-1,"atoms":[]})"), Error);
    CHECK(kev_to_inv_angstrom(12.4) == doctest::Approx(1.0));
}
