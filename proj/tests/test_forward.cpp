#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bst/errors.hpp"
#include "bst/forward.hpp"
#include "gen.hpp"

using namespace bst;

namespace {

double bump(double q, double x, double q0, double x0, double sq, double sx) {
    double a = (q - q0) / sq, b = (x - x0) / sx;
    return std::exp(-0.5 * (a * a + b * b));
}

PhantomImage smooth_phantom(std::size_t nq, std::size_t nx, double xlim, double shift = 0.0) {
    PhantomImage f(gen::linspace(0.0, 1.0, nq), gen::linspace(-xlim, xlim, nx), 0.0);
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t j = 0; j < nx; ++j) {
            double q = f.q_axis[i], x = f.x1_axis[j];
            f.at(i, j) = bump(q, x, 0.4, 0.1 + shift, 0.08, 0.2) + 0.5 * bump(q, x, 0.6, -0.3 + shift, 0.06, 0.15);
        }
    return f;
}

ScanGeometry desk_geometry(double beta_deg, std::size_t ns, double slim, double eps = 0.0) {
    ScanGeometry g;
    g.beta = beta_deg * std::numbers::pi / 180;
    g.phi = {0.0, eps};
    g.sources_s1 = gen::linspace(-slim, slim, ns);
    g.detectors_d1 = g.sources_s1;
    g.energies = gen::linspace(0.3, 1.5, 13);
    return g;
}

double max_abs(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST_CASE("zero phantom gives zero data") {
    PhantomImage f(gen::linspace(0, 1, 32), gen::linspace(-1, 1, 64), 0.0);
    auto g = desk_geometry(40, 9, 0.8);
    CHECK(max_abs(forward_restricted(f, g).values) == 0.0);
    CHECK(max_abs(forward_full(f, g).values) == 0.0);
    RadialSpectrum z{gen::linspace(0, 1, 16), gen::linspace(0, 5, 8), {}};
    z.values.assign(16 * 8, {0.0, 0.0});
    auto r = forward_general_radial(z, make_curve("t", 0.5), 2, gen::linspace(0.1, 1, 10), unit_weighting());
    for (auto v : r.values) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("restricted transform matches a dense analytic oracle") {
    auto f = smooth_phantom(201, 401, 1.5);
    auto g = desk_geometry(40, 7, 0.6);
    auto D = forward_restricted(f, g);
    double x2 = 0.0, w = g.w(x2);
    CurveFamily fam(x2, 0.0, w);
    PhysicalWeight pw{x2, 0.0};
    double err = 0.0, ref = 0.0;
    for (std::size_t e = 0; e < g.energies.size(); ++e)
        for (std::size_t s = 0; s < g.sources_s1.size(); ++s) {
            const int M = 20000;
            double sum = 0.0, dt = 2 * w / M;
            for (int k = 0; k < M; ++k) {
                double t = -w + (k + 0.5) * dt;
                double q = g.energies[e] * fam.q1(t), x = g.sources_s1[s] + t;
                sum += pw.value(std::abs(t)) * dt *
                       (bump(q, x, 0.4, 0.1, 0.08, 0.2) + 0.5 * bump(q, x, 0.6, -0.3, 0.06, 0.15));
            }
            err = std::max(err, std::abs(sum - D.at(e, s)));
            ref = std::max(ref, std::abs(sum));
        }
    CHECK(err / ref < 2e-3);
}

TEST_CASE("serial reference and parallel kernels agree") {
    auto f = smooth_phantom(64, 96, 1.5);
    auto g = desk_geometry(60, 9, 0.5, 0.05);
    auto full = forward_full(f, g);
    auto ref = reference::forward_full(f, g);
    REQUIRE(full.values.size() == ref.values.size());
    for (std::size_t i = 0; i < full.values.size(); ++i)
        CHECK(full.values[i] == doctest::Approx(ref.values[i]).epsilon(1e-12));
    auto W = physical_weighting(0.0, 0.05);
    auto q1 = [](double t) { return t / std::sqrt(1 + t * t) / std::sqrt(2.0) + 0.3 * t * t; };
    auto a = forward_curve(f, g.energies, g.sources_s1, q1, 0.7, W);
    auto b = reference::forward_curve(f, g.energies, g.sources_s1, q1, 0.7, W);
    for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-12));
}

TEST_CASE("linearity (property)") {
    gen::Rng rng(23);
    auto g = desk_geometry(40, 9, 0.6, 0.03);
    std::vector<double> qa = gen::linspace(0, 1, 24), xa = gen::linspace(-1.2, 1.2, 48);
    for (int t = 0; t < 5; ++t) {
        PhantomImage A(qa, xa, 0.0), B(qa, xa, 0.0), C(qa, xa, 0.0);
        A.values = rng.vec(A.values.size(), 0, 1);
        B.values = rng.vec(B.values.size(), 0, 1);
        double al = rng.uniform(-2, 2), be = rng.uniform(-2, 2);
        for (std::size_t i = 0; i < C.values.size(); ++i) C.values[i] = al * A.values[i] + be * B.values[i];
        auto dA = forward_offset(A, g), dB = forward_offset(B, g), dC = forward_offset(C, g);
        double scale = max_abs(dC.values) + 1.0;
        for (std::size_t i = 0; i < dC.values.size(); ++i)
            CHECK(std::abs(dC.values[i] - al * dA.values[i] - be * dB.values[i]) < 1e-12 * scale);
    }
}

TEST_CASE("translation equivariance") {
    // shift by exactly 8 image columns = 2 source steps
    std::size_t nx = 161;
    double xlim = 2.0, dx = 2 * xlim / (nx - 1);
    auto f0 = smooth_phantom(64, nx, xlim, 0.0);
    auto f1 = smooth_phantom(64, nx, xlim, 8 * dx);
    ScanGeometry g = desk_geometry(40, 9, 4 * 4 * dx);
    g.sources_s1 = gen::linspace(-16 * dx, 16 * dx, 9);
    auto d0 = forward_restricted(f0, g), d1 = forward_restricted(f1, g);
    double m = max_abs(d0.values);
    for (std::size_t e = 0; e < d0.ne(); ++e)
        for (std::size_t s = 0; s + 2 < d0.ns(); ++s) CHECK(std::abs(d1.at(e, s + 2) - d0.at(e, s)) < 1e-3 * m);
}

TEST_CASE("offset transform: degeneracy, saddle and c_eps monotonicity") {
    auto f = smooth_phantom(64, 128, 1.5);
    auto g = desk_geometry(40, 9, 0.6, 0.0);
    auto a = forward_restricted(f, g), b = forward_offset(f, g);
    for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);

    // phantom supported at q < E q1(0)
    auto g2 = desk_geometry(40, 9, 0.6, 0.1);
    g2.energies = {2.0, 3.0};
    CurveFamily fam(0.0, 0.1, g2.w(0.0));
    double ceps = fam.c_eps();
    PhantomImage low(gen::linspace(0, 1, 200), gen::linspace(-1.5, 1.5, 128), 0.0);
    for (std::size_t i = 0; i < low.nq(); ++i)
        for (std::size_t j = 0; j < low.nx(); ++j)
            if (low.q_axis[i] < 0.9 * 2.0 * ceps) low.at(i, j) = 1.0;
    auto d = forward_offset(low, g2);
    CHECK(max_abs(d.values) == 0.0);

    double prev = -1;
    for (double eps = 0.0; eps < 0.2; eps += 0.01) {
        CurveFamily c(0.0, eps, 1.0);
        CHECK(c.c_eps() > prev);
        prev = c.c_eps();
    }
}

TEST_CASE("full transform slice d1 = s1 reproduces the offset transform") {
    auto f = smooth_phantom(96, 160, 1.5);
    auto g = desk_geometry(60, 7, 0.5, 0.04);
    auto full = forward_full(f, g);
    auto off = forward_offset(f, g);
    for (std::size_t e = 0; e < off.ne(); ++e)
        for (std::size_t s = 0; s < off.ns(); ++s)
            CHECK(full.at(e, s, s) == doctest::Approx(off.at(e, s)).epsilon(1e-10));
}

TEST_CASE("single voxel response follows the spectrum along q = E sin theta") {
    // a narrow column of constant-in-x material: response in E samples F(E q1)
    PhantomImage f(gen::linspace(0, 1, 400), gen::linspace(-1, 1, 201), 0.0);
    auto F = [](double q) { return std::exp(-std::pow((q - 0.45) / 0.05, 2)); };
    std::size_t j0 = 120;
    for (std::size_t i = 0; i < f.nq(); ++i) f.at(i, j0) = F(f.q_axis[i]);
    auto g = desk_geometry(40, 1, 0.0, 0.02);
    g.sources_s1 = {0.0};
    g.detectors_d1 = {0.1};
    g.energies = gen::linspace(0.5, 3.0, 11);
    auto d = forward_full(f, g);
    // pointwise oracle: the voxel sits at x = f.x1_axis[j0]; ratio of responses = ratio of F(E sin theta)
    Vec3 S{0, -1, 0}, D{0.1, 1, 0.02}, X{f.x1_axis[j0], 0, 0};
    double st = sin_bragg_3d(S, D, X);
    double r0 = d.at(0, 0, 0) / F(g.energies[0] * st);
    for (std::size_t e = 1; e < g.energies.size(); ++e) {
        double want = F(g.energies[e] * st);
        if (want < 1e-3) continue;
        CHECK(d.at(e, 0, 0) / want == doctest::Approx(r0).epsilon(2e-2));
    }
}

TEST_CASE("quadrature converges at second order and the operator stays bounded") {
    auto g = desk_geometry(40, 9, 0.6);
    double ratios[3];
    double prev_diff = 0.0;
    std::vector<double> prev;
    int k = 0;
    for (int density : {2, 4, 8, 16}) {
        auto f = smooth_phantom(128, 257, 1.5);
        auto d = forward_restricted(f, g, nullptr, {density});
        if (!prev.empty()) {
            double diff = 0;
            for (std::size_t i = 0; i < d.values.size(); ++i) diff = std::max(diff, std::abs(d.values[i] - prev[i]));
            if (prev_diff > 0) ratios[k++] = prev_diff / diff;
            prev_diff = diff;
        }
        prev = d.values;
    }
    // differences shrink about fourfold per halving
    CHECK(ratios[0] > 3.0);
    CHECK(ratios[1] > 3.0);

    // ||Bf|| / ||f|| under grid refinement
    std::vector<double> C;
    for (std::size_t n : {64, 128, 256}) {
        auto f = smooth_phantom(n, 2 * n, 1.5);
        auto d = forward_restricted(f, g);
        double nf = 0, nd = 0;
        for (double v : f.values) nf += v * v * f.dq() * f.dx();
        for (double v : d.values) nd += v * v;
        C.push_back(std::sqrt(nd / nf));
    }
    CHECK(C[2] == doctest::Approx(C[1]).epsilon(0.02));
    CHECK(C[1] == doctest::Approx(C[0]).epsilon(0.05));
}

TEST_CASE("general curves: convolution oracle and support") {
    // q1(t) = t, W = 1, f(q, x) = a(q) b(x): D(E, s) = int_{-w}^{w} a(E|t|) b(s + t) dt
    auto a = [](double q) { return std::exp(-std::pow((q - 0.5) / 0.1, 2)); };
    auto b = [](double x) { return std::exp(-x * x / 0.1); };
    PhantomImage f(gen::linspace(0, 1.2, 481), gen::linspace(-2, 2, 801), 0.0);
    for (std::size_t i = 0; i < f.nq(); ++i)
        for (std::size_t j = 0; j < f.nx(); ++j) f.at(i, j) = a(f.q_axis[i]) * b(f.x1_axis[j]);
    auto c = make_curve("t", 0.8);
    auto E = gen::linspace(0.7, 1.4, 8), s = gen::linspace(-0.5, 0.5, 5);
    auto D = forward_general(f, c, E, s, unit_weighting());
    for (std::size_t e = 0; e < E.size(); ++e)
        for (std::size_t k = 0; k < s.size(); ++k) {
            const int M = 40000;
            double sum = 0, dt = 1.6 / M;
            for (int i = 0; i < M; ++i) {
                double t = -0.8 + (i + 0.5) * dt;
                sum += a(E[e] * std::abs(t)) * b(s[k] + t) * dt;
            }
            CHECK(D.at(e, k) == doctest::Approx(sum).epsilon(2e-3));
        }

    // decreasing 1 - t with w = 1.5: curve samples below q = 0 contribute nothing
    auto dec = make_curve("1-t", 1.5);
    CHECK_NOTHROW(dec.validate());
    auto Dd = forward_general(f, dec, E, s, unit_weighting());
    for (std::size_t e = 0; e < E.size(); ++e) {
        const int M = 40000;
        double sum = 0, dt = 3.0 / M;
        for (int i = 0; i < M; ++i) {
            double t = -1.5 + (i + 0.5) * dt;
            double q = E[e] * (1 - std::abs(t));
            if (q >= 0) sum += a(q) * b(s[2] + t) * dt;
        }
        CHECK(Dd.at(e, 2) == doctest::Approx(sum).epsilon(2e-3));
    }
    CHECK_THROWS_AS(make_curve("1-t", 0.5).validate(), InvalidCurve);
    CHECK_THROWS_AS(make_curve("nope", 1.0), InvalidArgument);
}

TEST_CASE("resolution and shape errors") {
    PhantomImage f(gen::linspace(0, 1, 16), gen::linspace(-1, 1, 5), 0.0);
    auto g = desk_geometry(10, 3, 0.2);
    CHECK_THROWS_AS(forward_restricted(f, g), ResolutionError);
    CHECK_THROWS_AS(PhantomImage({0.0, 0.5, 0.7}, {0.0, 1.0}, 0.0).validate(), InvalidArgument);
}
