// Acceptance runner: one PASS/FAIL line per criterion.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include "bst/design.hpp"
#include "bst/errors.hpp"
#include "bst/radial.hpp"
#include "bst/recon.hpp"
#include "bst/volterra.hpp"
#include "gen.hpp"
#include "phantoms.hpp"

using namespace bst;

namespace {

constexpr double kDeg = std::numbers::pi / 180;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Fourth-order central difference.
double diff5(const std::function<double(double)>& f, double x, double h) {
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h);
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

const MaterialLibrary& lib() {
    static MaterialLibrary l = MaterialLibrary::load_default();
    return l;
}

Outcome geometry_identities() {
    gen::Rng rng(101);
    double rt = 0, eg = 0, eh = 0, eq = 0;
    for (int t = 0; t < 10000; ++t) {
        double x2 = rng.uniform(-0.95, 0.95), eps = rng.uniform(0, 0.1);
        double w = fan_half_width(120 * kDeg, x2);
        CurveFamily c(x2, eps, w);
        double x1 = rng.uniform(-w, w);
        rt = std::max(rt, std::abs(c.g(c.q1(x1)) - std::abs(x1)));

        // steps scale with the distance to the nearest singular point
        double z = rng.uniform(c.c_eps() + 1e-3, c.c2() - 1e-3);
        double hz = 1e-3 * std::min(z - c.c_eps(), c.c2() - z);
        eg = std::max(eg, rel(c.dg(z), diff5([&](double s) { return c.g(s); }, z, hz)));

        double x = rng.uniform(-w + 1e-3, w - 1e-3);
        double fd = diff5([&](double s) { return c.q1(s); }, x, 1e-3 * std::max(std::hypot(x, eps), 1e-3));
        eq = std::max(eq, std::abs(c.dq1(x) - fd) / std::max({std::abs(fd), std::abs(c.dq1(x)), 1e-8}));

        // h is closed form at eps = 0
        CurveFamily c0(x2, 0.0, w);
        double z0 = rng.uniform(1e-3, c0.c2() - 1e-3);
        double h0 = 1e-3 * std::min(z0, c0.c2() - z0);
        eh = std::max(eh, rel(c0.dh(z0), diff5([&](double s) { return c0.h(s); }, z0, h0)));
    }
    bool ok = rt < 1e-10 && eg < 1e-6 && eh < 1e-6 && eq < 1e-6;
    return {ok, fmt("round trip %.2e, g' %.2e, h' %.2e, q1' %.2e", rt, eg, eh, eq)};
}

Outcome expansion_identity() {
    gen::Rng rng(102);
    double worst = 0;
    for (int t = 0; t < 10000; ++t) {
        double x2 = rng.uniform(-0.95, 0.95), eps = rng.uniform(0, 0.1);
        double w = fan_half_width(120 * kDeg, x2);
        CurveFamily c(x2, eps, w);
        double x1 = rng.uniform(0.01, w);
        worst = std::max(worst, rel(c.P1_over_x1_expansion(x1), c.P1(x1) / x1));
    }
    return {worst < 1e-12, fmt("max relative difference %.2e over 1e4 points", worst)};
}

Outcome volterra_oracle() {
    VolterraProblem p;
    p.x = gen::linspace(0, 1, 1001);
    p.kernel.assign(p.n() * p.n(), 1.0);
    p.lambda = 1.0;
    p.rhs.assign(p.n(), {1.0, 0.0});
    const double tol = 1e-8;
    auto a = solve_forward_substitution(p);
    auto b = solve_neumann(p, tol);
    double ea = 0, eb = 0, d = 0;
    for (std::size_t i = 0; i < p.n(); ++i) {
        double ex = std::exp(-p.x[i]);
        ea = std::max(ea, std::abs(a.f[i] - ex));
        eb = std::max(eb, std::abs(b.f[i] - ex));
        d = std::max(d, std::abs(a.f[i] - b.f[i]));
    }
    bool ok = ea < 1e-4 && eb < 1e-4 && d < 10 * tol;
    return {ok, fmt("forward-substitution error %.2e, Neumann error %.2e, path gap %.2e (tol %g, %d terms)", ea, eb,
                    d, tol, b.terms)};
}

double bessel_j0(double u) {
    double sum = 0, term = 1;
    for (int k = 0; k < 80; ++k) {
        if (k > 0) term *= -(u * u / 4) / (double(k) * k);
        sum += term;
    }
    return sum;
}

Outcome bessel_identity() {
    const double pi = std::numbers::pi;
    double e2 = 0, e3 = 0;
    for (int i = 0; i <= 10000; ++i) {
        double u = 10.0 * i / 10000;
        e2 = std::max(e2, std::abs(radial_J(2, u) - 2 * pi * bessel_j0(u)));
        e3 = std::max(e3, std::abs(radial_J(3, u) - (u == 0 ? 4 * pi : 4 * pi * std::sin(u) / u)));
    }
    double e0 = std::abs(radial_J(2, 0.0) - 2 * pi);
    bool ok = e2 < 1e-8 && e3 < 1e-8 && e0 < 1e-12;
    return {ok, fmt("n=2 %.2e, n=3 %.2e, |J(0) - 2 pi| %.2e", e2, e3, e0)};
}

Outcome design() {
    std::string d;
    bool ok = true;
    for (auto [bdeg, mm] : {std::pair{40.0, 14.0}, std::pair{120.0, 41.0}}) {
        auto r = design_region(bdeg * kDeg, 1.0 / 20, 1.0, 41, 21);
        auto fit = fit_linear_phi(r);
        double top = 0;
        for (const auto& row : export_layout(fit.phi)) top = std::max(top, row.eps_mm);
        ok &= std::abs(top - mm) <= 1.0 && phi_feasible(fit.phi, r.beta, r.E_m, r.E_M);
        d += fmt("beta %g: %.2f mm (target %g); ", bdeg, top, mm);
    }
    bool scanner = phi_feasible(phi_from_scanner_slope(75.0 / 820), 120 * kDeg, 0.15, 1.0);
    ok &= scanner;
    d += fmt("Phi = (75/820) x2 %s", scanner ? "feasible" : "infeasible");
    return {ok, d};
}

Outcome analytic_roundtrip() {
    auto t0 = std::chrono::steady_clock::now();
    auto s = phantoms::bragg_roundtrip_setup(64);
    InvertOptions opt;
    opt.q_min = s.q_min;
    auto r = invert_bragg(s.data, s.geom, nullptr, opt);
    auto e = phantoms::retained_error(r, s.truth);
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {e.retained <= 0.05 && sec < 120,
            fmt("retained-band error %.4f, %zu bands flagged, %.1f s", e.retained, r.report.excluded.size(), sec)};
}

struct SweepRun {
    PhantomKind kind;
    ReconProblem problem;
    SweepResult sweep;
    double seconds = 0;
};

SweepRun run_sweep(PhantomKind kind, double c_avg, bool reduced) {
    SweepRun s{kind, make_problem(ReconGeometryConfig::desk(), kind, c_avg, 1, lib()), {}, 0};
    auto lambdas = reduced ? std::vector<double>{0.3, 1.0, 3.0} : default_lambda_grid();
    auto betas = reduced ? std::vector<double>{0.001, 0.1} : default_beta_grid();
    auto t0 = std::chrono::steady_clock::now();
    s.sweep = hyperparameter_sweep(s.problem.A, s.problem.counts, s.problem.truth, lambdas, betas);
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return s;
}

struct Sweeps {
    bool reduced = false;
    std::unique_ptr<SweepRun> two, four;
    const SweepRun& get2() {
        if (!two) two = std::make_unique<SweepRun>(run_sweep(PhantomKind::two_sphere, 10.0, reduced));
        return *two;
    }
    const SweepRun& get4() {
        if (!four) four = std::make_unique<SweepRun>(run_sweep(PhantomKind::four_sphere, 1.0, reduced));
        return *four;
    }
};

Outcome reconstruction(Sweeps& sw) {
    const auto& a = sw.get2();
    const auto& b = sw.get4();
    double lo = 1e9, hi = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        double e = eps_ls(simulate_poisson(a.problem.A, a.problem.truth.values, 10.0, seed));
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    bool ok = a.sweep.mean_f1 >= 0.8 && b.sweep.mean_f1 >= 0.55 && lo >= 0.13 && hi <= 0.23 && a.seconds < 600 &&
              b.seconds < 600;
    return {ok, fmt("%s grid (%zu cells): 2-sphere F1 %.3f (%.0f s), 4-sphere F1 %.3f (%.0f s), eps_ls [%.3f, %.3f]",
                    sw.reduced ? "reduced" : "full", a.sweep.cells.size(), a.sweep.mean_f1, a.seconds,
                    b.sweep.mean_f1, b.seconds, lo, hi)};
}

Outcome solver_properties(Sweeps& sw) {
    int runs = 0, bad = 0;
    for (const SweepRun* s : {&sw.get2(), &sw.get4()})
        for (const auto& c : s->sweep.cells) {
            ++runs;
            bad += !(c.monotone && c.nonnegative);
        }

    gen::Rng rng(103);
    double tv = 0;
    for (double beta : {0.001, 0.01, 0.1})
        for (int t = 0; t < 5; ++t) {
            auto y = rng.vec(64, 0.0, 1.0);
            auto g = tv_beta_gradient(y, 8, 8, beta);
            for (std::size_t k = 0; k < y.size(); ++k) {
                const double h = 1e-6;
                auto yp = y, ym = y;
                yp[k] += h;
                ym[k] -= h;
                double fd = (tv_beta(yp, 8, 8, beta) - tv_beta(ym, 8, 8, beta)) / (2 * h);
                tv = std::max(tv, std::abs(fd - g[k]) / std::max(std::abs(g[k]), 1e-3));
            }
        }

    const auto& A = sw.get2().problem.A;
    auto y = rng.vec(A.cols, 0.0, 1.0), r = rng.vec(A.rows, -1.0, 1.0);
    auto Ay = A.apply(y), Atr = A.apply_transpose(r);
    double lhs = 0, rhs = 0;
    for (std::size_t k = 0; k < Ay.size(); ++k) lhs += Ay[k] * r[k];
    for (std::size_t k = 0; k < y.size(); ++k) rhs += y[k] * Atr[k];
    double adj = std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs));

    bool ok = bad == 0 && tv < 1e-5 && adj < 1e-10;
    return {ok, fmt("%d/%d sweep runs monotone and non-negative, TV gradient %.2e, adjoint %.2e", runs - bad, runs, tv,
                    adj)};
}

Outcome stability(Sweeps& sw) {
    std::vector<double> err;
    std::string d = "w ordering:";
    for (double w : {0.3, 1.0, std::sqrt(3.0)}) {
        auto s = phantoms::bragg_roundtrip_setup(64, 2 * std::atan(w) / kDeg, 3.0);
        double mx = 0;
        for (double v : s.data.values) mx = std::max(mx, std::abs(v));
        InvertOptions opt;
        opt.q_min = s.q_min;
        opt.cond_cap = 1e3;
        std::mt19937_64 eng(5);
        std::normal_distribution<double> N(0, 1);
        double sum = 0;
        for (int k = 0; k < 10; ++k) {
            auto data = s.data;
            for (auto& v : data.values) v += 1e-4 * mx * N(eng);
            sum += phantoms::retained_error(invert_bragg(data, s.geom, nullptr, opt), s.truth).full;
        }
        err.push_back(sum / 10);
        d += fmt(" %.3f", err.back());
    }
    bool order = err[0] <= err[1] && err[1] <= err[2];

    const auto& s4 = sw.get4();
    auto cfg = ReconGeometryConfig::desk();
    auto be = peak_band_errors(s4.sweep.representative_image, s4.problem.truth,
                               phantom_spheres(PhantomKind::four_sphere), lib(), cfg.scan_line_mm);
    const auto& rep = s4.sweep.cells[s4.sweep.representative];
    d += fmt("; 4-sphere bands (lambda %g, beta %g): q<0.5 %.3f, q>0.5 %.3f", rep.lambda, rep.beta, be.low, be.high);
    return {order && be.high >= be.low, d};
}

Outcome generalized_curves() {
    bool ok = true;
    std::string d;
    for (const auto& [name, w] : phantoms::general_families()) {
        auto s = phantoms::general_roundtrip_setup(name, w, 128, 3.5, 0.1, 1.5);
        InvertOptions opt;
        opt.q_min = s.q_min;
        auto e = phantoms::retained_error(invert_general(s.data, s.curve, unit_weighting(), opt), s.truth);
        ok &= e.retained <= 0.05;
        d += fmt("%s %.4f; ", name.c_str(), e.retained);
    }
    // g(0) for the decreasing families
    int rejected = 0, tried = 0;
    for (auto [name, root] : {std::pair<std::string, double>{"1-t", 1.0}, {"1-sqrt(t+1/10)", 0.9},
                              {"2-exp(t)", std::log(2.0)}})
        for (double w : {0.25 * root, 0.5 * root, root}) {
            ++tried;
            try {
                general_channel(make_curve(name, w), 1, unit_weighting());
            } catch (const InvalidCurve&) {
                ++rejected;
            }
        }
    ok &= rejected == tried;
    d += fmt("rejected %d/%d with w <= g(0)", rejected, tried);
    return {ok, d};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    Sweeps sw;
    std::vector<int> only;
    app.add_flag("--reduced", sw.reduced, "6-cell lambda/beta grid instead of the full grid");
    app.add_option("--only", only, "criteria to run")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"geometry identities", geometry_identities},
        {"expansion identity", expansion_identity},
        {"Volterra oracle", volterra_oracle},
        {"Bessel identity", bessel_identity},
        {"design region", design},
        {"analytic round trip", analytic_roundtrip},
        {"reconstruction pipeline", [&] { return reconstruction(sw); }},
        {"solver properties", [&] { return solver_properties(sw); }},
        {"stability orderings", [&] { return stability(sw); }},
        {"generalized curves", generalized_curves},
    };
    std::set<int> pick(only.begin(), only.end());
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        int id = int(k) + 1;
        if (!pick.empty() && !pick.count(id)) continue;
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(),
                    o.detail.c_str(), sec);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
