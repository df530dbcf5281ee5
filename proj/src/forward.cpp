#include "bst/forward.hpp"

#include <algorithm>
#include <cmath>

#include "bst/errors.hpp"
#include "bst/radial.hpp"

namespace bst {

namespace {

void check_uniform(const std::vector<double>& a, const char* name) {
    if (a.size() < 2) throw InvalidArgument(std::string(name) + " axis needs at least 2 samples");
    double h = a[1] - a[0];
    if (!(h > 0.0)) throw InvalidArgument(std::string(name) + " axis must be strictly increasing");
    for (std::size_t i = 1; i < a.size(); ++i) {
        double d = a[i] - a[i - 1];
        if (!(d > 0.0) || std::abs(d - h) > 1e-9 * std::max(h, std::abs(a[i])))
            throw InvalidArgument(std::string(name) + " axis must be uniform");
    }
}

struct Grid2 {
    double q0, iq, x0, ix;
    std::size_t nq, nx;
    const double* v;

    explicit Grid2(const PhantomImage& f)
        : q0(f.q_axis[0]), iq(1.0 / f.dq()), x0(f.x1_axis[0]), ix(1.0 / f.dx()), nq(f.nq()), nx(f.nx()),
          v(f.values.data()) {}

    double operator()(double q, double x) const {
        double fq = (q - q0) * iq, fx = (x - x0) * ix;
        if (!(fq >= 0.0 && fx >= 0.0)) return 0.0;
        if (fq > static_cast<double>(nq - 1) || fx > static_cast<double>(nx - 1)) return 0.0;
        std::size_t i = std::min(static_cast<std::size_t>(fq), nq - 2);
        std::size_t j = std::min(static_cast<std::size_t>(fx), nx - 2);
        double a = fq - static_cast<double>(i), b = fx - static_cast<double>(j);
        const double* r0 = v + i * nx + j;
        const double* r1 = r0 + nx;
        return (1.0 - a) * ((1.0 - b) * r0[0] + b * r0[1]) + a * ((1.0 - b) * r1[0] + b * r1[1]);
    }
};

void check_resolution(double w, double dx) {
    if (2.0 * w < 2.0 * dx)
        throw ResolutionError("image x1 step " + std::to_string(dx) + " leaves fewer than 2 samples under a curve of half-width " +
                              std::to_string(w));
}

}  // namespace

PhantomImage::PhantomImage(std::vector<double> q, std::vector<double> x1, double x2_line)
    : q_axis(std::move(q)), x1_axis(std::move(x1)), x2(x2_line) {
    check_uniform(q_axis, "q");
    check_uniform(x1_axis, "x1");
    values.assign(q_axis.size() * x1_axis.size(), 0.0);
}

void PhantomImage::validate() const {
    check_uniform(q_axis, "q");
    check_uniform(x1_axis, "x1");
    if (values.size() != nq() * nx()) throw InvalidArgument("phantom: value count does not match axes");
    for (double v : values)
        if (!std::isfinite(v)) throw InvalidArgument("phantom: non-finite value");
}

double PhantomImage::sample(double q, double x1) const { return Grid2(*this)(q, x1); }

std::size_t curve_samples(double w, double dx, int density) {
    if (density < 1) throw InvalidArgument("quadrature density must be >= 1");
    double n = std::ceil(2.0 * w * density / dx);
    return std::max<std::size_t>(2, static_cast<std::size_t>(n));
}

Weighting physical_weighting(double x2, double eps) {
    PhysicalWeight pw{x2, eps};
    Weighting W;
    W.w2 = [pw](double t) { return pw.value(t); };
    W.dw2 = [pw](double t) { return pw.derivative(t); };
    return W;
}

Weighting unit_weighting() {
    Weighting W;
    W.w2 = [](double) { return 1.0; };
    W.dw2 = [](double) { return 0.0; };
    return W;
}

SinogramTensor forward_curve(const PhantomImage& f, const std::vector<double>& energies, const std::vector<double>& s1,
                             const std::function<double(double)>& q1, double w, const Weighting& W,
                             const ForwardOptions& opt) {
    f.validate();
    check_resolution(w, f.dx());
    if (!W.w1.empty() && W.w1.size() != energies.size())
        throw InvalidArgument("forward: W1 table length differs from the energy grid");
    std::size_t M = curve_samples(w, f.dx(), opt.density);
    double dt = 2.0 * w / static_cast<double>(M);
    std::vector<double> t(M), q1k(M), wk(M);
    for (std::size_t k = 0; k < M; ++k) {
        t[k] = -w + (static_cast<double>(k) + 0.5) * dt;
        q1k[k] = q1(std::abs(t[k]));
        wk[k] = W.w2(std::abs(t[k])) * dt;
    }
    SinogramTensor out;
    out.energies = energies;
    out.s1 = s1;
    out.x2 = f.x2;
    out.values.assign(energies.size() * s1.size(), 0.0);
    Grid2 G(f);
    const long ne = static_cast<long>(energies.size()), ns = static_cast<long>(s1.size());
#pragma omp parallel for collapse(2) schedule(static)
    for (long e = 0; e < ne; ++e)
        for (long s = 0; s < ns; ++s) {
            double E = energies[e], s0 = s1[s], sum = 0.0;
            for (std::size_t k = 0; k < M; ++k) sum += wk[k] * G(E * q1k[k], s0 + t[k]);
            out.values[e * ns + s] = W.W1(e) * sum;
        }
    return out;
}

namespace {

SinogramTensor forward_family(const PhantomImage& f, const ScanGeometry& g, bool offset, const Weighting* W,
                              const ForwardOptions& opt) {
    g.validate();
    double x2 = f.x2;
    double w = g.w(x2), eps = g.eps(x2);
    CurveFamily fam(x2, offset ? eps : 0.0, w);
    Weighting phys = physical_weighting(x2, eps);
    const Weighting& use = W ? *W : phys;
    auto q1 = [&fam](double t) { return fam.q1(t); };
    SinogramTensor out = forward_curve(f, g.energies, g.sources_s1, q1, w, use, opt);
    out.eps = eps;
    out.geometry_id = offset ? "offset" : "restricted";
    return out;
}

}  // namespace

SinogramTensor forward_restricted(const PhantomImage& f, const ScanGeometry& g, const Weighting* W,
                                  const ForwardOptions& opt) {
    return forward_family(f, g, false, W, opt);
}

SinogramTensor forward_offset(const PhantomImage& f, const ScanGeometry& g, const Weighting* W,
                              const ForwardOptions& opt) {
    return forward_family(f, g, true, W, opt);
}

SinogramTensor forward_full(const PhantomImage& f, const ScanGeometry& g, const std::vector<double>& I0,
                            const ForwardOptions& opt) {
    g.validate();
    f.validate();
    double x2 = f.x2, w = g.w(x2), eps = g.eps(x2);
    check_resolution(w, f.dx());
    if (!I0.empty() && I0.size() != g.energies.size())
        throw InvalidArgument("forward_full: source spectrum length differs from the energy grid");
    std::size_t M = curve_samples(w, f.dx(), opt.density);
    double dt = 2.0 * w / static_cast<double>(M);
    SinogramTensor out;
    out.energies = g.energies;
    out.s1 = g.sources_s1;
    out.d1 = g.detectors_d1;
    out.x2 = x2;
    out.eps = eps;
    out.geometry_id = "full";
    const long ne = static_cast<long>(g.energies.size()), ns = static_cast<long>(g.sources_s1.size()),
               nd = static_cast<long>(g.detectors_d1.size());
    out.values.assign(static_cast<std::size_t>(ne * ns * nd), 0.0);
    Grid2 G(f);
#pragma omp parallel
    {
        std::vector<double> sk(M), wk(M), xk(M);
#pragma omp for collapse(2) schedule(static)
        for (long s = 0; s < ns; ++s)
            for (long d = 0; d < nd; ++d) {
                Vec3 S{g.sources_s1[s], -1.0, 0.0}, D{g.detectors_d1[d], 1.0, eps};
                for (std::size_t k = 0; k < M; ++k) {
                    double t = -w + (static_cast<double>(k) + 0.5) * dt;
                    Vec3 X{S.x + t, x2, 0.0};
                    double st = sin_bragg_3d(S, D, X);
                    double c = 1.0 - 2.0 * st * st;
                    double P = 0.5 * (1.0 + c * c);
                    double src = 1.0 / (t * t + (x2 + 1.0) * (x2 + 1.0));
                    sk[k] = st;
                    xk[k] = X.x;
                    wk[k] = src * P * solid_angle(X, D) * dt;
                }
                for (long e = 0; e < ne; ++e) {
                    double E = g.energies[e], sum = 0.0;
                    for (std::size_t k = 0; k < M; ++k) sum += wk[k] * G(E * sk[k], xk[k]);
                    out.values[(e * ns + s) * nd + d] = (I0.empty() ? 1.0 : I0[e]) * sum;
                }
            }
    }
    return out;
}

double GeneralCurve::c_top() const { return kind == Kind::increasing ? q1(w) : q1(0.0); }

double GeneralCurve::g(double z) const {
    double lo = 0.0, hi = w;
    double qa = q1(lo), qb = q1(hi);
    double zmin = std::min(qa, qb), zmax = std::max(qa, qb);
    double tol = 1e-12 * std::max(1.0, std::abs(zmax));
    if (z < zmin - tol || z > zmax + tol) throw DomainError("curve '" + name + "': z outside q1([0, w])");
    bool inc = kind == Kind::increasing;
    for (int i = 0; i < 60; ++i) {
        double mid = 0.5 * (lo + hi);
        bool below = inc ? q1(mid) < z : q1(mid) > z;
        (below ? lo : hi) = mid;
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 4; ++i) {
        double d = dq1(x);
        if (!std::isfinite(d) || d == 0.0) break;
        double xn = x - (q1(x) - z) / d;
        if (!(xn >= 0.0 && xn <= w)) break;
        x = xn;
    }
    return x;
}

double GeneralCurve::dg(double z) const { return 1.0 / dq1(g(z)); }

double GeneralCurve::d2g(double z) const {
    double x = g(z);
    double d = 1.0 / dq1(x);
    return -d2q1(x) * d * d * d;
}

void GeneralCurve::validate(double c1) const {
    if (!(w > 0.0)) throw InvalidCurve("curve '" + name + "': w must be positive");
    const int n = 400;
    if (kind == Kind::increasing) {
        if (std::abs(q1(0.0)) > 1e-14) throw InvalidCurve("curve '" + name + "': increasing curve needs q1(0) = 0");
        double a = c1 > 0.0 ? g(std::min(c1, c_top())) : 0.0;
        for (int i = 1; i <= n; ++i) {
            double t = a + (w - a) * i / n;
            if (!(dq1(t) > 0.0)) throw InvalidCurve("curve '" + name + "': q1' must be positive on [g(c1), w]");
        }
    } else {
        if (!(q1(0.0) > 0.0)) throw InvalidCurve("curve '" + name + "': decreasing curve needs q1(0) > 0");
        if (!(q1(w) < 0.0)) throw InvalidCurve("curve '" + name + "': decreasing curve needs w > g(0)");
        double b = c1 > 0.0 ? g(std::min(c1, c_top())) : w;
        for (int i = 0; i <= n; ++i) {
            double t = b * i / n;
            if (!(dq1(t) < 0.0)) throw InvalidCurve("curve '" + name + "': q1' must be negative on [0, g(c1)]");
        }
    }
}

std::vector<std::string> curve_names() {
    return {"t", "exp(t)-1", "sqrt(t)", "1-t", "1-sqrt(t+1/10)", "2-exp(t)"};
}

GeneralCurve make_curve(const std::string& name, double w) {
    GeneralCurve c;
    c.name = name;
    c.w = w;
    using K = GeneralCurve::Kind;
    if (name == "t") {
        c.kind = K::increasing;
        c.q1 = [](double t) { return t; };
        c.dq1 = [](double) { return 1.0; };
        c.d2q1 = [](double) { return 0.0; };
    } else if (name == "exp(t)-1") {
        c.kind = K::increasing;
        c.q1 = [](double t) { return std::expm1(t); };
        c.dq1 = [](double t) { return std::exp(t); };
        c.d2q1 = [](double t) { return std::exp(t); };
    } else if (name == "sqrt(t)") {
        c.kind = K::increasing;
        c.q1 = [](double t) { return std::sqrt(t); };
        c.dq1 = [](double t) { return 0.5 / std::sqrt(t); };
        c.d2q1 = [](double t) { return -0.25 / (t * std::sqrt(t)); };
    } else if (name == "1-t") {
        c.kind = K::decreasing;
        c.q1 = [](double t) { return 1.0 - t; };
        c.dq1 = [](double) { return -1.0; };
        c.d2q1 = [](double) { return 0.0; };
    } else if (name == "1-sqrt(t+1/10)") {
        c.kind = K::decreasing;
        c.q1 = [](double t) { return 1.0 - std::sqrt(t + 0.1); };
        c.dq1 = [](double t) { return -0.5 / std::sqrt(t + 0.1); };
        c.d2q1 = [](double t) { return 0.25 / ((t + 0.1) * std::sqrt(t + 0.1)); };
    } else if (name == "2-exp(t)") {
        c.kind = K::decreasing;
        c.q1 = [](double t) { return 2.0 - std::exp(t); };
        c.dq1 = [](double t) { return -std::exp(t); };
        c.d2q1 = [](double t) { return -std::exp(t); };
    } else {
        throw InvalidArgument("unknown curve family '" + name + "'");
    }
    return c;
}

SinogramTensor forward_general(const PhantomImage& f, const GeneralCurve& c, const std::vector<double>& energies,
                               const std::vector<double>& s, const Weighting& W, const ForwardOptions& opt) {
    c.validate();
    auto q1 = [&c](double t) { return c.q1(t); };
    SinogramTensor out = forward_curve(f, energies, s, q1, c.w, W, opt);
    out.geometry_id = "general:" + c.name;
    return out;
}

RadialSpectrum forward_general_radial(const RadialSpectrum& fhat, const GeneralCurve& c, int n,
                                      const std::vector<double>& energies, const Weighting& W, int samples) {
    if (n < 2 || n > 3) throw InvalidArgument("forward_general_radial: n must be 2 or 3");
    c.validate();
    check_uniform(fhat.q_axis, "q");
    const std::size_t nq = fhat.q_axis.size(), ne = fhat.eta.size();
    if (fhat.values.size() != nq * ne) throw InvalidArgument("forward_general_radial: value count mismatch");
    double q0 = fhat.q_axis[0], dq = fhat.q_axis[1] - fhat.q_axis[0];
    double dr = c.w / samples;
    std::vector<double> r(samples), wr(samples), q1r(samples);
    for (int k = 0; k < samples; ++k) {
        r[k] = (k + 0.5) * dr;
        wr[k] = W.w2(r[k]) * std::pow(r[k], n - 1) * dr;
        q1r[k] = c.q1(r[k]);
    }
    RadialSpectrum out;
    out.q_axis = energies;
    out.eta = fhat.eta;
    out.values.assign(energies.size() * ne, {0.0, 0.0});
    const long nel = static_cast<long>(ne);
#pragma omp parallel for schedule(dynamic)
    for (long j = 0; j < nel; ++j) {
        std::vector<double> J(samples);
        for (int k = 0; k < samples; ++k) J[k] = radial_J(n, fhat.eta[j] * r[k]);
        for (std::size_t e = 0; e < energies.size(); ++e) {
            std::complex<double> sum{0.0, 0.0};
            for (int k = 0; k < samples; ++k) {
                double fq = (energies[e] * q1r[k] - q0) / dq;
                if (fq < 0.0 || fq > static_cast<double>(nq - 1)) continue;
                std::size_t i = std::min(static_cast<std::size_t>(fq), nq - 2);
                double a = fq - static_cast<double>(i);
                auto v = (1.0 - a) * fhat.values[i * ne + j] + a * fhat.values[(i + 1) * ne + j];
                sum += wr[k] * J[k] * v;
            }
            out.values[e * ne + j] = W.W1(e) * sum;
        }
    }
    return out;
}

namespace reference {

SinogramTensor forward_curve(const PhantomImage& f, const std::vector<double>& energies,
                             const std::vector<double>& s1, const std::function<double(double)>& q1, double w,
                             const Weighting& W, const ForwardOptions& opt) {
    f.validate();
    check_resolution(w, f.dx());
    std::size_t M = curve_samples(w, f.dx(), opt.density);
    double dt = 2.0 * w / static_cast<double>(M);
    SinogramTensor out;
    out.energies = energies;
    out.s1 = s1;
    out.x2 = f.x2;
    out.values.assign(energies.size() * s1.size(), 0.0);
    for (std::size_t e = 0; e < energies.size(); ++e)
        for (std::size_t s = 0; s < s1.size(); ++s) {
            double sum = 0.0;
            for (std::size_t k = 0; k < M; ++k) {
                double t = -w + (static_cast<double>(k) + 0.5) * dt;
                sum += W.w2(std::abs(t)) * dt * f.sample(energies[e] * q1(std::abs(t)), s1[s] + t);
            }
            out.at(e, s) = W.W1(e) * sum;
        }
    return out;
}

SinogramTensor forward_full(const PhantomImage& f, const ScanGeometry& g, const std::vector<double>& I0,
                            const ForwardOptions& opt) {
    g.validate();
    f.validate();
    double x2 = f.x2, w = g.w(x2), eps = g.eps(x2);
    check_resolution(w, f.dx());
    std::size_t M = curve_samples(w, f.dx(), opt.density);
    double dt = 2.0 * w / static_cast<double>(M);
    SinogramTensor out;
    out.energies = g.energies;
    out.s1 = g.sources_s1;
    out.d1 = g.detectors_d1;
    out.x2 = x2;
    out.eps = eps;
    out.values.assign(out.ne() * out.ns() * out.nd(), 0.0);
    for (std::size_t e = 0; e < out.ne(); ++e)
        for (std::size_t s = 0; s < out.ns(); ++s)
            for (std::size_t d = 0; d < out.nd(); ++d) {
                Vec3 S{g.sources_s1[s], -1.0, 0.0}, D{g.detectors_d1[d], 1.0, eps};
                double sum = 0.0;
                for (std::size_t k = 0; k < M; ++k) {
                    double t = -w + (static_cast<double>(k) + 0.5) * dt;
                    Vec3 X{S.x + t, x2, 0.0};
                    double theta = bragg_angle_3d(S, D, X);
                    double src = 1.0 / ((X.x - S.x) * (X.x - S.x) + (x2 + 1.0) * (x2 + 1.0));
                    double P = 0.5 * (1.0 + std::cos(2.0 * theta) * std::cos(2.0 * theta));
                    sum += src * P * solid_angle(X, D) * f.sample(g.energies[e] * std::sin(theta), X.x) * dt;
                }
                out.at(e, s, d) = (I0.empty() ? 1.0 : I0[e]) * sum;
            }
    return out;
}

}  // namespace reference

}  // namespace bst
