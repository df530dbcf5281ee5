#include "bst/volterra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "bst/errors.hpp"
#include "bst/radial.hpp"

namespace bst {

namespace {

double uniform_step(const std::vector<double>& v, const char* what) {
    if (v.size() < 2) throw InvalidArgument(std::string(what) + " grid needs at least 2 points");
    double h = (v.back() - v.front()) / static_cast<double>(v.size() - 1);
    if (!(h > 0.0)) throw InvalidArgument(std::string(what) + " grid must be increasing");
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i] - v[i - 1] - h) > 1e-9 * std::max(h, std::abs(v[i])))
            throw InvalidArgument(std::string(what) + " grid is not uniform");
    return h;
}

// Trapezoid on nodes j..i of a uniform grid; zero when i == j.
template <class F>
auto trapezoid(std::size_t j, std::size_t i, double h, F&& f) -> decltype(f(j)) {
    using T = decltype(f(j));
    if (i <= j) return T{};
    T s = 0.5 * (f(j) + f(i));
    for (std::size_t k = j + 1; k < i; ++k) s += f(k);
    return h * s;
}

// Second-order differences on a uniform grid, one-sided at the ends.
std::vector<cplx> derivative(const std::vector<cplx>& G, double h) {
    const std::size_t n = G.size();
    if (n < 3) throw InvalidArgument("E derivative needs at least 3 energies");
    std::vector<cplx> d(n);
    d[0] = (-3.0 * G[0] + 4.0 * G[1] - G[2]) / (2.0 * h);
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (G[i + 1] - G[i - 1]) / (2.0 * h);
    d[n - 1] = (3.0 * G[n - 1] - 4.0 * G[n - 2] + G[n - 3]) / (2.0 * h);
    return d;
}

double hermite(double x0, double h, const std::vector<double>& y, const std::vector<double>& dy, double x) {
    double t = (x - x0) / h;
    std::size_t k = std::min(static_cast<std::size_t>(std::max(t, 0.0)), y.size() - 2);
    double s = t - static_cast<double>(k);
    double s2 = s * s, s3 = s2 * s;
    double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    return h00 * y[k] + h10 * h * dy[k] + h01 * y[k + 1] + h11 * h * dy[k + 1];
}

}  // namespace

// ---------------------------------------------------------------- Volterra core

void VolterraProblem::validate() const {
    const std::size_t m = x.size();
    if (m < 2) throw InvalidArgument("Volterra problem needs at least 2 grid points");
    uniform_step(x, "Volterra");
    if (kernel.size() != m * m) throw InvalidArgument("Volterra kernel must be n x n");
    if (rhs.size() != m) throw InvalidArgument("Volterra rhs size mismatch");
    if (!std::isfinite(lambda)) throw DomainError("Volterra lambda is not finite");
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j <= i; ++j)
            if (!std::isfinite(K(i, j))) throw DomainError("Volterra kernel is not finite on the triangle");
}

VolterraSolution solve_forward_substitution(const VolterraProblem& p) {
    p.validate();
    const std::size_t m = p.n();
    const double h = p.h(), lam = p.lambda;
    VolterraSolution out;
    out.f.assign(m, {0.0, 0.0});
    out.f[0] = p.rhs[0];
    for (std::size_t i = 1; i < m; ++i) {
        cplx s = 0.5 * p.K(i, 0) * out.f[0];
        for (std::size_t j = 1; j < i; ++j) s += p.K(i, j) * out.f[j];
        double diag = 1.0 + 0.5 * lam * h * p.K(i, i);
        if (diag == 0.0) throw SingularityError("Volterra trapezoid system is singular");
        out.f[i] = (p.rhs[i] - lam * h * s) / diag;
    }
    out.residual = volterra_residual(p, out.f);
    return out;
}

double volterra_residual(const VolterraProblem& p, const std::vector<cplx>& f) {
    const std::size_t m = p.n();
    const double h = p.h();
    double r = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        cplx I = trapezoid(0, i, h, [&](std::size_t j) { return p.K(i, j) * f[j]; });
        r = std::max(r, std::abs(f[i] + p.lambda * I - p.rhs[i]));
    }
    return r;
}

namespace {

// Discrete integral operator (M f)_i = h sum_j w_ij K_ij f_j with trapezoid weights on [x_0, x_i].
double trap_weight(std::size_t i, std::size_t j) {
    if (i == 0) return 0.0;
    return (j == 0 || j == i) ? 0.5 : 1.0;
}

std::vector<double> operator_matrix(const VolterraProblem& p) {
    const std::size_t m = p.n();
    std::vector<double> M(m * m, 0.0);
    for (std::size_t i = 1; i < m; ++i)
        for (std::size_t j = 0; j <= i; ++j) M[i * m + j] = p.h() * trap_weight(i, j) * p.K(i, j);
    return M;
}

// (A B) for lower-triangular m x m matrices.
std::vector<double> lower_product(const std::vector<double>& A, const std::vector<double>& B, std::size_t m) {
    std::vector<double> C(m * m, 0.0);
    const long mm = static_cast<long>(m);
#pragma omp parallel for schedule(dynamic, 8)
    for (long i = 0; i < mm; ++i)
        for (long k = 0; k <= i; ++k) {
            double a = A[i * m + k];
            if (a == 0.0) continue;
            const double* b = &B[k * m];
            double* c = &C[i * m];
            for (long j = 0; j <= k; ++j) c[j] += a * b[j];
        }
    return C;
}

// Kernel samples whose trapezoid integral reproduces the matrix P.
std::vector<double> as_kernel(const std::vector<double>& P, const VolterraProblem& p) {
    const std::size_t m = p.n();
    std::vector<double> K(m * m, 0.0);
    for (std::size_t i = 1; i < m; ++i)
        for (std::size_t j = 0; j <= i; ++j) K[i * m + j] = P[i * m + j] / (p.h() * trap_weight(i, j));
    return K;
}

double sup_norm(const std::vector<double>& K, std::size_t m) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j <= i; ++j) s = std::max(s, std::abs(K[i * m + j]));
    return s;
}

struct NeumannRun {
    ResolventSeries series;
    std::vector<cplx> f;
};

// f = sum_l (-lambda)^l M^l g; M^l is the l-th iterated kernel under the trapezoid rule,
// so the series is the exact inverse of the system solved by forward substitution.
NeumannRun run_neumann(const VolterraProblem& p, double tol, int max_terms, bool keep_kernels) {
    p.validate();
    if (!(tol > 0.0)) throw InvalidArgument("Neumann tolerance must be positive");
    const std::size_t m = p.n();
    NeumannRun r;
    r.f = p.rhs;
    const std::vector<double> M = operator_matrix(p);
    std::vector<double> P = M;
    std::vector<cplx> t(m);
    double coef = 1.0;
    int small = 0;
    for (int l = 1; l <= max_terms; ++l) {
        coef *= -p.lambda;
        double mag = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            cplx s{0.0, 0.0};
            for (std::size_t j = 0; j <= i; ++j) s += P[i * m + j] * p.rhs[j];
            t[i] = coef * s;
            mag = std::max(mag, std::abs(t[i]));
        }
        for (std::size_t i = 0; i < m; ++i) r.f[i] += t[i];
        std::vector<double> Kl = as_kernel(P, p);
        r.series.sup_norms.push_back(sup_norm(Kl, m));
        r.series.truncation = l;
        r.series.tail_estimate = mag;
        if (keep_kernels) r.series.kernels.push_back(std::move(Kl));
        if (!std::isfinite(mag)) break;
        small = mag < tol ? small + 1 : 0;
        if (small >= 2) return r;
        if (l < max_terms) P = lower_product(M, P, m);
    }
    throw ConvergenceError("Neumann series not converged after " + std::to_string(r.series.truncation) +
                           " terms; tail estimate " + std::to_string(r.series.tail_estimate));
}

}  // namespace

ResolventSeries build_resolvent(const VolterraProblem& p, double tol, int max_terms) {
    return run_neumann(p, tol, max_terms, true).series;
}

VolterraSolution solve_neumann(const VolterraProblem& p, double tol, int max_terms) {
    NeumannRun r = run_neumann(p, tol, max_terms, false);
    VolterraSolution out;
    out.f = std::move(r.f);
    out.terms = r.series.truncation;
    out.tail_estimate = r.series.tail_estimate;
    out.residual = volterra_residual(p, out.f);
    return out;
}

double volterra_amplification(const VolterraProblem& p) {
    p.validate();
    const std::size_t m = p.n();
    const double h = p.h(), lam = p.lambda;
    // Row i of A^(-1) from X_i = (e_i - sum_{j<i} A_ij X_j) / A_ii.
    std::vector<double> A(m * m, 0.0), X(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < i; ++j) A[i * m + j] = lam * h * (j == 0 ? 0.5 : 1.0) * p.K(i, j);
        A[i * m + i] = i == 0 ? 1.0 : 1.0 + 0.5 * lam * h * p.K(i, i);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double d = A[i * m + i];
        if (d == 0.0) return std::numeric_limits<double>::infinity();
        double* xi = &X[i * m];
        xi[i] = 1.0;
        for (std::size_t j = 0; j < i; ++j) {
            double a = A[i * m + j];
            if (a == 0.0) continue;
            const double* xj = &X[j * m];
            for (std::size_t k = 0; k <= j; ++k) xi[k] -= a * xj[k];
        }
        double row = 0.0;
        for (std::size_t k = 0; k <= i; ++k) {
            xi[k] /= d;
            row += std::abs(xi[k]);
        }
        if (!std::isfinite(row)) return std::numeric_limits<double>::infinity();
        norm = std::max(norm, row);
    }
    return norm;
}

// ---------------------------------------------------------------- radial kernel

double RadialFreqKernel::value(double uu) const {
    double a = std::abs(uu);
    if (u.size() < 2 || a > u.back()) return radial_J(n, a);
    return hermite(u.front(), u[1] - u[0], J, dJ, a);
}

double RadialFreqKernel::derivative(double uu) const {
    double a = std::abs(uu);
    double d;
    if (u.size() < 2 || a > u.back()) {
        d = radial_dJ(n, a);
    } else {
        // Hermite in dJ, with J'' = -(n-1)/u J' - J from the radial ODE.
        double h = u[1] - u[0];
        double t = (a - u.front()) / h;
        std::size_t k = std::min(static_cast<std::size_t>(std::max(t, 0.0)), u.size() - 2);
        double s = t - static_cast<double>(k);
        auto d2 = [&](std::size_t i) { return u[i] == 0.0 ? -J[i] / n : -(n - 1) / u[i] * dJ[i] - J[i]; };
        double h00 = 2 * s * s * s - 3 * s * s + 1, h10 = s * s * s - 2 * s * s + s;
        double h01 = -2 * s * s * s + 3 * s * s, h11 = s * s * s - s * s;
        d = h00 * dJ[k] + h10 * h * d2(k) + h01 * dJ[k + 1] + h11 * h * d2(k + 1);
    }
    return uu < 0.0 ? -d : d;
}

RadialFreqKernel radial_freq_kernel(int n, const std::vector<double>& u_grid, double root_tol) {
    if (n < 2) throw InvalidArgument("radial_freq_kernel: n must be >= 2");
    uniform_step(u_grid, "u");
    if (u_grid.front() != 0.0) throw InvalidArgument("radial_freq_kernel: u grid must start at 0");
    RadialFreqKernel k;
    k.n = n;
    k.u = u_grid;
    k.J.resize(u_grid.size());
    k.dJ.resize(u_grid.size());
    const long m = static_cast<long>(u_grid.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < m; ++i) {
        k.J[i] = radial_J(n, u_grid[i]);
        k.dJ[i] = radial_dJ(n, u_grid[i]);
    }
    double J0 = k.J[0];
    bool in = false;
    double start = 0.0;
    for (std::size_t i = 0; i < u_grid.size(); ++i) {
        bool low = std::abs(k.J[i]) < root_tol * J0;
        if (low && !in) {
            start = u_grid[i];
            in = true;
        } else if (!low && in) {
            k.root_exclusion.emplace_back(start, u_grid[i - 1]);
            in = false;
        }
    }
    if (in) k.root_exclusion.emplace_back(start, u_grid.back());
    return k;
}

// ---------------------------------------------------------------- channel kernels

double ChannelCurve::L(double u) const {
    if (n == 1) return std::cos(u);
    return radial->value(u);
}

double ChannelCurve::dL(double u) const {
    if (n == 1) return -std::sin(u);
    return radial->derivative(u);
}

double ChannelCurve::Gamma(double z, double eta) const {
    double gz = g(z);
    double p = n == 1 ? 1.0 : std::pow(gz, n - 1);
    return sign * dg(z) * w2(gz) * L(eta * gz) * p;
}

double ChannelCurve::dGamma(double z, double eta) const {
    double gz = g(z), g1 = dg(z), g2 = d2g(z);
    double W = w2(gz), dW = dw2(gz), Lv = L(eta * gz), dLv = dL(eta * gz);
    double p = n == 1 ? 1.0 : std::pow(gz, n - 1);
    double dp = n == 1 ? 0.0 : (n - 1) * std::pow(gz, n - 2);
    return sign * (g2 * W * Lv * p + g1 * g1 * (dW * Lv * p + W * eta * dLv * p + W * Lv * dp));
}

double ChannelCurve::boundary(double eta) const { return c_top * Gamma(c_top, eta); }

ChannelCurve bragg_channel(const CurveFamily& fam, const Weighting& W) {
    ChannelCurve c;
    c.n = 1;
    c.sign = 1.0;
    c.c_top = fam.c2();
    c.z_low = fam.c_eps();
    c.w = fam.w();
    c.g = [fam](double z) { return fam.g(z); };
    c.dg = [fam](double z) { return fam.dg(z); };
    c.d2g = [fam](double z) { return fam.d2g(z); };
    c.w2 = W.w2;
    c.dw2 = W.dw2;
    return c;
}

ChannelCurve general_channel(const GeneralCurve& gc, int n, const Weighting& W, const RadialFreqKernel* radial) {
    if (n < 1) throw InvalidArgument("general_channel: n must be >= 1");
    gc.validate();
    bool inc = gc.kind == GeneralCurve::Kind::increasing;
    if (!inc && n >= 2)
        throw InvalidCurve("curve '" + gc.name + "': decreasing curves have c(eta) = 0 for n >= 2");
    if (n >= 2 && (!radial || radial->n != n)) throw InvalidArgument("general_channel: radial kernel for n required");
    ChannelCurve c;
    c.n = n;
    c.sign = inc ? 1.0 : -1.0;
    c.c_top = gc.c_top();
    c.z_low = inc ? 0.0 : std::max(gc.q1(gc.w), 0.0);
    c.w = inc ? gc.w : 0.0;
    c.g = [gc](double z) { return gc.g(z); };
    c.dg = [gc](double z) { return gc.dg(z); };
    c.d2g = [gc](double z) { return gc.d2g(z); };
    c.w2 = W.w2;
    c.dw2 = W.dw2;
    c.radial = radial;
    return c;
}

namespace {

// Curve quantities on the triangle, independent of eta.
struct TriangleCache {
    std::size_t m = 0;
    std::vector<double> gz, g1, g2, W, dW, zE;  // zE = q / E^2
    double c_top = 1.0;

    TriangleCache(const std::vector<double>& E, const ChannelCurve& c) : m(E.size()), c_top(c.c_top) {
        gz.assign(m * m, 0.0);
        g1 = g2 = W = dW = zE = gz;
        const long mm = static_cast<long>(m);
#pragma omp parallel for schedule(dynamic, 4)
        for (long i = 0; i < mm; ++i)
            for (long j = 0; j <= i; ++j) {
                double q = c.c_top * E[j];
                double z = i == j ? c.c_top : q / E[i];
                std::size_t k = i * m + j;
                gz[k] = c.g(z);
                g1[k] = c.dg(z);
                g2[k] = c.d2g(z);
                W[k] = c.w2(gz[k]);
                dW[k] = c.dw2(gz[k]);
                zE[k] = q / (E[i] * E[i]);
            }
    }

    std::vector<double> kernel(const ChannelCurve& c, double eta) const {
        std::vector<double> K(m * m, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                std::size_t k = i * m + j;
                double u = eta * gz[k];
                double Lv = c.L(u), dLv = c.dL(u);
                double p = c.n == 1 ? 1.0 : std::pow(gz[k], c.n - 1);
                double dp = c.n == 1 ? 0.0 : (c.n - 1) * std::pow(gz[k], c.n - 2);
                double dG = c.sign * (g2[k] * W[k] * Lv * p +
                                      g1[k] * g1[k] * (dW[k] * Lv * p + W[k] * eta * dLv * p + W[k] * Lv * dp));
                K[k] = -zE[k] * dG;
            }
        return K;
    }
};

VolterraProblem assemble(const std::vector<double>& E, const std::vector<cplx>& G, const ChannelCurve& c,
                         const TriangleCache& cache, double eta, double cb) {
    VolterraProblem p;
    const std::size_t m = E.size();
    p.x.resize(m);
    for (std::size_t i = 0; i < m; ++i) p.x[i] = c.c_top * E[i];
    p.kernel = cache.kernel(c, eta);
    p.lambda = 1.0 / cb;
    std::vector<cplx> d = derivative(G, E[1] - E[0]);
    p.rhs.resize(m);
    for (std::size_t i = 0; i < m; ++i) p.rhs[i] = d[i] / cb;
    return p;
}

}  // namespace

VolterraProblem build_volterra(const std::vector<double>& energies, const std::vector<cplx>& G,
                               const ChannelCurve& curve, double eta, double root_tol) {
    uniform_step(energies, "energy");
    if (G.size() != energies.size()) throw InvalidArgument("build_volterra: data size mismatch");
    if (!(energies.front() > 0.0)) throw InvalidArgument("build_volterra: energies must be positive");
    if (curve.z_low > 0.0 && !(curve.c_top * energies.front() > curve.z_low * energies.back()))
        throw DesignInfeasible("build_volterra: lower curve limit reaches E_m; need c_eps E_M < c_top E_m");
    double cb = curve.boundary(eta);
    if (!std::isfinite(cb) || !(std::abs(cb) >= root_tol * std::abs(curve.boundary(0.0))))
        throw ExcludedFrequency("build_volterra: eta within root_tol of a zero of c(eta)");
    TriangleCache cache(energies, curve);
    return assemble(energies, G, curve, cache, eta, cb);
}

double kernel_bound(const ChannelCurve& c, double eta, double E_m, double E_M) {
    if (!(E_m > 0.0 && E_M > E_m)) throw InvalidArgument("kernel_bound: need 0 < E_m < E_M");
    double zlo = std::max(E_m / E_M, c.z_low), zhi = c.c_top;
    const int N = 4000;
    double sg2 = 0, sg1 = 0, sW = 0, sdW = 0, sL = 0, sdL = 0, sp = 0, sdp = 0;
    for (int i = 0; i <= N; ++i) {
        double z = zlo + (zhi - zlo) * i / N;
        double gz = c.g(z);
        sg2 = std::max(sg2, std::abs(c.d2g(z)));
        sg1 = std::max(sg1, std::abs(c.dg(z)));
        sW = std::max(sW, std::abs(c.w2(gz)));
        sdW = std::max(sdW, std::abs(c.dw2(gz)));
        sL = std::max(sL, std::abs(c.L(eta * gz)));
        sdL = std::max(sdL, std::abs(c.dL(eta * gz)));
        sp = std::max(sp, c.n == 1 ? 1.0 : std::pow(gz, c.n - 1));
        sdp = std::max(sdp, c.n == 1 ? 0.0 : (c.n - 1) * std::pow(gz, c.n - 2));
    }
    // q / E^2 <= c_top / E_min with E_min = E_m / c_top
    double pre = c.c_top * c.c_top / E_m;
    double inner = sg2 * sW * sL * sp + sg1 * sg1 * (sdW * sL * sp + sW * std::abs(eta) * sdL * sp + sW * sL * sdp);
    // grid sampling of the suprema; pad for what falls between samples
    return 1.01 * pre * inner;
}

// ---------------------------------------------------------------- inversion

std::string InversionReport::to_json() const {
    nlohmann::json j;
    nlohmann::json bands = nlohmann::json::array();
    for (const auto& b : excluded) bands.push_back({{"eta", b.eta}, {"reason", b.reason}});
    j["excluded_bands"] = bands;
    j["series_truncation_depth"] = truncation_depth;
    j["tail_estimates"] = tail_estimates;
    j["residuals"] = residuals;
    j["eta"] = eta;
    j["boundary_coefficient"] = boundary;
    std::vector<double> amp;
    for (double a : amplification) amp.push_back(std::isfinite(a) ? a : -1.0);
    j["amplification"] = amp;
    j["q_min"] = q_min;
    j["max_imag"] = max_imag;
    return j.dump(2);
}

namespace {

struct ChannelResult {
    std::vector<cplx> f;
    bool kept = false;
    std::string reason;
    double amp = 0.0, residual = 0.0, tail = 0.0;
    int terms = 0;
};

// Fill excluded channels along eta by linear interpolation; zero past the outermost retained.
void fill_excluded(RowSpectrum& spec, const std::vector<bool>& kept) {
    const std::size_t ne = spec.neta();
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < ne; ++j)
        if (kept[j]) idx.push_back(j);
    for (std::size_t j = 0; j < ne; ++j) {
        if (kept[j]) continue;
        auto it = std::lower_bound(idx.begin(), idx.end(), j);
        for (std::size_t r = 0; r < spec.nrows(); ++r) {
            if (it == idx.begin() || it == idx.end()) {
                spec.at(r, j) = 0.0;
                continue;
            }
            std::size_t b = *it, a = *(it - 1);
            double t = (spec.eta[j] - spec.eta[a]) / (spec.eta[b] - spec.eta[a]);
            spec.at(r, j) = (1.0 - t) * spec.at(r, a) + t * spec.at(r, b);
        }
    }
}

InversionResult invert_channels(const SinogramTensor& data, const ChannelCurve& c, const Weighting& W,
                                double kappa, const InvertOptions& opt) {
    if (data.nd() != 1) throw InvalidArgument("inversion expects (E, s) data");
    if (data.values.size() != data.ne() * data.ns()) throw InvalidArgument("data size does not match axes");
    uniform_step(data.energies, "energy");
    if (!(data.energies.front() > 0.0)) throw InvalidArgument("energies must be positive");
    if (!W.w1.empty() && W.w1.size() != data.ne()) throw InvalidArgument("W1 size does not match energies");

    std::size_t k0 = 0;
    while (k0 < data.ne() && c.c_top * data.energies[k0] < opt.q_min * (1.0 - 1e-12)) ++k0;
    if (data.ne() - k0 < 3) throw InvalidArgument("fewer than 3 energies above q_min / c_top");
    std::vector<double> E(data.energies.begin() + k0, data.energies.end());
    const std::size_t m = E.size();
    if (c.z_low > 0.0 && !(c.c_top * E.front() > c.z_low * E.back()))
        throw DesignInfeasible("lower curve limit reaches E_m: need c_eps E_M < c2 E_m");

    RowSpectrum D = fourier_rows(data.energies, data.s1, data.values);
    const std::size_t ne = D.neta();

    RowSpectrum F;
    F.rows.resize(m);
    for (std::size_t i = 0; i < m; ++i) F.rows[i] = c.c_top * E[i];
    F.eta = D.eta;
    F.s0 = D.s0;
    F.ds = D.ds;
    F.values.assign(m * ne, {0.0, 0.0});

    TriangleCache cache(E, c);
    const double c0 = c.boundary(0.0);
    if (!std::isfinite(c0) || c0 == 0.0) throw InversionImpossible("boundary coefficient vanishes at eta = 0");

    std::vector<ChannelResult> res(ne);
    const long nel = static_cast<long>(ne);
#pragma omp parallel for schedule(dynamic)
    for (long jj = 0; jj < nel; ++jj) {
        std::size_t j = static_cast<std::size_t>(jj);
        ChannelResult& r = res[j];
        double eta = D.eta[j];
        double cb = c.boundary(eta);
        if (!(std::abs(cb) >= opt.root_tol * std::abs(c0))) {
            r.reason = "root";
            continue;
        }
        std::vector<cplx> G(m);
        for (std::size_t i = 0; i < m; ++i)
            G[i] = E[i] * D.at(k0 + i, j) / (kappa * W.W1(k0 + i));
        VolterraProblem p = assemble(E, G, c, cache, eta, cb);
        r.amp = volterra_amplification(p);
        if (!(r.amp <= opt.cond_cap)) {
            r.reason = "conditioning";
            continue;
        }
        try {
            VolterraSolution s = opt.method == InvertOptions::Method::neumann
                                     ? solve_neumann(p, opt.tol, opt.max_terms)
                                     : solve_forward_substitution(p);
            r.f = std::move(s.f);
            r.residual = s.residual;
            r.terms = s.terms;
            r.tail = s.tail_estimate;
            r.kept = true;
        } catch (const ConvergenceError&) {
            r.reason = "convergence";
        }
    }

    InversionResult out;
    InversionReport& rep = out.report;
    rep.q_min = F.rows.front();
    rep.eta = D.eta;
    std::vector<bool> kept(ne);
    for (std::size_t j = 0; j < ne; ++j) {
        const ChannelResult& r = res[j];
        kept[j] = r.kept;
        rep.boundary.push_back(c.boundary(D.eta[j]));
        rep.amplification.push_back(r.amp);
        if (!r.kept) {
            rep.excluded.push_back({D.eta[j], r.reason});
            continue;
        }
        for (std::size_t i = 0; i < m; ++i) F.at(i, j) = r.f[i];
        rep.residuals.push_back(r.residual);
        if (opt.method == InvertOptions::Method::neumann) {
            rep.truncation_depth.push_back(r.terms);
            rep.tail_estimates.push_back(r.tail);
        }
    }
    if (rep.excluded.size() == ne) throw InversionImpossible("every frequency channel was excluded");
    fill_excluded(F, kept);

    out.image = PhantomImage(F.rows, data.s1, data.x2);
    out.image.values = inverse_fourier_rows(F, &rep.max_imag);
    out.spectrum = std::move(F);
    return out;
}

}  // namespace

InversionResult invert_bragg(const SinogramTensor& sino, const ScanGeometry& geom, const Weighting* W,
                             const InvertOptions& opt) {
    geom.validate();
    double x2 = sino.x2;
    double w = geom.w(x2), eps = geom.eps(x2);
    bool offset = opt.offset || sino.geometry_id == "offset";
    CurveFamily fam(x2, offset ? eps : 0.0, w);
    Weighting phys = physical_weighting(x2, eps);
    const Weighting& use = W ? *W : phys;
    InversionResult r = invert_channels(sino, bragg_channel(fam, use), use, 2.0, opt);
    r.image.provenance.push_back(offset ? "invert_bragg:offset" : "invert_bragg:restricted");
    return r;
}

InversionResult invert_general(const SinogramTensor& data, const GeneralCurve& curve, const Weighting& W,
                               const InvertOptions& opt) {
    InversionResult r = invert_channels(data, general_channel(curve, 1, W), W, 2.0, opt);
    r.image.provenance.push_back("invert_general:" + curve.name);
    return r;
}

RadialSpectrum invert_general_radial(const RadialSpectrum& data, const GeneralCurve& curve, int n,
                                     const std::vector<double>& energies, const Weighting& W,
                                     const InvertOptions& opt, InversionReport* report) {
    if (n < 2 || n > 3) throw InvalidArgument("invert_general_radial: n must be 2 or 3");
    if (data.values.size() != energies.size() * data.eta.size())
        throw InvalidArgument("invert_general_radial: value count mismatch");
    uniform_step(energies, "energy");
    double umax = 0.0;
    for (double e : data.eta) umax = std::max(umax, std::abs(e) * curve.w);
    std::vector<double> ug(static_cast<std::size_t>(umax / 0.01) + 3);
    for (std::size_t i = 0; i < ug.size(); ++i) ug[i] = 0.01 * static_cast<double>(i);
    RadialFreqKernel rk = radial_freq_kernel(n, ug, opt.root_tol);
    ChannelCurve c = general_channel(curve, n, W, &rk);

    std::size_t k0 = 0;
    while (k0 < energies.size() && c.c_top * energies[k0] < opt.q_min * (1.0 - 1e-12)) ++k0;
    if (energies.size() - k0 < 3) throw InvalidArgument("fewer than 3 energies above q_min / c_top");
    std::vector<double> E(energies.begin() + k0, energies.end());
    const std::size_t m = E.size(), ne = data.eta.size();
    TriangleCache cache(E, c);
    const double c0 = c.boundary(0.0);

    RadialSpectrum out;
    out.eta = data.eta;
    out.q_axis.resize(m);
    for (std::size_t i = 0; i < m; ++i) out.q_axis[i] = c.c_top * E[i];
    out.values.assign(m * ne, {0.0, 0.0});
    InversionReport rep;
    rep.q_min = out.q_axis.front();
    rep.eta = data.eta;
    for (std::size_t j = 0; j < ne; ++j) {
        double eta = data.eta[j];
        double cb = c.boundary(eta);
        rep.boundary.push_back(cb);
        if (!(std::abs(cb) >= opt.root_tol * std::abs(c0))) {
            rep.excluded.push_back({eta, "root"});
            rep.amplification.push_back(0.0);
            continue;
        }
        std::vector<cplx> G(m);
        for (std::size_t i = 0; i < m; ++i) G[i] = E[i] * data.values[(k0 + i) * ne + j] / W.W1(k0 + i);
        VolterraProblem p = assemble(E, G, c, cache, eta, cb);
        double amp = volterra_amplification(p);
        rep.amplification.push_back(amp);
        if (!(amp <= opt.cond_cap)) {
            rep.excluded.push_back({eta, "conditioning"});
            continue;
        }
        VolterraSolution s = opt.method == InvertOptions::Method::neumann ? solve_neumann(p, opt.tol, opt.max_terms)
                                                                          : solve_forward_substitution(p);
        rep.residuals.push_back(s.residual);
        for (std::size_t i = 0; i < m; ++i) out.values[i * ne + j] = s.f[i];
    }
    if (rep.excluded.size() == ne) throw InversionImpossible("every frequency channel was excluded");
    if (report) *report = std::move(rep);
    return out;
}

}  // namespace bst
