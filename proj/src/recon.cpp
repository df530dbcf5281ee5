#include "bst/recon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "bst/errors.hpp"
#include "bst/rng.hpp"

namespace bst {

// ---- system matrix ----

std::size_t SystemMatrix::bytes() const {
    return row_ptr.size() * sizeof(std::size_t) + t_ptr.size() * sizeof(std::size_t) +
           (col.size() + t_row.size()) * sizeof(std::uint32_t) + (val.size() + t_val.size()) * sizeof(double);
}

std::vector<double> SystemMatrix::apply(const std::vector<double>& y) const {
    if (y.size() != cols) throw InvalidArgument("SystemMatrix::apply: vector length differs from column count");
    std::vector<double> out(rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < std::ptrdiff_t(rows); ++r) {
        double s = 0.0;
        for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += val[k] * y[col[k]];
        out[r] = s;
    }
    return out;
}

std::vector<double> SystemMatrix::apply_transpose(const std::vector<double>& v) const {
    if (v.size() != rows) throw InvalidArgument("SystemMatrix::apply_transpose: vector length differs from row count");
    std::vector<double> out(cols);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < std::ptrdiff_t(cols); ++c) {
        double s = 0.0;
        for (std::size_t k = t_ptr[c]; k < t_ptr[c + 1]; ++k) s += t_val[k] * v[t_row[k]];
        out[c] = s;
    }
    return out;
}

std::vector<double> SystemMatrix::column_sums() const { return apply_transpose(std::vector<double>(rows, 1.0)); }

void SystemMatrix::scale(double s) {
    for (double& v : val) v *= s;
    for (double& v : t_val) v *= s;
}

namespace {

void build_transpose(SystemMatrix& A) {
    A.t_ptr.assign(A.cols + 1, 0);
    for (auto c : A.col) ++A.t_ptr[c + 1];
    for (std::size_t c = 0; c < A.cols; ++c) A.t_ptr[c + 1] += A.t_ptr[c];
    A.t_row.resize(A.nnz());
    A.t_val.resize(A.nnz());
    std::vector<std::size_t> next(A.t_ptr.begin(), A.t_ptr.end() - 1);
    for (std::size_t r = 0; r < A.rows; ++r)
        for (std::size_t k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k) {
            std::size_t p = next[A.col[k]]++;
            A.t_row[p] = static_cast<std::uint32_t>(r);
            A.t_val[p] = A.val[k];
        }
}

std::vector<double> uniform_axis(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * double(i) / double(n - 1);
    return v;
}

}  // namespace

SystemMatrix assemble_matrix(const ScanGeometry& g, const std::vector<double>& q_axis,
                             const std::vector<double>& x1_axis, double x2, const AssemblyOptions& opt) {
    g.validate();
    PhantomImage axes(q_axis, x1_axis, x2);  // validates uniformity
    const double w = g.w(x2), eps = g.eps(x2);
    const double dx = axes.dx(), dq = axes.dq();
    if (w < dx) throw ResolutionError("assemble_matrix: fan half-width below one image column");
    if (!opt.I0.empty() && opt.I0.size() != g.energies.size())
        throw InvalidArgument("assemble_matrix: source spectrum length differs from the energy grid");
    const std::size_t M = curve_samples(w, dx, opt.density);
    const double dt = 2.0 * w / double(M);
    const std::size_t nq = q_axis.size(), nx = x1_axis.size(), ne = g.energies.size(), ns = g.sources_s1.size();
    const std::size_t nd = opt.offset_rows ? 1 : g.detectors_d1.size();
    if (nq * nx > std::numeric_limits<std::uint32_t>::max()) throw SizeLimit("assemble_matrix: image too large");

    // Upper bound on stored bytes: 4 stencil entries per in-image sample, before merging.
    const double x0 = x1_axis.front(), xl = x1_axis.back(), q0 = q_axis.front();
    double est_entries = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
        double lo = std::max(g.sources_s1[s] - w, x0), hi = std::min(g.sources_s1[s] + w, xl);
        double n_in = hi > lo ? std::ceil((hi - lo) / dt) + 1 : 0.0;
        est_entries += double(nd * ne) * std::min(4.0 * n_in, double(nq * nx));
    }
    double est_bytes = est_entries * 2.0 * (sizeof(double) + sizeof(std::uint32_t));
    if (est_bytes > double(opt.max_bytes)) {
        std::ostringstream os;
        os << "assemble_matrix: estimated " << est_bytes / (1 << 20) << " MiB for " << ne * ns * nd << " rows x "
           << nq * nx << " columns exceeds the cap of " << double(opt.max_bytes) / (1 << 20) << " MiB";
        throw SizeLimit(os.str());
    }

    SystemMatrix A;
    A.rows = ne * ns * nd;
    A.cols = nq * nx;
    A.nq = nq;
    A.nx = nx;
    A.geometry_id = opt.offset_rows ? "offset" : "full";
    A.density = opt.density;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(A.rows);
    const double iq = 1.0 / dq, ix = 1.0 / dx;

#pragma omp parallel
    {
        std::vector<double> sk(M), wk(M), xk(M);
        std::vector<double> acc(A.cols, 0.0);
        std::vector<std::uint32_t> touched;
#pragma omp for collapse(2) schedule(dynamic)
        for (std::ptrdiff_t s = 0; s < std::ptrdiff_t(ns); ++s)
            for (std::ptrdiff_t d = 0; d < std::ptrdiff_t(nd); ++d) {
                double d1 = opt.offset_rows ? g.sources_s1[s] : g.detectors_d1[d];
                Vec3 S{g.sources_s1[s], -1.0, 0.0}, D{d1, 1.0, eps};
                for (std::size_t k = 0; k < M; ++k) {
                    double t = -w + (double(k) + 0.5) * dt;
                    Vec3 X{S.x + t, x2, 0.0};
                    double st = sin_bragg_3d(S, D, X);
                    double c = 1.0 - 2.0 * st * st;
                    double P = 0.5 * (1.0 + c * c);
                    double src = 1.0 / (t * t + (x2 + 1.0) * (x2 + 1.0));
                    sk[k] = st;
                    xk[k] = X.x;
                    wk[k] = src * P * solid_angle(X, D) * dt;
                }
                for (std::size_t e = 0; e < ne; ++e) {
                    double E = g.energies[e], I = opt.I0.empty() ? 1.0 : opt.I0[e];
                    touched.clear();
                    auto add = [&](std::size_t idx, double v) {
                        if (v == 0.0) return;
                        if (acc[idx] == 0.0) touched.push_back(static_cast<std::uint32_t>(idx));
                        acc[idx] += v;
                    };
                    // same stencil rules as PhantomImage::sample
                    for (std::size_t k = 0; k < M; ++k) {
                        double fq = (E * sk[k] - q0) * iq, fx = (xk[k] - x0) * ix;
                        if (!(fq >= 0.0 && fx >= 0.0)) continue;
                        if (fq > double(nq - 1) || fx > double(nx - 1)) continue;
                        std::size_t i = std::min(static_cast<std::size_t>(fq), nq - 2);
                        std::size_t j = std::min(static_cast<std::size_t>(fx), nx - 2);
                        double a = fq - double(i), b = fx - double(j), v = I * wk[k];
                        std::size_t p = i * nx + j;
                        add(p, v * (1 - a) * (1 - b));
                        add(p + 1, v * (1 - a) * b);
                        add(p + nx, v * a * (1 - b));
                        add(p + nx + 1, v * a * b);
                    }
                    std::sort(touched.begin(), touched.end());
                    auto& row = rows[(e * ns + s) * nd + d];
                    row.reserve(touched.size());
                    for (auto idx : touched) {
                        if (acc[idx] != 0.0) row.emplace_back(idx, acc[idx]);
                        acc[idx] = 0.0;
                    }
                }
            }
    }
    A.row_ptr.assign(A.rows + 1, 0);
    for (std::size_t r = 0; r < A.rows; ++r) A.row_ptr[r + 1] = A.row_ptr[r] + rows[r].size();
    A.col.resize(A.row_ptr.back());
    A.val.resize(A.row_ptr.back());
    for (std::size_t r = 0; r < A.rows; ++r) {
        std::size_t p = A.row_ptr[r];
        for (const auto& [c, v] : rows[r]) {
            A.col[p] = c;
            A.val[p++] = v;
        }
        std::vector<std::pair<std::uint32_t, double>>().swap(rows[r]);
    }
    build_transpose(A);
    return A;
}

// ---- geometry and phantoms ----

ReconGeometryConfig ReconGeometryConfig::desk() { return {}; }

ReconGeometryConfig ReconGeometryConfig::full_scale() {
    ReconGeometryConfig c;
    c.n_sources = 31;
    c.n_detectors = 600;
    c.detector_pitch_mm = 1.0;
    return c;
}

double scan_line_x2(const ReconGeometryConfig& c) { return 1.0 - c.scan_line_mm / kTunnelScaleMm; }

ScanGeometry recon_geometry(const ReconGeometryConfig& c) {
    if (c.n_sources < 1 || c.n_detectors < 1 || c.n_energies < 1) throw InvalidArgument("recon geometry: empty arrays");
    ScanGeometry g;
    g.beta = c.beta_deg * std::numbers::pi / 180.0;
    g.phi = {-c.eps_slope, c.eps_slope};  // eps = eps_slope T / scale = eps_slope (1 - x2)
    g.phi_bound = std::max(1.0, 2.0 * c.eps_slope);
    g.tunnel_scale = kTunnelScaleMm;
    double h = c.half_width_mm / kTunnelScaleMm;
    g.sources_s1 = uniform_axis(-h, h, c.n_sources);
    for (std::size_t k = 0; k < c.n_detectors; ++k)
        g.detectors_d1.push_back((-c.half_width_mm + c.detector_pitch_mm * (double(k) + 0.5)) / kTunnelScaleMm);
    for (std::size_t k = 1; k <= c.n_energies; ++k) g.energies.push_back(kev_to_inv_angstrom(double(k)));
    g.validate();
    return g;
}

std::vector<double> recon_q_axis(const ReconGeometryConfig& c) { return uniform_axis(0.0, c.q_max, c.nq); }

std::vector<double> recon_x1_axis(const ReconGeometryConfig& c) {
    double h = c.half_width_mm / kTunnelScaleMm;
    return uniform_axis(-h, h, c.nx);
}

PhantomKind parse_phantom_kind(const std::string& s) {
    if (s == "two_sphere" || s == "2-sphere" || s == "two-sphere") return PhantomKind::two_sphere;
    if (s == "four_sphere" || s == "4-sphere" || s == "four-sphere") return PhantomKind::four_sphere;
    throw ConfigError("unknown phantom '" + s + "' (two_sphere, four_sphere)");
}

std::string to_string(PhantomKind k) { return k == PhantomKind::two_sphere ? "two_sphere" : "four_sphere"; }

std::vector<Sphere> phantom_spheres(PhantomKind k) {
    if (k == PhantomKind::two_sphere) return {{"NaCl", -100.0, 410.0, 15.0}, {"C-diamond", 100.0, 410.0, 15.0}};
    return {{"Al", -160.0, 410.0, 20.0},
            {"NaCl", -60.0, 410.0, 20.0},
            {"C-graphite", 60.0, 410.0, 20.0},
            {"C-diamond", 160.0, 410.0, 20.0}};
}

namespace {

// Fraction of each x1 cell covered by [a, b].
std::vector<double> coverage(const std::vector<double>& x1, double a, double b) {
    double dx = x1[1] - x1[0];
    std::vector<double> c(x1.size());
    for (std::size_t j = 0; j < x1.size(); ++j) {
        double lo = std::max(a, x1[j] - 0.5 * dx), hi = std::min(b, x1[j] + 0.5 * dx);
        c[j] = hi > lo ? (hi - lo) / dx : 0.0;
    }
    return c;
}

struct Chord {
    double a = 0, b = 0;
    bool hit = false;
};

Chord sphere_chord(const Sphere& s, double scan_line_mm) {
    double d = scan_line_mm - s.T_mm;
    if (std::abs(d) >= s.r_mm) return {};
    double rho = std::sqrt(s.r_mm * s.r_mm - d * d);
    return {(s.x1_mm - rho) / kTunnelScaleMm, (s.x1_mm + rho) / kTunnelScaleMm, true};
}

std::vector<double> cell_spectrum(const MaterialSpectrum& sp, const std::vector<double>& q) {
    double dq = q[1] - q[0];
    std::vector<double> v(q.size());
    for (std::size_t i = 0; i < q.size(); ++i)
        v[i] = sp.cell_average(std::max(0.0, q[i] - 0.5 * dq), q[i] + 0.5 * dq);
    return v;
}

}  // namespace

PhantomImage build_phantom(const std::vector<Sphere>& spheres, double scan_line_mm, const std::vector<double>& q_axis,
                           const std::vector<double>& x1_axis, const MaterialLibrary& lib, std::string* warning) {
    PhantomImage f(q_axis, x1_axis, 1.0 - scan_line_mm / kTunnelScaleMm);
    double qmax = q_axis.back() + f.dq();
    bool any = false;
    for (const auto& s : spheres) {
        auto ch = sphere_chord(s, scan_line_mm);
        if (!ch.hit) continue;
        any = true;
        auto spec = cell_spectrum(build_spectrum(lib.get(s.material), qmax), q_axis);
        auto cov = coverage(x1_axis, ch.a, ch.b);
        for (std::size_t i = 0; i < f.nq(); ++i)
            for (std::size_t j = 0; j < f.nx(); ++j) f.at(i, j) += spec[i] * cov[j];
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s: x1 in [%.3f, %.3f] mm", s.material.c_str(), ch.a * kTunnelScaleMm,
                      ch.b * kTunnelScaleMm);
        f.provenance.push_back(buf);
    }
    if (!any) {
        if (warning) *warning = "scan line misses every sphere; phantom is empty";
        return f;
    }
    double mx = *std::max_element(f.values.begin(), f.values.end());
    if (mx > 0.0)
        for (double& v : f.values) v /= mx;
    return f;
}

PhantomImage build_phantom(PhantomKind kind, double scan_line_mm, const std::vector<double>& q_axis,
                           const std::vector<double>& x1_axis, const MaterialLibrary& lib, std::string* warning) {
    return build_phantom(phantom_spheres(kind), scan_line_mm, q_axis, x1_axis, lib, warning);
}

// ---- noise ----

NoisySinogram simulate_poisson(const SystemMatrix& A, const std::vector<double>& y, double c_avg, std::uint64_t seed) {
    if (!(c_avg > 0.0) || !std::isfinite(c_avg)) throw InvalidArgument("simulate_poisson: c_avg must be > 0");
    for (double v : y)
        if (!(v >= 0.0)) throw InvalidArgument("simulate_poisson: image must be non-negative");
    auto Ay = A.apply(y);
    double total = std::accumulate(Ay.begin(), Ay.end(), 0.0);
    if (!(total > 0.0)) throw DegenerateData("simulate_poisson: A y is identically zero");
    NoisySinogram n;
    n.c_avg = c_avg;
    n.seed = seed;
    n.scale = c_avg * double(A.rows) / total;
    n.mean.resize(A.rows);
    n.counts.resize(A.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < std::ptrdiff_t(A.rows); ++k) {
        n.mean[k] = n.scale * Ay[k];
        CounterRng rng(seed, std::uint64_t(k));
        n.counts[k] = rng.poisson(n.mean[k]);
    }
    return n;
}

double eps_ls(const NoisySinogram& s) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < s.mean.size(); ++k) {
        double d = double(s.counts[k]) - s.mean[k];
        num += d * d;
        den += s.mean[k] * s.mean[k];
    }
    if (!(den > 0.0)) throw DegenerateData("eps_ls: zero mean data");
    return std::sqrt(num / den);
}

// ---- TV objective and solver ----

void TVObjectiveConfig::validate() const {
    if (!(lambda > 0.0)) throw InvalidArgument("TV config: lambda must be > 0");
    if (!(beta_smooth > 0.0)) throw InvalidArgument("TV config: beta must be > 0");
    if (max_iters < 1) throw InvalidArgument("TV config: max_iters must be >= 1");
    if (!(lambda_scale > 0.0)) throw InvalidArgument("TV config: lambda_scale must be > 0");
    if (!(armijo > 0.0 && armijo < 1.0) || !(backtrack > 0.0 && backtrack < 1.0))
        throw InvalidArgument("TV config: line-search parameters must lie in (0, 1)");
}

double tv_beta(const std::vector<double>& y, std::size_t nq, std::size_t nx, double beta) {
    double s = 0.0, b2 = beta * beta;
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t j = 0; j < nx; ++j) {
            double v = y[i * nx + j];
            double a = i + 1 < nq ? y[(i + 1) * nx + j] - v : 0.0;
            double b = j + 1 < nx ? y[i * nx + j + 1] - v : 0.0;
            s += std::sqrt(a * a + b * b + b2);
        }
    return s;
}

std::vector<double> tv_beta_gradient(const std::vector<double>& y, std::size_t nq, std::size_t nx, double beta) {
    std::vector<double> g(y.size(), 0.0);
    double b2 = beta * beta;
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t j = 0; j < nx; ++j) {
            std::size_t p = i * nx + j;
            double v = y[p];
            double a = i + 1 < nq ? y[p + nx] - v : 0.0;
            double b = j + 1 < nx ? y[p + 1] - v : 0.0;
            double t = std::sqrt(a * a + b * b + b2);
            g[p] -= (a + b) / t;
            if (i + 1 < nq) g[p + nx] += a / t;
            if (j + 1 < nx) g[p + 1] += b / t;
        }
    return g;
}

namespace {

struct Eval {
    double F = 0.0;
    std::vector<double> Ay;
};

// sum (Ay - b log Ay) shifted by the constant sum (b log b - b), so it is ~0 near a fit and the
// line search keeps its precision at high counts.
double data_term(const std::vector<double>& Ay, const std::vector<double>& b, double floor) {
    double s = 0.0;
    for (std::size_t k = 0; k < Ay.size(); ++k) {
        if (b[k] != 0.0)
            s += Ay[k] - b[k] - b[k] * std::log(std::max(Ay[k], floor) / b[k]);
        else
            s += Ay[k];
    }
    return s;
}

Eval evaluate(const SystemMatrix& A, const std::vector<double>& b, const std::vector<double>& y, double lam,
              const TVObjectiveConfig& cfg) {
    Eval e;
    e.Ay = A.apply(y);
    e.F = data_term(e.Ay, b, cfg.log_floor) + lam * tv_beta(y, A.nq, A.nx, cfg.beta_smooth);
    return e;
}

std::vector<double> gradient(const SystemMatrix& A, const std::vector<double>& b, const std::vector<double>& y,
                             const std::vector<double>& Ay, double lam, const TVObjectiveConfig& cfg) {
    std::vector<double> r(Ay.size());
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = Ay[k] > cfg.log_floor ? 1.0 - b[k] / Ay[k] : 1.0;
    auto g = A.apply_transpose(r);
    auto t = tv_beta_gradient(y, A.nq, A.nx, cfg.beta_smooth);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += lam * t[j];
    return g;
}

double effective_lambda(const std::vector<double>& b, std::size_t n, const TVObjectiveConfig& cfg) {
    double per_pixel = std::max(std::accumulate(b.begin(), b.end(), 0.0), 1.0) / double(n);
    double norm = 1.0;
    if (cfg.scaling == TVObjectiveConfig::LambdaScaling::counts) norm = per_pixel;
    if (cfg.scaling == TVObjectiveConfig::LambdaScaling::sqrt_counts) norm = std::sqrt(per_pixel);
    return cfg.lambda_scale * cfg.lambda * norm;
}

}  // namespace

double tv_objective(const SystemMatrix& A, const std::vector<double>& counts, const std::vector<double>& y,
                    double lambda_eff, const TVObjectiveConfig& cfg) {
    return evaluate(A, counts, y, lambda_eff, cfg).F;
}

TVResult reconstruct_tv(const SystemMatrix& A, const std::vector<double>& b, const TVObjectiveConfig& cfg,
                        const PhantomImage& axes_like) {
    cfg.validate();
    if (b.size() != A.rows) throw InvalidArgument("reconstruct_tv: count vector length differs from matrix rows");
    if (axes_like.nq() * axes_like.nx() != A.cols) throw InvalidArgument("reconstruct_tv: image axes differ from matrix");
    for (double v : b)
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("reconstruct_tv: counts must be finite and >= 0");
    const std::size_t n = A.cols;
    TVResult res;
    const double lam = effective_lambda(b, n, cfg);
    res.lambda_effective = lam;

    auto cs = A.column_sums();
    double cs_total = 0.0, cs_pos = 0.0;
    std::size_t npos = 0;
    for (double c : cs) {
        cs_total += c;
        if (c > 0.0) cs_pos += c, ++npos;
    }
    const double cs_fill = npos ? cs_pos / double(npos) : 1.0;
    std::vector<double> inv_cs(n);
    for (std::size_t j = 0; j < n; ++j) inv_cs[j] = 1.0 / (cs[j] > 1e-12 * cs_fill ? cs[j] : cs_fill);

    const double btot = std::accumulate(b.begin(), b.end(), 0.0);
    const double y0 = cs_total > 0.0 ? btot / cs_total : 0.0;
    std::vector<double> y(n, y0), D(n), d(n), yn(n);
    // EM metric y / A^T 1, clipped so the scaling stays bounded
    auto metric = [&](const std::vector<double>& v) {
        double lo = y0 > 0.0 ? 1e-10 * y0 : 1.0, hi = y0 > 0.0 ? 1e10 * y0 : 1.0;
        for (std::size_t j = 0; j < n; ++j) D[j] = std::clamp(v[j], lo, hi) * inv_cs[j];
    };
    auto cur = evaluate(A, b, y, lam, cfg);
    auto g = gradient(A, b, y, cur.Ay, lam, cfg);
    res.trace.push_back({0, cur.F, 0.0, 0});
    double alpha = 1.0;  // alpha = 1 with lambda = 0 is one MLEM update
    for (int it = 1; it <= cfg.max_iters; ++it) {
        metric(y);
        double dF = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            d[j] = std::max(0.0, y[j] - alpha * D[j] * g[j]) - y[j];
            dF += g[j] * d[j];
        }
        if (!(dF < 0.0)) {
            res.converged = true;
            break;
        }
        Eval next;
        double theta = 1.0;
        int bt = 0;
        bool accepted = false;
        for (; bt < 60; ++bt) {
            for (std::size_t j = 0; j < n; ++j) yn[j] = std::max(0.0, y[j] + theta * d[j]);
            next = evaluate(A, b, yn, lam, cfg);
            if (next.F <= cur.F + cfg.armijo * theta * dF) {
                accepted = true;
                break;
            }
            theta *= cfg.backtrack;
        }
        if (!accepted) break;
        auto gn = gradient(A, b, yn, next.Ay, lam, cfg);
        // alternating Barzilai-Borwein rules in the scaled metric
        double sDDs = 0.0, sDr = 0.0, sDr2 = 0.0, rDDr = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double sj = yn[j] - y[j], rj = gn[j] - g[j];
            sDDs += sj * sj / (D[j] * D[j]);
            sDr += sj * rj / D[j];
            sDr2 += sj * rj * D[j];
            rDDr += rj * rj * D[j] * D[j];
        }
        double a1 = sDr > 0.0 ? sDDs / sDr : 1e5;
        double a2 = sDr2 > 0.0 && rDDr > 0.0 ? sDr2 / rDDr : 1e5;
        alpha = std::clamp(a2 / a1 < 0.5 ? a2 : a1, 1e-5, 1e5);
        double rel = (cur.F - next.F) / std::max(std::abs(cur.F), 1e-300);
        if (next.F > cur.F + 1e-12 * std::max(1.0, std::abs(cur.F))) res.monotone = false;
        y.swap(yn);
        g.swap(gn);
        cur = std::move(next);
        res.trace.push_back({it, cur.F, theta, bt});
        for (double v : y)
            if (v < 0.0) res.nonnegative = false;
        if (rel < cfg.rel_tol) {
            res.converged = true;
            break;
        }
    }
    metric(y);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double p = std::max(0.0, y[j] - D[j] * g[j]) - y[j];
        num += p * p;
        den += y[j] * y[j];
    }
    res.gradient_map_residual = std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
    res.image = PhantomImage(axes_like.q_axis, axes_like.x1_axis, axes_like.x2);
    res.image.values = std::move(y);
    return res;
}

// ---- metrics ----

namespace {

// Sobel magnitude with replicated borders.
std::vector<double> gradient_magnitude(const PhantomImage& f) {
    const long nq = long(f.nq()), nx = long(f.nx());
    auto at = [&](long i, long j) { return f.at(std::size_t(std::clamp(i, 0L, nq - 1)), std::size_t(std::clamp(j, 0L, nx - 1))); };
    std::vector<double> m(f.values.size());
    for (long i = 0; i < nq; ++i)
        for (long j = 0; j < nx; ++j) {
            double gq = (at(i + 1, j - 1) + 2 * at(i + 1, j) + at(i + 1, j + 1)) -
                        (at(i - 1, j - 1) + 2 * at(i - 1, j) + at(i - 1, j + 1));
            double gx = (at(i - 1, j + 1) + 2 * at(i, j + 1) + at(i + 1, j + 1)) -
                        (at(i - 1, j - 1) + 2 * at(i, j - 1) + at(i + 1, j - 1));
            m[i * nx + j] = 0.125 * std::sqrt(gq * gq + gx * gx);
        }
    return m;
}

double matched_fraction(const std::vector<char>& from, const std::vector<char>& to, std::size_t nq, std::size_t nx,
                        int tol) {
    std::size_t total = 0, hit = 0;
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t j = 0; j < nx; ++j) {
            if (!from[i * nx + j]) continue;
            ++total;
            bool found = false;
            for (int di = -tol; di <= tol && !found; ++di)
                for (int dj = -tol; dj <= tol && !found; ++dj) {
                    long ii = long(i) + di, jj = long(j) + dj;
                    if (ii < 0 || jj < 0 || ii >= long(nq) || jj >= long(nx)) continue;
                    found = to[ii * nx + jj];
                }
            hit += found;
        }
    return total ? double(hit) / double(total) : 0.0;
}

}  // namespace

double gradient_f1(const PhantomImage& recon, const PhantomImage& truth, const EdgeConfig& cfg) {
    if (recon.nq() != truth.nq() || recon.nx() != truth.nx()) throw InvalidArgument("gradient_f1: grids differ");
    if (!(cfg.percentile > 0.0 && cfg.percentile < 1.0) || cfg.tolerance_px < 0)
        throw InvalidArgument("gradient_f1: bad edge configuration");
    auto gt = gradient_magnitude(truth), gr = gradient_magnitude(recon);
    double mx = *std::max_element(gt.begin(), gt.end());
    std::vector<double> nz;
    for (double v : gt)
        if (v > 1e-12 * mx) nz.push_back(v);
    if (nz.empty() || !(mx > 0.0)) throw UndefinedScore("gradient_f1: truth image has no edges");
    std::size_t k = static_cast<std::size_t>(std::floor(cfg.percentile * double(nz.size() - 1)));
    std::nth_element(nz.begin(), nz.begin() + k, nz.end());
    double tau = nz[k];
    std::vector<char> et(gt.size()), er(gr.size());
    std::size_t n_r = 0;
    for (std::size_t p = 0; p < gt.size(); ++p) {
        et[p] = gt[p] >= tau;
        er[p] = gr[p] >= tau;
        n_r += er[p];
    }
    if (n_r == 0) return 0.0;
    double prec = matched_fraction(er, et, truth.nq(), truth.nx(), cfg.tolerance_px);
    double rec = matched_fraction(et, er, truth.nq(), truth.nx(), cfg.tolerance_px);
    return prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
}

BandErrors peak_band_errors(const PhantomImage& recon, const PhantomImage& truth, const std::vector<Sphere>& spheres,
                            const MaterialLibrary& lib, double scan_line_mm, double q_split) {
    if (recon.nq() != truth.nq() || recon.nx() != truth.nx()) throw InvalidArgument("peak_band_errors: grids differ");
    BandErrors out;
    double dq = truth.dq(), qtop = truth.q_axis.back();
    for (const auto& s : spheres) {
        auto ch = sphere_chord(s, scan_line_mm);
        if (!ch.hit) continue;
        auto cov = coverage(truth.x1_axis, ch.a, ch.b);
        auto spec = build_spectrum(lib.get(s.material), qtop + dq);
        for (const auto& pk : spec.peaks) {
            if (pk.q > qtop || pk.q < truth.q_axis.front()) continue;
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < truth.nq(); ++i) {
                if (std::abs(truth.q_axis[i] - pk.q) > dq) continue;
                for (std::size_t j = 0; j < truth.nx(); ++j) {
                    if (cov[j] <= 0.0) continue;
                    double d = recon.at(i, j) - truth.at(i, j);
                    num += d * d;
                    den += truth.at(i, j) * truth.at(i, j);
                }
            }
            if (!(den > 0.0)) continue;
            double e = std::sqrt(num / den);
            if (pk.q > q_split) {
                out.high += e;
                ++out.n_high;
            } else {
                out.low += e;
                ++out.n_low;
            }
        }
    }
    if (out.n_low) out.low /= out.n_low;
    if (out.n_high) out.high /= out.n_high;
    return out;
}

// ---- sweep ----

std::vector<double> default_lambda_grid() {
    std::vector<double> v;
    for (int j = 1; j <= 9; ++j) v.push_back(j / 10.0);
    for (int j = 1; j <= 10; ++j) v.push_back(j);
    return v;
}

std::vector<double> default_beta_grid() { return {0.001, 0.01, 0.1}; }

SweepResult hyperparameter_sweep(const SystemMatrix& A, const std::vector<double>& counts, const PhantomImage& truth,
                                 const std::vector<double>& lambdas, const std::vector<double>& betas,
                                 const TVObjectiveConfig& base, const EdgeConfig& edges) {
    if (lambdas.empty() || betas.empty()) throw InvalidArgument("hyperparameter_sweep: empty grid");
    SweepResult out;
    std::vector<PhantomImage> images;
    for (double l : lambdas)
        for (double b : betas) {
            TVObjectiveConfig cfg = base;
            cfg.lambda = l;
            cfg.beta_smooth = b;
            auto r = reconstruct_tv(A, counts, cfg, truth);
            SweepCell c{l, b, gradient_f1(r.image, truth, edges), int(r.trace.size()) - 1, r.monotone, r.nonnegative};
            out.cells.push_back(c);
            images.push_back(std::move(r.image));
        }
    double s = 0.0;
    for (const auto& c : out.cells) s += c.f1;
    out.mean_f1 = s / double(out.cells.size());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < out.cells.size(); ++k) {
        double d = std::abs(out.cells[k].f1 - out.mean_f1);
        if (d < best) best = d, out.representative = k;
    }
    out.representative_image = std::move(images[out.representative]);
    return out;
}

ReconProblem make_problem(const ReconGeometryConfig& g, PhantomKind kind, double c_avg, std::uint64_t seed,
                          const MaterialLibrary& lib) {
    ReconProblem p;
    p.geometry = g;
    p.phantom = kind;
    auto q = recon_q_axis(g), x = recon_x1_axis(g);
    double x2 = scan_line_x2(g);
    p.A = assemble_matrix(recon_geometry(g), q, x, x2);
    p.truth = build_phantom(kind, g.scan_line_mm, q, x, lib, &p.warning);
    p.noise = simulate_poisson(p.A, p.truth.values, c_avg, seed);
    p.A.scale(p.noise.scale);
    p.counts.assign(p.noise.counts.begin(), p.noise.counts.end());
    return p;
}

// ---- config ----

ExperimentConfig parse_experiment(const std::string& text) {
    using nlohmann::json;
    ExperimentConfig c;
    try {
        auto j = json::parse(text);
        if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
        if (j.contains("phantom")) c.phantom = parse_phantom_kind(j["phantom"].get<std::string>());
        if (j.contains("geometry")) {
            const auto& g = j["geometry"];
            if (g.contains("scale")) {
                auto sc = g["scale"].get<std::string>();
                if (sc == "full")
                    c.geometry = ReconGeometryConfig::full_scale();
                else if (sc != "desk")
                    throw ConfigError("geometry.scale must be 'desk' or 'full'");
            }
            c.geometry.beta_deg = g.value("beta_deg", c.geometry.beta_deg);
            c.geometry.n_sources = g.value("sources", c.geometry.n_sources);
            c.geometry.n_detectors = g.value("detectors", c.geometry.n_detectors);
            c.geometry.detector_pitch_mm = g.value("detector_pitch_mm", c.geometry.detector_pitch_mm);
            c.geometry.n_energies = g.value("energies", c.geometry.n_energies);
            c.geometry.scan_line_mm = g.value("scan_line_mm", c.geometry.scan_line_mm);
            c.geometry.nq = g.value("nq", c.geometry.nq);
            c.geometry.nx = g.value("nx", c.geometry.nx);
        }
        c.c_avg = j.value("c_avg", c.c_avg);
        c.seed = j.value("seed", c.seed);
        if (j.contains("lambda_grid")) c.lambda_grid = j["lambda_grid"].get<std::vector<double>>();
        if (j.contains("beta_grid")) c.beta_grid = j["beta_grid"].get<std::vector<double>>();
        c.max_iters = j.value("max_iters", c.max_iters);
        c.output_dir = j.value("output_dir", c.output_dir);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    if (!(c.c_avg > 0.0)) throw ConfigError("experiment config: c_avg must be > 0");
    if (c.lambda_grid.empty() || c.beta_grid.empty()) throw ConfigError("experiment config: empty lambda/beta grid");
    return c;
}

ExperimentConfig load_experiment(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open experiment config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment(ss.str());
}

}  // namespace bst
