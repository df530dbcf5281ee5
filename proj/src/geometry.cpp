#include "bst/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "bst/errors.hpp"
#include "bst/physics.hpp"
#include "json.hpp"

namespace bst {

namespace {

constexpr double kZTol = 1e-12;
constexpr double kSingularGap = 1e-9;

double norm(const Vec3& a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

}  // namespace

double fan_half_width(double beta, double x2) {
    if (!(std::abs(x2) < 1.0)) throw OutOfTunnel("x2 = " + std::to_string(x2) + " is outside (-1, 1)");
    if (!(beta > 0.0 && beta < M_PI)) throw InvalidArgument("beta must lie in (0, pi)");
    return (1.0 + x2) * std::tan(0.5 * beta);
}

void ScanGeometry::validate() const {
    if (!(beta > 0.0 && beta < M_PI)) throw InvalidArgument("geometry: beta must lie in (0, pi)");
    for (double x2 : {-1.0, 1.0}) {
        double e = phi(x2);
        if (e < -1e-15 || e > phi_bound + 1e-15)
            throw InvalidArgument("geometry: phi leaves [0, M] on (-1, 1)");
    }
    if (energies.empty()) throw InvalidArgument("geometry: no energies");
    for (std::size_t i = 0; i < energies.size(); ++i) {
        if (!(energies[i] > 0.0)) throw InvalidArgument("geometry: energies must be positive");
        if (i > 0 && !(energies[i] > energies[i - 1]))
            throw InvalidArgument("geometry: energies must be strictly increasing");
    }
    if (!std::is_sorted(sources_s1.begin(), sources_s1.end()))
        throw InvalidArgument("geometry: sources must be sorted");
    if (!std::is_sorted(detectors_d1.begin(), detectors_d1.end()))
        throw InvalidArgument("geometry: detectors must be sorted");
    if (!(tunnel_scale > 0.0)) throw InvalidArgument("geometry: tunnel_scale must be positive");
}

CurveFamily::CurveFamily(double x2, double eps, double w) : x2_(x2), eps_(eps), w_(w) {
    if (!(std::abs(x2) < 1.0)) throw OutOfTunnel("x2 = " + std::to_string(x2) + " is outside (-1, 1)");
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw InvalidArgument("curve family: eps must be >= 0");
    if (!(w > 0.0) || !std::isfinite(w)) throw InvalidArgument("curve family: w must be > 0");
    c_eps_ = q1(0.0);
    c2_ = q1(w_);
}

double CurveFamily::q1(double x1) const {
    x1 = std::abs(x1);
    double a2 = x1 * x1 + (1.0 + x2_) * (1.0 + x2_);
    double b2 = x1 * x1 + (1.0 - x2_) * (1.0 - x2_) + eps_ * eps_;
    double AB = std::sqrt(a2 * b2);
    double N = x1 * x1 - (1.0 - x2_ * x2_);
    double u;
    if (N > 0.0)
        u = 1.0 + N / AB;
    else  // (AB)^2 - N^2 written out to avoid cancellation near x1 = 0
        u = (4.0 * x1 * x1 + eps_ * eps_ * a2) / (AB * (AB - N));
    return std::sqrt(0.5 * u);
}

double CurveFamily::dq1(double x1) const {
    double s = x1 < 0.0 ? -1.0 : 1.0;
    x1 = std::abs(x1);
    double q = q1(x1);
    if (q == 0.0) return 1.0 / (1.0 - x2_ * x2_);
    return s * hoff(x1) / q;
}

void CurveFamily::check_z(double z, bool derivative) const {
    if (!(z >= c_eps_ - kZTol && z <= c2_ + kZTol))
        throw DomainError("z = " + std::to_string(z) + " outside [q1(0), q1(w)]");
    if (!derivative) return;
    if (eps_ == 0.0) {
        if (z < kSingularGap || z > 1.0 - kSingularGap)
            throw SingularityError("z = " + std::to_string(z) + " too close to a singular endpoint");
    } else if (z - c_eps_ < kSingularGap) {
        throw SingularityError("z = " + std::to_string(z) + " too close to the saddle value q1(0)");
    }
}

double CurveFamily::g_closed(double z) const {
    if (z == 0.0) return 0.0;
    double s = z * (1.0 - z * z);
    double a = 1.0 - 4.0 * x2_ * x2_ * z * s;
    double b = 1.0 - 2.0 * z * z;
    double r = std::sqrt(1.0 - z * z);
    if (b >= 0.0) return 2.0 * z * r * (1.0 - x2_ * x2_) / (std::sqrt(a) + b);
    return (std::sqrt(a) - b) / (2.0 * z * r);
}

double CurveFamily::g_numeric(double z) const {
    if (z <= c_eps_) return 0.0;
    if (z >= c2_) return w_;
    double lo = 0.0, hi = w_;
    for (int i = 0; i < 30; ++i) {
        double mid = 0.5 * (lo + hi);
        (q1(mid) < z ? lo : hi) = mid;
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 50; ++i) {
        double r = q1(x) - z;
        double d = dq1(x);
        double xn = (d > 0.0) ? x - r / d : 0.5 * (lo + hi);
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        (q1(xn) < z ? lo : hi) = xn;
        if (std::abs(xn - x) <= 1e-16 * std::max(1.0, x)) {
            x = xn;
            break;
        }
        x = xn;
    }
    return x;
}

double CurveFamily::g(double z) const {
    check_z(z, false);
    if (eps_ == 0.0) return g_closed(std::clamp(z, 0.0, c2_));
    return g_numeric(z);
}

double CurveFamily::h(double z) const {
    if (z < kSingularGap || z > 1.0 - kSingularGap)
        throw SingularityError("h(z): z = " + std::to_string(z) + " too close to 0 or 1");
    double a = 1.0 - 4.0 * x2_ * x2_ * z * z * (1.0 - z * z);
    return 1.0 / (std::sqrt(a) * z * (1.0 - z * z));
}

double CurveFamily::dh(double z) const {
    if (z < kSingularGap || z > 1.0 - kSingularGap)
        throw SingularityError("h'(z): z = " + std::to_string(z) + " too close to 0 or 1");
    double x22 = x2_ * x2_, z2 = z * z;
    double a = 1.0 - 4.0 * x22 * z2 * (1.0 - z2);
    double num = 20.0 * x22 * z2 * z2 * z2 - 28.0 * x22 * z2 * z2 + (8.0 * x22 + 3.0) * z2 - 1.0;
    double om = 1.0 - z2;
    return num / (z2 * om * om * a * std::sqrt(a));
}

double CurveFamily::dg(double z) const {
    check_z(z, true);
    if (eps_ == 0.0) {
        double a = 1.0 - 4.0 * x2_ * x2_ * z * z * (1.0 - z * z);
        double b = 1.0 - 2.0 * z * z;
        if (b >= 0.0) return 2.0 * (1.0 - x2_ * x2_) / ((std::sqrt(a) + b) * std::sqrt(a) * std::sqrt(1.0 - z * z));
        return g_closed(z) * h(z);
    }
    return z / hoff(g(z));
}

double CurveFamily::d2g(double z) const {
    check_z(z, true);
    if (eps_ == 0.0) {
        double hz = h(z);
        return g_closed(z) * (hz * hz + dh(z));
    }
    double x = g(z);
    double H = hoff(x);
    double gp = z / H;
    return 1.0 / H - z * dhoff(x) * gp / (H * H);
}

double CurveFamily::P1(double x1) const {
    double e2 = eps_ * eps_;
    return 4.0 * x1 * (1.0 - x2_ * x2_ + x1 * x1) + e2 * x1 * ((x2_ + 1.0) * (x2_ + 3.0) + x1 * x1);
}

double CurveFamily::dP1(double x1) const {
    double e2 = eps_ * eps_;
    return 12.0 * x1 * x1 + 4.0 * (1.0 - x2_ * x2_) + e2 * (3.0 * x1 * x1 + (x2_ + 1.0) * (x2_ + 3.0));
}

double CurveFamily::h1(double x1) const {
    double a2 = x1 * x1 + (1.0 + x2_) * (1.0 + x2_);
    double b2 = x1 * x1 + (1.0 - x2_) * (1.0 - x2_) + eps_ * eps_;
    return std::sqrt(a2 * b2);
}

double CurveFamily::hoff(double x1) const {
    double H = h1(x1);
    return P1(x1) / (4.0 * H * H * H);
}

double CurveFamily::dhoff(double x1) const {
    double H = h1(x1);
    double H3 = H * H * H;
    double P2 = 3.0 * x1 * (eps_ * eps_ + 2.0 * (1.0 + x2_ * x2_ + x1 * x1));
    return dP1(x1) / (4.0 * H3) - P1(x1) * P2 / (4.0 * H3 * H * H);
}

double CurveFamily::P1_over_x1_expansion(double x1) const {
    double H = h1(x1);
    double f2 = x1 * x1 - (1.0 - x2_ * x2_);
    return 2.0 * H * H - (eps_ * eps_ + 2.0 * (x1 * x1 + 1.0 + x2_ * x2_)) * f2;
}

KernelParts CurveFamily::kernel_parts(double z) const {
    check_z(z, true);
    double x = g(z);
    if (eps_ == 0.0) return {h(z), dh(z), P1(x), h1(x)};
    return {hoff(x), dhoff(x), P1(x), h1(x)};
}

double PhysicalWeight::Q(double x1) const {
    double a2 = x1 * x1 + (1.0 + x2) * (1.0 + x2);
    double b2 = x1 * x1 + (1.0 - x2) * (1.0 - x2) + eps * eps;
    return std::abs(1.0 - x2) / (a2 * b2 * std::sqrt(b2));
}

double PhysicalWeight::dQ(double x1) const {
    double a2 = x1 * x1 + (1.0 + x2) * (1.0 + x2);
    double b2 = x1 * x1 + (1.0 - x2) * (1.0 - x2) + eps * eps;
    double b5 = b2 * b2 * std::sqrt(b2);
    return -x1 * std::abs(1.0 - x2) * (2.0 * b2 + 3.0 * a2) / (a2 * a2 * b5);
}

double PhysicalWeight::P(double x1) const {
    double a2 = x1 * x1 + (1.0 + x2) * (1.0 + x2);
    double b2 = x1 * x1 + (1.0 - x2) * (1.0 - x2) + eps * eps;
    double N = x1 * x1 - (1.0 - x2 * x2);
    return 0.5 * (1.0 + N * N / (a2 * b2));
}

double PhysicalWeight::dP(double x1) const {
    double a2 = x1 * x1 + (1.0 + x2) * (1.0 + x2);
    double b2 = x1 * x1 + (1.0 - x2) * (1.0 - x2) + eps * eps;
    double N = x1 * x1 - (1.0 - x2 * x2);
    double ab = a2 * b2;
    return x1 * N / ab * (2.0 - N * (a2 + b2) / ab);
}

double bragg_angle_3d(const Vec3& s, const Vec3& d, const Vec3& x) {
    Vec3 u = sub(x, s), v = sub(d, x);
    if (norm(u) == 0.0 || norm(v) == 0.0) throw DegenerateGeometry("bragg_angle_3d: coincident points");
    return 0.5 * std::atan2(norm(cross(u, v)), dot(u, v));
}

double sin_bragg_3d(const Vec3& s, const Vec3& d, const Vec3& x) {
    Vec3 u = sub(x, s), v = sub(d, x);
    double nu = norm(u), nv = norm(v);
    if (nu == 0.0 || nv == 0.0) throw DegenerateGeometry("sin_bragg_3d: coincident points");
    double c = dot(u, v), p = nu * nv;
    if (c >= 0.0) {
        double cr = norm(cross(u, v));
        return std::sqrt(cr * cr / (2.0 * p * (p + c)));
    }
    return std::sqrt((p - c) / (2.0 * p));
}

double solid_angle(const Vec3& x, const Vec3& d) {
    Vec3 r = sub(d, x);
    double n = norm(r);
    if (n == 0.0) throw DegenerateGeometry("solid_angle: coincident points");
    return std::abs(r.y) / (n * n * n);
}

namespace {

std::vector<double> read_positions(const nlohmann::json& j, const char* field, double scale) {
    std::vector<double> out;
    if (!j.contains(field)) throw ConfigError(std::string("geometry: missing field '") + field + "'");
    const auto& v = j[field];
    if (v.is_array()) {
        for (auto& x : v) out.push_back(x.get<double>() / scale);
    } else if (v.is_object()) {
        double a = v.at("start").get<double>(), b = v.at("stop").get<double>();
        int n = v.at("count").get<int>();
        if (n < 1) throw ConfigError(std::string("geometry: field '") + field + ".count' must be >= 1");
        for (int i = 0; i < n; ++i) out.push_back((n == 1 ? a : a + (b - a) * i / (n - 1)) / scale);
    } else {
        throw ConfigError(std::string("geometry: field '") + field + "' must be a list or {start, stop, count}");
    }
    return out;
}

}  // namespace

ScanGeometry load_geometry_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open geometry config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("geometry config " + path + ": " + e.what());
    }
    ScanGeometry g;
    try {
        if (!j.contains("beta_deg")) throw ConfigError("geometry: missing field 'beta_deg'");
        g.beta = j["beta_deg"].get<double>() * M_PI / 180.0;
        g.tunnel_scale = j.value("tunnel_scale_mm", kTunnelScaleMm);
        if (j.contains("phi")) {
            g.phi.slope = j["phi"].value("slope", 0.0);
            g.phi.intercept = j["phi"].value("intercept", 0.0);
        } else if (j.contains("phi_mm")) {
            // eps_mm = slope * T_mm + intercept_mm with T = scale (1 - x2)
            double s = j["phi_mm"].value("slope", 0.0), c = j["phi_mm"].value("intercept", 0.0);
            g.phi.slope = -s;
            g.phi.intercept = s + c / g.tunnel_scale;
        }
        g.phi_bound = j.value("phi_bound", 1.0);
        g.sources_s1 = read_positions(j, "sources", g.tunnel_scale);
        g.detectors_d1 = read_positions(j, "detectors", g.tunnel_scale);
        for (double e : read_positions(j, "energies_keV", 1.0)) g.energies.push_back(kev_to_inv_angstrom(e));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("geometry config " + path + ": " + e.what());
    }
    try {
        g.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return g;
}

}  // namespace bst
