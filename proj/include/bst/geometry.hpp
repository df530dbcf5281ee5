#pragma once
#include <string>
#include <vector>

namespace bst {

// Default mm per normalized unit for tunnel positions, T = 420(1 - x2).
inline constexpr double kTunnelScaleMm = 420.0;

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

// w(x2) = (1 + x2) tan(beta/2); throws OutOfTunnel for |x2| >= 1.
double fan_half_width(double beta, double x2);

// Linear x2 -> epsilon map.
struct LinearPhi {
    double slope = 0.0;
    double intercept = 0.0;
    double operator()(double x2) const { return slope * x2 + intercept; }
};

struct ScanGeometry {
    double beta = 0.0;  // radians
    LinearPhi phi;
    double phi_bound = 1.0;  // declared M with 0 <= phi <= M on (-1, 1)
    std::vector<double> sources_s1;
    std::vector<double> detectors_d1;
    std::vector<double> energies;  // A^-1, strictly increasing
    double tunnel_scale = kTunnelScaleMm;

    void validate() const;
    double w(double x2) const { return fan_half_width(beta, x2); }
    double eps(double x2) const { return phi(x2); }
};

struct KernelParts {
    double h = 0, dh = 0, P1 = 0, h1 = 0;
};

// The integration-curve family q = E q1(x1) for one scan line.
class CurveFamily {
public:
    CurveFamily(double x2, double eps, double w);

    double x2() const { return x2_; }
    double eps() const { return eps_; }
    double w() const { return w_; }
    double c2() const { return c2_; }
    double c_eps() const { return c_eps_; }

    double q1(double x1) const;
    double dq1(double x1) const;

    // Inverse of q1 on [c_eps, c2].
    double g(double z) const;
    double dg(double z) const;
    double d2g(double z) const;

    // epsilon = 0 closed forms in z.
    double h(double z) const;
    double dh(double z) const;

    // Offset quantities in x1.
    double P1(double x1) const;
    double dP1(double x1) const;
    double h1(double x1) const;
    double hoff(double x1) const;
    double dhoff(double x1) const;
    // 2 h1^2 - (eps^2 + 2(x1^2 + 1 + x2^2)) (x1^2 - (1 - x2^2)); equals P1/x1.
    double P1_over_x1_expansion(double x1) const;

    KernelParts kernel_parts(double z) const;

private:
    void check_z(double z, bool derivative) const;
    double g_closed(double z) const;
    double g_numeric(double z) const;

    double x2_, eps_, w_, c2_, c_eps_;
};

// Physical weight W2 = Q P for in-plane source/detector at s1 = d1.
struct PhysicalWeight {
    double x2 = 0.0;
    double eps = 0.0;
    double Q(double x1) const;
    double dQ(double x1) const;
    double P(double x1) const;
    double dP(double x1) const;
    double value(double x1) const { return Q(x1) * P(x1); }
    double derivative(double x1) const { return dQ(x1) * P(x1) + Q(x1) * dP(x1); }
};

double bragg_angle_3d(const Vec3& s, const Vec3& d, const Vec3& x);
// sin(theta) computed without cancellation at small angles.
double sin_bragg_3d(const Vec3& s, const Vec3& d, const Vec3& x);

// |(d - x).v| / |d - x|^3 with v = (0, 1, 0) and unit detector area.
double solid_angle(const Vec3& x, const Vec3& d);

ScanGeometry load_geometry_json(const std::string& path);

}  // namespace bst
