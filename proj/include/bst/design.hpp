#pragma once
#include <string>
#include <vector>

#include "bst/geometry.hpp"

namespace bst {

// mm per normalized unit for detector offsets: 820 mm scanner length over x2 in (-1, 1).
inline constexpr double kOffsetScaleMm = 410.0;
// Inset from the open interval x2 in (-1, 1).
inline constexpr double kDesignInset = 1e-3;

// q1(0) < q1(w(x2)) E_m / E_M on the offset curve family.
bool feasible(double x2, double eps, double beta, double E_m, double E_M);

// Largest feasible eps, by bisection to tol; +inf when every eps up to 1e3 is feasible (E_m = E_M).
double max_offset(double x2, double beta, double E_m, double E_M, double tol = 1e-6);

struct DesignRegion {
    double beta = 0.0;
    double E_m = 0.0, E_M = 0.0;
    std::vector<double> x2;   // inset grid over (-1, 1)
    std::vector<double> eps;  // [0, eps_max]
    std::vector<unsigned char> feasible;  // x2-major, x2.size() x eps.size()
    std::vector<double> delta;            // Delta(x2) per x2 grid point
    LinearPhi fitted_phi;
    double shrink = 1.0;  // uniform factor applied to the endpoint line
    bool fitted = false;

    bool at(std::size_t i, std::size_t j) const { return feasible[i * eps.size() + j] != 0; }
};

DesignRegion design_region(double beta, double E_m, double E_M, std::size_t nx = 201, std::size_t neps = 201,
                           double eps_max = 0.2);

// Strict feasibility of phi (and phi >= 0) on an n-point inset x2 grid.
bool phi_feasible(const LinearPhi& phi, double beta, double E_m, double E_M, std::size_t n = 201);

struct PhiFit {
    LinearPhi phi;
    double shrink = 1.0;
    double delta_lo = 0.0, delta_hi = 0.0;  // Delta(-1 + inset), Delta(1 - inset)
};

// Line through the inset endpoints of Delta, shrunk by 0.999 until it verifies.
// Throws DesignInfeasible when Delta vanishes at both ends or no shrink verifies.
PhiFit fit_linear_phi(const DesignRegion& region);
// Fills region.fitted_phi / shrink as well.
PhiFit fit_linear_phi(DesignRegion& region);

struct LayoutRow {
    double x2 = 0.0;
    double T_mm = 0.0;
    double eps_mm = 0.0;
    double intercept_mm = 0.0;  // tunnel position hit by the collimation plane, T(Phi^-1(eps))
    double plane_angle_deg = 0.0;  // collimation plane tilt, atan(eps / intercept)
};

// Arrays at x2 = -1 + 2 (j - 1) / (n_arrays - 1); T uses the exact map, endpoints included.
std::vector<LayoutRow> export_layout(const LinearPhi& phi, std::size_t n_arrays = 21,
                                     double tunnel_scale = kTunnelScaleMm, double offset_scale = kOffsetScaleMm);

// Header comment lines for CSV exports.
std::string layout_header(double tunnel_scale = kTunnelScaleMm, double offset_scale = kOffsetScaleMm);

// Scanner-unit map eps_mm = k * T_mm expressed in normalized x2 / eps.
LinearPhi phi_from_scanner_slope(double k, double tunnel_scale = kTunnelScaleMm,
                                 double offset_scale = kOffsetScaleMm);

}  // namespace bst
