#include "bst/design.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "bst/errors.hpp"

namespace bst {

namespace {

void check_design(double x2, double beta, double E_m, double E_M) {
    if (!(std::abs(x2) < 1.0)) throw OutOfTunnel("design: x2 must lie in (-1, 1)");
    if (!(beta > 0.0 && beta < std::numbers::pi)) throw InvalidArgument("design: beta must lie in (0, pi)");
    if (!(E_m > 0.0 && E_m <= E_M) || !std::isfinite(E_M))
        throw InvalidArgument("design: need 0 < E_m <= E_M");
}

bool feasible_unchecked(double x2, double eps, double beta, double E_m, double E_M) {
    CurveFamily fam(x2, eps, fan_half_width(beta, x2));
    return fam.c_eps() < fam.c2() * (E_m / E_M);
}

}  // namespace

bool feasible(double x2, double eps, double beta, double E_m, double E_M) {
    check_design(x2, beta, E_m, E_M);
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw InvalidArgument("design: eps must be >= 0");
    return feasible_unchecked(x2, eps, beta, E_m, E_M);
}

double max_offset(double x2, double beta, double E_m, double E_M, double tol) {
    check_design(x2, beta, E_m, E_M);
    double lo = 0.0, hi = 0.05;
    while (feasible_unchecked(x2, hi, beta, E_m, E_M)) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e3) return std::numeric_limits<double>::infinity();
    }
    while (hi - lo > tol) {
        double mid = 0.5 * (lo + hi);
        (feasible_unchecked(x2, mid, beta, E_m, E_M) ? lo : hi) = mid;
    }
    return lo;
}

DesignRegion design_region(double beta, double E_m, double E_M, std::size_t nx, std::size_t neps, double eps_max) {
    check_design(0.0, beta, E_m, E_M);
    if (nx < 2 || neps < 2 || !(eps_max > 0.0)) throw InvalidArgument("design_region: bad grid");
    DesignRegion r;
    r.beta = beta;
    r.E_m = E_m;
    r.E_M = E_M;
    r.x2.resize(nx);
    r.eps.resize(neps);
    double a = -1.0 + kDesignInset, b = 1.0 - kDesignInset;
    for (std::size_t i = 0; i < nx; ++i) r.x2[i] = a + (b - a) * double(i) / double(nx - 1);
    for (std::size_t j = 0; j < neps; ++j) r.eps[j] = eps_max * double(j) / double(neps - 1);
    r.feasible.resize(nx * neps);
    r.delta.resize(nx);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(nx); ++i) {
        for (std::size_t j = 0; j < neps; ++j)
            r.feasible[i * neps + j] = feasible_unchecked(r.x2[i], r.eps[j], beta, E_m, E_M);
        r.delta[i] = max_offset(r.x2[i], beta, E_m, E_M);
    }
    return r;
}

bool phi_feasible(const LinearPhi& phi, double beta, double E_m, double E_M, std::size_t n) {
    double a = -1.0 + kDesignInset, b = 1.0 - kDesignInset;
    for (std::size_t i = 0; i < n; ++i) {
        double x2 = n == 1 ? 0.0 : a + (b - a) * double(i) / double(n - 1);
        double e = phi(x2);
        if (!(e >= 0.0) || !feasible(x2, e, beta, E_m, E_M)) return false;
    }
    return true;
}

PhiFit fit_linear_phi(const DesignRegion& region) {
    PhiFit fit;
    double a = -1.0 + kDesignInset, b = 1.0 - kDesignInset;
    fit.delta_lo = max_offset(a, region.beta, region.E_m, region.E_M);
    fit.delta_hi = max_offset(b, region.beta, region.E_m, region.E_M);
    if (fit.delta_lo <= 0.0 && fit.delta_hi <= 0.0) throw DesignInfeasible("fit_linear_phi: Delta vanishes at both ends");
    LinearPhi line;
    line.slope = (fit.delta_hi - fit.delta_lo) / (b - a);
    line.intercept = fit.delta_lo - line.slope * a;
    for (int k = 0; k < 10000; ++k) {
        LinearPhi p{line.slope * fit.shrink, line.intercept * fit.shrink};
        if (phi_feasible(p, region.beta, region.E_m, region.E_M)) {
            fit.phi = p;
            return fit;
        }
        fit.shrink *= 0.999;
    }
    throw DesignInfeasible("fit_linear_phi: no shrink of the endpoint line verifies");
}

PhiFit fit_linear_phi(DesignRegion& region) {
    auto fit = fit_linear_phi(static_cast<const DesignRegion&>(region));
    region.fitted_phi = fit.phi;
    region.shrink = fit.shrink;
    region.fitted = true;
    return fit;
}

std::vector<LayoutRow> export_layout(const LinearPhi& phi, std::size_t n_arrays, double tunnel_scale,
                                     double offset_scale) {
    if (n_arrays < 2) throw InvalidArgument("export_layout: need at least 2 arrays");
    std::vector<LayoutRow> rows(n_arrays);
    for (std::size_t j = 0; j < n_arrays; ++j) {
        auto& r = rows[j];
        r.x2 = -1.0 + 2.0 * double(j) / double(n_arrays - 1);
        r.T_mm = tunnel_scale * (1.0 - r.x2);
        double e = phi(r.x2);
        r.eps_mm = offset_scale * e;
        if (phi.slope != 0.0) {
            double x2i = (e - phi.intercept) / phi.slope;
            r.intercept_mm = tunnel_scale * (1.0 - x2i);
        } else {
            r.intercept_mm = std::numeric_limits<double>::quiet_NaN();
        }
        if (std::isnan(r.intercept_mm))
            r.plane_angle_deg = r.intercept_mm;
        else
            r.plane_angle_deg = r.intercept_mm > 0.0 ? std::atan(r.eps_mm / r.intercept_mm) * 180.0 / std::numbers::pi
                                                     : 90.0;
    }
    return rows;
}

std::string layout_header(double tunnel_scale, double offset_scale) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "# T = %g (1 - x2) mm spans (0, %g) over x2 in (-1, 1); the quoted scanner length is 820 mm.\n"
                  "# eps_mm = %g * eps. Rows at x2 = +-1 use the exact map; feasibility is checked on "
                  "[-1 + %g, 1 - %g].\n",
                  tunnel_scale, 2 * tunnel_scale, offset_scale, kDesignInset, kDesignInset);
    return buf;
}

LinearPhi phi_from_scanner_slope(double k, double tunnel_scale, double offset_scale) {
    // eps = k T / offset_scale with T = tunnel_scale (1 - x2)
    double c = k * tunnel_scale / offset_scale;
    return {-c, c};
}

}  // namespace bst
