#pragma once
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "bst/forward.hpp"
#include "bst/fourier.hpp"
#include "bst/geometry.hpp"

namespace bst {

// f(x) + lambda int_{x_0}^x K(x, y) f(y) dy = g(x) on a uniform grid.
struct VolterraProblem {
    std::vector<double> x;       // uniform, x[0] = lower limit
    std::vector<double> kernel;  // n x n row-major, K(x_i, x_j) for j <= i
    double lambda = 1.0;
    std::vector<cplx> rhs;

    std::size_t n() const { return x.size(); }
    double h() const { return x.size() > 1 ? x[1] - x[0] : 0.0; }
    double K(std::size_t i, std::size_t j) const { return kernel[i * x.size() + j]; }
    // Throws InvalidArgument / DomainError on malformed or non-finite input.
    void validate() const;
};

struct VolterraSolution {
    std::vector<cplx> f;
    int terms = 0;               // Neumann path only
    double tail_estimate = 0.0;  // Neumann path only
    double residual = 0.0;       // max |f + lambda int K f - g| (trapezoid)
};

// Iterated kernels K_1 = K, K_(l+1)(x, y) = int_y^x K(x, z) K_l(z, y) dz, composed with
// the same trapezoid rule the forward-substitution path uses.
struct ResolventSeries {
    std::vector<std::vector<double>> kernels;  // K_1 .. K_L, each n x n
    int truncation = 0;
    double tail_estimate = 0.0;
    std::vector<double> sup_norms;  // ||K_l||_inf
};

// Trapezoid discretization solved row by row.
VolterraSolution solve_forward_substitution(const VolterraProblem& p);

// f = g - lambda int H g, H = sum_l (-lambda)^l K_(l+1); stops once two
// consecutive terms contribute less than tol. Throws ConvergenceError past max_terms.
ResolventSeries build_resolvent(const VolterraProblem& p, double tol, int max_terms = 200);
VolterraSolution solve_neumann(const VolterraProblem& p, double tol, int max_terms = 200);

double volterra_residual(const VolterraProblem& p, const std::vector<cplx>& f);

// ||(I + lambda h K~)^(-1)||_inf of the trapezoid system; infinity when singular.
double volterra_amplification(const VolterraProblem& p);

// J_n tabulated on a uniform u grid with cubic Hermite interpolation.
struct RadialFreqKernel {
    int n = 2;
    std::vector<double> u;
    std::vector<double> J;
    std::vector<double> dJ;
    std::vector<std::pair<double, double>> root_exclusion;  // |u| bands with |J| < root_tol J(0)

    double value(double uu) const;
    double derivative(double uu) const;
};
RadialFreqKernel radial_freq_kernel(int n, const std::vector<double>& u_grid, double root_tol = 0.1);

// Curve-dependent pieces of the unified channel kernel
// Gamma(z) = s g'(z) W2(g(z)) L(eta g(z)) g(z)^(n-1),
// with L = cos for n = 1 and L = J_n otherwise; s = -1 for decreasing curves.
struct ChannelCurve {
    int n = 1;
    double sign = 1.0;
    double c_top = 1.0;
    double z_low = 0.0;  // g is defined on [z_low, c_top]
    std::function<double(double)> g, dg, d2g;
    std::function<double(double)> w2, dw2;
    const RadialFreqKernel* radial = nullptr;  // required for n >= 2
    double w = 1.0;  // g(c_top) for increasing curves

    double L(double u) const;
    double dL(double u) const;
    double Gamma(double z, double eta) const;
    double dGamma(double z, double eta) const;
    // c(eta) = c_top Gamma(c_top).
    double boundary(double eta) const;
};

ChannelCurve bragg_channel(const CurveFamily& fam, const Weighting& W);
ChannelCurve general_channel(const GeneralCurve& c, int n, const Weighting& W,
                             const RadialFreqKernel* radial = nullptr);

// E-differentiated right-hand side and triangle kernel for one eta channel.
// data[i] is G(E_i) = E_i D^(E_i, eta) / (kappa W1(E_i)) on the uniform energy
// grid starting at E_0 = E_m / c_top; the unknown lives on q_i = c_top E_i.
VolterraProblem build_volterra(const std::vector<double>& energies, const std::vector<cplx>& G,
                               const ChannelCurve& curve, double eta, double root_tol = 0.1);

// Product-of-suprema bound for |K| on the triangle.
double kernel_bound(const ChannelCurve& curve, double eta, double E_m, double E_M);

struct InvertOptions {
    double root_tol = 0.1;
    double cond_cap = 1e3;
    double q_min = 0.0;  // E_m; the first usable energy is the first with c_top E >= q_min
    enum class Method { forward_substitution, neumann } method = Method::forward_substitution;
    double tol = 1e-8;
    int max_terms = 200;
    bool offset = false;  // invert_bragg: data came from forward_offset
};

struct ExcludedBand {
    double eta = 0.0;
    std::string reason;  // "root" or "conditioning"
};

struct InversionReport {
    std::vector<ExcludedBand> excluded;
    std::vector<double> eta;
    std::vector<double> boundary;       // c(eta) per channel
    std::vector<double> amplification;  // per channel
    std::vector<double> residuals;      // per retained channel
    std::vector<int> truncation_depth;  // Neumann path
    std::vector<double> tail_estimates;
    double q_min = 0.0;
    double max_imag = 0.0;

    std::string to_json() const;
};

struct InversionResult {
    PhantomImage image;
    RowSpectrum spectrum;  // f^(q, eta)
    InversionReport report;
};

InversionResult invert_bragg(const SinogramTensor& sino, const ScanGeometry& geom, const Weighting* W = nullptr,
                             const InvertOptions& opt = {});

// n = 1: data over (E, s) produced by forward_general.
InversionResult invert_general(const SinogramTensor& data, const GeneralCurve& curve, const Weighting& W,
                               const InvertOptions& opt = {});

// n >= 2 on radial spectra from forward_general_radial.
RadialSpectrum invert_general_radial(const RadialSpectrum& data, const GeneralCurve& curve, int n,
                                     const std::vector<double>& energies, const Weighting& W,
                                     const InvertOptions& opt = {}, InversionReport* report = nullptr);

}  // namespace bst
