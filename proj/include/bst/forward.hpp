#pragma once
#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "bst/geometry.hpp"

namespace bst {

// f(q, x1) on a uniform n x m grid for one scan line, stored q-major.
struct PhantomImage {
    std::vector<double> q_axis;
    std::vector<double> x1_axis;
    std::vector<double> values;
    double x2 = 0.0;
    std::vector<std::string> provenance;

    PhantomImage() = default;
    PhantomImage(std::vector<double> q, std::vector<double> x1, double x2_line);

    std::size_t nq() const { return q_axis.size(); }
    std::size_t nx() const { return x1_axis.size(); }
    double& at(std::size_t iq, std::size_t ix) { return values[iq * nx() + ix]; }
    double at(std::size_t iq, std::size_t ix) const { return values[iq * nx() + ix]; }
    double dq() const { return q_axis[1] - q_axis[0]; }
    double dx() const { return x1_axis[1] - x1_axis[0]; }

    // Bilinear interpolation, zero outside the grid.
    double sample(double q, double x1) const;
    void validate() const;
};

// Data indexed (E, s1) or (E, s1, d1), stored with d1 fastest.
struct SinogramTensor {
    std::vector<double> energies;
    std::vector<double> s1;
    std::vector<double> d1;  // empty for restricted/offset data
    std::vector<double> values;
    double x2 = 0.0;
    double eps = 0.0;
    std::string geometry_id;

    std::size_t ne() const { return energies.size(); }
    std::size_t ns() const { return s1.size(); }
    std::size_t nd() const { return d1.empty() ? 1 : d1.size(); }
    double& at(std::size_t e, std::size_t s, std::size_t d = 0) { return values[(e * ns() + s) * nd() + d]; }
    double at(std::size_t e, std::size_t s, std::size_t d = 0) const { return values[(e * ns() + s) * nd() + d]; }
};

// Separable weight W(E, t) = W1(E) W2(|t|).
struct Weighting {
    std::vector<double> w1;  // per energy; empty means 1
    std::function<double(double)> w2;
    std::function<double(double)> dw2;

    double W1(std::size_t e) const { return w1.empty() ? 1.0 : w1[e]; }
};

Weighting physical_weighting(double x2, double eps);
Weighting unit_weighting();

struct ForwardOptions {
    int density = 4;  // curve samples per image column
};

// Monotone C^2 curve q1 for the generalized transform.
struct GeneralCurve {
    enum class Kind { increasing, decreasing };
    Kind kind = Kind::increasing;
    std::string name;
    std::function<double(double)> q1;
    std::function<double(double)> dq1;
    std::function<double(double)> d2q1;
    double w = 1.0;

    // Upper limit c of the data support, q <= c E: q1(w) or q1(0).
    double c_top() const;
    // Endpoint of g's domain opposite to c_top: q1(0) or max(q1(w), 0).
    double g(double z) const;
    double dg(double z) const;
    double d2g(double z) const;
    // Throws InvalidCurve when the kind conditions fail on [0, w].
    void validate(double c1 = 0.0) const;
};

// The six families of the generalized-curve figure: "t", "exp(t)-1", "sqrt(t)",
// "1-t", "1-sqrt(t+1/10)", "2-exp(t)".
GeneralCurve make_curve(const std::string& name, double w);
std::vector<std::string> curve_names();

// Shared quadrature core: D(E, s) = W1(E) sum_k W2(t_k) f(E q1(t_k), s + t_k) dt.
SinogramTensor forward_curve(const PhantomImage& f, const std::vector<double>& energies,
                             const std::vector<double>& s1, const std::function<double(double)>& q1, double w,
                             const Weighting& W, const ForwardOptions& opt = {});

SinogramTensor forward_restricted(const PhantomImage& f, const ScanGeometry& g, const Weighting* W = nullptr,
                                  const ForwardOptions& opt = {});
SinogramTensor forward_offset(const PhantomImage& f, const ScanGeometry& g, const Weighting* W = nullptr,
                              const ForwardOptions& opt = {});
// I0 is the per-energy source spectrum (empty means uniform).
SinogramTensor forward_full(const PhantomImage& f, const ScanGeometry& g, const std::vector<double>& I0 = {},
                            const ForwardOptions& opt = {});

// n = 1 on an image over (q, x).
SinogramTensor forward_general(const PhantomImage& f, const GeneralCurve& c, const std::vector<double>& energies,
                               const std::vector<double>& s, const Weighting& W, const ForwardOptions& opt = {});

// n >= 2 in the frequency domain for radial f^(q, |eta|): data^(E, |eta|) =
// W1(E) int_0^w W2(r) r^(n-1) J_n(|eta| r) f^(E q1(r), |eta|) dr.
struct RadialSpectrum {
    std::vector<double> q_axis;
    std::vector<double> eta;  // |eta| samples
    std::vector<std::complex<double>> values;  // q-major
};
RadialSpectrum forward_general_radial(const RadialSpectrum& fhat, const GeneralCurve& c, int n,
                                      const std::vector<double>& energies, const Weighting& W, int samples = 2000);

namespace reference {
// Straightforward serial versions kept as oracles for the parallel kernels.
SinogramTensor forward_curve(const PhantomImage& f, const std::vector<double>& energies,
                             const std::vector<double>& s1, const std::function<double(double)>& q1, double w,
                             const Weighting& W, const ForwardOptions& opt = {});
SinogramTensor forward_full(const PhantomImage& f, const ScanGeometry& g, const std::vector<double>& I0 = {},
                            const ForwardOptions& opt = {});
}  // namespace reference

// Number of midpoint samples on [-w, w] for an image with column step dx.
std::size_t curve_samples(double w, double dx, int density);

}  // namespace bst
