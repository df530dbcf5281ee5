#include "bst/radial.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <numbers>

#include "bst/errors.hpp"

namespace bst {

namespace {

using GK = boost::math::quadrature::gauss_kronrod<double, 61>;

double integrate_phi(int n, double u, bool derivative) {
    int p = n - 2;
    auto f = [&](double phi) {
        double s = p == 0 ? 1.0 : std::pow(std::sin(phi), p);
        double c = std::cos(phi);
        return derivative ? -s * c * std::sin(u * c) : s * std::cos(u * c);
    };
    // Split into panels so the adaptive rule sees at most a few oscillations each.
    int panels = 2 + static_cast<int>(std::abs(u) / 4.0);
    double a = 0.0, h = std::numbers::pi / panels, sum = 0.0;
    for (int i = 0; i < panels; ++i, a += h) sum += GK::integrate(f, a, a + h, 15, 1e-14);
    return sphere_area(p) * sum;
}

}  // namespace

double sphere_area(int k) {
    if (k < 0) throw InvalidArgument("sphere_area: negative dimension");
    double m = 0.5 * (k + 1);
    return 2.0 * std::pow(std::numbers::pi, m) / std::tgamma(m);
}

double radial_J(int n, double u) {
    if (n < 1) throw InvalidArgument("radial_J: n must be >= 1");
    if (n == 1) return 2.0 * std::cos(u);
    return integrate_phi(n, u, false);
}

double radial_dJ(int n, double u) {
    if (n < 1) throw InvalidArgument("radial_dJ: n must be >= 1");
    if (n == 1) return -2.0 * std::sin(u);
    return integrate_phi(n, u, true);
}

double radial_J_series(int n, double u) {
    if (n < 2) throw InvalidArgument("radial_J_series: n must be >= 2");
    // int_0^pi sin^(n-2) cos^(2k) = B((n-1)/2, k + 1/2)
    double a = 0.5 * (n - 1);
    double sum = 0.0, term = 1.0;  // (-1)^k u^(2k) / (2k)!
    for (int k = 0; k < 200; ++k) {
        if (k > 0) term *= -u * u / ((2.0 * k - 1.0) * (2.0 * k));
        double t = term * boost::math::beta(a, k + 0.5);
        sum += t;
        if (k > 2 && std::abs(t) < 1e-18 * std::max(1.0, std::abs(sum))) break;
    }
    return sphere_area(n - 2) * sum;
}

}  // namespace bst
