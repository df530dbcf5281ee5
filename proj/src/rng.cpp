#include "bst/rng.hpp"

#include <cmath>
#include <numbers>

#include "bst/errors.hpp"

namespace bst {

double CounterRng::normal() {
    double u = uniform(), v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

std::int64_t CounterRng::poisson(double mu) {
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw InvalidArgument("poisson: mean must be finite and >= 0");
    if (mu == 0.0) return 0;
    if (mu < 10.0) {
        double p = std::exp(-mu), F = p, u = uniform();
        std::int64_t k = 0;
        while (u > F && k < 1000) {
            ++k;
            p *= mu / static_cast<double>(k);
            F += p;
        }
        return k;
    }
    double smu = std::sqrt(mu), lmu = std::log(mu);
    double b = 0.931 + 2.53 * smu;
    double a = -0.059 + 0.02483 * b;
    double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        double U = uniform() - 0.5, V = uniform();
        double us = 0.5 - std::abs(U);
        double k = std::floor((2.0 * a / us + b) * U + mu + 0.43);
        if (us >= 0.07 && V <= vr) return static_cast<std::int64_t>(k);
        if (k < 0.0 || (us < 0.013 && V > us)) continue;
        if (std::log(V) + std::log(inv_alpha) - std::log(a / (us * us) + b) <= -mu + k * lmu - std::lgamma(k + 1.0))
            return static_cast<std::int64_t>(k);
    }
}

}  // namespace bst
