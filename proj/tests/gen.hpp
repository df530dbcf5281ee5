#pragma once
// Small seeded generators for property tests.
#include <cstdint>
#include <random>
#include <vector>

namespace gen {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(eng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
    int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(eng_); }
    std::vector<double> vec(std::size_t n, double a, double b) {
        std::vector<double> v(n);
        for (auto& x : v) x = uniform(a, b);
        return v;
    }

private:
    std::mt19937_64 eng_;
};

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / (n - 1);
    return v;
}

}  // namespace gen
