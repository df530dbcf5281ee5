#pragma once
#include <cstdint>

namespace bst {

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
inline std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Counter-based stream: draw i of stream (seed, id) is
// mix(mix(seed) ^ mix(id + 1) + (i + 1) * 0x9E3779B97F4A7C15).
// Every value depends only on (seed, id, i), so results are independent of
// thread count and platform.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(splitmix64_mix(seed) ^ splitmix64_mix(stream + 1)) {}

    std::uint64_t next() { return splitmix64_mix(key_ + (++ctr_) * 0x9E3779B97F4A7C15ULL); }
    // Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
    double normal();
    // Inversion below mu = 10, PTRS transformed rejection (Hormann 1993) above.
    std::int64_t poisson(double mu);

    std::uint64_t counter() const { return ctr_; }

private:
    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
};

}  // namespace bst
