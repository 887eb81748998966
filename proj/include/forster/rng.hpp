#pragma once

#include <cstdint>
#include <random>

namespace forster {

// Seeded generator with deterministic child streams. Each child is keyed by
// (parent key, stream id) so trial i always sees the same numbers regardless of
// how many draws other trials made.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)), eng_(key_) {}

    Rng split(std::uint64_t stream) const {
        Rng child;
        child.key_ = mix(key_ + 0x9e3779b97f4a7c15ULL * (stream + 1));
        child.eng_.seed(child.key_);
        return child;
    }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
    bool coin() { return (eng_() >> 63) != 0; }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(eng_); }

    std::mt19937_64& engine() { return eng_; }
    std::uint64_t key() const { return key_; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::mt19937_64 eng_;
};

}  // namespace forster
