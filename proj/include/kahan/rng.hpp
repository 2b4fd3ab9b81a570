#pragma once

// Deterministic uniform sampling shared by the catalog generators and the
// verification sweeps. std::uniform_real_distribution is not pinned down by
// the standard, so doubles are built from raw mt19937_64 output directly to
// make seeded runs reproducible everywhere.

#include <cstdint>
#include <random>

namespace kahan {

// Derives independent stream seeds from a base seed and an index.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    std::uint64_t next_u64() { return gen_(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return gen_() % n; }

private:
    std::mt19937_64 gen_;
};

} // namespace kahan
