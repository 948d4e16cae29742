#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace faultloc::rng {

/// splitmix64; platform-independent so seeded runs replay exactly.
class Splitmix {
public:
    explicit Splitmix(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// uniform integer in [0, n)
    std::uint64_t bounded(std::uint64_t n) { return next_u64() % n; }

    /// standard normal (Box-Muller, always consumes two draws)
    double normal();

private:
    std::uint64_t state_;
};

/// FNV-1a, for deriving per-component seeds and content digests.
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ull);

std::uint64_t derive_seed(std::uint64_t master, std::string_view component);

/// Deterministic Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& v, Splitmix& r) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(r.bounded(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace faultloc::rng
