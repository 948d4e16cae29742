#include "faultloc/rng.hpp"

#include <cmath>
#include <numbers>

namespace faultloc::rng {

double Splitmix::normal() {
    const double u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1 + 1e-300));
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view component) {
    std::uint64_t h = fnv1a(component);
    h ^= master + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h ? h : 0x1234567887654321ull;
}

}  // namespace faultloc::rng
