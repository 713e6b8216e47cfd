#pragma once

#include <cmath>
#include <complex>
#include <cstdint>

#include "uavdc/common.hpp"

namespace uavdc {

// SplitMix64 stream with deterministic, order-free substream derivation.
// Substreams are pure functions of (seed, tags), so channel realizations for
// (episode, slot, node) never depend on generation order.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : origin_(mix(seed ^ 0x5851f42d4c957f2dull)), state_(origin_) {}

    RngStream substream(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
        std::uint64_t s = origin_;  // not state_: draws must not shift derivations
        s = mix(s ^ (a + 0x9e3779b97f4a7c15ull));
        s = mix(s ^ (b + 0xbf58476d1ce4e5b9ull));
        s = mix(s ^ (c + 0x94d049bb133111ebull));
        RngStream out(0);
        out.origin_ = s;
        out.state_ = s;
        return out;
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    // standard normal via Box-Muller; two fresh uniforms per draw, no cached state
    double normal() {
        double u1 = 1.0 - next_double();  // (0, 1]
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // CN(0,1): unit-variance circularly symmetric complex Gaussian
    Complex cnormal() {
        double u1 = 1.0 - next_double();
        double u2 = next_double();
        double r = std::sqrt(-std::log(u1));  // Rayleigh with E[r^2] = 1
        return {r * std::cos(2.0 * kPi * u2), r * std::sin(2.0 * kPi * u2)};
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    std::uint64_t origin_;  // derivation point, fixed at construction
    std::uint64_t state_;   // draw counter
};

}  // namespace uavdc
