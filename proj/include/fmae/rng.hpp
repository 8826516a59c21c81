#pragma once

#include <cmath>
#include <cstdint>

namespace fmae {

// Deterministic splitmix64 stream. Self-contained so that generated data,
// reparameterization noise and shuffles are bit-identical across platforms
// and standard-library versions. Substreams derived from (seed, index, tag)
// are independent of generation order, which keeps per-sample content stable
// under parallel generation.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    static uint64_t mix(uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static Rng substream(uint64_t seed, uint64_t index, uint64_t tag) {
        uint64_t s = mix(seed ^ 0x243f6a8885a308d3ULL);
        s = mix(s ^ (index * 0x9e3779b97f4a7c15ULL));
        s = mix(s ^ (tag * 0xd1b54a32d192ed03ULL));
        return Rng(s);
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Inclusive bounds.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    // Standard normal via Box-Muller. Two uniforms per draw, no spare caching,
    // so the draw count is predictable.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

  private:
    uint64_t state_;
};

}  // namespace fmae
