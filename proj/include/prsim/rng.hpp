#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "prsim/common.hpp"

namespace prsim {

/// Deterministic random stream. Wraps mt19937_64 but generates uniforms and
/// gaussians itself so results are identical across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // modulo bias is < 2^-40 for the table sizes used here
        return gen_() % n;
    }

    /// Standard normal via Box-Muller.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * kPi * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

    cdouble gaussian_complex() {
        const double re = gaussian();
        const double im = gaussian();
        return {re, im};
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Derives an independent substream seed from a base seed and a tag, so that
/// e.g. per-branch noise or per-sweep-point streams never overlap.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t h = fnv1a(tag);
    h = fnv1a_mix(h, base);
    h = fnv1a_mix(h, index);
    return h;
}

}  // namespace prsim
