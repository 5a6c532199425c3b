#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace prsim {

using cdouble = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kSpeedOfLight = 299792458.0;          // m/s
inline constexpr double kOsnrRefBandwidthHz = 12.5e9;         // 0.1 nm at 1550 nm
inline constexpr const char* kToolVersion = "prsim 0.1.0";

/// Invalid or inconsistent configuration (CLI exit code 2).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// A processing stage failed (CLI exit code 3). Carries the stage name.
struct stage_error : std::runtime_error {
    stage_error(std::string stage_name, const std::string& what)
        : std::runtime_error("[" + stage_name + "] " + what), stage(std::move(stage_name)) {}
    std::string stage;
};

/// FNV-1a, used for config hashing and seed derivation. Stable across platforms.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a_mix(std::uint64_t h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin_to_db(double lin) { return 10.0 * std::log10(lin); }

}  // namespace prsim
