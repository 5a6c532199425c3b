#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prsim/constellation.hpp"

namespace prsim {

/// SNR after removing the least-squares complex scale between estimate and
/// reference; capped at 80 dB.
double recovery_snr_db(std::span<const cdouble> estimate, std::span<const cdouble> reference);

struct GmiResult {
    double gmi_bits = 0.0;
    double fitted_noise_var = 0.0;  // complex noise variance of the matched metric
    cdouble scale{1.0, 0.0};        // least-squares alignment applied to the input
};

/// Monte-Carlo bitwise GMI with a circular-Gaussian mismatched metric whose
/// variance is fitted per frame (maximized over the metric variance).
GmiResult gmi(std::span<const cdouble> rx, std::span<const std::uint32_t> tx_indices,
              const Constellation& constellation);

/// NGMI = 1 - (H - GMI)/m.
double ngmi(double gmi_bits, double entropy_bits, int bits_per_symbol);

/// Net rate in Gb/s: n_pol * baud * (1 - pilot_ratio) * [H - OH/(1+OH) * m].
double net_rate_gbps(double baud_gbaud, int n_pol, double pilot_ratio, double entropy_bits,
                     double fec_overhead, int bits_per_symbol);

/// Net optical spectral efficiency in b/s/Hz.
double net_ose_bps_per_hz(double net_rate_gbps, double occupied_bandwidth_ghz);

struct ScoreReport {
    double recovery_snr_db_x = 0.0;
    double recovery_snr_db_y = 0.0;
    double gmi_bits = 0.0;       // per polarization, averaged
    double ngmi = 0.0;
    double net_rate_gbps = 0.0;
    double net_ose_bps_per_hz = 0.0;
    std::size_t symbol_count = 0;
    bool low_confidence = false;
};

}  // namespace prsim
