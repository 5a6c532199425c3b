#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "prsim/constellation.hpp"
#include "prsim/signal.hpp"

namespace prsim {

/// Probabilistically shaped symbol source for one polarization.
struct ShapedSource {
    Constellation constellation = Constellation::uniform(16);
    double target_entropy_bits = 4.0;
    std::uint64_t seed = 0;
};

/// Solves the Maxwell-Boltzmann distribution for the requested entropy.
ShapedSource sample_mb_distribution(int qam_order, double target_entropy_bits,
                                    std::uint64_t seed = 0);

/// Frame structure: training prefix of uniform QAM symbols, then payload with
/// evenly spaced pilot symbols (period round(1/pilot_ratio)).
struct FrameLayout {
    std::size_t payload_len = 4096;
    double pilot_ratio = 0.1;
    std::size_t training_len = 8192;
    int training_qam_order = 64;

    std::size_t pilot_period() const;
    std::vector<std::size_t> pilot_positions() const;  // indices into the payload
    void validate() const;
};

/// Ground truth for one transmitted dual-polarization frame.
struct FrameData {
    FrameLayout layout;
    std::uint64_t seed = 0;
    int qam_order = 16;
    double entropy_bits = 4.0;
    // per polarization, length training_len + payload_len
    std::vector<std::vector<cdouble>> symbols;
    // per polarization, payload constellation indices (pilots hold the corner index)
    std::vector<std::vector<std::uint32_t>> payload_indices;
    std::vector<std::size_t> pilot_positions;   // payload-relative
    std::vector<std::uint8_t> is_pilot;         // payload-relative mask
    // symbol -> waveform amplitude scaling per polarization, set by modulate()
    std::vector<double> symbol_gain;

    std::size_t frame_len() const { return layout.training_len + layout.payload_len; }
    std::vector<std::size_t> data_positions() const;  // payload-relative, non-pilot
};

/// Draws training + shaped payload with pilots for both polarizations.
/// Pilot positions depend only on the layout, never on the seed.
FrameData draw_frame(const ShapedSource& src, const FrameLayout& layout);

struct ModConfig {
    int sps = 2;
    double rolloff = 0.01;
    int span = 64;
    double symbol_rate = 100e9;
};

/// RRC shaping normalized to unit mean power; records the symbol gain used.
ComplexWaveform modulate(std::span<const cdouble> symbols, const ModConfig& cfg,
                         double* symbol_gain = nullptr);

/// Matched filter + symbol-instant sampling, inverse of modulate up to the
/// RRC cascade ISI floor. symbol_gain converts back to constellation units.
std::vector<cdouble> matched_filter_demod(const ComplexWaveform& w, const ModConfig& cfg,
                                          std::size_t n_symbols, double symbol_gain);

/// Transmitter impairment model, applied as: IQ skew, IQ gain/phase mixing,
/// per-quadrature MZM compression, E/O response filtering.
struct TxImpairments {
    FrequencyResponse eo_response = FrequencyResponse::identity();
    double iq_gain_imbalance_db = 0.0;
    double iq_phase_error_deg = 0.0;
    double iq_skew_symbols = 0.0;       // Q delayed relative to I
    double mzm_drive_ratio = 0.0;       // peak drive / Vpi; 0 = linearized

    static TxImpairments neutral() { return {}; }
    bool is_neutral() const;
};

ComplexWaveform apply_tx_impairments(const ComplexWaveform& field, const TxImpairments& imp);

/// Inverse of apply_tx_impairments: regularized E/O inversion, arcsine MZM
/// inversion (clipped outside the monotonic range; clips counted), IQ
/// unmixing, skew removal.
ComplexWaveform invert_tx_impairments(const ComplexWaveform& field, const TxImpairments& imp,
                                      std::size_t* clip_count = nullptr);

/// 2x2 widely-linear coefficients of the IQ gain/phase mix: E' = mu E + nu E*.
void iq_mixing_coefficients(const TxImpairments& imp, cdouble& mu, cdouble& nu);

}  // namespace prsim
