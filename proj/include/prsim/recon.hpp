#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "prsim/channel_state.hpp"
#include "prsim/constellation.hpp"
#include "prsim/frontend.hpp"
#include "prsim/txsim.hpp"

namespace prsim {

/// What a receiver legitimately knows about the frame it reconstructs:
/// modulation settings, layout, the training and pilot sequences, and the
/// symbol-to-waveform gain.
struct ReceiverFrameInfo {
    ModConfig mod;
    std::size_t training_len = 0;
    std::size_t payload_len = 0;
    std::vector<std::size_t> pilot_positions;            // payload-relative
    std::vector<std::vector<cdouble>> training_symbols;  // per pol
    std::vector<std::vector<cdouble>> pilot_symbols;     // per pol, one per pilot position
    std::vector<double> symbol_gain;                     // per pol
    int payload_qam_order = 16;
    double payload_entropy_bits = 4.0;

    std::size_t frame_len() const { return training_len + payload_len; }
};

ReceiverFrameInfo receiver_info_from_frame(const FrameData& frame, const ModConfig& mod);

/// Solver settings for the modified alternating-projection loop.
struct GsConfig {
    int max_iterations = 100;
    std::optional<double> bandwidth_limit_hz;  // default (1+rolloff)*baud/2
    std::vector<int> reset_schedule = {10, 20, 30, 40, 50, 60, 70, 80, 90};
    double reset_fraction = 0.2;               // worst fraction by decision distance
    // stronger restarts: flagged symbols snap to the nearest point (amplitude
    // and phase), which breaks averaged-projection stagnation once decisions
    // carry information
    std::vector<int> decision_reset_schedule = {60, 70, 80, 90};
    double decision_reset_fraction = 1.0;
    double update_relaxation = 1.8;            // candidate step size through the backward estimate
    std::size_t phase_block_symbols = 128;     // pilot phase tracking block; 0 disables
    bool constrain_training = true;
    bool constrain_support = true;             // transmit signal is zero outside the frame span
    double early_stop_tol = 1e-6;
    int early_stop_window = 5;
    bool joint_polarization = true;            // false: invert Jones up front, solve per pol
    std::vector<double> branch_weights;        // empty = equal
    double pilot_min_correlation = 0.5;
    std::size_t edge_margin_symbols = 64;

    void validate(double nyquist_hz) const;
};

/// Per-iteration convergence record.
struct GsTrace {
    std::vector<double> objective;
    std::vector<double> snr_db;  // vs ground truth when provided, else NaN
};

struct FieldEstimate {
    DualPolField reconstructed;                       // transmit-plane candidate on the grid
    std::vector<std::vector<cdouble>> payload_symbols;  // per pol
    std::vector<std::uint8_t> valid_mask;             // per payload symbol
    bool low_confidence = false;
    std::size_t mzm_clip_count = 0;
};

struct GsResult {
    FieldEstimate estimate;
    GsTrace trace;
};

/// Designs a symbol-spaced-or-finer FIR approximating the regularized inverse
/// of a branch O/E response. Gain is capped; returns whether a spectral null
/// below the regularization floor was hit.
struct FfeDesign {
    FrequencyResponse taps;
    bool capped = false;
};
FfeDesign design_inverse_ffe(const FrequencyResponse& response, double sample_rate,
                             double symbol_rate, int n_taps = 101,
                             double spacing_symbols = 0.5, double regularization = 1e-3,
                             double gain_cap_db = 20.0);

/// Applies per-branch inverse FFEs to a capture.
IntensityCapture ffe_calibrate_and_equalize(const IntensityCapture& capture,
                                            const std::vector<FrequencyResponse>& rx_responses,
                                            double symbol_rate);
DualPolCapture ffe_calibrate_and_equalize(const DualPolCapture& capture,
                                          const std::vector<FrequencyResponse>& rx_responses,
                                          double symbol_rate);

/// Transmit-plane candidate -> pre-detection branch fields, mirroring the
/// physical chain: Tx impairments, fiber dispersion, Jones, branch optics.
std::array<std::vector<ComplexWaveform>, 2> forward_propagate(const DualPolField& candidate,
                                                              const ChannelState& cs,
                                                              const FrontendSpec& spec);

/// Reverse of forward_propagate. Combiner branches are inverted through both
/// ports (delayed and direct tributary) and the per-branch candidates are
/// averaged with the given weights (empty = equal).
DualPolField backward_propagate(const std::array<std::vector<ComplexWaveform>, 2>& branch_fields,
                                const ChannelState& cs, const FrontendSpec& spec,
                                const std::vector<double>& weights = {},
                                std::size_t* clip_count = nullptr);

/// Removes the global phase theta* = arg sum(rx * conj(tx)) measured on the
/// pilots. Returns theta and sets low_confidence when the pilot correlation
/// is weak. block_count > 1 applies a piecewise-constant alignment.
double pilot_phase_align(std::vector<cdouble>& payload_symbols,
                         const std::vector<std::size_t>& pilot_positions,
                         const std::vector<cdouble>& pilot_values,
                         double min_correlation = 0.5, bool* low_confidence = nullptr,
                         std::size_t block_count = 1);

/// Channel-aware modified alternating-projection reconstruction from an
/// equalized intensity capture. `truth` (optional) only feeds the SNR trace.
GsResult gs_reconstruct(const DualPolCapture& equalized_capture, const ChannelState& cs,
                        const FrontendSpec& spec, const ReceiverFrameInfo& info,
                        const GsConfig& cfg, const FrameData* truth = nullptr);

}  // namespace prsim
