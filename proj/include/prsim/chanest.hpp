#pragma once

#include <string>
#include <vector>

#include "prsim/recon.hpp"

namespace prsim {

/// Staged derivative-free estimator settings. Stages run in order; each fits
/// one parameter group with the others frozen.
struct EstimatorConfig {
    ChannelState init;

    double dispersion_lo_ps_per_nm = -1.0e5;
    double dispersion_hi_ps_per_nm = 1.0e5;
    double delay_window_symbols = 8.0;
    double iq_gain_bound_db = 4.0;
    double iq_phase_bound_deg = 20.0;
    double iq_skew_bound_symbols = 0.5;
    double mzm_ratio_hi = 1.5;
    int eo_fit_taps = 0;   // 0 = do not fit the Tx E/O response
    int rx_fit_taps = 0;   // 0 = do not fit the branch O/E responses

    // stage plan; recognized names: delays, dispersion, rx, tx, jones
    std::vector<std::string> stages = {"delays", "dispersion", "tx", "dispersion", "tx"};

    int max_evaluations = 4000;
    double tolerance = 1e-14;
    std::size_t margin_symbols = 600;  // training span excluded at both ends
};

struct EstimationResult {
    ChannelState state;
    double objective = 0.0;
    bool converged = false;
    int evaluations = 0;
};

/// Objective: sum over branches and polarizations of the mean squared
/// difference between the square roots of the modeled and measured
/// training-span intensities.
double intensity_mismatch(const ChannelState& cs, const ReceiverFrameInfo& info,
                          const DualPolCapture& measured, const FrontendSpec& spec,
                          std::size_t margin_symbols = 600);

/// Staged coordinate descent over the static impairments: branch delays
/// (grid search + parabolic refine), fiber dispersion, O/E responses, Tx
/// response / IQ imbalance / modulator drive.
EstimationResult estimate_static(const ReceiverFrameInfo& info, const DualPolCapture& measured,
                                 const FrontendSpec& spec, const EstimatorConfig& cfg);

/// Fits only the three Jones angles with everything else frozen.
/// Budget-capped at max_evaluations (default suits a fast refresh).
EstimationResult estimate_jones(const ReceiverFrameInfo& info, const DualPolCapture& measured,
                                const FrontendSpec& spec, const ChannelState& static_state,
                                int max_evaluations = 200, std::size_t margin_symbols = 600);

}  // namespace prsim
