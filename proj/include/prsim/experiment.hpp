#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "prsim/chanest.hpp"
#include "prsim/io.hpp"
#include "prsim/metrics.hpp"

namespace prsim {

/// Full experiment description. Parsed from JSON with explicit units in key
/// names; see configs/ for examples.
struct ExperimentConfig {
    std::uint64_t seed = 1;

    // tx
    int qam_order = 16;
    double entropy_bits = 4.0;
    std::size_t payload_symbols = 4096;
    double pilot_ratio = 0.1;
    std::size_t training_symbols = 8192;
    int training_qam_order = 64;
    ModConfig mod;
    TxImpairments tx_impairments;

    // channel
    FiberSpec fiber;
    double jones_alpha_deg = 0.0;
    double jones_phi1_deg = 0.0;
    double jones_phi2_deg = 0.0;
    std::optional<double> osnr_db;
    std::map<double, double> osnr_table_db_by_km;  // for distance sweeps

    // frontend
    double frontend_dispersive_ps_per_nm = -1228.0;
    double frontend_delay_a_symbols = 93.0;
    double frontend_delay_b_symbols = 199.0;
    std::optional<double> oe_f3db_ghz;  // per-branch one-pole roll-off; unset = flat
    int oe_taps = 33;
    double thermal_noise_density = 0.0;
    std::optional<int> adc_bits;

    GsConfig gs;

    // estimator; when disabled the true channel state feeds reconstruction
    bool estimate_channel = false;
    EstimatorConfig estimator;
    double init_dispersion_offset_ps_per_nm = 0.0;  // perturbs the estimator start

    // metrics
    double fec_overhead = 0.1902;
    double ngmi_threshold = 0.8798;

    std::size_t guard_samples = 4096;

    std::uint64_t config_hash = 0;

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_json_file(const std::filesystem::path& path);
    void validate() const;

    JonesMatrix jones() const;
    double osnr_for_distance(double km) const;
};

struct RunArtifacts {
    ScoreReport report;
    GsTrace trace;
    FrameData frame;
    CaptureFile capture;
    ChannelState state_used;
    FieldEstimate estimate;
};

/// Executes tx -> channel -> frontend -> (estimate) -> ffe -> reconstruction
/// -> metrics. Reproducible from (config, seed).
RunArtifacts run_experiment(const ExperimentConfig& cfg);

/// Scores a field estimate against the frame ground truth.
ScoreReport score_estimate(const FieldEstimate& est, const FrameData& frame,
                           const ExperimentConfig& cfg);

/// Writes waveform/capture/state/trace/report artifacts under out_dir.
void write_artifacts(const RunArtifacts& a, const ExperimentConfig& cfg,
                     const std::filesystem::path& out_dir);

enum class SweepAxis { distance, entropy, iterations, osnr };
SweepAxis sweep_axis_from_name(const std::string& name);

/// One run per axis value with derived seeds; long-format CSV rows
/// (axis,value,metric,metric_value,seed).
std::string sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<double>& values,
                  int threads = 1);

}  // namespace prsim
