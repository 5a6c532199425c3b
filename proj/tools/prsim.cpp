// Command-line experiment runner: end-to-end simulations, sweeps and
// file-level capture/estimate/reconstruct/score stages.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prsim/experiment.hpp"

namespace fs = std::filesystem;
using namespace prsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

ExperimentConfig load_config(const CommonOpts& opts) {
    auto cfg = ExperimentConfig::from_json_file(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    return cfg;
}

void print_report(const ScoreReport& r) {
    std::printf("recovery_snr_db: x=%.2f y=%.2f\n", r.recovery_snr_db_x, r.recovery_snr_db_y);
    std::printf("gmi_bits: %.4f  ngmi: %.4f\n", r.gmi_bits, r.ngmi);
    std::printf("net_rate_gbps: %.1f  net_ose_bps_per_hz: %.2f\n", r.net_rate_gbps,
                r.net_ose_bps_per_hz);
    std::printf("symbols_scored: %zu%s\n", r.symbol_count,
                r.low_confidence ? "  (low pilot confidence)" : "");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"phase-retrieval optical link simulator"};
    app.require_subcommand(1);

    CommonOpts opts;
    app.add_option("--config", opts.config_path, "experiment config JSON")->required();
    app.add_option("--out", opts.out_dir, "output directory");
    std::uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "override config seed");
    app.add_option("--threads", opts.threads, "sweep worker count");

    auto* cmd_run = app.add_subcommand("run", "full chain: tx -> channel -> capture -> "
                                              "reconstruct -> score");
    auto* cmd_sweep = app.add_subcommand("sweep", "run once per axis value, emit sweep.csv");
    std::string axis_name = "osnr";
    std::vector<double> axis_values;
    cmd_sweep->add_option("--axis", axis_name, "distance|entropy|iterations|osnr");
    cmd_sweep->add_option("--values", axis_values, "axis values (monotone increasing)");

    auto* cmd_capture = app.add_subcommand("capture", "tx -> channel -> capture files");
    auto* cmd_estimate = app.add_subcommand("estimate", "channel estimation from a capture file");
    std::string capture_path, state_path, frame_path, estimate_path;
    cmd_estimate->add_option("--capture", capture_path, "capture file")->required();
    auto* cmd_reconstruct =
        app.add_subcommand("reconstruct", "field reconstruction from capture + channel state");
    cmd_reconstruct->add_option("--capture", capture_path, "capture file")->required();
    cmd_reconstruct->add_option("--state", state_path, "channel state JSON")->required();
    auto* cmd_score = app.add_subcommand("score", "score a field estimate against frame truth");
    cmd_score->add_option("--estimate", estimate_path, "field estimate file")->required();
    cmd_score->add_option("--frame", frame_path, "frame ground-truth file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (seed_opt->count() > 0) opts.seed = seed_val;
        const auto cfg = load_config(opts);
        const fs::path out(opts.out_dir);

        if (cmd_run->parsed()) {
            const auto artifacts = run_experiment(cfg);
            write_artifacts(artifacts, cfg, out);
            print_report(artifacts.report);
        } else if (cmd_sweep->parsed()) {
            const auto axis = sweep_axis_from_name(axis_name);
            const auto csv = sweep(cfg, axis, axis_values, opts.threads);
            fs::create_directories(out);
            write_text_file(out / "sweep.csv", csv);
            std::printf("wrote %s (%zu points)\n", (out / "sweep.csv").c_str(), axis_values.size());
        } else if (cmd_capture->parsed()) {
            const auto artifacts = run_experiment(cfg);
            fs::create_directories(out);
            save_capture(out / "capture.bin", artifacts.capture);
            save_frame(out / "frame.bin", artifacts.frame);
            save_channel_state(out / "channel_state.json", artifacts.state_used);
            std::printf("wrote capture.bin, frame.bin, channel_state.json under %s\n",
                        out.c_str());
        } else if (cmd_estimate->parsed()) {
            const auto cap = load_capture(capture_path);
            EstimatorConfig est_cfg = cfg.estimator;
            est_cfg.init = true_channel_state(TxImpairments::neutral(), cfg.fiber,
                                              JonesMatrix::identity(), cap.frontend);
            est_cfg.init.fiber_ps_per_nm += cfg.init_dispersion_offset_ps_per_nm;
            auto res = estimate_static(cap.info, cap.capture, cap.frontend, est_cfg);
            const auto jres =
                estimate_jones(cap.info, cap.capture, cap.frontend, res.state);
            res.state = jres.state;
            fs::create_directories(out);
            save_channel_state(out / "channel_state.json", res.state);
            std::printf("objective %.3e after %d evaluations%s\n", jres.objective,
                        res.evaluations + jres.evaluations,
                        res.converged ? "" : "  (not converged)");
        } else if (cmd_reconstruct->parsed()) {
            const auto cap = load_capture(capture_path);
            const auto cs = load_channel_state(state_path);
            const auto equalized =
                ffe_calibrate_and_equalize(cap.capture, cs.rx, cap.info.mod.symbol_rate);
            const auto res = gs_reconstruct(equalized, cs, cap.frontend, cap.info, cfg.gs);
            fs::create_directories(out);
            save_field_estimate(out / "estimate.bin", res.estimate);
            write_text_file(out / "trace.csv", trace_csv(res.trace, cfg.config_hash));
            std::printf("final objective %.3e after %zu iterations\n",
                        res.trace.objective.back(), res.trace.objective.size());
        } else if (cmd_score->parsed()) {
            const auto est = load_field_estimate(estimate_path);
            const auto frame = load_frame(frame_path);
            const auto report = score_estimate(est, frame, cfg);
            fs::create_directories(out);
            write_text_file(out / "report.csv", report_csv(report, cfg.config_hash));
            print_report(report);
        }
        return kExitOk;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const stage_error& e) {
        std::cerr << "stage error " << e.what() << "\n";
        return kExitStage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
}
