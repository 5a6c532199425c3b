#include "prsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>

#include <json.hpp>

#include "prsim/rng.hpp"

namespace prsim {

using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    return j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw config_error("config: malformed JSON");
    ExperimentConfig c;
    c.seed = get_or<std::uint64_t>(j, "seed", 1);

    if (j.contains("tx")) {
        const auto& t = j.at("tx");
        c.qam_order = get_or<int>(t, "qam_order", c.qam_order);
        c.entropy_bits =
            get_or<double>(t, "entropy_bits", std::log2(static_cast<double>(c.qam_order)));
        c.payload_symbols = get_or<std::size_t>(t, "payload_symbols", c.payload_symbols);
        c.pilot_ratio = get_or<double>(t, "pilot_ratio", c.pilot_ratio);
        c.training_symbols = get_or<std::size_t>(t, "training_symbols", c.training_symbols);
        c.training_qam_order = get_or<int>(t, "training_qam_order", c.training_qam_order);
        c.mod.symbol_rate = get_or<double>(t, "symbol_rate_gbaud", 100.0) * 1e9;
        c.mod.sps = get_or<int>(t, "sps", c.mod.sps);
        c.mod.rolloff = get_or<double>(t, "rolloff", c.mod.rolloff);
        c.mod.span = get_or<int>(t, "rrc_span_symbols", c.mod.span);
        if (t.contains("impairments")) {
            const auto& imp = t.at("impairments");
            c.tx_impairments.iq_gain_imbalance_db = get_or<double>(imp, "iq_gain_db", 0.0);
            c.tx_impairments.iq_phase_error_deg = get_or<double>(imp, "iq_phase_deg", 0.0);
            c.tx_impairments.iq_skew_symbols = get_or<double>(imp, "iq_skew_symbols", 0.0);
            c.tx_impairments.mzm_drive_ratio = get_or<double>(imp, "mzm_drive_ratio", 0.0);
            if (imp.contains("eo_taps_re")) {
                const auto re = imp.at("eo_taps_re").get<std::vector<double>>();
                const auto im = get_or<std::vector<double>>(imp, "eo_taps_im",
                                                            std::vector<double>(re.size(), 0.0));
                if (re.size() != im.size())
                    throw config_error("config: eo_taps_re/eo_taps_im length mismatch");
                std::vector<cdouble> taps;
                for (std::size_t i = 0; i < re.size(); ++i) taps.emplace_back(re[i], im[i]);
                c.tx_impairments.eo_response = FrequencyResponse::from_taps(
                    FrequencyResponse::Kind::complex_valued, std::move(taps), 1.0);
            }
        }
    } else {
        c.mod.symbol_rate = 100e9;
    }

    if (j.contains("channel")) {
        const auto& ch = j.at("channel");
        c.fiber.length_km = get_or<double>(ch, "fiber_km", 0.0);
        c.fiber.dispersion_ps_per_nm_km = get_or<double>(ch, "dispersion_ps_per_nm_km", 17.0);
        c.fiber.wavelength_nm = get_or<double>(ch, "wavelength_nm", 1550.0);
        c.jones_alpha_deg = get_or<double>(ch, "jones_alpha_deg", 0.0);
        c.jones_phi1_deg = get_or<double>(ch, "jones_phi1_deg", 0.0);
        c.jones_phi2_deg = get_or<double>(ch, "jones_phi2_deg", 0.0);
        if (ch.contains("osnr_db") && !ch.at("osnr_db").is_null())
            c.osnr_db = ch.at("osnr_db").get<double>();
        if (ch.contains("osnr_table")) {
            for (const auto& row : ch.at("osnr_table"))
                c.osnr_table_db_by_km[row.at("distance_km").get<double>()] =
                    row.at("osnr_db").get<double>();
        }
    }

    if (j.contains("frontend")) {
        const auto& fe = j.at("frontend");
        c.frontend_dispersive_ps_per_nm =
            get_or<double>(fe, "dispersive_ps_per_nm", c.frontend_dispersive_ps_per_nm);
        c.frontend_delay_a_symbols = get_or<double>(fe, "delay_a_symbols", c.frontend_delay_a_symbols);
        c.frontend_delay_b_symbols = get_or<double>(fe, "delay_b_symbols", c.frontend_delay_b_symbols);
        if (fe.contains("oe_f3db_ghz") && !fe.at("oe_f3db_ghz").is_null())
            c.oe_f3db_ghz = fe.at("oe_f3db_ghz").get<double>();
        c.oe_taps = get_or<int>(fe, "oe_taps", c.oe_taps);
        c.thermal_noise_density = get_or<double>(fe, "thermal_noise_density", 0.0);
        if (fe.contains("adc_bits") && !fe.at("adc_bits").is_null())
            c.adc_bits = fe.at("adc_bits").get<int>();
    }

    if (j.contains("gs")) {
        const auto& g = j.at("gs");
        c.gs.max_iterations = get_or<int>(g, "max_iterations", c.gs.max_iterations);
        if (g.contains("bandwidth_limit_ghz") && !g.at("bandwidth_limit_ghz").is_null())
            c.gs.bandwidth_limit_hz = g.at("bandwidth_limit_ghz").get<double>() * 1e9;
        c.gs.reset_schedule = get_or<std::vector<int>>(g, "reset_schedule", c.gs.reset_schedule);
        c.gs.reset_fraction = get_or<double>(g, "reset_fraction", c.gs.reset_fraction);
        c.gs.decision_reset_schedule =
            get_or<std::vector<int>>(g, "decision_reset_schedule", c.gs.decision_reset_schedule);
        c.gs.decision_reset_fraction =
            get_or<double>(g, "decision_reset_fraction", c.gs.decision_reset_fraction);
        c.gs.update_relaxation = get_or<double>(g, "update_relaxation", c.gs.update_relaxation);
        c.gs.phase_block_symbols =
            get_or<std::size_t>(g, "phase_block_symbols", c.gs.phase_block_symbols);
        c.gs.constrain_training = get_or<bool>(g, "constrain_training", c.gs.constrain_training);
        c.gs.early_stop_tol = get_or<double>(g, "early_stop_tol", c.gs.early_stop_tol);
        c.gs.joint_polarization = get_or<bool>(g, "joint_polarization", c.gs.joint_polarization);
        c.gs.branch_weights = get_or<std::vector<double>>(g, "branch_weights", c.gs.branch_weights);
        c.gs.edge_margin_symbols =
            get_or<std::size_t>(g, "edge_margin_symbols", c.gs.edge_margin_symbols);
    }

    if (j.contains("estimator")) {
        const auto& e = j.at("estimator");
        c.estimate_channel = get_or<bool>(e, "enabled", false);
        c.init_dispersion_offset_ps_per_nm =
            get_or<double>(e, "init_dispersion_offset_ps_per_nm", 0.0);
        c.estimator.delay_window_symbols =
            get_or<double>(e, "delay_window_symbols", c.estimator.delay_window_symbols);
        c.estimator.max_evaluations = get_or<int>(e, "max_evaluations", c.estimator.max_evaluations);
        c.estimator.margin_symbols =
            get_or<std::size_t>(e, "margin_symbols", c.estimator.margin_symbols);
        c.estimator.stages = get_or<std::vector<std::string>>(e, "stages", c.estimator.stages);
        c.estimator.eo_fit_taps = get_or<int>(e, "eo_fit_taps", 0);
        c.estimator.rx_fit_taps = get_or<int>(e, "rx_fit_taps", 0);
    }

    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        c.fec_overhead = get_or<double>(m, "fec_overhead", c.fec_overhead);
        c.ngmi_threshold = get_or<double>(m, "ngmi_threshold", c.ngmi_threshold);
    }
    c.guard_samples = get_or<std::size_t>(j, "guard_samples", c.guard_samples);

    c.config_hash = fnv1a(j.dump());
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

void ExperimentConfig::validate() const {
    if (qam_order != 4 && qam_order != 16 && qam_order != 64 && qam_order != 256)
        throw config_error("config: tx.qam_order must be 4/16/64/256");
    if (mod.sps < 2) throw config_error("config: tx.sps must be >= 2");
    if (mod.rolloff <= 0.0 || mod.rolloff > 1.0)
        throw config_error("config: tx.rolloff must be in (0, 1]");
    if (payload_symbols == 0) throw config_error("config: tx.payload_symbols must be positive");
    if (pilot_ratio < 0.0 || pilot_ratio >= 1.0)
        throw config_error("config: tx.pilot_ratio must be in [0, 1)");
    if (fec_overhead < 0.0) throw config_error("config: metrics.fec_overhead must be >= 0");
    gs.validate(mod.sps * mod.symbol_rate / 2.0);
}

JonesMatrix ExperimentConfig::jones() const {
    const double d = kPi / 180.0;
    return JonesMatrix::from_angles(jones_alpha_deg * d, jones_phi1_deg * d, jones_phi2_deg * d);
}

double ExperimentConfig::osnr_for_distance(double km) const {
    if (osnr_table_db_by_km.empty())
        throw config_error("config: distance sweep needs channel.osnr_table");
    // linear interpolation, clamped at table ends
    auto hi = osnr_table_db_by_km.lower_bound(km);
    if (hi == osnr_table_db_by_km.begin()) return hi->second;
    if (hi == osnr_table_db_by_km.end()) return std::prev(hi)->second;
    const auto lo = std::prev(hi);
    const double f = (km - lo->first) / (hi->first - lo->first);
    return lo->second * (1.0 - f) + hi->second * f;
}

namespace {

FrontendSpec frontend_from_config(const ExperimentConfig& cfg) {
    FrontendSpec spec =
        default_frontend(cfg.mod.sps * cfg.mod.symbol_rate, cfg.frontend_dispersive_ps_per_nm,
                         cfg.frontend_delay_a_symbols, cfg.frontend_delay_b_symbols);
    for (auto& b : spec.branches) {
        if (cfg.oe_f3db_ghz)
            b.oe_response =
                make_one_pole_lowpass(FrequencyResponse::Kind::real, *cfg.oe_f3db_ghz * 1e9,
                                      spec.sample_rate, cfg.mod.symbol_rate, cfg.oe_taps);
        b.thermal_noise_density = cfg.thermal_noise_density;
        b.adc_bits = cfg.adc_bits;
    }
    return spec;
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg) {
    RunArtifacts a;

    // --- txsim
    FrameLayout layout;
    layout.payload_len = cfg.payload_symbols;
    layout.pilot_ratio = cfg.pilot_ratio;
    layout.training_len = cfg.training_symbols;
    layout.training_qam_order = cfg.training_qam_order;
    ShapedSource src;
    try {
        const double m = std::log2(static_cast<double>(cfg.qam_order));
        src = (cfg.entropy_bits >= m - 1e-12)
                  ? ShapedSource{Constellation::uniform(cfg.qam_order), m, cfg.seed}
                  : sample_mb_distribution(cfg.qam_order, cfg.entropy_bits, cfg.seed);
        a.frame = draw_frame(src, layout);
    } catch (const config_error&) {
        throw;
    } catch (const std::exception& e) {
        throw stage_error("txsim", e.what());
    }

    DualPolField field;
    try {
        for (int p = 0; p < 2; ++p) {
            double gain = 1.0;
            auto w = modulate(a.frame.symbols[static_cast<std::size_t>(p)], cfg.mod, &gain);
            a.frame.symbol_gain[static_cast<std::size_t>(p)] = gain;
            w = apply_tx_impairments(w, cfg.tx_impairments);
            ((p == 0) ? field.x : field.y) = pad_to_grid(w, cfg.guard_samples);
        }
    } catch (const std::exception& e) {
        throw stage_error("txsim", e.what());
    }

    // --- channel
    const FrontendSpec spec = frontend_from_config(cfg);
    try {
        for (auto* pol : {&field.x, &field.y})
            *pol = apply_cd(*pol, cfg.fiber.total_dispersion_ps_per_nm(), cfg.fiber.wavelength_nm);
        field = apply_jones(field, cfg.jones());
        NoiseSpec noise;
        noise.osnr_db = cfg.osnr_db;
        noise.seed = derive_seed(cfg.seed, "ase");
        field = add_ase(field, noise);
    } catch (const std::exception& e) {
        throw stage_error("channel", e.what());
    }

    // --- frontend
    try {
        a.capture.capture = capture(field, spec, derive_seed(cfg.seed, "capture"));
        a.capture.frontend = spec;
        a.capture.info = receiver_info_from_frame(a.frame, cfg.mod);
    } catch (const std::exception& e) {
        throw stage_error("frontend", e.what());
    }

    // --- channel knowledge
    const ChannelState truth_state =
        true_channel_state(cfg.tx_impairments, cfg.fiber, cfg.jones(), spec);
    if (cfg.estimate_channel) {
        try {
            EstimatorConfig est_cfg = cfg.estimator;
            est_cfg.init = truth_state;
            est_cfg.init.fiber_ps_per_nm += cfg.init_dispersion_offset_ps_per_nm;
            const auto res = estimate_static(a.capture.info, a.capture.capture, spec, est_cfg);
            a.state_used = res.state;
        } catch (const stage_error&) {
            throw;
        } catch (const std::exception& e) {
            throw stage_error("chanest", e.what());
        }
    } else {
        a.state_used = truth_state;
    }

    // --- ffe + reconstruction
    GsResult gs_res;
    try {
        const auto equalized =
            ffe_calibrate_and_equalize(a.capture.capture, a.state_used.rx, cfg.mod.symbol_rate);
        gs_res = gs_reconstruct(equalized, a.state_used, spec, a.capture.info, cfg.gs, &a.frame);
    } catch (const stage_error&) {
        throw;
    } catch (const std::exception& e) {
        throw stage_error("recon", e.what());
    }
    a.trace = std::move(gs_res.trace);
    a.estimate = std::move(gs_res.estimate);

    // --- metrics
    a.report = score_estimate(a.estimate, a.frame, cfg);
    return a;
}

ScoreReport score_estimate(const FieldEstimate& est, const FrameData& frame,
                           const ExperimentConfig& cfg) {
    try {
        ScoreReport rep;
        const std::size_t t_len = frame.layout.training_len;
        const Constellation c =
            (frame.entropy_bits >= std::log2(static_cast<double>(frame.qam_order)) - 1e-12)
                ? Constellation::uniform(frame.qam_order)
                : Constellation::maxwell_boltzmann(frame.qam_order, frame.entropy_bits);

        double gmi_sum = 0.0;
        std::size_t used = 0;
        for (int p = 0; p < 2; ++p) {
            std::vector<cdouble> rx, ref;
            std::vector<std::uint32_t> tx_idx;
            const auto& pay = est.payload_symbols[static_cast<std::size_t>(p)];
            for (std::size_t i = 0; i < pay.size(); ++i) {
                if (!est.valid_mask[i] || frame.is_pilot[i]) continue;
                rx.push_back(pay[i]);
                ref.push_back(frame.symbols[static_cast<std::size_t>(p)][t_len + i]);
                tx_idx.push_back(frame.payload_indices[static_cast<std::size_t>(p)][i]);
            }
            const double snr = recovery_snr_db(rx, ref);
            if (p == 0)
                rep.recovery_snr_db_x = snr;
            else
                rep.recovery_snr_db_y = snr;
            gmi_sum += gmi(rx, tx_idx, c).gmi_bits;
            used += rx.size();
        }
        rep.gmi_bits = gmi_sum / 2.0;
        rep.ngmi = ngmi(rep.gmi_bits, frame.entropy_bits, c.bits_per_symbol());
        rep.symbol_count = used;
        rep.low_confidence = est.low_confidence;
        rep.net_rate_gbps =
            net_rate_gbps(cfg.mod.symbol_rate / 1e9, 2, frame.layout.pilot_ratio,
                          frame.entropy_bits, cfg.fec_overhead, c.bits_per_symbol());
        rep.net_ose_bps_per_hz = net_ose_bps_per_hz(
            rep.net_rate_gbps, (1.0 + cfg.mod.rolloff) * cfg.mod.symbol_rate / 1e9);
        return rep;
    } catch (const stage_error&) {
        throw;
    } catch (const std::exception& e) {
        throw stage_error("metrics", e.what());
    }
}

void write_artifacts(const RunArtifacts& a, const ExperimentConfig& cfg,
                     const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    save_frame(out_dir / "frame.bin", a.frame);
    save_capture(out_dir / "capture.bin", a.capture);
    save_channel_state(out_dir / "channel_state.json", a.state_used);
    save_field_estimate(out_dir / "estimate.bin", a.estimate);
    write_text_file(out_dir / "trace.csv", trace_csv(a.trace, cfg.config_hash));
    write_text_file(out_dir / "report.csv", report_csv(a.report, cfg.config_hash));
}

SweepAxis sweep_axis_from_name(const std::string& name) {
    if (name == "distance") return SweepAxis::distance;
    if (name == "entropy") return SweepAxis::entropy;
    if (name == "iterations") return SweepAxis::iterations;
    if (name == "osnr") return SweepAxis::osnr;
    throw config_error("sweep: unknown axis '" + name + "'");
}

namespace {

std::string axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::distance: return "distance_km";
        case SweepAxis::entropy: return "entropy_bits";
        case SweepAxis::iterations: return "iterations";
        case SweepAxis::osnr: return "osnr_db";
    }
    return "?";
}

ExperimentConfig config_for_point(const ExperimentConfig& base, SweepAxis axis, double value) {
    ExperimentConfig c = base;
    switch (axis) {
        case SweepAxis::distance:
            c.fiber.length_km = value;
            c.osnr_db = base.osnr_for_distance(value);
            break;
        case SweepAxis::entropy:
            c.entropy_bits = value;
            break;
        case SweepAxis::iterations:
            c.gs.max_iterations = static_cast<int>(value);
            c.gs.early_stop_tol = 0.0;  // run the full budget
            break;
        case SweepAxis::osnr:
            c.osnr_db = value;
            break;
    }
    c.seed = fnv1a_mix(derive_seed(base.seed, "sweep"),
                       static_cast<std::uint64_t>(std::llround(value * 1e6)));
    return c;
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<double>& values,
                  int threads) {
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] <= values[i - 1])
            throw config_error("sweep: axis values must be strictly increasing");

    std::vector<ScoreReport> reports(values.size());
    std::vector<std::uint64_t> seeds(values.size());
    const auto run_point = [&](std::size_t i) {
        const auto pc = config_for_point(cfg, axis, values[i]);
        seeds[i] = pc.seed;
        reports[i] = run_experiment(pc).report;
    };
    if (threads <= 1) {
        for (std::size_t i = 0; i < values.size(); ++i) run_point(i);
    } else {
        std::vector<std::future<void>> futs;
        std::size_t next = 0;
        while (next < values.size()) {
            futs.clear();
            for (int t = 0; t < threads && next < values.size(); ++t, ++next)
                futs.push_back(std::async(std::launch::async, run_point, next));
            for (auto& f : futs) f.get();
        }
    }

    std::string csv;
    {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(cfg.config_hash));
        csv = std::string("# ") + kToolVersion + " config_hash=" + buf + "\n";
    }
    csv += "axis,value,metric,metric_value,seed\n";
    const std::string ax = axis_name(axis);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto& r = reports[i];
        const auto row = [&](const char* metric, double v) {
            csv += ax + "," + fmt_g(values[i]) + "," + metric + "," + fmt_g(v) + "," +
                   std::to_string(seeds[i]) + "\n";
        };
        row("recovery_snr_db_x", r.recovery_snr_db_x);
        row("recovery_snr_db_y", r.recovery_snr_db_y);
        row("gmi_bits", r.gmi_bits);
        row("ngmi", r.ngmi);
        row("net_rate_gbps", r.net_rate_gbps);
        row("net_ose_bps_per_hz", r.net_ose_bps_per_hz);
    }
    return csv;
}

}  // namespace prsim
