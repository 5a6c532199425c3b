#pragma once

// Shared desk-scale scenario builder for the solver-level tests: a dual-pol
// 16QAM frame through mild dispersion and a polarization rotation into the
// default 4-branch front-end, noiseless unless asked otherwise.

#include <optional>

#include "prsim/chanest.hpp"
#include "prsim/io.hpp"
#include "prsim/recon.hpp"
#include "prsim/rng.hpp"

namespace desk {

using namespace prsim;

struct Scenario {
    FrameData frame;
    ModConfig mod;
    FrontendSpec spec;
    ChannelState truth;
    DualPolField field;        // post-channel, pre-capture
    DualPolCapture capture;
    ReceiverFrameInfo info;
};

struct Options {
    std::uint64_t seed = 1234;
    std::size_t payload = 4096;
    std::size_t training = 8192;
    int qam_order = 16;
    double entropy = 4.0;  // log2(order) = uniform
    double fiber_km = 10.0;
    double jones_alpha_deg = 30.0;
    double jones_phi1_deg = 20.0;
    double jones_phi2_deg = -10.0;
    TxImpairments tx = TxImpairments::neutral();
    std::optional<double> osnr_db;
    std::optional<double> oe_f3db_ghz;
    double global_phase_rad = 0.0;
    std::size_t guard = 4096;
    // transmit the training sequence alone (no payload follows, so the
    // estimator's forward model is exact instead of exact-up-to-payload-tails)
    bool training_only = false;
};

inline Scenario make(const Options& opt = {}) {
    Scenario s;
    s.mod.sps = 2;
    s.mod.rolloff = 0.01;
    s.mod.span = 128;
    s.mod.symbol_rate = 100e9;

    FrameLayout layout;
    layout.payload_len = opt.payload;
    layout.pilot_ratio = 0.1;
    layout.training_len = opt.training;
    ShapedSource src;
    src.seed = opt.seed;
    const double m = std::log2(static_cast<double>(opt.qam_order));
    src.constellation = (opt.entropy >= m - 1e-12)
                            ? Constellation::uniform(opt.qam_order)
                            : Constellation::maxwell_boltzmann(opt.qam_order, opt.entropy);
    s.frame = draw_frame(src, layout);

    for (int p = 0; p < 2; ++p) {
        double gain = 1.0;
        const auto& sym = s.frame.symbols[static_cast<std::size_t>(p)];
        const std::span<const cdouble> view =
            opt.training_only ? std::span<const cdouble>(sym.data(), opt.training)
                              : std::span<const cdouble>(sym);
        auto w = modulate(view, s.mod, &gain);
        s.frame.symbol_gain[static_cast<std::size_t>(p)] = gain;
        w = apply_tx_impairments(w, opt.tx);
        ((p == 0) ? s.field.x : s.field.y) = pad_to_grid(w, opt.guard);
    }
    if (opt.global_phase_rad != 0.0) {
        const cdouble rot{std::cos(opt.global_phase_rad), std::sin(opt.global_phase_rad)};
        for (auto* pol : {&s.field.x, &s.field.y})
            for (auto& v : pol->samples) v *= rot;
    }

    FiberSpec fiber;
    fiber.length_km = opt.fiber_km;
    const auto jones = JonesMatrix::from_angles(opt.jones_alpha_deg * kPi / 180.0,
                                                opt.jones_phi1_deg * kPi / 180.0,
                                                opt.jones_phi2_deg * kPi / 180.0);
    for (auto* pol : {&s.field.x, &s.field.y})
        *pol = apply_cd(*pol, fiber.total_dispersion_ps_per_nm(), fiber.wavelength_nm);
    s.field = apply_jones(s.field, jones);
    if (opt.osnr_db) {
        NoiseSpec noise;
        noise.osnr_db = opt.osnr_db;
        noise.seed = derive_seed(opt.seed, "ase");
        s.field = add_ase(s.field, noise);
    }

    s.spec = default_frontend(s.mod.sps * s.mod.symbol_rate);
    if (opt.oe_f3db_ghz)
        for (auto& b : s.spec.branches)
            b.oe_response = make_one_pole_lowpass(FrequencyResponse::Kind::real,
                                                  *opt.oe_f3db_ghz * 1e9, s.spec.sample_rate,
                                                  s.mod.symbol_rate, 33);
    s.capture = capture(s.field, s.spec, derive_seed(opt.seed, "capture"));
    s.truth = true_channel_state(opt.tx, fiber, jones, s.spec);
    s.info = receiver_info_from_frame(s.frame, s.mod);
    if (opt.training_only) {
        s.info.payload_len = 0;
        s.info.pilot_positions.clear();
        for (auto& v : s.info.pilot_symbols) v.clear();
    }
    return s;
}

inline double payload_snr_db(const FieldEstimate& est, const FrameData& frame, int pol) {
    const std::size_t t_len = frame.layout.training_len;
    std::vector<cdouble> rx, ref;
    for (std::size_t i = 0; i < frame.layout.payload_len; ++i) {
        if (!est.valid_mask[i] || frame.is_pilot[i]) continue;
        rx.push_back(est.payload_symbols[static_cast<std::size_t>(pol)][i]);
        ref.push_back(frame.symbols[static_cast<std::size_t>(pol)][t_len + i]);
    }
    return recovery_snr_db(rx, ref);
}

}  // namespace desk
