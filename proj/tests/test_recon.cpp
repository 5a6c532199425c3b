#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "desk_setup.hpp"

using namespace prsim;

namespace {

DualPolField truth_candidate(const desk::Scenario& s, const desk::Options& opt) {
    // the transmit-plane field before channel effects, on the same grid
    DualPolField tx;
    for (int p = 0; p < 2; ++p) {
        auto w = modulate(s.frame.symbols[static_cast<std::size_t>(p)], s.mod);
        w = apply_tx_impairments(w, opt.tx);
        ((p == 0) ? tx.x : tx.y) = pad_to_grid(w, opt.guard);
    }
    return tx;
}

double rel_err(const std::vector<cdouble>& a, const std::vector<cdouble>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += std::norm(a[i] - b[i]);
        den += std::norm(b[i]);
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("ffe: flat response stays the identity") {
    desk::Options opt;
    opt.payload = 512;
    opt.training = 512;
    const auto s = desk::make(opt);
    const auto eq = ffe_calibrate_and_equalize(s.capture, s.truth.rx, s.mod.symbol_rate);
    CHECK(eq.pol_x.branches[0].samples == s.capture.pol_x.branches[0].samples);
}

TEST_CASE("ffe: one-pole roll-off inverted within 0.5 dB in-band ripple") {
    const double baud = 100e9, fs = 200e9;
    const auto h =
        make_one_pole_lowpass(FrequencyResponse::Kind::real, 0.93 * baud, fs, baud, 65);
    const auto design = design_inverse_ffe(h, fs, baud);
    CHECK_FALSE(design.capped);
    CHECK(design.taps.taps.size() == 101);
    // frequency-domain oracle: cascade must be flat in-band
    for (double f = -0.8 * baud; f <= 0.8 * baud; f += baud / 50.0) {
        const double cascade = std::abs(h.gain_at(f, baud) * design.taps.gain_at(f, baud));
        CHECK(std::abs(20.0 * std::log10(cascade)) < 0.5);
    }
    // 101 taps at T/2 span 50 symbol periods
    const double support_symbols =
        design.taps.tap_spacing_symbols * static_cast<double>(design.taps.taps.size() - 1);
    CHECK(support_symbols == doctest::Approx(50.0));
}

TEST_CASE("ffe flags spectral nulls and caps the inverse") {
    // notch response: H = 1 at DC falling to ~0 at band edge
    const double baud = 100e9;
    std::vector<cdouble> taps{{0.5, 0.0}, {0.0, 0.0}, {0.5, 0.0}};  // null at f = baud (T/2-spaced)
    const auto h = FrequencyResponse::from_taps(FrequencyResponse::Kind::real, taps, 0.5);
    const auto design = design_inverse_ffe(h, 2.0 * baud, baud);
    CHECK(design.capped);
    const double cap_gain = std::abs(design.taps.gain_at(baud, baud));
    CHECK(cap_gain < std::pow(10.0, 21.0 / 20.0));
}

TEST_CASE("forward propagation: neutral state + direct branch is the identity") {
    ChannelState cs;
    FrontendSpec spec;
    spec.sample_rate = 200e9;
    BranchSpec direct;
    direct.label = "direct";
    spec.branches = {direct};
    Rng rng(5);
    DualPolField dp;
    for (auto* pol : {&dp.x, &dp.y}) {
        pol->sample_rate = 200e9;
        pol->symbol_rate = 100e9;
        pol->samples.resize(512);
        for (auto& v : pol->samples) v = rng.gaussian_complex();
    }
    const auto bf = forward_propagate(dp, cs, spec);
    CHECK(rel_err(bf[0][0].samples, dp.x.samples) < 1e-12);  // split factor is 1 for B=1
}

TEST_CASE("forward propagation of the true field reproduces the noiseless capture") {
    desk::Options opt;
    opt.payload = 1024;
    opt.training = 1024;
    const auto s = desk::make(opt);
    const auto tx = truth_candidate(s, opt);
    const auto bf = forward_propagate(tx, s.truth, s.spec);
    for (int p = 0; p < 2; ++p) {
        const auto& cap = (p == 0) ? s.capture.pol_x : s.capture.pol_y;
        for (std::size_t i = 0; i < s.spec.branches.size(); ++i) {
            double num = 0.0, den = 0.0;
            for (std::size_t k = 0; k < cap.branches[i].samples.size(); ++k) {
                const double model = std::norm(bf[static_cast<std::size_t>(p)][i].samples[k]);
                num += std::abs(model - cap.branches[i].samples[k]);
                den += cap.branches[i].samples[k];
            }
            CHECK(num / den < 1e-9);
        }
    }
}

TEST_CASE("forward propagation is linear in the candidate field") {
    desk::Options opt;
    opt.payload = 256;
    opt.training = 256;
    opt.guard = 2048;
    const auto s = desk::make(opt);
    Rng rng(9);
    DualPolField a, b;
    const std::size_t grid = s.field.x.samples.size();
    for (auto* pol : {&a.x, &a.y, &b.x, &b.y}) {
        pol->sample_rate = s.field.x.sample_rate;
        pol->symbol_rate = s.field.x.symbol_rate;
        pol->samples.resize(grid);
        for (auto& v : pol->samples) v = rng.gaussian_complex();
    }
    const cdouble ca{0.3, -0.8}, cb{1.1, 0.2};
    DualPolField mix = a;
    for (int p = 0; p < 2; ++p) {
        auto& mp = (p == 0) ? mix.x : mix.y;
        const auto& ap = (p == 0) ? a.x : a.y;
        const auto& bp = (p == 0) ? b.x : b.y;
        for (std::size_t k = 0; k < grid; ++k)
            mp.samples[k] = ca * ap.samples[k] + cb * bp.samples[k];
    }
    const auto fa = forward_propagate(a, s.truth, s.spec);
    const auto fb = forward_propagate(b, s.truth, s.spec);
    const auto fm = forward_propagate(mix, s.truth, s.spec);
    for (int p = 0; p < 2; ++p) {
        for (std::size_t i = 0; i < s.spec.branches.size(); ++i) {
            double num = 0.0, den = 0.0;
            for (std::size_t k = 0; k < grid; ++k) {
                const cdouble want = ca * fa[static_cast<std::size_t>(p)][i].samples[k] +
                                     cb * fb[static_cast<std::size_t>(p)][i].samples[k];
                num += std::norm(fm[static_cast<std::size_t>(p)][i].samples[k] - want);
                den += std::norm(want);
            }
            CHECK(std::sqrt(num / den) < 1e-10);
        }
    }
}

TEST_CASE("backward(forward(x)) recovers x") {
    desk::Options opt;
    opt.payload = 512;
    opt.training = 512;
    const auto s = desk::make(opt);
    const auto tx = truth_candidate(s, opt);
    const auto bf = forward_propagate(tx, s.truth, s.spec);
    const auto back = backward_propagate(bf, s.truth, s.spec);
    CHECK(rel_err(back.x.samples, tx.x.samples) < 1e-6);
    CHECK(rel_err(back.y.samples, tx.y.samples) < 1e-6);
}

TEST_CASE("single-branch spec inverts exactly; degenerate weights pick one branch") {
    ChannelState cs;
    cs.fiber_ps_per_nm = 300.0;
    FrontendSpec spec;
    spec.sample_rate = 200e9;
    BranchSpec disp;
    disp.dispersive_ps_per_nm = -800.0;
    spec.branches = {disp};
    Rng rng(21);
    DualPolField dp;
    for (auto* pol : {&dp.x, &dp.y}) {
        pol->sample_rate = 200e9;
        pol->symbol_rate = 100e9;
        pol->samples.resize(4096);
        for (auto& v : pol->samples) v = rng.gaussian_complex();
    }
    const auto bf = forward_propagate(dp, cs, spec);
    const auto back = backward_propagate(bf, cs, spec);
    CHECK(rel_err(back.x.samples, dp.x.samples) < 1e-9);

    // 4-branch spec, weights (1,0,0,0): estimate equals the branch-1 inversion
    desk::Options opt;
    opt.payload = 256;
    opt.training = 256;
    const auto s = desk::make(opt);
    const auto tx = truth_candidate(s, opt);
    auto fields = forward_propagate(tx, s.truth, s.spec);
    const auto w1 = backward_propagate(fields, s.truth, s.spec, {1.0, 0.0, 0.0, 0.0});
    // branch 1 is the direct path, so this must equal the full inverse chain
    CHECK(rel_err(w1.x.samples, tx.x.samples) < 1e-9);
}

TEST_CASE("pilot phase alignment removes a known rotation") {
    Rng rng(31);
    const auto c = Constellation::uniform(16);
    std::vector<cdouble> pay(400);
    for (auto& v : pay) v = c.points()[rng.uniform_index(16)];
    std::vector<std::size_t> pos;
    std::vector<cdouble> val;
    for (std::size_t i = 0; i < pay.size(); i += 10) {
        pos.push_back(i);
        val.push_back(pay[i]);
    }
    auto rotated = pay;
    const double theta = kPi / 3.0;
    for (auto& v : rotated) v *= cdouble{std::cos(theta), std::sin(theta)};
    bool low = false;
    const double got = pilot_phase_align(rotated, pos, val, 0.5, &low);
    CHECK_FALSE(low);
    CHECK(got == doctest::Approx(theta).epsilon(1e-9));
    CHECK(rel_err(rotated, pay) < 1e-9);

    // already aligned -> zero
    auto same = pay;
    const double zero = pilot_phase_align(same, pos, val, 0.5, &low);
    CHECK(std::abs(zero) < 1e-12);
}

TEST_CASE("pilot phase estimator stays within 1 degree at 15 dB pilot SNR") {
    // Monte-Carlo check of the estimator variance: 4096 symbols, 10% pilots
    Rng rng(77);
    const auto c = Constellation::uniform(16);
    const double snr_lin = db_to_lin(15.0);
    const double sigma = std::sqrt(1.0 / snr_lin / 2.0);
    const auto corners = c.corner_points();
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<cdouble> pay(4096);
        for (auto& v : pay) v = c.points()[rng.uniform_index(16)];
        std::vector<std::size_t> pos;
        std::vector<cdouble> val;
        for (std::size_t i = 0; i < pay.size(); i += 10) {
            pay[i] = corners[rng.uniform_index(4)];
            pos.push_back(i);
            val.push_back(pay[i]);
        }
        const double theta = (rng.uniform01() - 0.5) * kPi;
        for (auto& v : pay) {
            v *= cdouble{std::cos(theta), std::sin(theta)};
            v += sigma * rng.gaussian_complex();
        }
        const double got = pilot_phase_align(pay, pos, val);
        worst = std::max(worst, std::abs(got - theta));
    }
    CHECK(worst < kPi / 180.0);
}

TEST_CASE("pilot phase alignment flags weak correlations") {
    Rng rng(78);
    std::vector<cdouble> pay(100);
    for (auto& v : pay) v = rng.gaussian_complex();  // no pilot structure at all
    std::vector<std::size_t> pos;
    std::vector<cdouble> val;
    for (std::size_t i = 0; i < pay.size(); i += 10) {
        pos.push_back(i);
        val.push_back(cdouble{1.0, 0.0});
    }
    bool low = false;
    pilot_phase_align(pay, pos, val, 0.9, &low);
    CHECK(low);
}

TEST_CASE("gs: truth-initialized solve is a fixed point") {
    desk::Options opt;
    const auto s = desk::make(opt);
    GsConfig cfg;
    cfg.max_iterations = 8;
    cfg.early_stop_tol = 0.0;

    // run the loop manually from the truth candidate: forward/substitute/
    // backward must leave the objective at numerical zero
    const auto tx = truth_candidate(s, opt);
    auto bf = forward_propagate(tx, s.truth, s.spec);
    double obj = 0.0;
    for (int p = 0; p < 2; ++p) {
        const auto& cap = (p == 0) ? s.capture.pol_x : s.capture.pol_y;
        for (std::size_t i = 0; i < s.spec.branches.size(); ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < cap.branches[i].samples.size(); ++k) {
                const double d = std::abs(bf[static_cast<std::size_t>(p)][i].samples[k]) -
                                 std::sqrt(std::max(0.0, cap.branches[i].samples[k]));
                acc += d * d;
            }
            obj += acc / static_cast<double>(cap.branches[i].samples.size());
        }
    }
    CHECK(obj <= 1e-10);
}

TEST_CASE("gs: desk-scale noiseless reconstruction reaches 20 dB in 100 iterations") {
    desk::Options opt;
    const auto s = desk::make(opt);
    GsConfig cfg;
    const auto res = gs_reconstruct(s.capture, s.truth, s.spec, s.info, cfg, &s.frame);
    const double snr_x = desk::payload_snr_db(res.estimate, s.frame, 0);
    const double snr_y = desk::payload_snr_db(res.estimate, s.frame, 1);
    CHECK(snr_x >= 20.0);
    CHECK(snr_y >= 20.0);
    CHECK(res.trace.objective.back() <= 0.01 * res.trace.objective.front());
    CHECK(res.trace.objective.size() == res.trace.snr_db.size());
    CHECK_FALSE(res.estimate.low_confidence);
}

TEST_CASE("gs: bandwidth constraint is idempotent") {
    // applying the band limit twice equals applying it once
    Rng rng(91);
    const std::size_t n = 1 << 12;
    std::vector<cdouble> x(n);
    for (auto& v : x) v = rng.gaussian_complex();
    const double fs = 200e9, bw = 50.5e9;
    const auto band_limit = [&](std::vector<cdouble> v) {
        fft_inplace(v, false);
        for (std::size_t k = 0; k < n; ++k)
            if (std::abs(bin_frequency(k, n, fs)) > bw) v[k] = cdouble{0.0, 0.0};
        fft_inplace(v, true);
        return v;
    };
    const auto once = band_limit(x);
    const auto twice = band_limit(once);
    CHECK(rel_err(twice, once) < 1e-12);
}

TEST_CASE("gs: global phase equivariance after pilot alignment") {
    desk::Options base;
    base.payload = 2048;
    base.training = 4096;
    const auto s0 = desk::make(base);
    GsConfig cfg;
    const auto r0 = gs_reconstruct(s0.capture, s0.truth, s0.spec, s0.info, cfg, &s0.frame);

    desk::Options rot = base;
    rot.global_phase_rad = 2.0 * kPi * 0.37;
    const auto s1 = desk::make(rot);
    const auto r1 = gs_reconstruct(s1.capture, s1.truth, s1.spec, s1.info, cfg, &s1.frame);

    // same data, same pilots; the reconstructions agree after alignment
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < s0.frame.layout.payload_len; ++i) {
        if (!r0.estimate.valid_mask[i]) continue;
        num += std::norm(r0.estimate.payload_symbols[0][i] - r1.estimate.payload_symbols[0][i]);
        den += std::norm(r0.estimate.payload_symbols[0][i]);
    }
    CHECK(10.0 * std::log10(num / den) < -17.0);
}

TEST_CASE("gs: NaN-poisoned capture aborts with a diagnostic") {
    desk::Options opt;
    opt.payload = 256;
    opt.training = 512;
    auto s = desk::make(opt);
    s.capture.pol_x.branches[0].samples[100] = std::numeric_limits<double>::quiet_NaN();
    GsConfig cfg;
    cfg.max_iterations = 3;
    CHECK_THROWS_AS(gs_reconstruct(s.capture, s.truth, s.spec, s.info, cfg), stage_error);
}

TEST_CASE("gs config validation") {
    GsConfig cfg;
    cfg.bandwidth_limit_hz = 300e9;
    CHECK_THROWS_AS(cfg.validate(100e9), config_error);
    GsConfig cfg2;
    cfg2.max_iterations = 0;
    CHECK_THROWS_AS(cfg2.validate(100e9), config_error);
}
