#include "prsim/txsim.hpp"

#include <algorithm>
#include <cmath>

#include "prsim/rng.hpp"

namespace prsim {

ShapedSource sample_mb_distribution(int qam_order, double target_entropy_bits, std::uint64_t seed) {
    ShapedSource src;
    src.constellation = Constellation::maxwell_boltzmann(qam_order, target_entropy_bits);
    src.target_entropy_bits = target_entropy_bits;
    src.seed = seed;
    return src;
}

std::size_t FrameLayout::pilot_period() const {
    if (pilot_ratio <= 0.0) return 0;
    return static_cast<std::size_t>(std::llround(1.0 / pilot_ratio));
}

std::vector<std::size_t> FrameLayout::pilot_positions() const {
    std::vector<std::size_t> pos;
    const std::size_t period = pilot_period();
    if (period == 0) return pos;
    for (std::size_t k = 0; k * period < payload_len; ++k) pos.push_back(k * period);
    return pos;
}

void FrameLayout::validate() const {
    if (payload_len == 0) throw config_error("FrameLayout: payload_len must be positive");
    if (pilot_ratio < 0.0 || pilot_ratio >= 1.0)
        throw config_error("FrameLayout: pilot_ratio must be in [0, 1)");
    if (training_qam_order != 4 && training_qam_order != 16 && training_qam_order != 64 &&
        training_qam_order != 256)
        throw config_error("FrameLayout: unsupported training QAM order");
}

std::vector<std::size_t> FrameData::data_positions() const {
    std::vector<std::size_t> pos;
    pos.reserve(layout.payload_len);
    for (std::size_t i = 0; i < layout.payload_len; ++i)
        if (!is_pilot[i]) pos.push_back(i);
    return pos;
}

namespace {

// inverse-CDF draw over the constellation priors
std::vector<std::uint32_t> draw_indices(const Constellation& c, std::size_t n, Rng& rng) {
    std::vector<double> cdf(c.priors().size());
    double acc = 0.0;
    for (std::size_t i = 0; i < cdf.size(); ++i) {
        acc += c.priors()[i];
        cdf[i] = acc;
    }
    cdf.back() = 1.0;
    std::vector<std::uint32_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        idx[i] = static_cast<std::uint32_t>(std::distance(cdf.begin(), it));
    }
    return idx;
}

}  // namespace

FrameData draw_frame(const ShapedSource& src, const FrameLayout& layout) {
    layout.validate();
    FrameData f;
    f.layout = layout;
    f.seed = src.seed;
    f.qam_order = src.constellation.order();
    f.entropy_bits = src.constellation.entropy_bits();
    f.pilot_positions = layout.pilot_positions();
    f.is_pilot.assign(layout.payload_len, 0);
    for (std::size_t p : f.pilot_positions) f.is_pilot[p] = 1;

    const Constellation training = Constellation::uniform(layout.training_qam_order);
    const auto pilots = src.constellation.corner_points();

    for (int pol = 0; pol < 2; ++pol) {
        Rng rng_train(derive_seed(src.seed, "training", static_cast<std::uint64_t>(pol)));
        Rng rng_pay(derive_seed(src.seed, "payload", static_cast<std::uint64_t>(pol)));
        Rng rng_pil(derive_seed(src.seed, "pilots", static_cast<std::uint64_t>(pol)));

        std::vector<cdouble> sym;
        sym.reserve(f.frame_len());
        for (auto i : draw_indices(training, layout.training_len, rng_train))
            sym.push_back(training.points()[i]);

        auto pay_idx = draw_indices(src.constellation, layout.payload_len, rng_pay);
        for (std::size_t i = 0; i < layout.payload_len; ++i) {
            if (f.is_pilot[i]) {
                const auto k = rng_pil.uniform_index(pilots.size());
                pay_idx[i] = static_cast<std::uint32_t>(
                    src.constellation.nearest(pilots[k]));
                sym.push_back(pilots[k]);
            } else {
                sym.push_back(src.constellation.points()[pay_idx[i]]);
            }
        }
        f.symbols.push_back(std::move(sym));
        f.payload_indices.push_back(std::move(pay_idx));
    }
    f.symbol_gain = {1.0, 1.0};
    return f;
}

ComplexWaveform modulate(std::span<const cdouble> symbols, const ModConfig& cfg,
                         double* symbol_gain) {
    ComplexWaveform w = rrc_shape(symbols, cfg.sps, cfg.rolloff, cfg.span, cfg.symbol_rate);
    const double p = mean_power(w);
    const double g = (p > 0.0) ? 1.0 / std::sqrt(p) : 1.0;
    for (auto& s : w.samples) s *= g;
    if (symbol_gain) *symbol_gain = g;
    return w;
}

std::vector<cdouble> matched_filter_demod(const ComplexWaveform& w, const ModConfig& cfg,
                                          std::size_t n_symbols, double symbol_gain) {
    const auto h = rrc_taps(cfg.sps, cfg.rolloff, cfg.span);
    std::vector<cdouble> kern(h.size());
    std::transform(h.begin(), h.end(), kern.begin(), [](double v) { return cdouble{v, 0.0}; });
    FrequencyResponse mf = FrequencyResponse::from_taps(
        FrequencyResponse::Kind::complex_valued, std::move(kern),
        1.0 / static_cast<double>(cfg.sps));
    const ComplexWaveform y = apply_response(w, mf);
    std::vector<cdouble> sym(n_symbols);
    const double inv_g = 1.0 / symbol_gain;
    for (std::size_t k = 0; k < n_symbols; ++k) {
        const std::size_t i = k * static_cast<std::size_t>(cfg.sps);
        sym[k] = (i < y.samples.size() ? y.samples[i] : cdouble{0.0, 0.0}) * inv_g;
    }
    return sym;
}

bool TxImpairments::is_neutral() const {
    const bool flat = eo_response.is_taps() && eo_response.taps.size() == 1 &&
                      eo_response.taps[0] == cdouble{1.0, 0.0};
    return flat && iq_gain_imbalance_db == 0.0 && iq_phase_error_deg == 0.0 &&
           iq_skew_symbols == 0.0 && mzm_drive_ratio == 0.0;
}

void iq_mixing_coefficients(const TxImpairments& imp, cdouble& mu, cdouble& nu) {
    const double gi = std::pow(10.0, imp.iq_gain_imbalance_db / 40.0);
    const double gq = std::pow(10.0, -imp.iq_gain_imbalance_db / 40.0);
    const double phi = imp.iq_phase_error_deg * kPi / 180.0;
    const cdouble e_jphi{std::cos(phi), std::sin(phi)};
    mu = 0.5 * (gi + gq * e_jphi);
    nu = 0.5 * (gi - gq * std::conj(e_jphi));
}

namespace {

// delay the Q quadrature by tau seconds via a spectral phase ramp; the
// unpaired Nyquist bin has no real-signal representation at a fractional
// delay and is dropped (signals here are oversampled well below it)
void skew_quadrature(ComplexWaveform& w, double tau_s) {
    const std::size_t n = w.samples.size();
    std::vector<cdouble> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = cdouble{w.samples[i].imag(), 0.0};
    fft_inplace(q, false);
    for (std::size_t k = 0; k < n; ++k) {
        const double f = bin_frequency(k, n, w.sample_rate);
        const double a = -2.0 * kPi * f * tau_s;
        q[k] *= cdouble{std::cos(a), std::sin(a)};
    }
    if (n % 2 == 0) q[n / 2] = cdouble{0.0, 0.0};
    fft_inplace(q, true);
    for (std::size_t i = 0; i < n; ++i)
        w.samples[i] = cdouble{w.samples[i].real(), q[i].real()};
}

double mzm_transfer(double v, double a) { return std::sin(a * v) / a; }

}  // namespace

ComplexWaveform apply_tx_impairments(const ComplexWaveform& field, const TxImpairments& imp) {
    if (imp.mzm_drive_ratio >= 2.0)
        throw config_error("TxImpairments: drive ratio >= 2 over-drives beyond the first null");
    ComplexWaveform w = field;
    if (imp.iq_skew_symbols != 0.0)
        skew_quadrature(w, imp.iq_skew_symbols / w.symbol_rate);
    if (imp.iq_gain_imbalance_db != 0.0 || imp.iq_phase_error_deg != 0.0) {
        cdouble mu, nu;
        iq_mixing_coefficients(imp, mu, nu);
        for (auto& s : w.samples) s = mu * s + nu * std::conj(s);
    }
    if (imp.mzm_drive_ratio > 0.0) {
        const double a = kPi * imp.mzm_drive_ratio / 2.0;
        for (auto& s : w.samples)
            s = cdouble{mzm_transfer(s.real(), a), mzm_transfer(s.imag(), a)};
    }
    const bool flat = imp.eo_response.is_taps() && imp.eo_response.taps.size() == 1 &&
                      imp.eo_response.taps[0] == cdouble{1.0, 0.0};
    if (!flat) w = apply_response(w, imp.eo_response);
    return w;
}

ComplexWaveform invert_tx_impairments(const ComplexWaveform& field, const TxImpairments& imp,
                                      std::size_t* clip_count) {
    ComplexWaveform w = field;
    if (clip_count) *clip_count = 0;
    const bool flat = imp.eo_response.is_taps() && imp.eo_response.taps.size() == 1 &&
                      imp.eo_response.taps[0] == cdouble{1.0, 0.0};
    if (!flat) {
        // regularized spectral inverse on the waveform grid
        const std::size_t n = w.samples.size();
        auto spec = imp.eo_response.evaluate_grid(n, w.sample_rate, w.symbol_rate);
        const double eps = 1e-4;
        for (auto& g : spec) g = std::conj(g) / (std::norm(g) + eps);
        multiply_spectrum_inplace(w, spec);
    }
    if (imp.mzm_drive_ratio > 0.0) {
        const double a = kPi * imp.mzm_drive_ratio / 2.0;
        std::size_t clips = 0;
        const auto inv = [&](double y) {
            double u = a * y;
            if (u > 1.0) { u = 1.0; ++clips; }
            if (u < -1.0) { u = -1.0; ++clips; }
            return std::asin(u) / a;
        };
        for (auto& s : w.samples) s = cdouble{inv(s.real()), inv(s.imag())};
        if (clip_count) *clip_count = clips;
    }
    if (imp.iq_gain_imbalance_db != 0.0 || imp.iq_phase_error_deg != 0.0) {
        cdouble mu, nu;
        iq_mixing_coefficients(imp, mu, nu);
        const double det = std::norm(mu) - std::norm(nu);
        if (std::abs(det) < 1e-12)
            throw stage_error("txsim", "IQ mixing is singular, cannot invert");
        for (auto& s : w.samples)
            s = (std::conj(mu) * s - nu * std::conj(s)) / det;
    }
    if (imp.iq_skew_symbols != 0.0)
        skew_quadrature(w, -imp.iq_skew_symbols / w.symbol_rate);
    return w;
}

}  // namespace prsim
