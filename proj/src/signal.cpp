#include "prsim/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace prsim {

double energy(const ComplexWaveform& w) {
    double e = 0.0;
    for (const auto& s : w.samples) e += std::norm(s);
    return e;
}

double energy(const RealWaveform& w) {
    double e = 0.0;
    for (double s : w.samples) e += s * s;
    return e;
}

double mean_power(const ComplexWaveform& w) {
    if (w.samples.empty()) return 0.0;
    return energy(w) / static_cast<double>(w.samples.size());
}

FrequencyResponse FrequencyResponse::identity() {
    return from_taps(Kind::complex_valued, {cdouble{1.0, 0.0}}, 1.0);
}

FrequencyResponse FrequencyResponse::from_taps(Kind kind, std::vector<cdouble> taps,
                                               double spacing_symbols) {
    if (taps.empty() || taps.size() % 2 == 0)
        throw config_error("FrequencyResponse: tap count must be odd and non-zero");
    if (spacing_symbols <= 0.0)
        throw config_error("FrequencyResponse: tap spacing must be positive");
    if (kind == Kind::real) {
        for (const auto& t : taps)
            if (t.imag() != 0.0)
                throw config_error("FrequencyResponse: real-kind taps must have zero imaginary part");
    }
    FrequencyResponse h;
    h.kind = kind;
    h.taps = std::move(taps);
    h.tap_spacing_symbols = spacing_symbols;
    return h;
}

FrequencyResponse FrequencyResponse::from_spectrum(Kind kind, std::vector<cdouble> spectrum,
                                                   double grid_rate) {
    if (spectrum.empty()) throw config_error("FrequencyResponse: empty spectrum");
    FrequencyResponse h;
    h.kind = kind;
    h.spectrum = std::move(spectrum);
    h.grid_sample_rate = grid_rate;
    return h;
}

cdouble FrequencyResponse::gain_at(double f_hz, double symbol_rate) const {
    if (is_taps()) {
        const double dt = tap_spacing_symbols / symbol_rate;
        const int half = static_cast<int>(taps.size() / 2);
        cdouble g{0.0, 0.0};
        for (std::size_t i = 0; i < taps.size(); ++i) {
            const double k = static_cast<double>(static_cast<int>(i) - half);
            const double a = -2.0 * kPi * f_hz * k * dt;
            g += taps[i] * cdouble{std::cos(a), std::sin(a)};
        }
        return g;
    }
    // dense form: nearest bin
    const std::size_t n = spectrum.size();
    double bin = f_hz * static_cast<double>(n) / grid_sample_rate;
    auto k = static_cast<std::ptrdiff_t>(std::llround(bin));
    k %= static_cast<std::ptrdiff_t>(n);
    if (k < 0) k += static_cast<std::ptrdiff_t>(n);
    return spectrum[static_cast<std::size_t>(k)];
}

std::vector<cdouble> FrequencyResponse::evaluate_grid(std::size_t n, double fs,
                                                      double symbol_rate) const {
    std::vector<cdouble> g(n);
    if (is_taps()) {
        for (std::size_t k = 0; k < n; ++k)
            g[k] = gain_at(bin_frequency(k, n, fs), symbol_rate);
        if (kind == Kind::real && n % 2 == 0) {
            // unpaired Nyquist bin: keep the impulse response real
            g[n / 2] = g[n / 2].real();
        }
        return g;
    }
    if (n != spectrum.size() || fs != grid_sample_rate)
        throw config_error("FrequencyResponse: dense spectrum bound to a different grid");
    return spectrum;
}

FrequencyResponse make_one_pole_lowpass(FrequencyResponse::Kind kind, double f3db_hz,
                                        double sample_rate, double symbol_rate, int n_taps) {
    if (n_taps < 3 || n_taps % 2 == 0) throw config_error("one_pole_lowpass: odd tap count >= 3 required");
    // sample H(f) = 1 / (1 + j f/f3db) on a long grid, window the centered IDFT
    const std::size_t n = next_pow2(static_cast<std::size_t>(n_taps) * 16);
    std::vector<cdouble> spec(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double f = bin_frequency(k, n, sample_rate);
        spec[k] = 1.0 / cdouble{1.0, f / f3db_hz};
    }
    if (n % 2 == 0) spec[n / 2] = spec[n / 2].real();
    auto h = ifft(std::move(spec));
    std::vector<cdouble> taps(static_cast<std::size_t>(n_taps));
    const int half = n_taps / 2;
    for (int i = -half; i <= half; ++i) {
        const std::size_t src = (i >= 0) ? static_cast<std::size_t>(i)
                                         : n - static_cast<std::size_t>(-i);
        // Hann window against truncation ripple
        const double wnd = 0.5 + 0.5 * std::cos(kPi * static_cast<double>(i) / (half + 1.0));
        taps[static_cast<std::size_t>(i + half)] = h[src] * wnd;
    }
    if (kind == FrequencyResponse::Kind::real)
        for (auto& t : taps) t = t.real();
    // normalize DC gain to 1
    cdouble dc{0.0, 0.0};
    for (const auto& t : taps) dc += t;
    for (auto& t : taps) t /= dc;
    return FrequencyResponse::from_taps(kind, std::move(taps),
                                        symbol_rate / sample_rate);
}

std::vector<double> rrc_taps(int sps, double rolloff, int span) {
    if (sps < 2) throw config_error("rrc_taps: sps >= 2 required");
    if (rolloff <= 0.0 || rolloff > 1.0) throw config_error("rrc_taps: rolloff in (0, 1] required");
    if (span < 16) throw config_error("rrc_taps: span >= 16 symbols required");
    const int n = span * sps + 1;
    std::vector<double> h(static_cast<std::size_t>(n));
    const double b = rolloff;
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i - (n - 1) / 2) / sps;
        double v;
        if (std::abs(t) < 1e-12) {
            v = 1.0 + b * (4.0 / kPi - 1.0);
        } else if (std::abs(std::abs(4.0 * b * t) - 1.0) < 1e-9) {
            v = (b / std::sqrt(2.0)) * ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * b)) +
                                        (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * b)));
        } else {
            v = (std::sin(kPi * t * (1.0 - b)) + 4.0 * b * t * std::cos(kPi * t * (1.0 + b))) /
                (kPi * t * (1.0 - 16.0 * b * b * t * t));
        }
        h[static_cast<std::size_t>(i)] = v;
    }
    double e = 0.0;
    for (double v : h) e += v * v;
    const double s = 1.0 / std::sqrt(e);
    for (double& v : h) v *= s;
    return h;
}

namespace {

// Zero-padded linear convolution with the kernel's center at zero delay.
// Returns exactly n output samples aligned with the input.
std::vector<cdouble> convolve_centered(std::span<const cdouble> x, std::span<const cdouble> k,
                                       bool force_real) {
    const std::size_t n = x.size();
    const std::size_t m = k.size();
    const std::size_t half = m / 2;
    const std::size_t grid = next_pow2(n + m);
    std::vector<cdouble> a(grid, cdouble{0.0, 0.0});
    std::vector<cdouble> b(grid, cdouble{0.0, 0.0});
    std::copy(x.begin(), x.end(), a.begin());
    std::copy(k.begin(), k.end(), b.begin());
    fft_inplace(a, false);
    fft_inplace(b, false);
    for (std::size_t i = 0; i < grid; ++i) a[i] *= b[i];
    fft_inplace(a, true);
    std::vector<cdouble> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const cdouble v = a[i + half];
        y[i] = force_real ? cdouble{v.real(), 0.0} : v;
    }
    return y;
}

std::vector<cdouble> response_kernel(const FrequencyResponse& h, double sample_rate,
                                     double symbol_rate) {
    const double spacing_samples = h.tap_spacing_symbols * sample_rate / symbol_rate;
    const double rounded = std::round(spacing_samples);
    if (std::abs(spacing_samples - rounded) < 1e-9 && rounded >= 1.0) {
        // taps land on the sample grid
        const auto step = static_cast<std::size_t>(rounded);
        std::vector<cdouble> k((h.taps.size() - 1) * step + 1, cdouble{0.0, 0.0});
        for (std::size_t i = 0; i < h.taps.size(); ++i) k[i * step] = h.taps[i];
        return k;
    }
    // off-grid spacing: resample the tap response onto the sample grid by
    // evaluating its spectrum on a length that covers the tap span
    const double span_samples = spacing_samples * static_cast<double>(h.taps.size() - 1);
    const std::size_t n = next_pow2(static_cast<std::size_t>(std::ceil(span_samples)) * 4 + 64);
    std::vector<cdouble> spec = h.evaluate_grid(n, sample_rate, symbol_rate);
    auto imp = ifft(std::move(spec));
    const auto half = static_cast<std::size_t>(std::ceil(span_samples / 2.0)) + 8;
    std::vector<cdouble> k(2 * half + 1);
    for (std::size_t i = 0; i < k.size(); ++i) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(half);
        const std::size_t src = (off >= 0) ? static_cast<std::size_t>(off)
                                           : n - static_cast<std::size_t>(-off);
        k[i] = imp[src];
    }
    return k;
}

}  // namespace

ComplexWaveform rrc_shape(std::span<const cdouble> symbols, int sps, double rolloff, int span,
                          double symbol_rate) {
    if (symbols.empty()) throw config_error("rrc_shape: empty symbol sequence");
    const auto h = rrc_taps(sps, rolloff, span);
    const std::size_t n = symbols.size() * static_cast<std::size_t>(sps);
    std::vector<cdouble> up(n, cdouble{0.0, 0.0});
    for (std::size_t i = 0; i < symbols.size(); ++i) up[i * static_cast<std::size_t>(sps)] = symbols[i];
    std::vector<cdouble> kern(h.size());
    std::transform(h.begin(), h.end(), kern.begin(), [](double v) { return cdouble{v, 0.0}; });
    ComplexWaveform out;
    out.samples = convolve_centered(up, kern, false);
    out.sample_rate = symbol_rate * sps;
    out.symbol_rate = symbol_rate;
    out.edge_invalid = h.size() / 2;
    return out;
}

ComplexWaveform apply_response(const ComplexWaveform& w, const FrequencyResponse& h) {
    if (w.samples.empty()) throw config_error("apply_response: empty waveform");
    if (h.kind == FrequencyResponse::Kind::real)
        throw config_error("apply_response: real responses act on detected waveforms only");
    ComplexWaveform out = w;
    if (h.is_taps()) {
        const auto kern = response_kernel(h, w.sample_rate, w.symbol_rate);
        out.samples = convolve_centered(w.samples, kern, false);
        out.edge_invalid = std::max(w.edge_invalid, kern.size() / 2);
    } else {
        auto spec = h.evaluate_grid(w.samples.size(), w.sample_rate, w.symbol_rate);
        multiply_spectrum_inplace(out, spec);
    }
    return out;
}

RealWaveform apply_response(const RealWaveform& w, const FrequencyResponse& h, double symbol_rate) {
    if (w.samples.empty()) throw config_error("apply_response: empty waveform");
    std::vector<cdouble> x(w.samples.size());
    std::transform(w.samples.begin(), w.samples.end(), x.begin(),
                   [](double v) { return cdouble{v, 0.0}; });
    RealWaveform out = w;
    if (h.is_taps()) {
        const auto kern = response_kernel(h, w.sample_rate, symbol_rate);
        const auto y = convolve_centered(x, kern, true);
        for (std::size_t i = 0; i < y.size(); ++i) out.samples[i] = y[i].real();
        out.edge_invalid = std::max(w.edge_invalid, kern.size() / 2);
    } else {
        auto spec = h.evaluate_grid(w.samples.size(), w.sample_rate, symbol_rate);
        fft_inplace(x, false);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] *= spec[i];
        fft_inplace(x, true);
        for (std::size_t i = 0; i < x.size(); ++i) out.samples[i] = x[i].real();
    }
    return out;
}

namespace {

// continued-fraction rational approximation of r with bounded denominator
bool rationalize(double r, double tol, long max_den, long& p, long& q) {
    long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    double x = r;
    for (int it = 0; it < 64; ++it) {
        const double a = std::floor(x);
        const long ai = static_cast<long>(a);
        const long p2 = ai * p1 + p0;
        const long q2 = ai * q1 + q0;
        if (q2 > max_den) break;
        p0 = p1; q0 = q1; p1 = p2; q1 = q2;
        if (std::abs(r - static_cast<double>(p1) / static_cast<double>(q1)) < tol) {
            p = p1; q = q1;
            return true;
        }
        const double frac = x - a;
        if (frac < 1e-15) break;
        x = 1.0 / frac;
    }
    if (q1 > 0 && std::abs(r - static_cast<double>(p1) / static_cast<double>(q1)) < tol) {
        p = p1; q = q1;
        return true;
    }
    return false;
}

std::vector<cdouble> resample_core(std::span<const cdouble> in, double old_rate, double new_rate,
                                   double tol, std::size_t& out_len) {
    long p = 0, q = 0;
    if (!rationalize(new_rate / old_rate, tol, 4096, p, q) || p <= 0)
        throw config_error("resample: rate ratio is not a small rational within tolerance");
    const std::size_t n = in.size();
    std::size_t npad = n;
    while (npad % static_cast<std::size_t>(q) != 0) ++npad;
    std::vector<cdouble> x(in.begin(), in.end());
    x.resize(npad, cdouble{0.0, 0.0});
    fft_inplace(x, false);
    const std::size_t m = npad / static_cast<std::size_t>(q) * static_cast<std::size_t>(p);
    std::vector<cdouble> y(m, cdouble{0.0, 0.0});
    const std::size_t keep = std::min(npad, m);
    const std::size_t half = keep / 2;
    for (std::size_t k = 0; k <= half && k < m; ++k) y[k] = x[k % npad];
    for (std::size_t k = 1; k < keep - half; ++k) y[m - k] = x[npad - k];
    if (keep % 2 == 0 && half > 0 && m != npad) {
        // split the shared Nyquist bin when shrinking, zero it cleanly when growing
        if (m < npad) {
            y[half] = x[half] + x[npad - half];
            y[half] *= 0.5;
        } else {
            y[half] = x[half] * 0.5;
            y[m - half] = x[half] * 0.5;
        }
    }
    const double scale = static_cast<double>(m) / static_cast<double>(npad);
    for (auto& v : y) v *= scale;
    fft_inplace(y, true);
    out_len = static_cast<std::size_t>(std::llround(static_cast<double>(n) *
                                                    static_cast<double>(p) / static_cast<double>(q)));
    out_len = std::min(out_len, m);
    return y;
}

}  // namespace

ComplexWaveform resample(const ComplexWaveform& w, double new_rate, double tol) {
    std::size_t out_len = 0;
    auto y = resample_core(w.samples, w.sample_rate, new_rate, tol, out_len);
    ComplexWaveform out;
    out.samples.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(out_len));
    out.sample_rate = new_rate;
    out.symbol_rate = w.symbol_rate;
    out.edge_invalid = static_cast<std::size_t>(
        std::ceil(static_cast<double>(w.edge_invalid) * new_rate / w.sample_rate));
    return out;
}

RealWaveform resample(const RealWaveform& w, double new_rate, double tol) {
    std::vector<cdouble> x(w.samples.size());
    std::transform(w.samples.begin(), w.samples.end(), x.begin(),
                   [](double v) { return cdouble{v, 0.0}; });
    std::size_t out_len = 0;
    auto y = resample_core(x, w.sample_rate, new_rate, tol, out_len);
    RealWaveform out;
    out.samples.resize(out_len);
    for (std::size_t i = 0; i < out_len; ++i) out.samples[i] = y[i].real();
    out.sample_rate = new_rate;
    out.edge_invalid = static_cast<std::size_t>(
        std::ceil(static_cast<double>(w.edge_invalid) * new_rate / w.sample_rate));
    return out;
}

ComplexWaveform pad_to_grid(const ComplexWaveform& w, std::size_t guard) {
    ComplexWaveform out = w;
    out.samples.resize(next_pow2(w.samples.size() + guard), cdouble{0.0, 0.0});
    return out;
}

ComplexWaveform delay_samples(const ComplexWaveform& w, double n_samples) {
    ComplexWaveform out = w;
    const double rounded = std::round(n_samples);
    if (std::abs(n_samples - rounded) < 1e-9) {
        auto k = static_cast<std::ptrdiff_t>(rounded);
        const auto n = static_cast<std::ptrdiff_t>(w.samples.size());
        k %= n;
        if (k < 0) k += n;
        std::rotate(out.samples.begin(), out.samples.end() - k, out.samples.end());
        return out;
    }
    const std::size_t n = w.samples.size();
    std::vector<cdouble> spec(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double f = bin_frequency(k, n, w.sample_rate);
        const double a = -2.0 * kPi * f * n_samples / w.sample_rate;
        spec[k] = cdouble{std::cos(a), std::sin(a)};
    }
    multiply_spectrum_inplace(out, spec);
    return out;
}

void multiply_spectrum_inplace(ComplexWaveform& w, const std::vector<cdouble>& factors) {
    if (factors.size() != w.samples.size())
        throw config_error("multiply_spectrum: grid size mismatch");
    fft_inplace(w.samples, false);
    for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] *= factors[i];
    fft_inplace(w.samples, true);
}

}  // namespace prsim
