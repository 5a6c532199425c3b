#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "prsim/common.hpp"
#include "prsim/fft.hpp"

namespace prsim {

/// Uniformly sampled complex baseband field for one polarization.
struct ComplexWaveform {
    std::vector<cdouble> samples;
    double sample_rate = 0.0;       // Hz
    double symbol_rate = 0.0;       // baud; annotation used by constraint operators
    std::size_t edge_invalid = 0;   // samples at each end contaminated by filter transients

    std::size_t size() const { return samples.size(); }
};

/// Uniformly sampled real waveform (detected intensities, electrical signals).
struct RealWaveform {
    std::vector<double> samples;
    double sample_rate = 0.0;
    std::size_t edge_invalid = 0;

    std::size_t size() const { return samples.size(); }
};

/// Pair of complex waveforms sharing a time base; the unit propagated through
/// the fiber channel.
struct DualPolField {
    ComplexWaveform x;
    ComplexWaveform y;
};

double energy(const ComplexWaveform& w);
double energy(const RealWaveform& w);
double mean_power(const ComplexWaveform& w);

/// Linear response, either as a centered tap vector (odd count, reference tap
/// in the middle, spacing in fractions of a symbol period) or as a dense
/// spectrum bound to one FFT grid.
struct FrequencyResponse {
    enum class Kind { real, complex_valued };

    Kind kind = Kind::complex_valued;
    std::vector<cdouble> taps;            // centered; empty if dense form is used
    double tap_spacing_symbols = 1.0;
    std::vector<cdouble> spectrum;        // dense form, bin k at bin_frequency(k, n, grid_sample_rate)
    double grid_sample_rate = 0.0;

    bool is_taps() const { return !taps.empty(); }

    static FrequencyResponse identity();
    static FrequencyResponse from_taps(Kind kind, std::vector<cdouble> taps, double spacing_symbols);
    static FrequencyResponse from_spectrum(Kind kind, std::vector<cdouble> spectrum, double grid_rate);

    /// Complex gain at frequency f (Hz) for a waveform at the given symbol rate.
    cdouble gain_at(double f_hz, double symbol_rate) const;

    /// Response evaluated on an n-point FFT grid at sample rate fs.
    std::vector<cdouble> evaluate_grid(std::size_t n, double fs, double symbol_rate) const;
};

/// Single-pole low-pass with the given 3 dB frequency, windowed to a centered
/// tap vector. Used to model photodiode/driver roll-off.
FrequencyResponse make_one_pole_lowpass(FrequencyResponse::Kind kind, double f3db_hz,
                                        double sample_rate, double symbol_rate, int n_taps);

/// Unit-energy root-raised-cosine taps (length span*sps + 1, centered).
std::vector<double> rrc_taps(int sps, double rolloff, int span);

/// Shapes a symbol sequence with an RRC filter at sps samples per symbol.
/// Output has one sample per sps starting at the first symbol instant and
/// length symbols.size()*sps.
ComplexWaveform rrc_shape(std::span<const cdouble> symbols, int sps, double rolloff, int span,
                          double symbol_rate);

/// Linear (non-circular) filtering with the response's reference tap at zero
/// delay. Output length equals input length; the first/last half-span samples
/// are flagged invalid via edge_invalid. Dense-spectrum responses apply on the
/// waveform's own grid, which must already carry padding.
ComplexWaveform apply_response(const ComplexWaveform& w, const FrequencyResponse& h);
RealWaveform apply_response(const RealWaveform& w, const FrequencyResponse& h, double symbol_rate);

/// Band-limited rational resampling. Rejects ratios that are not close to a
/// small rational within `tol`.
ComplexWaveform resample(const ComplexWaveform& w, double new_rate, double tol = 1e-9);
RealWaveform resample(const RealWaveform& w, double new_rate, double tol = 1e-9);

/// Zero-pads to the next power of two covering size + guard so that spectral
/// operators (dispersion, delays, responses) behave linearly.
ComplexWaveform pad_to_grid(const ComplexWaveform& w, std::size_t guard);

/// Delay by a (possibly fractional) number of samples. Integer delays rotate
/// the buffer (exact given grid padding); fractional delays use a spectral
/// phase ramp.
ComplexWaveform delay_samples(const ComplexWaveform& w, double n_samples);

/// Multiplies the spectrum by the given per-bin factors (grid-native).
void multiply_spectrum_inplace(ComplexWaveform& w, const std::vector<cdouble>& factors);

}  // namespace prsim
