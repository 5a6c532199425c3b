#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prsim/channel.hpp"
#include "prsim/signal.hpp"

namespace prsim {

/// One optical branch of the space-time diversity front-end: an optional
/// delay and/or dispersive element, optionally interfered with a reference
/// branch in a coupler, then photodetected through a real O/E response.
struct BranchSpec {
    std::string label;
    double delay_symbols = 0.0;
    double dispersive_ps_per_nm = 0.0;
    std::optional<std::size_t> combine_with;  // reference branch index
    double coupler_ratio = 0.5;               // power fraction from this branch's path
    FrequencyResponse oe_response =
        FrequencyResponse::from_taps(FrequencyResponse::Kind::real, {cdouble{1.0, 0.0}}, 1.0);
    double thermal_noise_density = 0.0;       // intensity-units^2 per Hz
    std::optional<int> adc_bits;
};

struct FrontendSpec {
    std::vector<BranchSpec> branches;
    double sample_rate = 0.0;

    /// Physical capture requires measurement diversity; reconstruction-side
    /// helpers accept degenerate specs for testing.
    void validate_for_capture() const;
};

/// Delays are in symbol periods; the default 4-branch topology is direct,
/// dispersive, and two delay interferometers against the direct path.
FrontendSpec default_frontend(double sample_rate, double dispersive_ps_per_nm = -1228.0,
                              double delay_a_symbols = 93.0, double delay_b_symbols = 199.0);

/// Intensity capture of one polarization.
struct IntensityCapture {
    std::vector<RealWaveform> branches;
};

/// Optical branch transform before detection. The waveform must carry grid
/// padding at least as large as the delay and dispersion spread.
ComplexWaveform branch_field(const ComplexWaveform& field, const BranchSpec& b,
                             const ComplexWaveform* ref_field = nullptr);

/// Photodetection: |E|^2, O/E response, thermal noise, optional quantization.
RealWaveform detect(const ComplexWaveform& branch_out, const BranchSpec& b, std::uint64_t seed);

/// Splits the field over the branches (1/sqrt(B) amplitude each), applies the
/// branch transforms and detection for one polarization.
IntensityCapture capture_single_pol(const ComplexWaveform& field, const FrontendSpec& spec,
                                    std::uint64_t seed);

/// Both polarizations, each through its own front-end copy.
struct DualPolCapture {
    IntensityCapture pol_x;
    IntensityCapture pol_y;
};

DualPolCapture capture(const DualPolField& dp, const FrontendSpec& spec, std::uint64_t seed);

}  // namespace prsim
