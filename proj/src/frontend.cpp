#include "prsim/frontend.hpp"

#include <cmath>

#include "prsim/rng.hpp"

namespace prsim {

void FrontendSpec::validate_for_capture() const {
    if (branches.size() < 3)
        throw config_error("FrontendSpec: field reconstruction needs at least 3 branches");
    for (const auto& b : branches) {
        if (b.combine_with && *b.combine_with >= branches.size())
            throw config_error("FrontendSpec: combine_with index out of range");
        if (b.coupler_ratio <= 0.0 || b.coupler_ratio >= 1.0)
            throw config_error("FrontendSpec: coupler ratio must be in (0, 1)");
    }
}

FrontendSpec default_frontend(double sample_rate, double dispersive_ps_per_nm,
                              double delay_a_symbols, double delay_b_symbols) {
    FrontendSpec spec;
    spec.sample_rate = sample_rate;
    BranchSpec direct;
    direct.label = "direct";
    BranchSpec dispersive;
    dispersive.label = "dispersive";
    dispersive.dispersive_ps_per_nm = dispersive_ps_per_nm;
    BranchSpec delay_a;
    delay_a.label = "delay_a";
    delay_a.delay_symbols = delay_a_symbols;
    delay_a.combine_with = 0;
    BranchSpec delay_b;
    delay_b.label = "delay_b";
    delay_b.delay_symbols = delay_b_symbols;
    delay_b.combine_with = 0;
    spec.branches = {direct, dispersive, delay_a, delay_b};
    return spec;
}

ComplexWaveform branch_field(const ComplexWaveform& field, const BranchSpec& b,
                             const ComplexWaveform* ref_field) {
    ComplexWaveform out = field;
    if (b.delay_symbols != 0.0) {
        const double n = b.delay_symbols * field.sample_rate / field.symbol_rate;
        out = delay_samples(out, n);
    }
    if (b.dispersive_ps_per_nm != 0.0) out = apply_cd(out, b.dispersive_ps_per_nm);
    if (b.combine_with) {
        if (!ref_field) throw stage_error("frontend", "combiner branch needs a reference field");
        if (ref_field->samples.size() != out.samples.size())
            throw stage_error("frontend", "combiner reference length mismatch");
        const double a = std::sqrt(b.coupler_ratio);
        const double r = std::sqrt(1.0 - b.coupler_ratio);
        for (std::size_t i = 0; i < out.samples.size(); ++i)
            out.samples[i] = a * out.samples[i] + r * ref_field->samples[i];
    }
    return out;
}

RealWaveform detect(const ComplexWaveform& branch_out, const BranchSpec& b, std::uint64_t seed) {
    RealWaveform intensity;
    intensity.sample_rate = branch_out.sample_rate;
    intensity.edge_invalid = branch_out.edge_invalid;
    intensity.samples.resize(branch_out.samples.size());
    for (std::size_t i = 0; i < branch_out.samples.size(); ++i)
        intensity.samples[i] = std::norm(branch_out.samples[i]);

    const bool flat = b.oe_response.is_taps() && b.oe_response.taps.size() == 1;
    if (!flat)
        intensity = apply_response(intensity, b.oe_response, branch_out.symbol_rate);

    if (b.thermal_noise_density > 0.0) {
        Rng rng(derive_seed(seed, "thermal"));
        const double sigma = std::sqrt(b.thermal_noise_density * intensity.sample_rate);
        for (auto& s : intensity.samples) s += sigma * rng.gaussian();
    }
    if (b.adc_bits) {
        double peak = 0.0;
        for (double s : intensity.samples) peak = std::max(peak, std::abs(s));
        if (peak > 0.0) {
            const double levels = std::pow(2.0, *b.adc_bits) - 1.0;
            const double step = peak / levels;
            for (auto& s : intensity.samples) s = std::round(s / step) * step;
        }
    }
    return intensity;
}

IntensityCapture capture_single_pol(const ComplexWaveform& field, const FrontendSpec& spec,
                                    std::uint64_t seed) {
    spec.validate_for_capture();
    const double split = 1.0 / std::sqrt(static_cast<double>(spec.branches.size()));
    ComplexWaveform s = field;
    for (auto& v : s.samples) v *= split;

    // transform all branches first so combiners can reference their pair
    std::vector<ComplexWaveform> fields;
    fields.reserve(spec.branches.size());
    for (const auto& b : spec.branches) {
        BranchSpec no_comb = b;
        no_comb.combine_with.reset();
        fields.push_back(branch_field(s, no_comb));
    }
    IntensityCapture cap;
    for (std::size_t i = 0; i < spec.branches.size(); ++i) {
        const auto& b = spec.branches[i];
        ComplexWaveform out = fields[i];
        if (b.combine_with) {
            const auto& ref = fields[*b.combine_with];
            const double a = std::sqrt(b.coupler_ratio);
            const double r = std::sqrt(1.0 - b.coupler_ratio);
            for (std::size_t k = 0; k < out.samples.size(); ++k)
                out.samples[k] = a * out.samples[k] + r * ref.samples[k];
        }
        cap.branches.push_back(detect(out, b, derive_seed(seed, "branch", i)));
    }
    return cap;
}

DualPolCapture capture(const DualPolField& dp, const FrontendSpec& spec, std::uint64_t seed) {
    DualPolCapture out;
    out.pol_x = capture_single_pol(dp.x, spec, derive_seed(seed, "pol", 0));
    out.pol_y = capture_single_pol(dp.y, spec, derive_seed(seed, "pol", 1));
    return out;
}

}  // namespace prsim
