#include "prsim/recon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace prsim {

ReceiverFrameInfo receiver_info_from_frame(const FrameData& frame, const ModConfig& mod) {
    ReceiverFrameInfo info;
    info.mod = mod;
    info.training_len = frame.layout.training_len;
    info.payload_len = frame.layout.payload_len;
    info.pilot_positions = frame.pilot_positions;
    info.symbol_gain = frame.symbol_gain;
    info.payload_qam_order = frame.qam_order;
    info.payload_entropy_bits = frame.entropy_bits;
    for (int pol = 0; pol < 2; ++pol) {
        const auto& sym = frame.symbols[static_cast<std::size_t>(pol)];
        info.training_symbols.emplace_back(sym.begin(),
                                           sym.begin() + static_cast<std::ptrdiff_t>(info.training_len));
        std::vector<cdouble> pilots;
        pilots.reserve(frame.pilot_positions.size());
        for (std::size_t p : frame.pilot_positions) pilots.push_back(sym[info.training_len + p]);
        info.pilot_symbols.push_back(std::move(pilots));
    }
    return info;
}

void GsConfig::validate(double nyquist_hz) const {
    if (max_iterations < 1) throw config_error("GsConfig: max_iterations >= 1 required");
    if (bandwidth_limit_hz && (*bandwidth_limit_hz <= 0.0 || *bandwidth_limit_hz > nyquist_hz))
        throw config_error("GsConfig: bandwidth limit must be in (0, Nyquist]");
    if (update_relaxation <= 0.0 || update_relaxation > 2.1)
        throw config_error("GsConfig: update relaxation must be in (0, 2.1]");
    if (reset_fraction < 0.0 || reset_fraction > 1.0)
        throw config_error("GsConfig: reset fraction must be in [0, 1]");
}

// ---------------------------------------------------------------------------
// FFE
// ---------------------------------------------------------------------------

FfeDesign design_inverse_ffe(const FrequencyResponse& response, double sample_rate,
                             double symbol_rate, int n_taps, double spacing_symbols,
                             double regularization, double gain_cap_db) {
    if (n_taps < 3 || n_taps % 2 == 0)
        throw config_error("design_inverse_ffe: odd tap count >= 3 required");
    const double tap_rate = symbol_rate / spacing_symbols;
    const std::size_t n = 4096;
    const double cap = std::pow(10.0, gain_cap_db / 20.0);
    bool capped = false;

    std::vector<cdouble> w(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double f = bin_frequency(k, n, tap_rate);
        const cdouble h = response.gain_at(f, symbol_rate);
        if (std::norm(h) < regularization) capped = true;
        cdouble inv = std::conj(h) / (std::norm(h) + regularization);
        if (std::abs(inv) > cap) inv *= cap / std::abs(inv);
        w[k] = inv;
    }
    if (n % 2 == 0) w[n / 2] = w[n / 2].real();
    auto imp = ifft(std::move(w));
    std::vector<cdouble> taps(static_cast<std::size_t>(n_taps));
    const int half = n_taps / 2;
    for (int i = -half; i <= half; ++i) {
        const std::size_t src = (i >= 0) ? static_cast<std::size_t>(i)
                                         : n - static_cast<std::size_t>(-i);
        taps[static_cast<std::size_t>(i + half)] = imp[src].real();
    }
    FfeDesign design;
    design.taps = FrequencyResponse::from_taps(FrequencyResponse::Kind::real, std::move(taps),
                                               spacing_symbols);
    design.capped = capped;
    (void)sample_rate;
    return design;
}

namespace {

bool response_is_flat(const FrequencyResponse& h) {
    return h.is_taps() && h.taps.size() == 1 && h.taps[0] == cdouble{1.0, 0.0};
}

}  // namespace

IntensityCapture ffe_calibrate_and_equalize(const IntensityCapture& capture,
                                            const std::vector<FrequencyResponse>& rx_responses,
                                            double symbol_rate) {
    IntensityCapture out;
    out.branches.reserve(capture.branches.size());
    for (std::size_t i = 0; i < capture.branches.size(); ++i) {
        const bool flat = i >= rx_responses.size() || response_is_flat(rx_responses[i]);
        if (flat) {
            out.branches.push_back(capture.branches[i]);
            continue;
        }
        const auto design = design_inverse_ffe(rx_responses[i], capture.branches[i].sample_rate,
                                               symbol_rate);
        out.branches.push_back(apply_response(capture.branches[i], design.taps, symbol_rate));
    }
    return out;
}

DualPolCapture ffe_calibrate_and_equalize(const DualPolCapture& capture,
                                          const std::vector<FrequencyResponse>& rx_responses,
                                          double symbol_rate) {
    DualPolCapture out;
    out.pol_x = ffe_calibrate_and_equalize(capture.pol_x, rx_responses, symbol_rate);
    out.pol_y = ffe_calibrate_and_equalize(capture.pol_y, rx_responses, symbol_rate);
    return out;
}

// ---------------------------------------------------------------------------
// forward / backward propagation
// ---------------------------------------------------------------------------

namespace {

// integer-sample rotation (delays are exact on padded grids)
void rotate_by(std::vector<cdouble>& v, std::ptrdiff_t k) {
    const auto n = static_cast<std::ptrdiff_t>(v.size());
    k %= n;
    if (k < 0) k += n;
    std::rotate(v.begin(), v.end() - k, v.end());
}

struct BranchOps {
    double delay_samples = 0.0;
    bool integer_delay = true;
    std::ptrdiff_t delay_int = 0;
    std::vector<cdouble> delay_spec;   // fractional delays only
    std::vector<cdouble> disp_spec;    // empty if no dispersive element
    std::optional<std::size_t> combine_with;
    double amp_self = 1.0;             // sqrt(coupler_ratio)
    double amp_ref = 0.0;              // sqrt(1 - coupler_ratio)
};

struct PropagationPlan {
    std::size_t grid = 0;
    double fs = 0.0;
    double baud = 0.0;
    double split = 1.0;  // 1/sqrt(B)
    std::vector<cdouble> cd_spec;  // empty if no fiber dispersion
    std::vector<BranchOps> branch;
};

std::vector<cdouble> cd_spectrum(std::size_t n, double fs, double ps_per_nm, double wavelength_nm) {
    const double lam = wavelength_nm * 1e-9;
    const double coef = kPi * lam * lam * (ps_per_nm * 1e-3) / kSpeedOfLight;
    std::vector<cdouble> spec(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double f = bin_frequency(k, n, fs);
        const double ph = coef * f * f;
        spec[k] = cdouble{std::cos(ph), std::sin(ph)};
    }
    return spec;
}

PropagationPlan make_plan(std::size_t grid, double fs, double baud, const ChannelState& cs,
                          const FrontendSpec& spec) {
    PropagationPlan plan;
    plan.grid = grid;
    plan.fs = fs;
    plan.baud = baud;
    plan.split = 1.0 / std::sqrt(static_cast<double>(spec.branches.size()));
    if (cs.fiber_ps_per_nm != 0.0)
        plan.cd_spec = cd_spectrum(grid, fs, cs.fiber_ps_per_nm, cs.wavelength_nm);
    const int sps = static_cast<int>(std::lround(fs / baud));
    for (std::size_t i = 0; i < spec.branches.size(); ++i) {
        const auto& b = spec.branches[i];
        BranchOps ops;
        ops.delay_samples = cs.delay_for(spec, i) * sps;
        const double rounded = std::round(ops.delay_samples);
        ops.integer_delay = std::abs(ops.delay_samples - rounded) < 1e-9;
        ops.delay_int = static_cast<std::ptrdiff_t>(rounded);
        if (!ops.integer_delay) {
            ops.delay_spec.resize(grid);
            for (std::size_t k = 0; k < grid; ++k) {
                const double f = bin_frequency(k, grid, fs);
                const double a = -2.0 * kPi * f * ops.delay_samples / fs;
                ops.delay_spec[k] = cdouble{std::cos(a), std::sin(a)};
            }
        }
        if (b.dispersive_ps_per_nm != 0.0)
            ops.disp_spec = cd_spectrum(grid, fs, b.dispersive_ps_per_nm, cs.wavelength_nm);
        ops.combine_with = b.combine_with;
        ops.amp_self = std::sqrt(b.coupler_ratio);
        ops.amp_ref = std::sqrt(1.0 - b.coupler_ratio);
        if (b.combine_with && *b.combine_with >= spec.branches.size())
            throw config_error("forward_propagate: combine_with out of range");
        plan.branch.push_back(std::move(ops));
    }
    return plan;
}

void spec_multiply(std::vector<cdouble>& v, const std::vector<cdouble>& spec, bool conj) {
    fft_inplace(v, false);
    if (conj)
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= std::conj(spec[i]);
    else
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= spec[i];
    fft_inplace(v, true);
}

void branch_transform(std::vector<cdouble>& v, const BranchOps& ops) {
    if (ops.delay_samples != 0.0) {
        if (ops.integer_delay)
            rotate_by(v, ops.delay_int);
        else
            spec_multiply(v, ops.delay_spec, false);
    }
    if (!ops.disp_spec.empty()) spec_multiply(v, ops.disp_spec, false);
}

void branch_transform_inverse(std::vector<cdouble>& v, const BranchOps& ops) {
    if (!ops.disp_spec.empty()) spec_multiply(v, ops.disp_spec, true);
    if (ops.delay_samples != 0.0) {
        if (ops.integer_delay)
            rotate_by(v, -ops.delay_int);
        else
            spec_multiply(v, ops.delay_spec, true);
    }
}

std::array<std::vector<std::vector<cdouble>>, 2> forward_on_plan(const DualPolField& candidate,
                                                                 const ChannelState& cs,
                                                                 const PropagationPlan& plan) {
    std::array<std::vector<cdouble>, 2> field{candidate.x.samples, candidate.y.samples};
    if (!cs.tx.is_neutral()) {
        for (int p = 0; p < 2; ++p) {
            ComplexWaveform w;
            w.samples = std::move(field[static_cast<std::size_t>(p)]);
            w.sample_rate = plan.fs;
            w.symbol_rate = plan.baud;
            field[static_cast<std::size_t>(p)] =
                std::move(apply_tx_impairments(w, cs.tx).samples);
        }
    }
    for (int p = 0; p < 2; ++p)
        if (!plan.cd_spec.empty()) spec_multiply(field[static_cast<std::size_t>(p)], plan.cd_spec, false);
    // Jones
    {
        const auto& j = cs.jones.m;
        for (std::size_t i = 0; i < field[0].size(); ++i) {
            const cdouble ex = field[0][i];
            const cdouble ey = field[1][i];
            field[0][i] = j[0] * ex + j[1] * ey;
            field[1][i] = j[2] * ex + j[3] * ey;
        }
    }
    std::array<std::vector<std::vector<cdouble>>, 2> out;
    for (int p = 0; p < 2; ++p) {
        auto& pol_out = out[static_cast<std::size_t>(p)];
        std::vector<cdouble> split = field[static_cast<std::size_t>(p)];
        for (auto& v : split) v *= plan.split;
        // transform every branch path, then couple
        std::vector<std::vector<cdouble>> paths(plan.branch.size());
        for (std::size_t i = 0; i < plan.branch.size(); ++i) {
            paths[i] = split;
            branch_transform(paths[i], plan.branch[i]);
        }
        pol_out.resize(plan.branch.size());
        for (std::size_t i = 0; i < plan.branch.size(); ++i) {
            const auto& ops = plan.branch[i];
            if (ops.combine_with) {
                const auto& ref = paths[*ops.combine_with];
                pol_out[i].resize(plan.grid);
                for (std::size_t k = 0; k < plan.grid; ++k)
                    pol_out[i][k] = ops.amp_self * paths[i][k] + ops.amp_ref * ref[k];
            } else {
                pol_out[i] = paths[i];
            }
        }
    }
    return out;
}

DualPolField backward_on_plan(const std::array<std::vector<std::vector<cdouble>>, 2>& branch_fields,
                              const ChannelState& cs, const PropagationPlan& plan,
                              const std::vector<double>& weights, std::size_t* clip_count) {
    const std::size_t nb = plan.branch.size();
    std::vector<double> w = weights;
    if (w.empty()) w.assign(nb, 1.0);
    if (w.size() != nb) throw config_error("backward_propagate: weight count mismatch");
    double wsum = 0.0;
    for (double v : w) wsum += v;
    if (wsum <= 0.0) throw config_error("backward_propagate: weights must sum to > 0");

    std::array<std::vector<cdouble>, 2> est;
    for (int p = 0; p < 2; ++p) {
        const auto& bf = branch_fields[static_cast<std::size_t>(p)];
        std::vector<cdouble> acc(plan.grid, cdouble{0.0, 0.0});
        for (std::size_t i = 0; i < nb; ++i) {
            if (w[i] == 0.0) continue;
            const auto& ops = plan.branch[i];
            std::vector<cdouble> xi;
            if (!ops.combine_with) {
                xi = bf[i];
                branch_transform_inverse(xi, ops);
            } else {
                const auto& ref = bf[*ops.combine_with];
                // port A: remove the reference contribution, invert this
                // branch's own transform
                std::vector<cdouble> xa(plan.grid);
                for (std::size_t k = 0; k < plan.grid; ++k)
                    xa[k] = (bf[i][k] - ops.amp_ref * ref[k]) / ops.amp_self;
                branch_transform_inverse(xa, ops);
                // port B: remove this branch's transformed reference estimate,
                // leaving the direct tributary
                std::vector<cdouble> tr = ref;
                const auto& rops = plan.branch[*ops.combine_with];
                branch_transform_inverse(tr, rops);  // back to split-plane
                branch_transform(tr, ops);           // through this branch's optics
                std::vector<cdouble> xb(plan.grid);
                for (std::size_t k = 0; k < plan.grid; ++k)
                    xb[k] = (bf[i][k] - ops.amp_self * tr[k]) / ops.amp_ref;
                branch_transform_inverse(xb, rops);
                xi.resize(plan.grid);
                for (std::size_t k = 0; k < plan.grid; ++k) xi[k] = 0.5 * (xa[k] + xb[k]);
            }
            for (std::size_t k = 0; k < plan.grid; ++k) acc[k] += w[i] * xi[k];
        }
        const double scale = 1.0 / (wsum * plan.split);
        for (auto& v : acc) v *= scale;
        est[static_cast<std::size_t>(p)] = std::move(acc);
    }
    // undo Jones
    {
        const JonesMatrix jd = cs.jones.dagger();
        for (std::size_t i = 0; i < est[0].size(); ++i) {
            const cdouble ex = est[0][i];
            const cdouble ey = est[1][i];
            est[0][i] = jd.m[0] * ex + jd.m[1] * ey;
            est[1][i] = jd.m[2] * ex + jd.m[3] * ey;
        }
    }
    DualPolField out;
    for (int p = 0; p < 2; ++p) {
        auto& pol = (p == 0) ? out.x : out.y;
        pol.samples = std::move(est[static_cast<std::size_t>(p)]);
        pol.sample_rate = plan.fs;
        pol.symbol_rate = plan.baud;
        if (!plan.cd_spec.empty()) spec_multiply(pol.samples, plan.cd_spec, true);
        if (!cs.tx.is_neutral()) {
            std::size_t clips = 0;
            pol = invert_tx_impairments(pol, cs.tx, &clips);
            if (clip_count) *clip_count += clips;
        }
    }
    return out;
}

}  // namespace

std::array<std::vector<ComplexWaveform>, 2> forward_propagate(const DualPolField& candidate,
                                                              const ChannelState& cs,
                                                              const FrontendSpec& spec) {
    if (candidate.x.samples.size() != candidate.y.samples.size())
        throw config_error("forward_propagate: polarization length mismatch");
    const auto plan = make_plan(candidate.x.samples.size(), candidate.x.sample_rate,
                                candidate.x.symbol_rate, cs, spec);
    const auto raw = forward_on_plan(candidate, cs, plan);
    std::array<std::vector<ComplexWaveform>, 2> out;
    for (int p = 0; p < 2; ++p) {
        for (const auto& v : raw[static_cast<std::size_t>(p)]) {
            ComplexWaveform w;
            w.samples = v;
            w.sample_rate = candidate.x.sample_rate;
            w.symbol_rate = candidate.x.symbol_rate;
            out[static_cast<std::size_t>(p)].push_back(std::move(w));
        }
    }
    return out;
}

DualPolField backward_propagate(const std::array<std::vector<ComplexWaveform>, 2>& branch_fields,
                                const ChannelState& cs, const FrontendSpec& spec,
                                const std::vector<double>& weights, std::size_t* clip_count) {
    if (branch_fields[0].empty()) throw config_error("backward_propagate: no branch fields");
    const auto& first = branch_fields[0][0];
    const auto plan = make_plan(first.samples.size(), first.sample_rate, first.symbol_rate, cs, spec);
    std::array<std::vector<std::vector<cdouble>>, 2> raw;
    for (int p = 0; p < 2; ++p)
        for (const auto& w : branch_fields[static_cast<std::size_t>(p)])
            raw[static_cast<std::size_t>(p)].push_back(w.samples);
    return backward_on_plan(raw, cs, plan, weights, clip_count);
}

// ---------------------------------------------------------------------------
// pilot phase alignment
// ---------------------------------------------------------------------------

double pilot_phase_align(std::vector<cdouble>& payload_symbols,
                         const std::vector<std::size_t>& pilot_positions,
                         const std::vector<cdouble>& pilot_values, double min_correlation,
                         bool* low_confidence, std::size_t block_count) {
    if (pilot_positions.empty() || pilot_positions.size() != pilot_values.size())
        throw config_error("pilot_phase_align: pilot layout mismatch");
    const auto align_span = [&](std::size_t lo, std::size_t hi) -> double {
        cdouble z{0.0, 0.0};
        double pw = 0.0;
        for (std::size_t i = 0; i < pilot_positions.size(); ++i) {
            const std::size_t p = pilot_positions[i];
            if (p < lo || p >= hi || p >= payload_symbols.size()) continue;
            z += payload_symbols[p] * std::conj(pilot_values[i]);
            pw += std::abs(payload_symbols[p]) * std::abs(pilot_values[i]);
        }
        const double conf = (pw > 0.0) ? std::abs(z) / pw : 0.0;
        if (low_confidence && conf < min_correlation) *low_confidence = true;
        const double theta = std::arg(z);
        const cdouble rot{std::cos(-theta), std::sin(-theta)};
        for (std::size_t p = lo; p < hi && p < payload_symbols.size(); ++p)
            payload_symbols[p] *= rot;
        return theta;
    };
    if (low_confidence) *low_confidence = false;
    if (block_count <= 1) return align_span(0, payload_symbols.size());
    const std::size_t block = (payload_symbols.size() + block_count - 1) / block_count;
    double theta0 = 0.0;
    for (std::size_t b = 0; b < block_count; ++b) {
        const double t = align_span(b * block, std::min((b + 1) * block, payload_symbols.size()));
        if (b == 0) theta0 = t;
    }
    return theta0;
}

// ---------------------------------------------------------------------------
// the reconstruction loop
// ---------------------------------------------------------------------------

namespace {

struct SymbolGrid {
    std::size_t grid = 0;
    int sps = 2;
    std::size_t frame_len = 0;
    std::vector<cdouble> h_rrc;  // centered RRC kernel spectrum on the grid

    std::vector<cdouble> demod(const std::vector<cdouble>& x, double gain) const {
        std::vector<cdouble> y = x;
        fft_inplace(y, false);
        for (std::size_t k = 0; k < grid; ++k) y[k] *= h_rrc[k];
        fft_inplace(y, true);
        std::vector<cdouble> sym(frame_len);
        const double inv = 1.0 / gain;
        for (std::size_t i = 0; i < frame_len; ++i)
            sym[i] = y[i * static_cast<std::size_t>(sps)] * inv;
        return sym;
    }

    // waveform holding the RRC synthesis of a sparse symbol correction
    std::vector<cdouble> resynth(const std::vector<std::pair<std::size_t, cdouble>>& deltas,
                                 double gain) const {
        std::vector<cdouble> up(grid, cdouble{0.0, 0.0});
        for (const auto& [idx, v] : deltas) up[idx * static_cast<std::size_t>(sps)] = v * gain;
        fft_inplace(up, false);
        for (std::size_t k = 0; k < grid; ++k) up[k] *= h_rrc[k];
        fft_inplace(up, true);
        return up;
    }
};

SymbolGrid make_symbol_grid(std::size_t grid, const ModConfig& mod, std::size_t frame_len) {
    SymbolGrid sg;
    sg.grid = grid;
    sg.sps = mod.sps;
    sg.frame_len = frame_len;
    const auto h = rrc_taps(mod.sps, mod.rolloff, mod.span);
    std::vector<cdouble> kern(grid, cdouble{0.0, 0.0});
    const std::size_t half = h.size() / 2;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(half);
        const std::size_t k = (off >= 0) ? static_cast<std::size_t>(off)
                                         : grid - static_cast<std::size_t>(-off);
        kern[k] = cdouble{h[i], 0.0};
    }
    fft_inplace(kern, false);
    sg.h_rrc = std::move(kern);
    return sg;
}

double quantile_of(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

GsResult gs_reconstruct(const DualPolCapture& equalized_capture, const ChannelState& cs,
                        const FrontendSpec& spec, const ReceiverFrameInfo& info,
                        const GsConfig& cfg, const FrameData* truth) {
    const std::size_t nb = spec.branches.size();
    if (equalized_capture.pol_x.branches.size() != nb ||
        equalized_capture.pol_y.branches.size() != nb)
        throw stage_error("recon", "capture branch count does not match the front-end spec");
    const std::size_t grid = equalized_capture.pol_x.branches[0].samples.size();
    const double fs = equalized_capture.pol_x.branches[0].sample_rate;
    const double baud = info.mod.symbol_rate;
    cfg.validate(fs / 2.0);
    if (!cfg.joint_polarization && cs.jones.unitarity_defect() > 0.0 &&
        jones_angle_error_rad(cs.jones, JonesMatrix::identity()) > 1e-9)
        throw stage_error("recon", "per-polarization mode requires an identity Jones state");
    if (info.frame_len() * static_cast<std::size_t>(info.mod.sps) > grid)
        throw stage_error("recon", "frame does not fit the capture grid");

    const auto plan = make_plan(grid, fs, baud, cs, spec);
    const auto sg = make_symbol_grid(grid, info.mod, info.frame_len());
    const double bw = cfg.bandwidth_limit_hz.value_or((1.0 + info.mod.rolloff) * baud / 2.0);
    std::vector<std::uint8_t> in_band(grid);
    for (std::size_t k = 0; k < grid; ++k)
        in_band[k] = std::abs(bin_frequency(k, grid, fs)) <= bw ? 1 : 0;

    // Roll-off skirt alias pairs (f, f - baud) both inside the band limit.
    // Content orthogonal to the pulse-shaping direction on such a pair cannot
    // be expressed by any symbol sequence, is invisible to the symbol-domain
    // constraints, and stalls the iteration; project it out with the band
    // constraint. At a consistent candidate this projection is a no-op.
    struct AliasPair {
        std::size_t hi, lo;
        cdouble u_hi, u_lo;  // unit vector along the synthesis direction
    };
    std::vector<AliasPair> skirt_pairs;
    {
        const double bin_baud = baud * static_cast<double>(grid) / fs;
        const auto offset = static_cast<std::size_t>(std::llround(bin_baud));
        if (std::abs(bin_baud - static_cast<double>(offset)) < 1e-9) {
            for (std::size_t k = 0; k < grid; ++k) {
                const double f = bin_frequency(k, grid, fs);
                if (f <= 0.0 || f > bw) continue;
                if (f - baud < -bw) continue;
                const std::size_t k2 = (k + grid - (offset % grid)) % grid;
                const cdouble h1 = sg.h_rrc[k];
                const cdouble h2 = sg.h_rrc[k2];
                const double nrm = std::sqrt(std::norm(h1) + std::norm(h2));
                if (nrm < 1e-9) continue;
                skirt_pairs.push_back({k, k2, h1 / nrm, h2 / nrm});
            }
        }
    }

    // sqrt of measured intensities, clamped at zero
    std::array<std::vector<std::vector<double>>, 2> amp;
    for (int p = 0; p < 2; ++p) {
        const auto& cap = (p == 0) ? equalized_capture.pol_x : equalized_capture.pol_y;
        for (std::size_t i = 0; i < nb; ++i) {
            std::vector<double> a(grid);
            for (std::size_t k = 0; k < grid; ++k) {
                const double v = cap.branches[i].samples[k];
                if (!std::isfinite(v))
                    throw stage_error("recon", "non-finite sample in capture branch " +
                                                   std::to_string(i));
                a[k] = std::sqrt(std::max(0.0, v));
            }
            amp[static_cast<std::size_t>(p)].push_back(std::move(a));
        }
    }

    // known-symbol table (training + pilots)
    const std::size_t t_len = info.training_len;
    const std::size_t pay_len = info.payload_len;
    std::vector<std::uint8_t> known(info.frame_len(), 0);
    std::array<std::vector<cdouble>, 2> known_val;
    known_val[0].assign(info.frame_len(), cdouble{0.0, 0.0});
    known_val[1].assign(info.frame_len(), cdouble{0.0, 0.0});
    if (cfg.constrain_training) {
        for (std::size_t i = 0; i < t_len; ++i) {
            known[i] = 1;
            known_val[0][i] = info.training_symbols[0][i];
            known_val[1][i] = info.training_symbols[1][i];
        }
    }
    for (std::size_t i = 0; i < info.pilot_positions.size(); ++i) {
        const std::size_t p = t_len + info.pilot_positions[i];
        known[p] = 1;
        known_val[0][p] = info.pilot_symbols[0][i];
        known_val[1][p] = info.pilot_symbols[1][i];
    }

    const Constellation payload_const =
        (info.payload_entropy_bits >=
         std::log2(static_cast<double>(info.payload_qam_order)) - 1e-12)
            ? Constellation::uniform(info.payload_qam_order)
            : Constellation::maxwell_boltzmann(info.payload_qam_order, info.payload_entropy_bits);

    // init: direct-branch amplitude, flat phase
    DualPolField cand;
    for (int p = 0; p < 2; ++p) {
        auto& pol = (p == 0) ? cand.x : cand.y;
        pol.sample_rate = fs;
        pol.symbol_rate = baud;
        pol.samples.resize(grid);
        const double unsplit = std::sqrt(static_cast<double>(nb));
        const auto& a0 = amp[static_cast<std::size_t>(p)][0];
        for (std::size_t k = 0; k < grid; ++k) pol.samples[k] = cdouble{a0[k] * unsplit, 0.0};
    }

    GsTrace trace;
    FieldEstimate est_out;
    std::size_t clip_total = 0;
    int stagnant = 0;
    double prev_obj = std::numeric_limits<double>::quiet_NaN();

    // truth payload (for the SNR trace only)
    std::array<std::vector<cdouble>, 2> truth_pay;
    std::vector<std::size_t> data_pos;
    if (truth) {
        for (int p = 0; p < 2; ++p) {
            const auto& sym = truth->symbols[static_cast<std::size_t>(p)];
            truth_pay[static_cast<std::size_t>(p)].assign(
                sym.begin() + static_cast<std::ptrdiff_t>(t_len), sym.end());
        }
        data_pos = truth->data_positions();
    }

    for (int it = 1; it <= cfg.max_iterations; ++it) {
        auto bf = forward_on_plan(cand, cs, plan);

        double obj = 0.0;
        for (int p = 0; p < 2; ++p) {
            for (std::size_t i = 0; i < nb; ++i) {
                const auto& b = bf[static_cast<std::size_t>(p)][i];
                const auto& a = amp[static_cast<std::size_t>(p)][i];
                double acc = 0.0;
                for (std::size_t k = 0; k < grid; ++k) {
                    const double d = std::abs(b[k]) - a[k];
                    acc += d * d;
                }
                obj += acc / static_cast<double>(grid);
            }
        }
        if (!std::isfinite(obj))
            throw stage_error("recon", "NaN in iterate at iteration " + std::to_string(it));
        trace.objective.push_back(obj);

        // amplitude substitution: keep phase, impose measured magnitude
        for (int p = 0; p < 2; ++p) {
            for (std::size_t i = 0; i < nb; ++i) {
                auto& b = bf[static_cast<std::size_t>(p)][i];
                const auto& a = amp[static_cast<std::size_t>(p)][i];
                for (std::size_t k = 0; k < grid; ++k) {
                    const double mag = std::abs(b[k]);
                    b[k] = (mag > 0.0) ? b[k] * (a[k] / mag) : cdouble{a[k], 0.0};
                }
            }
        }

        DualPolField est = backward_on_plan(bf, cs, plan, cfg.branch_weights, &clip_total);

        // relaxed update through the backward estimate
        const double r = cfg.update_relaxation;
        for (int p = 0; p < 2; ++p) {
            auto& e = (p == 0) ? est.x : est.y;
            const auto& c = (p == 0) ? cand.x : cand.y;
            for (std::size_t k = 0; k < grid; ++k)
                e.samples[k] = c.samples[k] + r * (e.samples[k] - c.samples[k]);
        }

        // bandwidth constraint + skirt alias-pair projection
        for (int p = 0; p < 2; ++p) {
            auto& e = (p == 0) ? est.x : est.y;
            fft_inplace(e.samples, false);
            for (std::size_t k = 0; k < grid; ++k)
                if (!in_band[k]) e.samples[k] = cdouble{0.0, 0.0};
            for (const auto& pr : skirt_pairs) {
                const cdouble proj = std::conj(pr.u_hi) * e.samples[pr.hi] +
                                     std::conj(pr.u_lo) * e.samples[pr.lo];
                e.samples[pr.hi] = pr.u_hi * proj;
                e.samples[pr.lo] = pr.u_lo * proj;
            }
            fft_inplace(e.samples, true);
        }

        // support constraint: the transmit frame occupies [0, frame_len*sps)
        if (cfg.constrain_support) {
            const std::size_t frame_samples =
                info.frame_len() * static_cast<std::size_t>(info.mod.sps);
            for (int p = 0; p < 2; ++p) {
                auto& e = (p == 0) ? est.x : est.y;
                for (std::size_t k = frame_samples; k < grid; ++k)
                    e.samples[k] = cdouble{0.0, 0.0};
            }
        }

        const bool do_reset =
            std::find(cfg.reset_schedule.begin(), cfg.reset_schedule.end(), it) !=
            cfg.reset_schedule.end();
        const bool do_decision_reset =
            std::find(cfg.decision_reset_schedule.begin(), cfg.decision_reset_schedule.end(),
                      it) != cfg.decision_reset_schedule.end();

        for (int p = 0; p < 2; ++p) {
            auto& e = (p == 0) ? est.x : est.y;
            const double gain = info.symbol_gain[static_cast<std::size_t>(p)];
            auto sym = sg.demod(e.samples, gain);

            // pilot-referenced block phase tracking over the payload span
            if (cfg.phase_block_symbols > 0 && !info.pilot_positions.empty()) {
                const std::size_t block = cfg.phase_block_symbols;
                std::vector<double> centers, thetas;
                for (std::size_t lo = 0; lo < pay_len; lo += block) {
                    const std::size_t hi = std::min(lo + block, pay_len);
                    cdouble z{0.0, 0.0};
                    for (std::size_t i = 0; i < info.pilot_positions.size(); ++i) {
                        const std::size_t pos = info.pilot_positions[i];
                        if (pos < lo || pos >= hi) continue;
                        z += sym[t_len + pos] *
                             std::conj(info.pilot_symbols[static_cast<std::size_t>(p)][i]);
                    }
                    if (std::abs(z) == 0.0) continue;
                    centers.push_back(static_cast<double>(t_len + (lo + hi) / 2) * info.mod.sps);
                    thetas.push_back(std::arg(z));
                }
                if (!centers.empty()) {
                    for (std::size_t i = 1; i < thetas.size(); ++i) {
                        while (thetas[i] - thetas[i - 1] > kPi) thetas[i] -= 2.0 * kPi;
                        while (thetas[i] - thetas[i - 1] < -kPi) thetas[i] += 2.0 * kPi;
                    }
                    const std::size_t lo_s = t_len * static_cast<std::size_t>(info.mod.sps);
                    const std::size_t hi_s =
                        info.frame_len() * static_cast<std::size_t>(info.mod.sps);
                    std::size_t seg = 0;
                    for (std::size_t k = lo_s; k < hi_s; ++k) {
                        const auto kk = static_cast<double>(k);
                        double th;
                        if (kk <= centers.front()) {
                            th = thetas.front();
                        } else if (kk >= centers.back()) {
                            th = thetas.back();
                        } else {
                            while (seg + 1 < centers.size() && centers[seg + 1] < kk) ++seg;
                            const double f = (kk - centers[seg]) / (centers[seg + 1] - centers[seg]);
                            th = thetas[seg] * (1.0 - f) + thetas[seg + 1] * f;
                        }
                        e.samples[k] *= cdouble{std::cos(-th), std::sin(-th)};
                    }
                    sym = sg.demod(e.samples, gain);
                }
            }

            std::vector<std::pair<std::size_t, cdouble>> deltas;
            for (std::size_t i = 0; i < info.frame_len(); ++i)
                if (known[i])
                    deltas.emplace_back(i, known_val[static_cast<std::size_t>(p)][i] - sym[i]);

            if ((do_reset && cfg.reset_fraction > 0.0) ||
                (do_decision_reset && cfg.decision_reset_fraction > 0.0)) {
                std::vector<double> dist;
                std::vector<std::size_t> idx;
                for (std::size_t i = 0; i < pay_len; ++i) {
                    if (known[t_len + i]) continue;
                    const cdouble y = sym[t_len + i];
                    const cdouble c = payload_const.points()[payload_const.nearest(y)];
                    dist.push_back(std::abs(y - c));
                    idx.push_back(i);
                }
                if (do_reset && cfg.reset_fraction > 0.0) {
                    // selective phase reset: worst data symbols by decision distance
                    const double thr = quantile_of(dist, 1.0 - cfg.reset_fraction);
                    for (std::size_t j = 0; j < idx.size(); ++j) {
                        if (dist[j] <= thr) continue;
                        const std::size_t i = t_len + idx[j];
                        const cdouble y = sym[i];
                        const cdouble c = payload_const.points()[payload_const.nearest(y)];
                        const double mag = std::abs(y);
                        const double ph = std::arg(c);
                        deltas.emplace_back(i,
                                            cdouble{mag * std::cos(ph), mag * std::sin(ph)} - y);
                    }
                }
                if (do_decision_reset && cfg.decision_reset_fraction > 0.0) {
                    // snap the most confident fraction; ambiguous symbols are
                    // left to the measurement updates
                    const double thr = quantile_of(dist, cfg.decision_reset_fraction);
                    for (std::size_t j = 0; j < idx.size(); ++j) {
                        if (dist[j] > thr) continue;
                        const std::size_t i = t_len + idx[j];
                        const cdouble y = sym[i];
                        deltas.emplace_back(i, payload_const.points()[payload_const.nearest(y)] - y);
                    }
                }
            }

            if (!deltas.empty()) {
                const auto corr = sg.resynth(deltas, gain);
                for (std::size_t k = 0; k < grid; ++k) e.samples[k] += corr[k];
            }
        }

        cand = std::move(est);

        // SNR trace against ground truth
        if (truth) {
            double snr_sum = 0.0;
            for (int p = 0; p < 2; ++p) {
                const double gain = info.symbol_gain[static_cast<std::size_t>(p)];
                auto sym = sg.demod(((p == 0) ? cand.x : cand.y).samples, gain);
                std::vector<cdouble> a, b;
                for (std::size_t dpos : data_pos) {
                    a.push_back(sym[t_len + dpos]);
                    b.push_back(truth_pay[static_cast<std::size_t>(p)][dpos]);
                }
                cdouble num{0.0, 0.0};
                double den = 0.0;
                for (std::size_t k = 0; k < a.size(); ++k) {
                    num += std::conj(b[k]) * a[k];
                    den += std::norm(b[k]);
                }
                const cdouble g = (den > 0.0) ? num / den : cdouble{1.0, 0.0};
                double err = 0.0, psig = 0.0;
                for (std::size_t k = 0; k < a.size(); ++k) {
                    err += std::norm(a[k] - g * b[k]);
                    psig += std::norm(g * b[k]);
                }
                snr_sum += (err > 0.0) ? 10.0 * std::log10(psig / err) : 80.0;
            }
            trace.snr_db.push_back(snr_sum / 2.0);
        } else {
            trace.snr_db.push_back(std::numeric_limits<double>::quiet_NaN());
        }

        // early stop on a stagnant objective, but not while scheduled resets
        // are still pending
        int last_scheduled = 0;
        for (int v : cfg.reset_schedule) last_scheduled = std::max(last_scheduled, v);
        for (int v : cfg.decision_reset_schedule) last_scheduled = std::max(last_scheduled, v);
        if (std::isfinite(prev_obj) && prev_obj > 0.0 && it > last_scheduled) {
            const double rel = std::abs(obj - prev_obj) / prev_obj;
            stagnant = (rel < cfg.early_stop_tol) ? stagnant + 1 : 0;
            if (stagnant >= cfg.early_stop_window) break;
        }
        prev_obj = obj;
    }

    // final symbol decisions + pilot global-phase removal
    est_out.reconstructed = cand;
    est_out.mzm_clip_count = clip_total;
    for (int p = 0; p < 2; ++p) {
        const double gain = info.symbol_gain[static_cast<std::size_t>(p)];
        auto sym = sg.demod(((p == 0) ? cand.x : cand.y).samples, gain);
        std::vector<cdouble> payload(sym.begin() + static_cast<std::ptrdiff_t>(t_len), sym.end());
        if (!info.pilot_positions.empty()) {
            bool low = false;
            pilot_phase_align(payload, info.pilot_positions,
                              info.pilot_symbols[static_cast<std::size_t>(p)],
                              cfg.pilot_min_correlation, &low);
            est_out.low_confidence = est_out.low_confidence || low;
        }
        est_out.payload_symbols.push_back(std::move(payload));
    }
    est_out.valid_mask.assign(pay_len, 1);
    for (std::size_t i = 0; i < pay_len; ++i)
        if (pay_len - i <= cfg.edge_margin_symbols) est_out.valid_mask[i] = 0;

    return {std::move(est_out), std::move(trace)};
}

ChannelState true_channel_state(const TxImpairments& tx, const FiberSpec& fiber,
                                const JonesMatrix& jones, const FrontendSpec& spec) {
    ChannelState cs;
    cs.tx = tx;
    cs.fiber_ps_per_nm = fiber.total_dispersion_ps_per_nm();
    cs.wavelength_nm = fiber.wavelength_nm;
    cs.jones = jones;
    for (const auto& b : spec.branches) {
        cs.rx.push_back(b.oe_response);
        cs.branch_delays_symbols.push_back(b.delay_symbols);
    }
    return cs;
}

}  // namespace prsim
