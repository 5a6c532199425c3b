#include "prsim/chanest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace prsim {

namespace {

// Model side of the objective: the receiver knows the training symbols only,
// so the model frame is training + silence and the comparison span keeps a
// margin away from the unknown payload and the frame edges.
struct ModelContext {
    DualPolField training_field;  // on the measurement grid
    std::size_t grid = 0;
    double fs = 0.0;
    int sps = 2;
    std::size_t lo = 0, hi = 0;   // comparison span in samples
    const FrontendSpec* spec = nullptr;
    std::array<std::vector<std::vector<double>>, 2> meas_sqrt;  // [pol][branch][sample]
};

ModelContext make_context(const ReceiverFrameInfo& info, const DualPolCapture& measured,
                          const FrontendSpec& spec, std::size_t margin_symbols) {
    ModelContext ctx;
    ctx.spec = &spec;
    ctx.grid = measured.pol_x.branches.at(0).samples.size();
    ctx.fs = measured.pol_x.branches.at(0).sample_rate;
    ctx.sps = info.mod.sps;
    if (2 * margin_symbols >= info.training_len)
        throw config_error("intensity_mismatch: margin leaves no training span");
    ctx.lo = margin_symbols * static_cast<std::size_t>(ctx.sps);
    ctx.hi = (info.training_len - margin_symbols) * static_cast<std::size_t>(ctx.sps);

    for (int p = 0; p < 2; ++p) {
        ComplexWaveform w = rrc_shape(info.training_symbols[static_cast<std::size_t>(p)],
                                      info.mod.sps, info.mod.rolloff, info.mod.span,
                                      info.mod.symbol_rate);
        const double g = info.symbol_gain[static_cast<std::size_t>(p)];
        for (auto& s : w.samples) s *= g;
        w.samples.resize(ctx.grid, cdouble{0.0, 0.0});
        ((p == 0) ? ctx.training_field.x : ctx.training_field.y) = std::move(w);
    }
    for (int p = 0; p < 2; ++p) {
        const auto& cap = (p == 0) ? measured.pol_x : measured.pol_y;
        for (const auto& br : cap.branches) {
            std::vector<double> a(br.samples.size());
            for (std::size_t k = 0; k < a.size(); ++k)
                a[k] = std::sqrt(std::max(0.0, br.samples[k]));
            ctx.meas_sqrt[static_cast<std::size_t>(p)].push_back(std::move(a));
        }
    }
    return ctx;
}

double objective_on(const ModelContext& ctx, const ChannelState& cs) {
    const auto bf = forward_propagate(ctx.training_field, cs, *ctx.spec);
    double total = 0.0;
    const auto span = static_cast<double>(ctx.hi - ctx.lo);
    for (int p = 0; p < 2; ++p) {
        for (std::size_t i = 0; i < ctx.spec->branches.size(); ++i) {
            const auto& b = bf[static_cast<std::size_t>(p)][i];
            RealWaveform intensity;
            intensity.sample_rate = ctx.fs;
            intensity.samples.resize(b.samples.size());
            for (std::size_t k = 0; k < b.samples.size(); ++k)
                intensity.samples[k] = std::norm(b.samples[k]);
            if (const auto* rx = cs.rx_for(i))
                intensity = apply_response(intensity, *rx, b.symbol_rate);
            const auto& meas = ctx.meas_sqrt[static_cast<std::size_t>(p)][i];
            double acc = 0.0;
            for (std::size_t k = ctx.lo; k < ctx.hi; ++k) {
                const double d = std::sqrt(std::max(0.0, intensity.samples[k])) - meas[k];
                acc += d * d;
            }
            total += acc / span;
        }
    }
    return total;
}

struct Budget {
    int used = 0;
    int cap = 0;
    bool spent() const { return cap > 0 && used >= cap; }
};

// Successive parabolic line search with a shrinking trust region.
double line_search(const std::function<double(double)>& f, double x0, double step, double lo,
                   double hi, Budget& budget, double* best_val = nullptr, int rounds = 12) {
    double x = std::clamp(x0, lo, hi);
    double fx = f(x);
    ++budget.used;
    double h = step;
    for (int it = 0; it < rounds && !budget.spent(); ++it) {
        const double xl = std::max(lo, x - h);
        const double xr = std::min(hi, x + h);
        const double fl = f(xl);
        const double fr = f(xr);
        budget.used += 2;
        double xn = x;
        const double denom = (xl - x) * (xl - xr) * (x - xr);
        if (denom != 0.0) {
            const double a = (xr * (fx - fl) + x * (fl - fr) + xl * (fr - fx)) / denom;
            const double b =
                (xr * xr * (fl - fx) + x * x * (fr - fl) + xl * xl * (fx - fr)) / denom;
            xn = (a > 0.0) ? -b / (2.0 * a) : (fl < fr ? xl : xr);
        }
        xn = std::clamp(xn, lo, hi);
        const double fn = f(xn);
        ++budget.used;
        double fb = fx, xb = x;
        if (fl < fb) { fb = fl; xb = xl; }
        if (fr < fb) { fb = fr; xb = xr; }
        if (fn < fb) { fb = fn; xb = xn; }
        if (std::abs(xb - x) < 0.25 * h) h *= 0.35;
        x = xb;
        fx = fb;
        if (h < 1e-10 * std::max(1.0, std::abs(x))) break;
    }
    if (best_val) *best_val = fx;
    return x;
}

struct Param {
    std::function<double()> get;
    std::function<void(double)> set;
    double lo, hi, step;
};

double coordinate_descent(std::vector<Param>& params, const std::function<double()>& eval,
                          Budget& budget, int passes, double tol) {
    double best = eval();
    ++budget.used;
    for (int pass = 0; pass < passes && !budget.spent(); ++pass) {
        const double before = best;
        for (auto& prm : params) {
            if (budget.spent()) break;
            const double x0 = prm.get();
            const double step = (pass == 0) ? prm.step : prm.step * std::pow(0.3, pass);
            const auto f1 = [&](double v) {
                prm.set(v);
                return eval();
            };
            double fb = 0.0;
            const double xb = line_search(f1, x0, step, prm.lo, prm.hi, budget, &fb, 8);
            if (fb <= best) {
                prm.set(xb);
                best = fb;
            } else {
                prm.set(x0);
            }
        }
        if (before - best < tol) break;
    }
    return best;
}

std::vector<Param> jones_params(ChannelState& cs, double* alpha, double* phi1, double* phi2) {
    const auto refresh = [&cs, alpha, phi1, phi2]() {
        cs.jones = JonesMatrix::from_angles(*alpha, *phi1, *phi2);
    };
    std::vector<Param> out;
    for (double* v : {alpha, phi1, phi2}) {
        out.push_back(Param{[v]() { return *v; },
                            [v, refresh](double x) {
                                *v = x;
                                refresh();
                            },
                            -kPi, kPi, 0.3});
    }
    return out;
}

}  // namespace

double intensity_mismatch(const ChannelState& cs, const ReceiverFrameInfo& info,
                          const DualPolCapture& measured, const FrontendSpec& spec,
                          std::size_t margin_symbols) {
    if (measured.pol_x.branches.size() != spec.branches.size())
        throw stage_error("chanest", "capture branch count does not match the front-end spec");
    const auto ctx = make_context(info, measured, spec, margin_symbols);
    return objective_on(ctx, cs);
}

EstimationResult estimate_static(const ReceiverFrameInfo& info, const DualPolCapture& measured,
                                 const FrontendSpec& spec, const EstimatorConfig& cfg) {
    const auto ctx = make_context(info, measured, spec, cfg.margin_symbols);
    ChannelState cs = cfg.init;
    if (cs.branch_delays_symbols.empty())
        for (const auto& b : spec.branches) cs.branch_delays_symbols.push_back(b.delay_symbols);
    if (cs.rx.empty())
        for (const auto& b : spec.branches) cs.rx.push_back(b.oe_response);

    Budget budget{0, cfg.max_evaluations};
    const auto eval = [&]() { return objective_on(ctx, cs); };

    double alpha = std::asin(std::clamp(std::abs(cs.jones.m[1]), 0.0, 1.0));
    double phi1 = std::arg(cs.jones.m[0]);
    double phi2 = (std::abs(cs.jones.m[1]) > 1e-12) ? std::arg(cs.jones.m[1]) : 0.0;

    double best = eval();
    ++budget.used;
    if (best <= cfg.tolerance)
        return {cs, best, true, budget.used};

    for (const auto& stage : cfg.stages) {
        if (budget.spent()) break;
        if (stage == "delays") {
            for (std::size_t i = 0; i < spec.branches.size() && !budget.spent(); ++i) {
                if (spec.branches[i].delay_symbols == 0.0 && cs.delay_for(spec, i) == 0.0) continue;
                const double init = cs.branch_delays_symbols[i];
                const double sym_step = 1.0 / info.mod.sps;
                double best_d = init, best_f = best;
                const auto w = static_cast<int>(cfg.delay_window_symbols * info.mod.sps);
                for (int k = -w; k <= w && !budget.spent(); ++k) {
                    const double d = init + k * sym_step;
                    if (d < 0.0) continue;
                    cs.branch_delays_symbols[i] = d;
                    const double f = eval();
                    ++budget.used;
                    if (f < best_f) { best_f = f; best_d = d; }
                }
                // parabolic refine around the best grid point
                const auto f1 = [&](double v) {
                    cs.branch_delays_symbols[i] = v;
                    return eval();
                };
                best_d = line_search(f1, best_d, sym_step, std::max(0.0, best_d - 1.0),
                                     best_d + 1.0, budget, &best_f, 6);
                cs.branch_delays_symbols[i] = best_d;
                best = best_f;
            }
        } else if (stage == "dispersion") {
            const auto f1 = [&](double v) {
                cs.fiber_ps_per_nm = v;
                return eval();
            };
            cs.fiber_ps_per_nm =
                line_search(f1, cs.fiber_ps_per_nm, 10.0, cfg.dispersion_lo_ps_per_nm,
                            cfg.dispersion_hi_ps_per_nm, budget, &best);
        } else if (stage == "tx") {
            std::vector<Param> params;
            params.push_back(Param{[&]() { return cs.tx.iq_gain_imbalance_db; },
                                   [&](double v) { cs.tx.iq_gain_imbalance_db = v; },
                                   -cfg.iq_gain_bound_db, cfg.iq_gain_bound_db, 0.4});
            params.push_back(Param{[&]() { return cs.tx.iq_phase_error_deg; },
                                   [&](double v) { cs.tx.iq_phase_error_deg = v; },
                                   -cfg.iq_phase_bound_deg, cfg.iq_phase_bound_deg, 2.0});
            params.push_back(Param{[&]() { return cs.tx.iq_skew_symbols; },
                                   [&](double v) { cs.tx.iq_skew_symbols = v; },
                                   -cfg.iq_skew_bound_symbols, cfg.iq_skew_bound_symbols, 0.05});
            params.push_back(Param{[&]() { return cs.tx.mzm_drive_ratio; },
                                   [&](double v) { cs.tx.mzm_drive_ratio = std::max(0.0, v); },
                                   0.0, cfg.mzm_ratio_hi, 0.1});
            if (cfg.eo_fit_taps > 0) {
                if (!cs.tx.eo_response.is_taps() ||
                    static_cast<int>(cs.tx.eo_response.taps.size()) != cfg.eo_fit_taps) {
                    std::vector<cdouble> taps(static_cast<std::size_t>(cfg.eo_fit_taps),
                                              cdouble{0.0, 0.0});
                    taps[static_cast<std::size_t>(cfg.eo_fit_taps / 2)] = cdouble{1.0, 0.0};
                    cs.tx.eo_response = FrequencyResponse::from_taps(
                        FrequencyResponse::Kind::complex_valued, std::move(taps), 1.0);
                }
                const auto center = static_cast<std::size_t>(cfg.eo_fit_taps / 2);
                for (std::size_t t = 0; t < cs.tx.eo_response.taps.size(); ++t) {
                    if (t == center) continue;  // reference tap pinned at 1
                    for (int part = 0; part < 2; ++part) {
                        params.push_back(Param{
                            [&cs, t, part]() {
                                const cdouble v = cs.tx.eo_response.taps[t];
                                return part == 0 ? v.real() : v.imag();
                            },
                            [&cs, t, part](double x) {
                                cdouble& v = cs.tx.eo_response.taps[t];
                                v = (part == 0) ? cdouble{x, v.imag()} : cdouble{v.real(), x};
                            },
                            -0.5, 0.5, 0.05});
                    }
                }
            }
            best = coordinate_descent(params, eval, budget, 3, cfg.tolerance);
        } else if (stage == "rx") {
            if (cfg.rx_fit_taps <= 0) continue;
            std::vector<Param> params;
            for (std::size_t i = 0; i < spec.branches.size(); ++i) {
                if (!cs.rx[i].is_taps() ||
                    static_cast<int>(cs.rx[i].taps.size()) != cfg.rx_fit_taps) {
                    std::vector<cdouble> taps(static_cast<std::size_t>(cfg.rx_fit_taps),
                                              cdouble{0.0, 0.0});
                    taps[static_cast<std::size_t>(cfg.rx_fit_taps / 2)] = cdouble{1.0, 0.0};
                    cs.rx[i] = FrequencyResponse::from_taps(FrequencyResponse::Kind::real,
                                                            std::move(taps), 0.5);
                }
                const auto center = static_cast<std::size_t>(cfg.rx_fit_taps / 2);
                for (std::size_t t = 0; t < cs.rx[i].taps.size(); ++t) {
                    if (t == center) continue;
                    params.push_back(Param{
                        [&cs, i, t]() { return cs.rx[i].taps[t].real(); },
                        [&cs, i, t](double x) { cs.rx[i].taps[t] = cdouble{x, 0.0}; },
                        -0.8, 0.8, 0.05});
                }
            }
            best = coordinate_descent(params, eval, budget, 3, cfg.tolerance);
        } else if (stage == "jones") {
            auto params = jones_params(cs, &alpha, &phi1, &phi2);
            best = coordinate_descent(params, eval, budget, 4, cfg.tolerance);
        } else {
            throw config_error("estimate_static: unknown stage '" + stage + "'");
        }
        if (best <= cfg.tolerance) break;
    }

    EstimationResult res;
    res.state = cs;
    res.objective = best;
    res.converged = best <= std::max(cfg.tolerance, 1e-9);
    res.evaluations = budget.used;
    return res;
}

EstimationResult estimate_jones(const ReceiverFrameInfo& info, const DualPolCapture& measured,
                                const FrontendSpec& spec, const ChannelState& static_state,
                                int max_evaluations, std::size_t margin_symbols) {
    const auto ctx = make_context(info, measured, spec, margin_symbols);
    ChannelState cs = static_state;
    Budget budget{0, max_evaluations};
    double alpha = std::asin(std::clamp(std::abs(cs.jones.m[1]), 0.0, 1.0));
    double phi1 = std::arg(cs.jones.m[0]);
    double phi2 = (std::abs(cs.jones.m[1]) > 1e-12) ? std::arg(cs.jones.m[1]) : 0.0;
    auto params = jones_params(cs, &alpha, &phi1, &phi2);
    const auto eval = [&]() { return objective_on(ctx, cs); };
    const double best = coordinate_descent(params, eval, budget, 4, 1e-16);
    EstimationResult res;
    res.state = cs;
    res.objective = best;
    res.converged = true;
    res.evaluations = budget.used;
    return res;
}

}  // namespace prsim
