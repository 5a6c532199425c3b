#include "prsim/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace prsim {

double recovery_snr_db(std::span<const cdouble> estimate, std::span<const cdouble> reference) {
    if (estimate.empty() || estimate.size() != reference.size())
        throw config_error("recovery_snr: empty or mismatched symbol spans");
    // project the reference onto the estimate (g solves min |est - g ref|^2),
    // so additive noise on the estimate is not absorbed into the scale
    cdouble num{0.0, 0.0};
    double den = 0.0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        num += std::conj(reference[i]) * estimate[i];
        den += std::norm(reference[i]);
    }
    const cdouble g = (den > 0.0) ? num / den : cdouble{1.0, 0.0};
    double err = 0.0, psig = 0.0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        err += std::norm(estimate[i] - g * reference[i]);
        psig += std::norm(g * reference[i]);
    }
    if (err <= 0.0 || psig / err > 1e8) return 80.0;
    return 10.0 * std::log10(psig / err);
}

namespace {

// bitwise GMI at a fixed metric variance; distances precomputed
double gmi_at(const std::vector<double>& dist2, std::span<const std::uint32_t> tx_indices,
              const Constellation& c, double noise_var) {
    const std::size_t n = tx_indices.size();
    const std::size_t m_pts = c.points().size();
    const int m_bits = c.bits_per_symbol();
    const auto& priors = c.priors();
    const auto& labels = c.labels();
    const double inv_var = 1.0 / noise_var;

    double info_loss = 0.0;
    std::vector<double> q(m_pts);
    for (std::size_t i = 0; i < n; ++i) {
        // subtract the row minimum before exponentiating
        const double* d = &dist2[i * m_pts];
        double dmin = d[0];
        for (std::size_t k = 1; k < m_pts; ++k) dmin = std::min(dmin, d[k]);
        double den = 0.0;
        for (std::size_t k = 0; k < m_pts; ++k) {
            q[k] = priors[k] * std::exp(-(d[k] - dmin) * inv_var);
            den += q[k];
        }
        const std::uint32_t tx_label = labels[tx_indices[i]];
        for (int b = 0; b < m_bits; ++b) {
            const std::uint32_t bit = (tx_label >> b) & 1u;
            double num = 0.0;
            for (std::size_t k = 0; k < m_pts; ++k)
                if (((labels[k] >> b) & 1u) == bit) num += q[k];
            info_loss += std::log2(den / num);
        }
    }
    return c.entropy_bits() - info_loss / static_cast<double>(n);
}

}  // namespace

GmiResult gmi(std::span<const cdouble> rx, std::span<const std::uint32_t> tx_indices,
              const Constellation& c) {
    if (rx.empty() || rx.size() != tx_indices.size())
        throw config_error("gmi: empty or mismatched inputs");
    const std::size_t n = rx.size();
    const std::size_t m_pts = c.points().size();

    // scale fitted on the reference side so noisy frames are not shrunk
    cdouble num{0.0, 0.0};
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += std::conj(c.points()[tx_indices[i]]) * rx[i];
        den += std::norm(c.points()[tx_indices[i]]);
    }
    cdouble g = (den > 0.0) ? num / den : cdouble{1.0, 0.0};
    if (std::norm(g) < 1e-30) g = cdouble{1.0, 0.0};
    g = cdouble{1.0, 0.0} / g;

    std::vector<double> dist2(n * m_pts);
    double resid = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const cdouble y = rx[i] * g;
        resid += std::norm(y - c.points()[tx_indices[i]]);
        for (std::size_t k = 0; k < m_pts; ++k) dist2[i * m_pts + k] = std::norm(y - c.points()[k]);
    }
    resid = std::max(resid / static_cast<double>(n), 1e-12);

    // maximize over the metric variance around the residual estimate
    double lo = std::log(resid) - 2.0, hi = std::log(resid) + 2.0;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = gmi_at(dist2, tx_indices, c, std::exp(x1));
    double f2 = gmi_at(dist2, tx_indices, c, std::exp(x2));
    for (int it = 0; it < 24; ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = gmi_at(dist2, tx_indices, c, std::exp(x2));
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = gmi_at(dist2, tx_indices, c, std::exp(x1));
        }
    }
    GmiResult res;
    res.fitted_noise_var = std::exp(0.5 * (lo + hi));
    res.gmi_bits = gmi_at(dist2, tx_indices, c, res.fitted_noise_var);
    res.scale = g;
    return res;
}

double ngmi(double gmi_bits, double entropy_bits, int bits_per_symbol) {
    return 1.0 - (entropy_bits - gmi_bits) / static_cast<double>(bits_per_symbol);
}

double net_rate_gbps(double baud_gbaud, int n_pol, double pilot_ratio, double entropy_bits,
                     double fec_overhead, int bits_per_symbol) {
    if (pilot_ratio < 0.0 || pilot_ratio >= 1.0)
        throw config_error("net_rate: pilot ratio must be in [0, 1)");
    if (fec_overhead < 0.0) throw config_error("net_rate: FEC overhead must be >= 0");
    const double bracket =
        entropy_bits - fec_overhead / (1.0 + fec_overhead) * static_cast<double>(bits_per_symbol);
    if (bracket <= 0.0)
        throw stage_error("metrics", "net rate bracket is non-positive; entropy too small for the "
                                     "FEC overhead");
    return static_cast<double>(n_pol) * baud_gbaud * (1.0 - pilot_ratio) * bracket;
}

double net_ose_bps_per_hz(double net_rate_gbps, double occupied_bandwidth_ghz) {
    if (occupied_bandwidth_ghz <= 0.0) throw config_error("net_ose: bandwidth must be positive");
    return net_rate_gbps / occupied_bandwidth_ghz;
}

}  // namespace prsim
