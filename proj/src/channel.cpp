#include "prsim/channel.hpp"

#include <cmath>

#include "prsim/rng.hpp"

namespace prsim {

JonesMatrix JonesMatrix::from_angles(double alpha_rad, double phi1_rad, double phi2_rad) {
    const cdouble a = std::cos(alpha_rad) * cdouble{std::cos(phi1_rad), std::sin(phi1_rad)};
    const cdouble b = std::sin(alpha_rad) * cdouble{std::cos(phi2_rad), std::sin(phi2_rad)};
    JonesMatrix j;
    j.m = {a, b, -std::conj(b), std::conj(a)};
    return j;
}

JonesMatrix JonesMatrix::dagger() const {
    JonesMatrix j;
    j.m = {std::conj(m[0]), std::conj(m[2]), std::conj(m[1]), std::conj(m[3])};
    return j;
}

double JonesMatrix::unitarity_defect() const {
    // J^H J
    const cdouble a00 = std::conj(m[0]) * m[0] + std::conj(m[2]) * m[2];
    const cdouble a01 = std::conj(m[0]) * m[1] + std::conj(m[2]) * m[3];
    const cdouble a10 = std::conj(m[1]) * m[0] + std::conj(m[3]) * m[2];
    const cdouble a11 = std::conj(m[1]) * m[1] + std::conj(m[3]) * m[3];
    const double d = std::norm(a00 - cdouble{1.0, 0.0}) + std::norm(a01) + std::norm(a10) +
                     std::norm(a11 - cdouble{1.0, 0.0});
    return std::sqrt(d);
}

double jones_angle_error_rad(const JonesMatrix& a, const JonesMatrix& b) {
    // per-row inner products; the magnitude discards the free row phases
    const cdouble r0 = a.m[0] * std::conj(b.m[0]) + a.m[1] * std::conj(b.m[1]);
    const cdouble r1 = a.m[2] * std::conj(b.m[2]) + a.m[3] * std::conj(b.m[3]);
    const double overlap = 0.5 * (std::abs(r0) + std::abs(r1));
    return std::acos(std::min(1.0, overlap));
}

ComplexWaveform apply_cd(const ComplexWaveform& field, double total_dispersion_ps_per_nm,
                         double wavelength_nm) {
    if (std::abs(total_dispersion_ps_per_nm) > 1e5)
        throw config_error("apply_cd: |dispersion| above 1e5 ps/nm");
    if (total_dispersion_ps_per_nm == 0.0) return field;
    ComplexWaveform out = field;
    const std::size_t n = out.samples.size();
    const double lam = wavelength_nm * 1e-9;
    const double d_tot = total_dispersion_ps_per_nm * 1e-3;  // s/m
    const double coef = kPi * lam * lam * d_tot / kSpeedOfLight;
    std::vector<cdouble> spec(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double f = bin_frequency(k, n, out.sample_rate);
        const double ph = coef * f * f;
        spec[k] = cdouble{std::cos(ph), std::sin(ph)};
    }
    multiply_spectrum_inplace(out, spec);
    return out;
}

DualPolField apply_jones(const DualPolField& dp, const JonesMatrix& j) {
    if (!j.is_unitary()) throw config_error("apply_jones: matrix is not unitary");
    if (dp.x.samples.size() != dp.y.samples.size())
        throw config_error("apply_jones: polarizations differ in length");
    DualPolField out = dp;
    for (std::size_t i = 0; i < dp.x.samples.size(); ++i) {
        const cdouble ex = dp.x.samples[i];
        const cdouble ey = dp.y.samples[i];
        out.x.samples[i] = j.m[0] * ex + j.m[1] * ey;
        out.y.samples[i] = j.m[2] * ex + j.m[3] * ey;
    }
    return out;
}

DualPolField add_ase(const DualPolField& dp, const NoiseSpec& noise) {
    if (!noise.osnr_db.has_value()) return dp;
    const double osnr_lin = db_to_lin(*noise.osnr_db);
    const double p_total = mean_power(dp.x) + mean_power(dp.y);
    // per-pol ASE PSD such that dual-pol noise power in the reference
    // bandwidth gives the requested OSNR; white over the simulation band
    const double psd = p_total / (osnr_lin * 2.0 * kOsnrRefBandwidthHz);
    const double sigma2 = psd * dp.x.sample_rate;  // per-pol per-sample variance
    const std::size_t n = dp.x.samples.size();

    Rng rng(derive_seed(noise.seed, "ase"));
    std::vector<cdouble> nx(n), ny(n);
    double drawn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        nx[i] = rng.gaussian_complex();
        ny[i] = rng.gaussian_complex();
        drawn += std::norm(nx[i]) + std::norm(ny[i]);
    }
    // normalize the realization to the exact target power
    const double target = sigma2 * 2.0 * static_cast<double>(n);
    const double s = std::sqrt(target / drawn);
    DualPolField out = dp;
    for (std::size_t i = 0; i < n; ++i) {
        out.x.samples[i] += nx[i] * s;
        out.y.samples[i] += ny[i] * s;
    }
    return out;
}

double measured_osnr_db(const DualPolField& clean, const DualPolField& noisy) {
    const std::size_t n = clean.x.samples.size();
    double p_sig = 0.0, p_noise = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        p_sig += std::norm(clean.x.samples[i]) + std::norm(clean.y.samples[i]);
        p_noise += std::norm(noisy.x.samples[i] - clean.x.samples[i]) +
                   std::norm(noisy.y.samples[i] - clean.y.samples[i]);
    }
    const double fs = clean.x.sample_rate;
    const double noise_in_ref = p_noise * (kOsnrRefBandwidthHz / fs);
    return lin_to_db(p_sig / noise_in_ref);
}

}  // namespace prsim
