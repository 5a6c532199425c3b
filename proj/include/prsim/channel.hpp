#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "prsim/signal.hpp"

namespace prsim {

struct FiberSpec {
    double length_km = 0.0;
    double dispersion_ps_per_nm_km = 17.0;
    double wavelength_nm = 1550.0;

    double total_dispersion_ps_per_nm() const { return length_km * dispersion_ps_per_nm_km; }
};

/// 2x2 unitary polarization transform, parameterized as
/// [[ a, b ], [ -b*, a* ]] with a = cos(alpha) e^{j phi1}, b = sin(alpha) e^{j phi2}.
struct JonesMatrix {
    std::array<cdouble, 4> m{cdouble{1, 0}, cdouble{0, 0}, cdouble{0, 0}, cdouble{1, 0}};

    static JonesMatrix identity() { return {}; }
    static JonesMatrix from_angles(double alpha_rad, double phi1_rad, double phi2_rad);
    static JonesMatrix rotation(double alpha_rad) { return from_angles(alpha_rad, 0.0, 0.0); }

    JonesMatrix dagger() const;
    double unitarity_defect() const;  // ||J^H J - I||_F
    bool is_unitary(double tol = 1e-10) const { return unitarity_defect() <= tol; }
};

/// Rotation-angle distance between two Jones matrices, invariant to the
/// per-row phases that intensity measurements cannot observe.
double jones_angle_error_rad(const JonesMatrix& a, const JonesMatrix& b);

struct NoiseSpec {
    std::optional<double> osnr_db;  // nullopt = noiseless
    std::uint64_t seed = 0;
};

/// All-pass quadratic spectral phase H(f) = exp(+j pi lambda^2 D f^2 / c).
ComplexWaveform apply_cd(const ComplexWaveform& field, double total_dispersion_ps_per_nm,
                         double wavelength_nm = 1550.0);

/// Per-sample Jones multiplication. Rejects non-unitary matrices.
DualPolField apply_jones(const DualPolField& dp, const JonesMatrix& j);

/// Adds circular complex Gaussian noise so that the OSNR in the 12.5 GHz
/// reference bandwidth (total signal power over dual-pol ASE power) equals
/// osnr_db. The drawn noise is normalized to the exact target power, so the
/// realized OSNR is seed-independent.
DualPolField add_ase(const DualPolField& dp, const NoiseSpec& noise);

/// OSNR implied by a clean/noisy pair, using the same convention as add_ase.
double measured_osnr_db(const DualPolField& clean, const DualPolField& noisy);

}  // namespace prsim
