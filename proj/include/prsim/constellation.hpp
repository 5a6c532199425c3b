#pragma once

#include <cstdint>
#include <vector>

#include "prsim/common.hpp"

namespace prsim {

/// Square QAM grid with per-axis Gray labels and per-point priors. Points are
/// scaled so the average energy under the priors is 1.
class Constellation {
  public:
    /// Uniform priors.
    static Constellation uniform(int order);

    /// Maxwell-Boltzmann priors P(c) ~ exp(-nu |c|^2) with nu solved so the
    /// entropy matches target_entropy_bits within 1e-9 bit.
    static Constellation maxwell_boltzmann(int order, double target_entropy_bits);

    int order() const { return order_; }
    int bits_per_symbol() const { return bits_; }
    const std::vector<cdouble>& points() const { return points_; }
    const std::vector<std::uint32_t>& labels() const { return labels_; }
    const std::vector<double>& priors() const { return priors_; }
    double entropy_bits() const;
    double mb_nu() const { return nu_; }

    /// Index of the closest point (O(1) grid decode).
    std::size_t nearest(cdouble y) const;

    /// The four maximum-amplitude (corner) points, used as pilot alphabet.
    std::vector<cdouble> corner_points() const;

  private:
    Constellation(int order, double nu);

    int order_ = 0;
    int bits_ = 0;
    int side_ = 0;
    double nu_ = 0.0;
    double scale_ = 1.0;  // grid-units -> unit-energy units
    std::vector<cdouble> points_;
    std::vector<std::uint32_t> labels_;
    std::vector<double> priors_;
};

}  // namespace prsim
