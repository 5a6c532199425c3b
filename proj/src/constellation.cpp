#include "prsim/constellation.hpp"

#include <algorithm>
#include <cmath>

namespace prsim {

namespace {

std::uint32_t gray(std::uint32_t n) { return n ^ (n >> 1); }

bool is_supported_order(int order) { return order == 4 || order == 16 || order == 64 || order == 256; }

double entropy_of(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log2(v);
    return h;
}

std::vector<double> mb_priors(const std::vector<cdouble>& grid_points, double nu) {
    std::vector<double> p(grid_points.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < grid_points.size(); ++i) {
        p[i] = std::exp(-nu * std::norm(grid_points[i]));
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

}  // namespace

Constellation::Constellation(int order, double nu) : order_(order), nu_(nu) {
    if (!is_supported_order(order)) throw config_error("Constellation: order must be 4/16/64/256");
    side_ = static_cast<int>(std::lround(std::sqrt(static_cast<double>(order))));
    bits_ = static_cast<int>(std::lround(std::log2(static_cast<double>(order))));
    const int bits_axis = bits_ / 2;
    points_.reserve(static_cast<std::size_t>(order));
    labels_.reserve(static_cast<std::size_t>(order));
    for (int i = 0; i < side_; ++i) {
        for (int q = 0; q < side_; ++q) {
            points_.emplace_back(2 * i - side_ + 1, 2 * q - side_ + 1);
            labels_.push_back((gray(static_cast<std::uint32_t>(i)) << bits_axis) |
                              gray(static_cast<std::uint32_t>(q)));
        }
    }
    priors_ = mb_priors(points_, nu_);
    double es = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) es += priors_[i] * std::norm(points_[i]);
    scale_ = 1.0 / std::sqrt(es);
    for (auto& c : points_) c *= scale_;
}

Constellation Constellation::uniform(int order) { return Constellation(order, 0.0); }

Constellation Constellation::maxwell_boltzmann(int order, double target_entropy_bits) {
    if (!is_supported_order(order)) throw config_error("Constellation: order must be 4/16/64/256");
    const double m = std::log2(static_cast<double>(order));
    if (target_entropy_bits > m || target_entropy_bits < 2.0)
        throw config_error("Constellation: target entropy outside [2, log2(order)]");
    if (target_entropy_bits == m) return Constellation(order, 0.0);

    // unnormalized odd-integer grid for the bisection (scale drops out of the
    // entropy only through nu, so solve on the raw grid and rescale after)
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(order))));
    std::vector<cdouble> grid;
    for (int i = 0; i < side; ++i)
        for (int q = 0; q < side; ++q) grid.emplace_back(2 * i - side + 1, 2 * q - side + 1);

    double lo = 0.0, hi = 1.0;
    while (entropy_of(mb_priors(grid, hi)) > target_entropy_bits) hi *= 2.0;
    for (int it = 0; it < 200 && (hi - lo) > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (entropy_of(mb_priors(grid, mid)) > target_entropy_bits)
            lo = mid;
        else
            hi = mid;
    }
    return Constellation(order, 0.5 * (lo + hi));
}

double Constellation::entropy_bits() const { return entropy_of(priors_); }

std::size_t Constellation::nearest(cdouble y) const {
    const auto clampi = [this](double v) {
        int g = static_cast<int>(std::lround((v / scale_ + side_ - 1) / 2.0));
        return std::clamp(g, 0, side_ - 1);
    };
    const int i = clampi(y.real());
    const int q = clampi(y.imag());
    return static_cast<std::size_t>(i * side_ + q);
}

std::vector<cdouble> Constellation::corner_points() const {
    const double hi = scale_ * (side_ - 1);
    return {cdouble{hi, hi}, cdouble{-hi, hi}, cdouble{-hi, -hi}, cdouble{hi, -hi}};
}

}  // namespace prsim
