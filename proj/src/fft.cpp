#include "prsim/fft.hpp"

#include <cmath>
#include <mutex>
#include <unordered_map>

namespace prsim {

namespace {

struct TwiddleTable {
    std::vector<cdouble> fwd;  // e^{-2pi i k / n}, k < n/2
};

const TwiddleTable& twiddles_for(std::size_t n) {
    static std::mutex mu;
    static std::unordered_map<std::size_t, TwiddleTable> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    TwiddleTable t;
    t.fwd.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double a = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
        t.fwd[k] = {std::cos(a), std::sin(a)};
    }
    return cache.emplace(n, std::move(t)).first->second;
}

void fft_pow2(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n < 2) return;
    // bit reversal
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const auto& tw = twiddles_for(n).fwd;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t step = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                cdouble w = tw[k * step];
                if (inverse) w = std::conj(w);
                const cdouble u = a[i + k];
                const cdouble v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
    if (inverse) {
        const double s = 1.0 / static_cast<double>(n);
        for (auto& x : a) x *= s;
    }
}

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Bluestein's algorithm: arbitrary-length DFT via a power-of-two convolution.
void fft_bluestein(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    const std::size_t m = next_pow2(2 * n - 1);
    std::vector<cdouble> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        // angle = pi * k^2 / n, computed mod 2n to avoid precision loss
        const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % (2 * n);
        double ang = kPi * static_cast<double>(k2) / static_cast<double>(n);
        if (!inverse) ang = -ang;
        chirp[k] = {std::cos(ang), std::sin(ang)};
    }
    std::vector<cdouble> x(m, cdouble{0.0, 0.0});
    std::vector<cdouble> y(m, cdouble{0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    for (std::size_t k = 0; k < n; ++k) y[k] = std::conj(chirp[k]);
    for (std::size_t k = 1; k < n; ++k) y[m - k] = std::conj(chirp[k]);
    fft_pow2(x, false);
    fft_pow2(y, false);
    for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
    fft_pow2(x, true);
    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
    if (inverse) {
        const double s = 1.0 / static_cast<double>(n);
        for (auto& v : a) v *= s;
    }
}

}  // namespace

void fft_inplace(std::vector<cdouble>& data, bool inverse) {
    if (data.empty()) return;
    if (is_pow2(data.size())) {
        fft_pow2(data, inverse);
    } else {
        fft_bluestein(data, inverse);
    }
}

std::vector<cdouble> fft(std::vector<cdouble> data) {
    fft_inplace(data, false);
    return data;
}

std::vector<cdouble> ifft(std::vector<cdouble> data) {
    fft_inplace(data, true);
    return data;
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

double bin_frequency(std::size_t k, std::size_t n, double fs) {
    const auto kk = static_cast<std::ptrdiff_t>(k);
    const auto nn = static_cast<std::ptrdiff_t>(n);
    const std::ptrdiff_t shifted = (kk < (nn + 1) / 2) ? kk : kk - nn;
    return static_cast<double>(shifted) * fs / static_cast<double>(n);
}

}  // namespace prsim
