#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace entwit {

/// Seeded random stream with portable, bit-reproducible output.
/// Gaussian variates use Box-Muller on raw mt19937_64 words so that a given
/// seed produces the same sequence on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// Standard normal.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::complex<double> complex_gaussian() {
        double re = gaussian();
        double im = gaussian();
        return {re, im};
    }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
        auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        // rejection sampling to avoid modulo bias
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return lo + static_cast<int>(x % span);
    }

    /// Flat Dirichlet: uniform on the (m-1)-simplex.
    std::vector<double> dirichlet(int m) {
        if (m < 1) throw std::invalid_argument("dirichlet: m must be >= 1");
        std::vector<double> w(m);
        double sum = 0.0;
        for (int i = 0; i < m; ++i) {
            w[i] = -std::log(1.0 - uniform());
            sum += w[i];
        }
        for (double& x : w) x /= sum;
        return w;
    }

    template <class It>
    void shuffle(It first, It last) {
        auto n = last - first;
        for (decltype(n) i = n - 1; i > 0; --i) {
            auto j = uniform_int(0, static_cast<int>(i));
            std::swap(first[i], first[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Seed for the i-th sample of a batch job; parallel and serial generation
/// agree because each sample owns an independent stream.
inline std::uint64_t derived_seed(std::uint64_t base, std::uint64_t index) {
    return base + index;
}

}  // namespace entwit
