#pragma once

#include <complex>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace entwit {

/// Shape-tagged complex array, split into real/imag planes so the hot loops
/// vectorize. Network activations use (batch, channels, height, width) or
/// (batch, features); parameters reuse the same storage.
struct CTensor {
    std::vector<std::int64_t> shape;
    std::vector<double> re, im;

    CTensor() = default;
    explicit CTensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
        re.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
        im.assign(re.size(), 0.0);
    }

    static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (auto d : s) {
            if (d < 0) throw std::invalid_argument("CTensor: negative dimension");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(re.size()); }
    bool same_shape(const CTensor& o) const { return shape == o.shape; }

    std::complex<double> at(std::int64_t i) const { return {re[i], im[i]}; }
    void set(std::int64_t i, std::complex<double> v) {
        re[i] = v.real();
        im[i] = v.imag();
    }

    void fill(double r, double i) {
        std::fill(re.begin(), re.end(), r);
        std::fill(im.begin(), im.end(), i);
    }

    CTensor& operator+=(const CTensor& o) {
        if (!same_shape(o)) throw std::invalid_argument("CTensor +=: shape mismatch");
        for (std::size_t i = 0; i < re.size(); ++i) {
            re[i] += o.re[i];
            im[i] += o.im[i];
        }
        return *this;
    }

    CTensor reshaped(std::vector<std::int64_t> s) const {
        if (numel_of(s) != numel()) throw std::invalid_argument("CTensor: reshape numel mismatch");
        CTensor out = *this;
        out.shape = std::move(s);
        return out;
    }
};

inline double max_abs_diff(const CTensor& a, const CTensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(a.re[i] - b.re[i]));
        m = std::max(m, std::abs(a.im[i] - b.im[i]));
    }
    return m;
}

inline bool all_finite(const CTensor& t) {
    for (std::int64_t i = 0; i < t.numel(); ++i)
        if (!std::isfinite(t.re[i]) || !std::isfinite(t.im[i])) return false;
    return true;
}

}  // namespace entwit
