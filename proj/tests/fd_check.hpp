#pragma once

// Finite-difference gradient harness. The loss is a fixed random linear
// functional of the network output, L = sum(c_r * out.re + c_i * out.im), so
// dL/dout is exact and every parameter/input gradient can be checked against
// central differences component by component.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "entwit/layers.hpp"
#include "entwit/rng.hpp"
#include "entwit/tensor.hpp"

namespace testsup {

using entwit::CTensor;
using entwit::LayerGrads;
using entwit::Mode;
using entwit::Network;
using entwit::Rng;
using entwit::Tape;

struct FdReport {
    double max_rel_err = 0.0;
    int checked = 0;
};

inline double linear_loss(const CTensor& out, const CTensor& coeff) {
    double L = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        L += coeff.re[i] * out.re[i] + coeff.im[i] * out.im[i];
    return L;
}

inline CTensor random_tensor(const std::vector<std::int64_t>& shape, Rng& rng, double scale = 1.0) {
    CTensor t(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        t.re[i] = scale * rng.gaussian();
        t.im[i] = scale * rng.gaussian();
    }
    return t;
}

/// Distance of the recorded forward pass from the nearest non-smooth point:
/// CReLU sign flips, pool argmax ties, modulus at zero. Finite differences are
/// only trusted when this margin comfortably exceeds the step size.
inline double kink_margin(const Network& net, const Tape& tape) {
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const CTensor& in = tape.layers[i].input;
        switch (net.layers[i].kind) {
            case entwit::LayerKind::crelu:
                for (std::int64_t k = 0; k < in.numel(); ++k) {
                    margin = std::min(margin, std::abs(in.re[k]));
                    margin = std::min(margin, std::abs(in.im[k]));
                }
                break;
            case entwit::LayerKind::modulus:
                for (std::int64_t k = 0; k < in.numel(); ++k)
                    margin = std::min(margin, std::hypot(in.re[k], in.im[k]));
                break;
            case entwit::LayerKind::max_pool: {
                std::int64_t B = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
                int kk = net.layers[i].window;
                for (std::int64_t t = 0; t < B * C; ++t)
                    for (std::int64_t oy = 0; oy < H / kk; ++oy)
                        for (std::int64_t ox = 0; ox < W / kk; ++ox) {
                            double best = -1.0, second = -1.0;
                            for (int ky = 0; ky < kk; ++ky)
                                for (int kx = 0; kx < kk; ++kx) {
                                    std::int64_t off =
                                        t * H * W + (oy * kk + ky) * W + ox * kk + kx;
                                    double m = std::hypot(in.re[off], in.im[off]);
                                    if (m > best) {
                                        second = best;
                                        best = m;
                                    } else if (m > second) {
                                        second = m;
                                    }
                                }
                            if (second >= 0.0) margin = std::min(margin, best - second);
                        }
                break;
            }
            default:
                break;
        }
    }
    return margin;
}

/// Checks every parameter component (or a strided subset when the layer is
/// large) and a subset of input components. Returns the worst relative error.
inline FdReport fd_check_network(Network& net, const CTensor& input, Rng& rng, Mode mode,
                                 double h = 1e-6, std::int64_t max_per_array = 64) {
    Tape tape;
    CTensor out = net.forward(input, mode, &tape);
    CTensor coeff = random_tensor(out.shape, rng);

    std::vector<LayerGrads> grads = entwit::make_grads(net);
    CTensor gin = net.backward(tape, coeff, &grads);

    FdReport rep;
    auto relcheck = [&](double analytic, double fd) {
        double err = std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
        rep.max_rel_err = std::max(rep.max_rel_err, err);
        ++rep.checked;
    };

    auto eval = [&]() { return linear_loss(net.forward(input, mode), coeff); };

    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        std::vector<std::vector<double>*> params, gslots;
        entwit::for_each_param_array(net.layers[li].kind, net.layers[li],
                                     [&](std::vector<double>& p) { params.push_back(&p); });
        entwit::for_each_param_array(net.layers[li].kind, grads[li],
                                     [&](std::vector<double>& p) { gslots.push_back(&p); });
        for (std::size_t s = 0; s < params.size(); ++s) {
            std::vector<double>& p = *params[s];
            std::int64_t n = static_cast<std::int64_t>(p.size());
            std::int64_t stride = std::max<std::int64_t>(1, n / max_per_array);
            for (std::int64_t k = 0; k < n; k += stride) {
                double keep = p[k];
                p[k] = keep + h;
                double lp = eval();
                p[k] = keep - h;
                double lm = eval();
                p[k] = keep;
                relcheck((*gslots[s])[k], (lp - lm) / (2.0 * h));
            }
        }
    }

    // input gradient
    CTensor in_copy = input;
    std::int64_t n = in_copy.numel();
    std::int64_t stride = std::max<std::int64_t>(1, n / max_per_array);
    for (std::int64_t k = 0; k < n; k += stride) {
        for (int part = 0; part < 2; ++part) {
            std::vector<double>& plane = part == 0 ? in_copy.re : in_copy.im;
            double keep = plane[k];
            plane[k] = keep + h;
            double lp = linear_loss(net.forward(in_copy, mode), coeff);
            plane[k] = keep - h;
            double lm = linear_loss(net.forward(in_copy, mode), coeff);
            plane[k] = keep;
            relcheck(part == 0 ? gin.re[k] : gin.im[k], (lp - lm) / (2.0 * h));
        }
    }
    return rep;
}

}  // namespace testsup
