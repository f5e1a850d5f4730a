#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "entwit/parallel.hpp"
#include "entwit/rng.hpp"
#include "entwit/tensor.hpp"

namespace entwit {

enum class LayerKind : std::uint32_t {
    conv2d = 0,
    conv2d_transpose = 1,
    fully_connected = 2,
    crelu = 3,
    batch_norm = 4,
    max_pool = 5,
    upsample = 6,
    reshape = 7,
    modulus = 8,
};

enum class Mode { train, infer };

/// One network layer. Fields are populated per kind:
///   conv2d            w (oc,ic,kh,kw), bias (oc)
///   conv2d_transpose  w (ic,oc,kh,kw), bias (oc)
///   fully_connected   w (out,in), bias (out); flattens its input
///   batch_norm        gamma_* / beta trainable, run_* running statistics
///   max_pool/upsample window
///   reshape           out_tail (shape after the batch dimension)
struct Layer {
    LayerKind kind;
    CTensor w;
    CTensor bias;

    std::vector<double> gamma_rr, gamma_ri, gamma_ii;
    CTensor beta;
    std::vector<double> run_mean_r, run_mean_i, run_vrr, run_vri, run_vii;
    double bn_eps = 1e-5;
    double bn_momentum = 0.9;

    int window = 2;
    std::vector<std::int64_t> out_tail;
};

/// Gradient slots mirroring Layer's trainable parameters (same field names so
/// the parameter visitor below applies to both).
struct LayerGrads {
    CTensor w;
    CTensor bias;
    std::vector<double> gamma_rr, gamma_ri, gamma_ii;
    CTensor beta;
};

/// Visits every trainable real array of a layer in a fixed declaration order;
/// the same order defines gradient slots, optimizer state, and checkpoints.
template <class L, class F>
void for_each_param_array(LayerKind kind, L& l, F&& f) {
    switch (kind) {
        case LayerKind::conv2d:
        case LayerKind::conv2d_transpose:
        case LayerKind::fully_connected:
            f(l.w.re);
            f(l.w.im);
            f(l.bias.re);
            f(l.bias.im);
            break;
        case LayerKind::batch_norm:
            f(l.gamma_rr);
            f(l.gamma_ri);
            f(l.gamma_ii);
            f(l.beta.re);
            f(l.beta.im);
            break;
        default:
            break;
    }
}

/// Non-trainable persistent state (batch-norm running statistics).
template <class F>
void for_each_buffer_array(Layer& l, F&& f) {
    if (l.kind == LayerKind::batch_norm) {
        f(l.run_mean_r);
        f(l.run_mean_i);
        f(l.run_vrr);
        f(l.run_vri);
        f(l.run_vii);
    }
}

// ---- factories ----

namespace detail {
inline void glorot_init(CTensor& w, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
    double stddev = std::sqrt(1.0 / (2.0 * static_cast<double>(fan_in + fan_out)));
    for (std::int64_t i = 0; i < w.numel(); ++i) {
        w.re[i] = stddev * rng.gaussian();
        w.im[i] = stddev * rng.gaussian();
    }
}
}  // namespace detail

inline Layer make_conv2d(int in_ch, int out_ch, int kh, int kw, Rng& rng) {
    Layer l;
    l.kind = LayerKind::conv2d;
    l.w = CTensor({out_ch, in_ch, kh, kw});
    l.bias = CTensor({out_ch});
    detail::glorot_init(l.w, std::int64_t(in_ch) * kh * kw, std::int64_t(out_ch) * kh * kw, rng);
    return l;
}

inline Layer make_conv2d_transpose(int in_ch, int out_ch, int kh, int kw, Rng& rng) {
    Layer l;
    l.kind = LayerKind::conv2d_transpose;
    l.w = CTensor({in_ch, out_ch, kh, kw});
    l.bias = CTensor({out_ch});
    detail::glorot_init(l.w, std::int64_t(in_ch) * kh * kw, std::int64_t(out_ch) * kh * kw, rng);
    return l;
}

inline Layer make_fully_connected(int in_features, int out_features, Rng& rng) {
    Layer l;
    l.kind = LayerKind::fully_connected;
    l.w = CTensor({out_features, in_features});
    l.bias = CTensor({out_features});
    detail::glorot_init(l.w, in_features, out_features, rng);
    return l;
}

inline Layer make_crelu() {
    Layer l;
    l.kind = LayerKind::crelu;
    return l;
}

/// gamma starts at I/sqrt(2) so a freshly whitened channel keeps unit total
/// variance; running covariance starts at I/2 to match.
inline Layer make_batch_norm(int channels, double eps = 1e-5, double momentum = 0.9) {
    Layer l;
    l.kind = LayerKind::batch_norm;
    l.bn_eps = eps;
    l.bn_momentum = momentum;
    double g = 1.0 / std::sqrt(2.0);
    l.gamma_rr.assign(channels, g);
    l.gamma_ri.assign(channels, 0.0);
    l.gamma_ii.assign(channels, g);
    l.beta = CTensor({channels});
    l.run_mean_r.assign(channels, 0.0);
    l.run_mean_i.assign(channels, 0.0);
    l.run_vrr.assign(channels, 0.5);
    l.run_vri.assign(channels, 0.0);
    l.run_vii.assign(channels, 0.5);
    return l;
}

inline Layer make_max_pool(int window) {
    Layer l;
    l.kind = LayerKind::max_pool;
    l.window = window;
    return l;
}

inline Layer make_upsample(int window) {
    Layer l;
    l.kind = LayerKind::upsample;
    l.window = window;
    return l;
}

inline Layer make_reshape(std::vector<std::int64_t> out_tail) {
    Layer l;
    l.kind = LayerKind::reshape;
    l.out_tail = std::move(out_tail);
    return l;
}

inline Layer make_modulus() {
    Layer l;
    l.kind = LayerKind::modulus;
    return l;
}

// ---- forward/backward ----

/// Saved forward state for one layer, enough to replay backward exactly once.
struct LayerCache {
    CTensor input;
    // batch norm, per channel
    std::vector<double> mu_r, mu_i;
    std::vector<double> w00, w01, w11;  // whitening matrix V^{-1/2}
    std::vector<double> v00, v01, v11;  // regularized covariance (train mode)
    CTensor whitened;
    Mode mode = Mode::train;
    // max pool: chosen flat input offset per output element
    std::vector<std::int64_t> pool_sel;
};

struct Tape {
    std::vector<LayerCache> layers;
};

namespace detail {

template <class F>
void maybe_parallel_for(std::int64_t n, std::int64_t flops_per_task, F&& f) {
    if (n * flops_per_task < 65536 || num_threads() <= 1) {
        for (std::int64_t i = 0; i < n; ++i) f(i);
    } else {
        parallel_for(n, f);
    }
}

struct ConvDims {
    std::int64_t b, ic, h, w, oc, kh, kw, oh, ow;
};

inline ConvDims conv_dims(const Layer& l, const CTensor& in) {
    if (in.shape.size() != 4) throw std::invalid_argument("conv2d: input must be 4-d");
    ConvDims d;
    d.b = in.shape[0];
    d.h = in.shape[2];
    d.w = in.shape[3];
    if (l.kind == LayerKind::conv2d) {
        d.oc = l.w.shape[0];
        d.ic = l.w.shape[1];
    } else {
        d.ic = l.w.shape[0];
        d.oc = l.w.shape[1];
    }
    d.kh = l.w.shape[2];
    d.kw = l.w.shape[3];
    if (in.shape[1] != d.ic) throw std::invalid_argument("conv2d: channel mismatch");
    if (l.kind == LayerKind::conv2d) {
        d.oh = d.h - d.kh + 1;
        d.ow = d.w - d.kw + 1;
        if (d.oh < 1 || d.ow < 1) throw std::invalid_argument("conv2d: kernel larger than input");
    } else {
        d.oh = d.h + d.kh - 1;
        d.ow = d.w + d.kw - 1;
    }
    return d;
}

inline CTensor conv2d_forward(const Layer& l, const CTensor& in) {
    ConvDims d = conv_dims(l, in);
    CTensor out({d.b, d.oc, d.oh, d.ow});
    std::int64_t flops = d.ic * d.kh * d.kw * d.oh * d.ow * 8;
    maybe_parallel_for(d.b * d.oc, flops, [&](std::int64_t t) {
        std::int64_t b = t / d.oc, oc = t % d.oc;
        double* orow = out.re.data() + t * d.oh * d.ow;
        double* oirow = out.im.data() + t * d.oh * d.ow;
        double br = l.bias.re[oc], bi = l.bias.im[oc];
        for (std::int64_t i = 0; i < d.oh * d.ow; ++i) {
            orow[i] = br;
            oirow[i] = bi;
        }
        for (std::int64_t ic = 0; ic < d.ic; ++ic) {
            const double* inr = in.re.data() + (b * d.ic + ic) * d.h * d.w;
            const double* ini = in.im.data() + (b * d.ic + ic) * d.h * d.w;
            const double* wr = l.w.re.data() + (oc * d.ic + ic) * d.kh * d.kw;
            const double* wi = l.w.im.data() + (oc * d.ic + ic) * d.kh * d.kw;
            for (std::int64_t ky = 0; ky < d.kh; ++ky)
                for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                    double cr = wr[ky * d.kw + kx], ci = wi[ky * d.kw + kx];
                    for (std::int64_t y = 0; y < d.oh; ++y) {
                        const double* zr = inr + (y + ky) * d.w + kx;
                        const double* zi = ini + (y + ky) * d.w + kx;
                        double* pr = orow + y * d.ow;
                        double* pi = oirow + y * d.ow;
                        for (std::int64_t x = 0; x < d.ow; ++x) {
                            pr[x] += cr * zr[x] - ci * zi[x];
                            pi[x] += ci * zr[x] + cr * zi[x];
                        }
                    }
                }
        }
    });
    return out;
}

inline CTensor conv2d_backward(const Layer& l, const CTensor& in, const CTensor& gout,
                               LayerGrads* g) {
    ConvDims d = conv_dims(l, in);
    CTensor gin({d.b, d.ic, d.h, d.w});
    std::int64_t flops = d.oc * d.kh * d.kw * d.oh * d.ow * 8;
    maybe_parallel_for(d.b * d.ic, flops, [&](std::int64_t t) {
        std::int64_t b = t / d.ic, ic = t % d.ic;
        double* grow = gin.re.data() + t * d.h * d.w;
        double* girow = gin.im.data() + t * d.h * d.w;
        for (std::int64_t oc = 0; oc < d.oc; ++oc) {
            const double* gr = gout.re.data() + (b * d.oc + oc) * d.oh * d.ow;
            const double* gi = gout.im.data() + (b * d.oc + oc) * d.oh * d.ow;
            const double* wr = l.w.re.data() + (oc * d.ic + ic) * d.kh * d.kw;
            const double* wi = l.w.im.data() + (oc * d.ic + ic) * d.kh * d.kw;
            for (std::int64_t ky = 0; ky < d.kh; ++ky)
                for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                    // grad through w*z picks up conj(w)
                    double cr = wr[ky * d.kw + kx], ci = -wi[ky * d.kw + kx];
                    for (std::int64_t oy = 0; oy < d.oh; ++oy) {
                        const double* pr = gr + oy * d.ow;
                        const double* pi = gi + oy * d.ow;
                        double* qr = grow + (oy + ky) * d.w + kx;
                        double* qi = girow + (oy + ky) * d.w + kx;
                        for (std::int64_t ox = 0; ox < d.ow; ++ox) {
                            qr[ox] += cr * pr[ox] - ci * pi[ox];
                            qi[ox] += ci * pr[ox] + cr * pi[ox];
                        }
                    }
                }
        }
    });
    if (g) {
        std::int64_t wf = d.b * d.oh * d.ow * 8;
        maybe_parallel_for(d.oc * d.ic, wf * d.kh * d.kw, [&](std::int64_t t) {
            std::int64_t oc = t / d.ic, ic = t % d.ic;
            for (std::int64_t ky = 0; ky < d.kh; ++ky)
                for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                    double ar = 0.0, ai = 0.0;
                    for (std::int64_t b = 0; b < d.b; ++b) {
                        const double* gr = gout.re.data() + (b * d.oc + oc) * d.oh * d.ow;
                        const double* gi = gout.im.data() + (b * d.oc + oc) * d.oh * d.ow;
                        const double* zr = in.re.data() + (b * d.ic + ic) * d.h * d.w;
                        const double* zi = in.im.data() + (b * d.ic + ic) * d.h * d.w;
                        for (std::int64_t y = 0; y < d.oh; ++y) {
                            const double* pr = gr + y * d.ow;
                            const double* pi = gi + y * d.ow;
                            const double* qr = zr + (y + ky) * d.w + kx;
                            const double* qi = zi + (y + ky) * d.w + kx;
                            for (std::int64_t x = 0; x < d.ow; ++x) {
                                // g * conj(z)
                                ar += pr[x] * qr[x] + pi[x] * qi[x];
                                ai += pi[x] * qr[x] - pr[x] * qi[x];
                            }
                        }
                    }
                    g->w.re[(oc * d.ic + ic) * d.kh * d.kw + ky * d.kw + kx] += ar;
                    g->w.im[(oc * d.ic + ic) * d.kh * d.kw + ky * d.kw + kx] += ai;
                }
        });
        for (std::int64_t oc = 0; oc < d.oc; ++oc) {
            double ar = 0.0, ai = 0.0;
            for (std::int64_t b = 0; b < d.b; ++b) {
                const double* gr = gout.re.data() + (b * d.oc + oc) * d.oh * d.ow;
                const double* gi = gout.im.data() + (b * d.oc + oc) * d.oh * d.ow;
                for (std::int64_t i = 0; i < d.oh * d.ow; ++i) {
                    ar += gr[i];
                    ai += gi[i];
                }
            }
            g->bias.re[oc] += ar;
            g->bias.im[oc] += ai;
        }
    }
    return gin;
}

inline CTensor conv2d_transpose_forward(const Layer& l, const CTensor& in) {
    ConvDims d = conv_dims(l, in);
    CTensor out({d.b, d.oc, d.oh, d.ow});
    std::int64_t flops = d.ic * d.kh * d.kw * d.h * d.w * 8;
    maybe_parallel_for(d.b * d.oc, flops, [&](std::int64_t t) {
        std::int64_t b = t / d.oc, oc = t % d.oc;
        double* orow = out.re.data() + t * d.oh * d.ow;
        double* oirow = out.im.data() + t * d.oh * d.ow;
        double br = l.bias.re[oc], bi = l.bias.im[oc];
        for (std::int64_t i = 0; i < d.oh * d.ow; ++i) {
            orow[i] = br;
            oirow[i] = bi;
        }
        for (std::int64_t ic = 0; ic < d.ic; ++ic) {
            const double* inr = in.re.data() + (b * d.ic + ic) * d.h * d.w;
            const double* ini = in.im.data() + (b * d.ic + ic) * d.h * d.w;
            const double* wr = l.w.re.data() + (ic * d.oc + oc) * d.kh * d.kw;
            const double* wi = l.w.im.data() + (ic * d.oc + oc) * d.kh * d.kw;
            for (std::int64_t ky = 0; ky < d.kh; ++ky)
                for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                    double cr = wr[ky * d.kw + kx], ci = wi[ky * d.kw + kx];
                    for (std::int64_t y = 0; y < d.h; ++y) {
                        const double* zr = inr + y * d.w;
                        const double* zi = ini + y * d.w;
                        double* pr = orow + (y + ky) * d.ow + kx;
                        double* pi = oirow + (y + ky) * d.ow + kx;
                        for (std::int64_t x = 0; x < d.w; ++x) {
                            pr[x] += cr * zr[x] - ci * zi[x];
                            pi[x] += ci * zr[x] + cr * zi[x];
                        }
                    }
                }
        }
    });
    return out;
}

inline CTensor conv2d_transpose_backward(const Layer& l, const CTensor& in, const CTensor& gout,
                                         LayerGrads* g) {
    ConvDims d = conv_dims(l, in);
    CTensor gin({d.b, d.ic, d.h, d.w});
    std::int64_t flops = d.oc * d.kh * d.kw * d.h * d.w * 8;
    maybe_parallel_for(d.b * d.ic, flops, [&](std::int64_t t) {
        std::int64_t b = t / d.ic, ic = t % d.ic;
        double* grow = gin.re.data() + t * d.h * d.w;
        double* girow = gin.im.data() + t * d.h * d.w;
        for (std::int64_t oc = 0; oc < d.oc; ++oc) {
            const double* gr = gout.re.data() + (b * d.oc + oc) * d.oh * d.ow;
            const double* gi = gout.im.data() + (b * d.oc + oc) * d.oh * d.ow;
            const double* wr = l.w.re.data() + (ic * d.oc + oc) * d.kh * d.kw;
            const double* wi = l.w.im.data() + (ic * d.oc + oc) * d.kh * d.kw;
            for (std::int64_t ky = 0; ky < d.kh; ++ky)
                for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                    double cr = wr[ky * d.kw + kx], ci = -wi[ky * d.kw + kx];
                    for (std::int64_t y = 0; y < d.h; ++y) {
                        const double* pr = gr + (y + ky) * d.ow + kx;
                        const double* pi = gi + (y + ky) * d.ow + kx;
                        double* qr = grow + y * d.w;
                        double* qi = girow + y * d.w;
                        for (std::int64_t x = 0; x < d.w; ++x) {
                            qr[x] += cr * pr[x] - ci * pi[x];
                            qi[x] += ci * pr[x] + cr * pi[x];
                        }
                    }
                }
        }
    });
    if (g) {
        std::int64_t wf = d.b * d.h * d.w * 8;
        maybe_parallel_for(d.ic * d.oc, wf * d.kh * d.kw, [&](std::int64_t t) {
            std::int64_t ic = t / d.oc, oc = t % d.oc;
            for (std::int64_t ky = 0; ky < d.kh; ++ky)
                for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                    double ar = 0.0, ai = 0.0;
                    for (std::int64_t b = 0; b < d.b; ++b) {
                        const double* gr = gout.re.data() + (b * d.oc + oc) * d.oh * d.ow;
                        const double* gi = gout.im.data() + (b * d.oc + oc) * d.oh * d.ow;
                        const double* zr = in.re.data() + (b * d.ic + ic) * d.h * d.w;
                        const double* zi = in.im.data() + (b * d.ic + ic) * d.h * d.w;
                        for (std::int64_t y = 0; y < d.h; ++y) {
                            const double* pr = gr + (y + ky) * d.ow + kx;
                            const double* pi = gi + (y + ky) * d.ow + kx;
                            const double* qr = zr + y * d.w;
                            const double* qi = zi + y * d.w;
                            for (std::int64_t x = 0; x < d.w; ++x) {
                                ar += pr[x] * qr[x] + pi[x] * qi[x];
                                ai += pi[x] * qr[x] - pr[x] * qi[x];
                            }
                        }
                    }
                    g->w.re[(ic * d.oc + oc) * d.kh * d.kw + ky * d.kw + kx] += ar;
                    g->w.im[(ic * d.oc + oc) * d.kh * d.kw + ky * d.kw + kx] += ai;
                }
        });
        for (std::int64_t oc = 0; oc < d.oc; ++oc) {
            double ar = 0.0, ai = 0.0;
            for (std::int64_t b = 0; b < d.b; ++b) {
                const double* gr = gout.re.data() + (b * d.oc + oc) * d.oh * d.ow;
                const double* gi = gout.im.data() + (b * d.oc + oc) * d.oh * d.ow;
                for (std::int64_t i = 0; i < d.oh * d.ow; ++i) {
                    ar += gr[i];
                    ai += gi[i];
                }
            }
            g->bias.re[oc] += ar;
            g->bias.im[oc] += ai;
        }
    }
    return gin;
}

inline CTensor fc_forward(const Layer& l, const CTensor& in) {
    std::int64_t b = in.shape[0];
    std::int64_t nin = in.numel() / b;
    std::int64_t nout = l.w.shape[0];
    if (l.w.shape[1] != nin) throw std::invalid_argument("fully_connected: feature mismatch");
    CTensor out({b, nout});
    maybe_parallel_for(b, nout * nin * 8, [&](std::int64_t bi) {
        const double* zr = in.re.data() + bi * nin;
        const double* zi = in.im.data() + bi * nin;
        double* pr = out.re.data() + bi * nout;
        double* pi = out.im.data() + bi * nout;
        for (std::int64_t o = 0; o < nout; ++o) {
            const double* wr = l.w.re.data() + o * nin;
            const double* wi = l.w.im.data() + o * nin;
            double ar = l.bias.re[o], ai = l.bias.im[o];
            for (std::int64_t i = 0; i < nin; ++i) {
                ar += wr[i] * zr[i] - wi[i] * zi[i];
                ai += wi[i] * zr[i] + wr[i] * zi[i];
            }
            pr[o] = ar;
            pi[o] = ai;
        }
    });
    return out;
}

inline CTensor fc_backward(const Layer& l, const CTensor& in, const CTensor& gout,
                           LayerGrads* g) {
    std::int64_t b = in.shape[0];
    std::int64_t nin = in.numel() / b;
    std::int64_t nout = l.w.shape[0];
    CTensor gin(in.shape);
    maybe_parallel_for(b, nout * nin * 8, [&](std::int64_t bi) {
        double* qr = gin.re.data() + bi * nin;
        double* qi = gin.im.data() + bi * nin;
        const double* gr = gout.re.data() + bi * nout;
        const double* gi = gout.im.data() + bi * nout;
        for (std::int64_t o = 0; o < nout; ++o) {
            const double* wr = l.w.re.data() + o * nin;
            const double* wi = l.w.im.data() + o * nin;
            double cr = gr[o], ci = gi[o];
            for (std::int64_t i = 0; i < nin; ++i) {
                // conj(w) * g
                qr[i] += wr[i] * cr + wi[i] * ci;
                qi[i] += wr[i] * ci - wi[i] * cr;
            }
        }
    });
    if (g) {
        maybe_parallel_for(nout, b * nin * 8, [&](std::int64_t o) {
            double* wr = g->w.re.data() + o * nin;
            double* wi = g->w.im.data() + o * nin;
            double br = 0.0, bi2 = 0.0;
            for (std::int64_t bi = 0; bi < b; ++bi) {
                const double* zr = in.re.data() + bi * nin;
                const double* zi = in.im.data() + bi * nin;
                double cr = gout.re[bi * nout + o], ci = gout.im[bi * nout + o];
                br += cr;
                bi2 += ci;
                for (std::int64_t i = 0; i < nin; ++i) {
                    // g * conj(z)
                    wr[i] += cr * zr[i] + ci * zi[i];
                    wi[i] += ci * zr[i] - cr * zi[i];
                }
            }
            g->bias.re[o] += br;
            g->bias.im[o] += bi2;
        });
    }
    return gin;
}

inline CTensor crelu_forward(const CTensor& in) {
    CTensor out(in.shape);
    for (std::int64_t i = 0; i < in.numel(); ++i) {
        out.re[i] = in.re[i] > 0.0 ? in.re[i] : 0.0;
        out.im[i] = in.im[i] > 0.0 ? in.im[i] : 0.0;
    }
    return out;
}

inline CTensor crelu_backward(const CTensor& in, const CTensor& gout) {
    CTensor gin(in.shape);
    for (std::int64_t i = 0; i < in.numel(); ++i) {
        gin.re[i] = in.re[i] > 0.0 ? gout.re[i] : 0.0;
        gin.im[i] = in.im[i] > 0.0 ? gout.im[i] : 0.0;
    }
    return gin;
}

struct ChannelView {
    std::int64_t channels, spatial, batch;
};

inline ChannelView channel_view(const CTensor& in) {
    if (in.shape.size() == 4) return {in.shape[1], in.shape[2] * in.shape[3], in.shape[0]};
    if (in.shape.size() == 2) return {in.shape[1], 1, in.shape[0]};
    throw std::invalid_argument("batch_norm: input must be 2-d or 4-d");
}

/// Closed-form inverse square root of the SPD 2x2 matrix [[a,b],[b,c]].
inline void inv_sqrt_2x2(double a, double b, double c, double& w00, double& w01, double& w11) {
    double det = a * c - b * b;
    double s = std::sqrt(std::max(det, 0.0));
    double t = std::sqrt(a + c + 2.0 * s);
    double denom = s * t;
    if (denom <= 0.0) throw std::runtime_error("batch_norm: covariance not positive definite");
    w00 = (c + s) / denom;
    w01 = -b / denom;
    w11 = (a + s) / denom;
}

inline CTensor batch_norm_forward(Layer& l, const CTensor& in, Mode mode, LayerCache* cache) {
    ChannelView v = channel_view(in);
    std::int64_t C = v.channels;
    if (static_cast<std::int64_t>(l.gamma_rr.size()) != C)
        throw std::invalid_argument("batch_norm: channel mismatch");
    std::int64_t n = v.batch * v.spatial;
    if (mode == Mode::train && v.batch < 2)
        throw std::invalid_argument("batch_norm: train mode needs batch size >= 2");
    CTensor out(in.shape);
    CTensor whitened(in.shape);
    std::vector<double> mu_r(C), mu_i(C), w00(C), w01(C), w11(C), v00(C), v01(C), v11(C);

    maybe_parallel_for(C, n * 16, [&](std::int64_t c) {
        double mr, mi, a, bcov, cc;
        if (mode == Mode::train) {
            double sr = 0.0, si = 0.0;
            for (std::int64_t b = 0; b < v.batch; ++b) {
                const double* zr = in.re.data() + (b * C + c) * v.spatial;
                const double* zi = in.im.data() + (b * C + c) * v.spatial;
                for (std::int64_t s = 0; s < v.spatial; ++s) {
                    sr += zr[s];
                    si += zi[s];
                }
            }
            mr = sr / static_cast<double>(n);
            mi = si / static_cast<double>(n);
            double crr = 0.0, cri = 0.0, cii = 0.0;
            for (std::int64_t b = 0; b < v.batch; ++b) {
                const double* zr = in.re.data() + (b * C + c) * v.spatial;
                const double* zi = in.im.data() + (b * C + c) * v.spatial;
                for (std::int64_t s = 0; s < v.spatial; ++s) {
                    double dr = zr[s] - mr, di = zi[s] - mi;
                    crr += dr * dr;
                    cri += dr * di;
                    cii += di * di;
                }
            }
            crr /= static_cast<double>(n);
            cri /= static_cast<double>(n);
            cii /= static_cast<double>(n);
            // running stats hold the raw batch covariance
            double m = l.bn_momentum;
            l.run_mean_r[c] = m * l.run_mean_r[c] + (1.0 - m) * mr;
            l.run_mean_i[c] = m * l.run_mean_i[c] + (1.0 - m) * mi;
            l.run_vrr[c] = m * l.run_vrr[c] + (1.0 - m) * crr;
            l.run_vri[c] = m * l.run_vri[c] + (1.0 - m) * cri;
            l.run_vii[c] = m * l.run_vii[c] + (1.0 - m) * cii;
            a = crr + l.bn_eps;
            bcov = cri;
            cc = cii + l.bn_eps;
        } else {
            mr = l.run_mean_r[c];
            mi = l.run_mean_i[c];
            a = l.run_vrr[c] + l.bn_eps;
            bcov = l.run_vri[c];
            cc = l.run_vii[c] + l.bn_eps;
        }
        double u00, u01, u11;
        inv_sqrt_2x2(a, bcov, cc, u00, u01, u11);
        mu_r[c] = mr;
        mu_i[c] = mi;
        w00[c] = u00;
        w01[c] = u01;
        w11[c] = u11;
        v00[c] = a;
        v01[c] = bcov;
        v11[c] = cc;
        double grr = l.gamma_rr[c], gri = l.gamma_ri[c], gii = l.gamma_ii[c];
        double br = l.beta.re[c], bi = l.beta.im[c];
        for (std::int64_t b = 0; b < v.batch; ++b) {
            std::int64_t off = (b * C + c) * v.spatial;
            const double* zr = in.re.data() + off;
            const double* zi = in.im.data() + off;
            double* tr = whitened.re.data() + off;
            double* ti = whitened.im.data() + off;
            double* pr = out.re.data() + off;
            double* pi = out.im.data() + off;
            for (std::int64_t s = 0; s < v.spatial; ++s) {
                double dr = zr[s] - mr, di = zi[s] - mi;
                double xr = u00 * dr + u01 * di;
                double xi = u01 * dr + u11 * di;
                tr[s] = xr;
                ti[s] = xi;
                pr[s] = grr * xr + gri * xi + br;
                pi[s] = gri * xr + gii * xi + bi;
            }
        }
    });
    if (cache) {
        cache->mu_r = std::move(mu_r);
        cache->mu_i = std::move(mu_i);
        cache->w00 = std::move(w00);
        cache->w01 = std::move(w01);
        cache->w11 = std::move(w11);
        cache->v00 = std::move(v00);
        cache->v01 = std::move(v01);
        cache->v11 = std::move(v11);
        cache->whitened = std::move(whitened);
        cache->mode = mode;
    }
    return out;
}

/// Backward through whitening. The covariance path uses the eigendecomposition
/// of V and the standard symmetric matrix-function derivative for V^{-1/2}.
inline CTensor batch_norm_backward(const Layer& l, const LayerCache& cache, const CTensor& in,
                                   const CTensor& gout, LayerGrads* g) {
    ChannelView v = channel_view(in);
    std::int64_t C = v.channels;
    std::int64_t n = v.batch * v.spatial;
    CTensor gin(in.shape);

    maybe_parallel_for(C, n * 40, [&](std::int64_t c) {
        double grr = l.gamma_rr[c], gri = l.gamma_ri[c], gii = l.gamma_ii[c];
        double mr = cache.mu_r[c], mi = cache.mu_i[c];
        double u00 = cache.w00[c], u01 = cache.w01[c], u11 = cache.w11[c];

        double gb_r = 0.0, gb_i = 0.0, gg_rr = 0.0, gg_ri = 0.0, gg_ii = 0.0;
        double h00 = 0.0, h01 = 0.0, h10 = 0.0, h11 = 0.0;  // H = sum h c^T
        for (std::int64_t b = 0; b < v.batch; ++b) {
            std::int64_t off = (b * C + c) * v.spatial;
            const double* gr = gout.re.data() + off;
            const double* gi = gout.im.data() + off;
            const double* tr = cache.whitened.re.data() + off;
            const double* ti = cache.whitened.im.data() + off;
            const double* zr = in.re.data() + off;
            const double* zi = in.im.data() + off;
            for (std::int64_t s = 0; s < v.spatial; ++s) {
                gb_r += gr[s];
                gb_i += gi[s];
                gg_rr += gr[s] * tr[s];
                gg_ii += gi[s] * ti[s];
                gg_ri += gr[s] * ti[s] + gi[s] * tr[s];
                double hr = grr * gr[s] + gri * gi[s];
                double hi = gri * gr[s] + gii * gi[s];
                double cr = zr[s] - mr, ci2 = zi[s] - mi;
                h00 += hr * cr;
                h01 += hr * ci2;
                h10 += hi * cr;
                h11 += hi * ci2;
            }
        }
        if (g) {
            g->beta.re[c] += gb_r;
            g->beta.im[c] += gb_i;
            g->gamma_rr[c] += gg_rr;
            g->gamma_ri[c] += gg_ri;
            g->gamma_ii[c] += gg_ii;
        }

        double k00 = 0.0, k01 = 0.0, k10 = 0.0, k11 = 0.0;
        if (cache.mode == Mode::train) {
            // dL/dV = Q (F o (Q^T H Q)) Q^T where V = Q diag(lam) Q^T and F
            // holds the divided differences of f(x) = x^{-1/2}
            double a = cache.v00[c], bb = cache.v01[c], cc2 = cache.v11[c];
            double phi = 0.5 * std::atan2(2.0 * bb, a - cc2);
            double cphi = std::cos(phi), sphi = std::sin(phi);
            double lam1 = cphi * cphi * a + 2.0 * cphi * sphi * bb + sphi * sphi * cc2;
            double lam2 = sphi * sphi * a - 2.0 * cphi * sphi * bb + cphi * cphi * cc2;
            auto fval = [](double x) { return 1.0 / std::sqrt(x); };
            auto fder = [](double x) { return -0.5 / (x * std::sqrt(x)); };
            double f00 = fder(lam1), f11 = fder(lam2);
            double f01 = std::abs(lam1 - lam2) > 1e-12 * (std::abs(lam1) + std::abs(lam2))
                             ? (fval(lam1) - fval(lam2)) / (lam1 - lam2)
                             : fder(0.5 * (lam1 + lam2));
            double q00 = cphi, q01 = -sphi, q10 = sphi, q11 = cphi;
            double a00 = q00 * h00 + q10 * h10, a01 = q00 * h01 + q10 * h11;
            double a10 = q01 * h00 + q11 * h10, a11 = q01 * h01 + q11 * h11;
            double mp00 = a00 * q00 + a01 * q10, mp01 = a00 * q01 + a01 * q11;
            double mp10 = a10 * q00 + a11 * q10, mp11 = a10 * q01 + a11 * q11;
            mp00 *= f00;
            mp01 *= f01;
            mp10 *= f01;
            mp11 *= f11;
            double b00 = q00 * mp00 + q01 * mp10, b01 = q00 * mp01 + q01 * mp11;
            double b10 = q10 * mp00 + q11 * mp10, b11 = q10 * mp01 + q11 * mp11;
            k00 = b00 * q00 + b01 * q01;
            k01 = b00 * q10 + b01 * q11;
            k10 = b10 * q00 + b11 * q01;
            k11 = b10 * q10 + b11 * q11;
        }
        double ks00 = (k00 + k00) / static_cast<double>(n);
        double ks01 = (k01 + k10) / static_cast<double>(n);
        double ks11 = (k11 + k11) / static_cast<double>(n);

        double sum_r = 0.0, sum_i = 0.0;
        for (std::int64_t b = 0; b < v.batch; ++b) {
            std::int64_t off = (b * C + c) * v.spatial;
            const double* gr = gout.re.data() + off;
            const double* gi = gout.im.data() + off;
            const double* zr = in.re.data() + off;
            const double* zi = in.im.data() + off;
            double* qr = gin.re.data() + off;
            double* qi = gin.im.data() + off;
            for (std::int64_t s = 0; s < v.spatial; ++s) {
                double hr = grr * gr[s] + gri * gi[s];
                double hi = gri * gr[s] + gii * gi[s];
                double dr = u00 * hr + u01 * hi;
                double di = u01 * hr + u11 * hi;
                if (cache.mode == Mode::train) {
                    double cr = zr[s] - mr, ci2 = zi[s] - mi;
                    dr += ks00 * cr + ks01 * ci2;
                    di += ks01 * cr + ks11 * ci2;
                }
                qr[s] = dr;
                qi[s] = di;
                sum_r += dr;
                sum_i += di;
            }
        }
        if (cache.mode == Mode::train) {
            // centering: subtract the channel mean of the gradient
            double avg_r = sum_r / static_cast<double>(n);
            double avg_i = sum_i / static_cast<double>(n);
            for (std::int64_t b = 0; b < v.batch; ++b) {
                std::int64_t off = (b * C + c) * v.spatial;
                double* qr = gin.re.data() + off;
                double* qi = gin.im.data() + off;
                for (std::int64_t s = 0; s < v.spatial; ++s) {
                    qr[s] -= avg_r;
                    qi[s] -= avg_i;
                }
            }
        }
    });
    return gin;
}

inline CTensor max_pool_forward(const Layer& l, const CTensor& in, LayerCache* cache) {
    if (in.shape.size() != 4) throw std::invalid_argument("max_pool: input must be 4-d");
    std::int64_t B = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
    int k = l.window;
    if (H % k != 0 || W % k != 0)
        throw std::invalid_argument("max_pool: spatial dims not divisible by window");
    std::int64_t OH = H / k, OW = W / k;
    CTensor out({B, C, OH, OW});
    std::vector<std::int64_t> sel(static_cast<std::size_t>(B * C * OH * OW));
    maybe_parallel_for(B * C, OH * OW * k * k * 4, [&](std::int64_t t) {
        const double* zr = in.re.data() + t * H * W;
        const double* zi = in.im.data() + t * H * W;
        double* pr = out.re.data() + t * OH * OW;
        double* pi = out.im.data() + t * OH * OW;
        std::int64_t* ps = sel.data() + t * OH * OW;
        for (std::int64_t oy = 0; oy < OH; ++oy)
            for (std::int64_t ox = 0; ox < OW; ++ox) {
                double best = -1.0;
                std::int64_t best_off = 0;
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        std::int64_t off = (oy * k + ky) * W + ox * k + kx;
                        double mag = zr[off] * zr[off] + zi[off] * zi[off];
                        if (mag > best) {  // strict: first occurrence wins ties
                            best = mag;
                            best_off = off;
                        }
                    }
                pr[oy * OW + ox] = zr[best_off];
                pi[oy * OW + ox] = zi[best_off];
                ps[oy * OW + ox] = t * H * W + best_off;
            }
    });
    if (cache) cache->pool_sel = std::move(sel);
    return out;
}

inline CTensor max_pool_backward(const CTensor& in, const CTensor& gout,
                                 const std::vector<std::int64_t>& sel) {
    CTensor gin(in.shape);
    for (std::int64_t i = 0; i < gout.numel(); ++i) {
        gin.re[sel[i]] += gout.re[i];
        gin.im[sel[i]] += gout.im[i];
    }
    return gin;
}

inline CTensor upsample_forward(const Layer& l, const CTensor& in) {
    if (in.shape.size() != 4) throw std::invalid_argument("upsample: input must be 4-d");
    std::int64_t B = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
    int k = l.window;
    CTensor out({B, C, H * k, W * k});
    maybe_parallel_for(B * C, H * W * k * k * 2, [&](std::int64_t t) {
        const double* zr = in.re.data() + t * H * W;
        const double* zi = in.im.data() + t * H * W;
        double* pr = out.re.data() + t * H * W * k * k;
        double* pi = out.im.data() + t * H * W * k * k;
        std::int64_t OW = W * k;
        for (std::int64_t y = 0; y < H * k; ++y)
            for (std::int64_t x = 0; x < OW; ++x) {
                pr[y * OW + x] = zr[(y / k) * W + x / k];
                pi[y * OW + x] = zi[(y / k) * W + x / k];
            }
    });
    return out;
}

inline CTensor upsample_backward(const Layer& l, const CTensor& in, const CTensor& gout) {
    std::int64_t B = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
    int k = l.window;
    CTensor gin(in.shape);
    maybe_parallel_for(B * C, H * W * k * k * 2, [&](std::int64_t t) {
        const double* gr = gout.re.data() + t * H * W * k * k;
        const double* gi = gout.im.data() + t * H * W * k * k;
        double* qr = gin.re.data() + t * H * W;
        double* qi = gin.im.data() + t * H * W;
        std::int64_t OW = W * k;
        for (std::int64_t y = 0; y < H * k; ++y)
            for (std::int64_t x = 0; x < OW; ++x) {
                qr[(y / k) * W + x / k] += gr[y * OW + x];
                qi[(y / k) * W + x / k] += gi[y * OW + x];
            }
    });
    return gin;
}

inline CTensor modulus_forward(const CTensor& in) {
    CTensor out(in.shape);
    for (std::int64_t i = 0; i < in.numel(); ++i) {
        out.re[i] = std::sqrt(in.re[i] * in.re[i] + in.im[i] * in.im[i]);
        out.im[i] = 0.0;
    }
    return out;
}

inline CTensor modulus_backward(const CTensor& in, const CTensor& gout) {
    CTensor gin(in.shape);
    for (std::int64_t i = 0; i < in.numel(); ++i) {
        double mag = std::sqrt(in.re[i] * in.re[i] + in.im[i] * in.im[i]);
        if (mag > 0.0) {
            gin.re[i] = gout.re[i] * in.re[i] / mag;
            gin.im[i] = gout.re[i] * in.im[i] / mag;
        }
    }
    return gin;
}

}  // namespace detail

inline CTensor layer_forward(Layer& l, const CTensor& in, Mode mode, LayerCache* cache) {
    if (cache) cache->input = in;
    switch (l.kind) {
        case LayerKind::conv2d:
            return detail::conv2d_forward(l, in);
        case LayerKind::conv2d_transpose:
            return detail::conv2d_transpose_forward(l, in);
        case LayerKind::fully_connected:
            return detail::fc_forward(l, in);
        case LayerKind::crelu:
            return detail::crelu_forward(in);
        case LayerKind::batch_norm:
            return detail::batch_norm_forward(l, in, mode, cache);
        case LayerKind::max_pool:
            return detail::max_pool_forward(l, in, cache);
        case LayerKind::upsample:
            return detail::upsample_forward(l, in);
        case LayerKind::reshape: {
            std::vector<std::int64_t> s = {in.shape[0]};
            s.insert(s.end(), l.out_tail.begin(), l.out_tail.end());
            return in.reshaped(std::move(s));
        }
        case LayerKind::modulus:
            return detail::modulus_forward(in);
    }
    throw std::logic_error("layer_forward: unknown kind");
}

inline CTensor layer_backward(const Layer& l, const LayerCache& cache, const CTensor& gout,
                              LayerGrads* g) {
    switch (l.kind) {
        case LayerKind::conv2d:
            return detail::conv2d_backward(l, cache.input, gout, g);
        case LayerKind::conv2d_transpose:
            return detail::conv2d_transpose_backward(l, cache.input, gout, g);
        case LayerKind::fully_connected:
            return detail::fc_backward(l, cache.input, gout, g);
        case LayerKind::crelu:
            return detail::crelu_backward(cache.input, gout);
        case LayerKind::batch_norm:
            return detail::batch_norm_backward(l, cache, cache.input, gout, g);
        case LayerKind::max_pool:
            return detail::max_pool_backward(cache.input, gout, cache.pool_sel);
        case LayerKind::upsample:
            return detail::upsample_backward(l, cache.input, gout);
        case LayerKind::reshape:
            return gout.reshaped(cache.input.shape);
        case LayerKind::modulus:
            return detail::modulus_backward(cache.input, gout);
    }
    throw std::logic_error("layer_backward: unknown kind");
}

/// An ordered layer stack with tape-based reverse-mode gradients.
struct Network {
    std::vector<Layer> layers;

    CTensor forward(const CTensor& in, Mode mode, Tape* tape = nullptr) {
        if (tape) {
            tape->layers.clear();
            tape->layers.resize(layers.size());
        }
        CTensor x = in;
        for (std::size_t i = 0; i < layers.size(); ++i)
            x = layer_forward(layers[i], x, mode, tape ? &tape->layers[i] : nullptr);
        return x;
    }

    /// Walks the tape in reverse, accumulating parameter gradients into
    /// `grads` (when given) and returning the gradient w.r.t. the input.
    CTensor backward(const Tape& tape, const CTensor& gout,
                     std::vector<LayerGrads>* grads = nullptr) const {
        if (tape.layers.size() != layers.size())
            throw std::logic_error("backward: tape does not match network");
        CTensor g = gout;
        for (std::size_t i = layers.size(); i-- > 0;)
            g = layer_backward(layers[i], tape.layers[i], g,
                               grads ? &(*grads)[i] : nullptr);
        return g;
    }
};

inline std::vector<LayerGrads> make_grads(const Network& net) {
    std::vector<LayerGrads> gs(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        LayerGrads& g = gs[i];
        switch (l.kind) {
            case LayerKind::conv2d:
            case LayerKind::conv2d_transpose:
            case LayerKind::fully_connected:
                g.w = CTensor(l.w.shape);
                g.bias = CTensor(l.bias.shape);
                break;
            case LayerKind::batch_norm:
                g.gamma_rr.assign(l.gamma_rr.size(), 0.0);
                g.gamma_ri.assign(l.gamma_ri.size(), 0.0);
                g.gamma_ii.assign(l.gamma_ii.size(), 0.0);
                g.beta = CTensor(l.beta.shape);
                break;
            default:
                break;
        }
    }
    return gs;
}

inline void zero_grads(std::vector<LayerGrads>& gs, const Network& net) {
    for (std::size_t i = 0; i < gs.size(); ++i)
        for_each_param_array(net.layers[i].kind, gs[i],
                             [](std::vector<double>& a) { std::fill(a.begin(), a.end(), 0.0); });
}

}  // namespace entwit
