#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "entwit/layers.hpp"
#include "entwit/qstate.hpp"
#include "entwit/rng.hpp"
#include "entwit/tensor.hpp"

namespace entwit {

struct LossWeights {
    double w1 = 1.0;
    double w2 = 50.0;
    double wa = 1.0;
};

/// Encoder/generator/discriminator stacks for one input size. Convolutional
/// presets exist for 2..5 qubits; encoders end in a latent_dim feature vector
/// and the generator mirrors the encoder back to a dim x dim complex map.
struct ArchitectureConfig {
    int n_qubits = 2;
    int dim = 4;  // density matrix edge = 2^n_qubits
    int latent_dim = 10;
    std::string preset = "conv2q";
};

/// Parameter sets for the two encoders, generator, and discriminator.
struct ModelState {
    ArchitectureConfig arch;
    Network er, eg, gen, dis;
    LossWeights weights;
    std::int64_t step_count = 0;
};

namespace detail {

struct EncoderPlan {
    std::vector<int> conv_channels;  // per conv layer
    int kernel = 2;
    bool pool_after_convs = false;
    int fc_hidden = 64;
};

inline EncoderPlan encoder_plan(int n_qubits) {
    EncoderPlan p;
    switch (n_qubits) {
        case 2:
            p.conv_channels = {10, 30};
            break;
        case 3:
            p.conv_channels = {10, 30, 50};
            break;
        case 4:
        case 5:
            p.conv_channels = {10, 30};
            p.pool_after_convs = true;
            break;
        default:
            throw std::invalid_argument("architecture preset: n_qubits must be in [2,5]");
    }
    return p;
}

}  // namespace detail

inline ArchitectureConfig make_architecture(int n_qubits) {
    detail::encoder_plan(n_qubits);  // validates the range
    ArchitectureConfig a;
    a.n_qubits = n_qubits;
    a.dim = 1 << n_qubits;
    a.latent_dim = 10;
    a.preset = "conv" + std::to_string(n_qubits) + "q";
    return a;
}

/// Conv layers are conv + CReLU + BN; the first FC adds a CReLU, the last is a
/// bare linear map to the latent vector.
inline Network build_encoder(const ArchitectureConfig& a, Rng& rng) {
    detail::EncoderPlan p = detail::encoder_plan(a.n_qubits);
    Network net;
    int ch = 1, side = a.dim;
    for (int oc : p.conv_channels) {
        net.layers.push_back(make_conv2d(ch, oc, p.kernel, p.kernel, rng));
        net.layers.push_back(make_crelu());
        net.layers.push_back(make_batch_norm(oc));
        ch = oc;
        side -= p.kernel - 1;
    }
    if (p.pool_after_convs) {
        net.layers.push_back(make_max_pool(2));
        side /= 2;
    }
    int flat = ch * side * side;
    net.layers.push_back(make_fully_connected(flat, p.fc_hidden, rng));
    net.layers.push_back(make_crelu());
    net.layers.push_back(make_fully_connected(p.fc_hidden, a.latent_dim, rng));
    return net;
}

/// Mirror of the encoder: FC head reversed, then transposed convolutions (and
/// an upsample where the encoder pooled); the final layer is bare so the
/// output is an unconstrained dim x dim complex matrix.
inline Network build_generator(const ArchitectureConfig& a, Rng& rng) {
    detail::EncoderPlan p = detail::encoder_plan(a.n_qubits);
    int ch = 1, side = a.dim;
    std::vector<int> in_chs;
    for (int oc : p.conv_channels) {
        in_chs.push_back(ch);
        ch = oc;
        side -= p.kernel - 1;
    }
    if (p.pool_after_convs) side /= 2;
    int flat = ch * side * side;

    Network net;
    net.layers.push_back(make_fully_connected(a.latent_dim, p.fc_hidden, rng));
    net.layers.push_back(make_crelu());
    net.layers.push_back(make_fully_connected(p.fc_hidden, flat, rng));
    net.layers.push_back(make_crelu());
    net.layers.push_back(make_reshape({ch, side, side}));
    if (p.pool_after_convs) net.layers.push_back(make_upsample(2));
    for (int i = static_cast<int>(p.conv_channels.size()) - 1; i >= 0; --i) {
        net.layers.push_back(make_conv2d_transpose(p.conv_channels[i], in_chs[i], p.kernel,
                                                   p.kernel, rng));
        if (i > 0) {
            net.layers.push_back(make_crelu());
            net.layers.push_back(make_batch_norm(in_chs[i]));
        }
    }
    return net;
}

/// Encoder stack plus a head that collapses the latent vector to one real
/// scalar: FC to a single complex value, then its modulus.
inline Network build_discriminator(const ArchitectureConfig& a, Rng& rng) {
    Network net = build_encoder(a, rng);
    net.layers.push_back(make_fully_connected(a.latent_dim, 1, rng));
    net.layers.push_back(make_modulus());
    return net;
}

/// The two encoders share a structure but are initialized independently; they
/// are trained toward different inputs and diverge.
inline ModelState make_model(int n_qubits, std::uint64_t seed,
                             LossWeights weights = LossWeights{}) {
    ModelState m;
    m.arch = make_architecture(n_qubits);
    m.weights = weights;
    Rng r_er(derived_seed(seed, 1));
    Rng r_eg(derived_seed(seed, 2));
    Rng r_gen(derived_seed(seed, 3));
    Rng r_dis(derived_seed(seed, 4));
    m.er = build_encoder(m.arch, r_er);
    m.eg = build_encoder(m.arch, r_eg);
    m.gen = build_generator(m.arch, r_gen);
    m.dis = build_discriminator(m.arch, r_dis);
    return m;
}

// ---- batch input conversion ----

inline CTensor batch_from_matrices(const std::vector<const CMat*>& rhos) {
    if (rhos.empty()) throw std::invalid_argument("batch_from_matrices: empty batch");
    std::int64_t d = rhos[0]->rows();
    CTensor t({static_cast<std::int64_t>(rhos.size()), 1, d, d});
    for (std::size_t b = 0; b < rhos.size(); ++b) {
        const CMat& m = *rhos[b];
        if (m.rows() != d || m.cols() != d)
            throw std::invalid_argument("batch_from_matrices: inconsistent dims");
        std::int64_t off = static_cast<std::int64_t>(b) * d * d;
        for (std::int64_t r = 0; r < d; ++r)
            for (std::int64_t c = 0; c < d; ++c) {
                t.re[off + r * d + c] = m(r, c).real();
                t.im[off + r * d + c] = m(r, c).imag();
            }
    }
    return t;
}

inline CTensor batch_from_density(const DensityMatrix& rho) {
    return batch_from_matrices({&rho.mat});
}

// ---- losses ----

/// Batch mean of the complex 2-norm ||v1 - v2||.
inline double loss_l1(const CTensor& v1, const CTensor& v2) {
    if (!v1.same_shape(v2)) throw std::invalid_argument("loss_l1: shape mismatch");
    std::int64_t b = v1.shape[0], k = v1.numel() / b;
    double total = 0.0;
    for (std::int64_t bi = 0; bi < b; ++bi) {
        double s = 0.0;
        for (std::int64_t i = bi * k; i < (bi + 1) * k; ++i) {
            double dr = v1.re[i] - v2.re[i], di = v1.im[i] - v2.im[i];
            s += dr * dr + di * di;
        }
        total += std::sqrt(s);
    }
    return total / static_cast<double>(b);
}

/// d loss_l1 / d v1 and / d v2 (the latter is the negation).
inline std::pair<CTensor, CTensor> loss_l1_grads(const CTensor& v1, const CTensor& v2) {
    std::int64_t b = v1.shape[0], k = v1.numel() / b;
    CTensor g1(v1.shape), g2(v2.shape);
    for (std::int64_t bi = 0; bi < b; ++bi) {
        double s = 0.0;
        for (std::int64_t i = bi * k; i < (bi + 1) * k; ++i) {
            double dr = v1.re[i] - v2.re[i], di = v1.im[i] - v2.im[i];
            s += dr * dr + di * di;
        }
        double norm = std::sqrt(s);
        if (norm == 0.0) continue;  // subgradient 0 at the kink
        double scale = 1.0 / (norm * static_cast<double>(b));
        for (std::int64_t i = bi * k; i < (bi + 1) * k; ++i) {
            g1.re[i] = (v1.re[i] - v2.re[i]) * scale;
            g1.im[i] = (v1.im[i] - v2.im[i]) * scale;
            g2.re[i] = -g1.re[i];
            g2.im[i] = -g1.im[i];
        }
    }
    return {std::move(g1), std::move(g2)};
}

/// Batch mean of the elementwise complex L1 norm sum(|Re d| + |Im d|).
inline double loss_l2(const CTensor& real, const CTensor& gen) {
    if (!real.same_shape(gen)) throw std::invalid_argument("loss_l2: shape mismatch");
    std::int64_t b = real.shape[0];
    double total = 0.0;
    for (std::int64_t i = 0; i < real.numel(); ++i)
        total += std::abs(real.re[i] - gen.re[i]) + std::abs(real.im[i] - gen.im[i]);
    return total / static_cast<double>(b);
}

/// d loss_l2 / d gen.
inline CTensor loss_l2_grad_gen(const CTensor& real, const CTensor& gen) {
    std::int64_t b = real.shape[0];
    double inv_b = 1.0 / static_cast<double>(b);
    CTensor g(gen.shape);
    auto sgn = [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); };
    for (std::int64_t i = 0; i < gen.numel(); ++i) {
        g.re[i] = -sgn(real.re[i] - gen.re[i]) * inv_b;
        g.im[i] = -sgn(real.im[i] - gen.im[i]) * inv_b;
    }
    return g;
}

/// Adversarial objectives from precomputed discriminator scores (one real
/// scalar per sample): l_adv1 = mean(-D(real) + D(gen)), l_adv2 = mean(-D(gen)).
inline std::pair<double, double> adv_losses(const CTensor& d_real, const CTensor& d_gen) {
    if (d_real.shape[0] != d_gen.shape[0])
        throw std::invalid_argument("adv_losses: batch mismatch");
    std::int64_t b = d_real.shape[0];
    double a1 = 0.0, a2 = 0.0;
    for (std::int64_t i = 0; i < b; ++i) {
        a1 += -d_real.re[i] + d_gen.re[i];
        a2 += -d_gen.re[i];
    }
    return {a1 / static_cast<double>(b), a2 / static_cast<double>(b)};
}

inline double loss_total(double l1, double l2, double l_adv2, const LossWeights& w) {
    return w.w1 * l1 + w.w2 * l2 + w.wa * l_adv2;
}

// ---- forward paths ----

struct SiameseOut {
    CTensor v1, rho_gen, v2;
};

struct SiameseTapes {
    Tape er, gen, eg;
};

inline SiameseOut forward_siamese(ModelState& m, const CTensor& rho_batch, Mode mode,
                                  SiameseTapes* tapes = nullptr) {
    if (rho_batch.shape.size() != 4 || rho_batch.shape[2] != m.arch.dim ||
        rho_batch.shape[3] != m.arch.dim)
        throw std::invalid_argument("forward_siamese: input does not match architecture dim");
    SiameseOut out;
    out.v1 = m.er.forward(rho_batch, mode, tapes ? &tapes->er : nullptr);
    out.rho_gen = m.gen.forward(out.v1, mode, tapes ? &tapes->gen : nullptr);
    out.v2 = m.eg.forward(out.rho_gen, mode, tapes ? &tapes->eg : nullptr);
    return out;
}

inline std::pair<double, double> loss_adv(ModelState& m, const CTensor& rho_real,
                                          const CTensor& rho_gen, Mode mode) {
    CTensor d_real = m.dis.forward(rho_real, mode);
    CTensor d_gen = m.dis.forward(rho_gen, mode);
    return adv_losses(d_real, d_gen);
}

/// A(rho) = ||E_r(rho) - E_g(G(E_r(rho)))||_2 for a single state, evaluated
/// with running statistics (inference mode).
inline double anomaly_score(ModelState& m, const DensityMatrix& rho) {
    CTensor in = batch_from_density(rho);
    SiameseOut s = forward_siamese(m, in, Mode::infer);
    return loss_l1(s.v1, s.v2);
}

/// Scores for a whole batch at once; identical to per-sample scoring because
/// inference-mode statistics do not couple samples.
inline std::vector<double> anomaly_scores(ModelState& m, const CTensor& batch) {
    SiameseOut s = forward_siamese(m, batch, Mode::infer);
    std::int64_t b = s.v1.shape[0], k = s.v1.numel() / b;
    std::vector<double> scores(b);
    for (std::int64_t bi = 0; bi < b; ++bi) {
        double acc = 0.0;
        for (std::int64_t i = bi * k; i < (bi + 1) * k; ++i) {
            double dr = s.v1.re[i] - s.v2.re[i], di = s.v1.im[i] - s.v2.im[i];
            acc += dr * dr + di * di;
        }
        scores[bi] = std::sqrt(acc);
    }
    return scores;
}

// ---- decision thresholds ----

struct Threshold {
    double b = 0.0;
    enum class Method { eer, max_separable } method = Method::eer;
};

namespace detail {
/// Candidate cut points: below the smallest score, midpoints of adjacent
/// unique scores, above the largest.
inline std::vector<double> threshold_candidates(std::vector<double> all) {
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    std::vector<double> cand;
    cand.reserve(all.size() + 1);
    cand.push_back(std::max(0.0, all.front() - 1.0));
    for (std::size_t i = 0; i + 1 < all.size(); ++i)
        cand.push_back(0.5 * (all[i] + all[i + 1]));
    cand.push_back(all.back() + 1.0);
    return cand;
}
}  // namespace detail

/// Positive = separable (score <= b). Picks the candidate minimizing
/// |FNR - FPR|, breaking ties toward the smaller b.
inline Threshold threshold_eer(const std::vector<double>& scores_sep,
                               const std::vector<double>& scores_ent) {
    if (scores_sep.empty() || scores_ent.empty())
        throw std::invalid_argument("threshold_eer: empty score list");
    std::vector<double> sep = scores_sep, ent = scores_ent;
    std::sort(sep.begin(), sep.end());
    std::sort(ent.begin(), ent.end());
    std::vector<double> all = sep;
    all.insert(all.end(), ent.begin(), ent.end());
    double best_b = 0.0, best_obj = std::numeric_limits<double>::infinity();
    for (double b : detail::threshold_candidates(std::move(all))) {
        auto sep_above = sep.end() - std::upper_bound(sep.begin(), sep.end(), b);
        auto ent_below = std::upper_bound(ent.begin(), ent.end(), b) - ent.begin();
        double fnr = static_cast<double>(sep_above) / static_cast<double>(sep.size());
        double fpr = static_cast<double>(ent_below) / static_cast<double>(ent.size());
        double obj = std::abs(fnr - fpr);
        if (obj < best_obj) {
            best_obj = obj;
            best_b = b;
        }
    }
    return {best_b, Threshold::Method::eer};
}

/// b = max anomaly score over the separable reference set; no entangled
/// samples are consulted.
inline Threshold threshold_max_separable(const std::vector<double>& scores_sep) {
    if (scores_sep.empty()) throw std::invalid_argument("threshold_max_separable: empty list");
    return {*std::max_element(scores_sep.begin(), scores_sep.end()),
            Threshold::Method::max_separable};
}

}  // namespace entwit
