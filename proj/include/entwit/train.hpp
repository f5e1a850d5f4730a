#pragma once

#include <cstdint>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "entwit/checkpoint.hpp"
#include "entwit/config.hpp"
#include "entwit/dataset.hpp"
#include "entwit/model.hpp"
#include "entwit/optimizer.hpp"

namespace entwit {

struct EpochLog {
    int epoch = 0;
    double l1 = 0.0, l2 = 0.0, l_adv1 = 0.0, l_adv2 = 0.0, l3 = 0.0;
};

struct TrainResult {
    ModelState model;
    std::vector<EpochLog> log;
};

namespace detail {

/// One alternating step on a batch. Phase (i) updates the discriminator on
/// l_adv1; phase (ii) updates both encoders and the generator on
/// l3 = w1*l1 + w2*l2 + wa*l_adv2. The discriminator contributes an input
/// gradient in phase (ii) but its own parameters stay fixed there.
struct Trainer {
    ModelState* m;
    RmsProp opt_er, opt_eg, opt_gen, opt_dis;
    std::vector<LayerGrads> g_er, g_eg, g_gen, g_dis;
    bool train_discriminator = true;

    static Trainer create(ModelState& m, const OptimizerConfig& cfg, bool train_dis) {
        Trainer t;
        t.m = &m;
        OptimizerConfig eg_cfg = cfg;
        eg_cfg.weight_clip = false;  // optional weight clipping applies to the critic only
        t.opt_er = RmsProp::create(m.er, eg_cfg);
        t.opt_eg = RmsProp::create(m.eg, eg_cfg);
        t.opt_gen = RmsProp::create(m.gen, eg_cfg);
        t.opt_dis = RmsProp::create(m.dis, cfg);
        t.g_er = make_grads(m.er);
        t.g_eg = make_grads(m.eg);
        t.g_gen = make_grads(m.gen);
        t.g_dis = make_grads(m.dis);
        t.train_discriminator = train_dis;
        return t;
    }

    EpochLog step(const CTensor& rho_batch) {
        EpochLog out;
        std::int64_t b = rho_batch.shape[0];
        double inv_b = 1.0 / static_cast<double>(b);

        if (train_discriminator) {
            // phase (i): discriminator on l_adv1 = mean(-D(real) + D(gen))
            CTensor v1 = m->er.forward(rho_batch, Mode::train);
            CTensor rho_gen = m->gen.forward(v1, Mode::train);
            Tape tape_dr, tape_dg;
            CTensor d_real = m->dis.forward(rho_batch, Mode::train, &tape_dr);
            CTensor d_gen = m->dis.forward(rho_gen, Mode::train, &tape_dg);
            auto [l_adv1, l_adv2_unused] = adv_losses(d_real, d_gen);
            (void)l_adv2_unused;
            out.l_adv1 = l_adv1;

            zero_grads(g_dis, m->dis);
            CTensor gd_real(d_real.shape), gd_gen(d_gen.shape);
            for (std::int64_t i = 0; i < b; ++i) {
                gd_real.re[i] = -inv_b;
                gd_gen.re[i] = inv_b;
            }
            m->dis.backward(tape_dr, gd_real, &g_dis);
            m->dis.backward(tape_dg, gd_gen, &g_dis);
            opt_dis.step(m->dis, g_dis);
        }

        // phase (ii): encoders + generator on l3
        SiameseTapes tapes;
        SiameseOut s = forward_siamese(*m, rho_batch, Mode::train, &tapes);
        out.l1 = loss_l1(s.v1, s.v2);
        out.l2 = loss_l2(rho_batch, s.rho_gen);

        CTensor g_rho_gen(s.rho_gen.shape);
        if (m->weights.wa != 0.0) {
            Tape tape_d;
            CTensor d_gen = m->dis.forward(s.rho_gen, Mode::train, &tape_d);
            double a2 = 0.0;
            for (std::int64_t i = 0; i < b; ++i) a2 -= d_gen.re[i];
            out.l_adv2 = a2 * inv_b;
            CTensor gd(d_gen.shape);
            for (std::int64_t i = 0; i < b; ++i) gd.re[i] = -inv_b * m->weights.wa;
            g_rho_gen = m->dis.backward(tape_d, gd, nullptr);
        }
        out.l3 = loss_total(out.l1, out.l2, out.l_adv2, m->weights);

        auto [g_v1_l1, g_v2] = loss_l1_grads(s.v1, s.v2);
        zero_grads(g_er, m->er);
        zero_grads(g_eg, m->eg);
        zero_grads(g_gen, m->gen);

        if (m->weights.w1 != 0.0) {
            for (std::int64_t i = 0; i < g_v2.numel(); ++i) {
                g_v2.re[i] *= m->weights.w1;
                g_v2.im[i] *= m->weights.w1;
            }
            g_rho_gen += m->eg.backward(tapes.eg, g_v2, &g_eg);
        }
        if (m->weights.w2 != 0.0) {
            CTensor g_l2 = loss_l2_grad_gen(rho_batch, s.rho_gen);
            for (std::int64_t i = 0; i < g_l2.numel(); ++i) {
                g_rho_gen.re[i] += m->weights.w2 * g_l2.re[i];
                g_rho_gen.im[i] += m->weights.w2 * g_l2.im[i];
            }
        }
        CTensor g_v1 = m->gen.backward(tapes.gen, g_rho_gen, &g_gen);
        if (m->weights.w1 != 0.0) {
            for (std::int64_t i = 0; i < g_v1.numel(); ++i) {
                g_v1.re[i] += m->weights.w1 * g_v1_l1.re[i];
                g_v1.im[i] += m->weights.w1 * g_v1_l1.im[i];
            }
        }
        m->er.backward(tapes.er, g_v1, &g_er);

        opt_er.step(m->er, g_er);
        opt_eg.step(m->eg, g_eg);
        opt_gen.step(m->gen, g_gen);
        m->step_count += 1;
        return out;
    }
};

}  // namespace detail

/// Trains on a label-0 dataset per the alternating schedule, checkpointing
/// after every epoch. A non-separable record in the training set is an error:
/// the method's contract is that only normal samples are ever seen.
inline TrainResult train(const TrainConfig& cfg, const Dataset& data,
                         std::ostream* log_stream = nullptr) {
    cfg.validate();
    if (data.count() < cfg.batch_size)
        throw std::invalid_argument("train: dataset smaller than one batch");
    if (data.labeled)
        for (std::int64_t i = 0; i < data.count(); ++i)
            if (data.labels[i] != 0)
                throw std::invalid_argument("train: training data must contain only label-0 records");
    if (cfg.threads > 0) set_num_threads(cfg.threads);

    ModelState model = make_model(cfg.n_qubits, cfg.seed, cfg.weights);
    if (static_cast<int>(data.dim) != model.arch.dim)
        throw std::invalid_argument("train: dataset dim does not match architecture");
    detail::Trainer trainer = detail::Trainer::create(model, cfg.opt, cfg.train_discriminator);

    TrainResult res;
    std::vector<std::int64_t> order(data.count());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(derived_seed(cfg.seed, 0x5u * 1000003u + epoch));
        shuffle_rng.shuffle(order.begin(), order.end());

        EpochLog acc;
        acc.epoch = epoch;
        int batches = 0;
        for (std::int64_t start = 0; start + 2 <= data.count(); start += cfg.batch_size) {
            std::int64_t stop = std::min<std::int64_t>(start + cfg.batch_size, data.count());
            if (stop - start < 2) break;  // batch norm needs at least 2
            std::vector<std::int64_t> idx(order.begin() + start, order.begin() + stop);
            CTensor batch = data.batch(idx);
            EpochLog s = trainer.step(batch);
            acc.l1 += s.l1;
            acc.l2 += s.l2;
            acc.l_adv1 += s.l_adv1;
            acc.l_adv2 += s.l_adv2;
            acc.l3 += s.l3;
            ++batches;
        }
        acc.l1 /= batches;
        acc.l2 /= batches;
        acc.l_adv1 /= batches;
        acc.l_adv2 /= batches;
        acc.l3 /= batches;
        res.log.push_back(acc);
        if (log_stream)
            (*log_stream) << "epoch " << epoch << "  l1=" << acc.l1 << "  l2=" << acc.l2
                          << "  l_adv1=" << acc.l_adv1 << "  l_adv2=" << acc.l_adv2
                          << "  l3=" << acc.l3 << std::endl;
        if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
    }
    res.model = std::move(model);
    return res;
}

inline TrainResult train(const TrainConfig& cfg, std::ostream* log_stream = nullptr) {
    return train(cfg, read_dataset(cfg.train_data), log_stream);
}

}  // namespace entwit
