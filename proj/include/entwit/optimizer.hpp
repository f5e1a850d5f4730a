#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "entwit/layers.hpp"

namespace entwit {

struct OptimizerConfig {
    double learning_rate = 1e-4;
    double decay = 0.9;          // RMSProp accumulator decay
    double epsilon = 1e-8;
    double clip = 1.0;           // gradient components clipped to [-clip, clip]
    bool weight_clip = false;    // optional critic weight clipping, off by default
    double weight_clip_value = 0.01;
};

/// RMSProp with per-component gradient clipping. Real and imaginary parts of
/// every parameter are treated as independent real components.
struct RmsProp {
    OptimizerConfig cfg;
    // accumulator arrays aligned with for_each_param_array enumeration
    std::vector<std::vector<std::vector<double>>> acc;  // [layer][slot][component]

    static RmsProp create(const Network& net, const OptimizerConfig& cfg) {
        RmsProp o;
        o.cfg = cfg;
        o.acc.resize(net.layers.size());
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            auto& slots = o.acc[i];
            for_each_param_array(net.layers[i].kind, const_cast<Layer&>(net.layers[i]),
                                 [&](std::vector<double>& p) { slots.emplace_back(p.size(), 0.0); });
        }
        return o;
    }

    void step(Network& net, const std::vector<LayerGrads>& grads) {
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            Layer& l = net.layers[i];
            std::size_t slot = 0;
            std::vector<std::vector<double>*> params;
            for_each_param_array(l.kind, l, [&](std::vector<double>& p) { params.push_back(&p); });
            std::vector<const std::vector<double>*> gs;
            for_each_param_array(l.kind, const_cast<LayerGrads&>(grads[i]),
                                 [&](std::vector<double>& p) { gs.push_back(&p); });
            for (slot = 0; slot < params.size(); ++slot) {
                std::vector<double>& p = *params[slot];
                const std::vector<double>& g = *gs[slot];
                std::vector<double>& a = acc[i][slot];
                for (std::size_t k = 0; k < p.size(); ++k) {
                    double gc = std::clamp(g[k], -cfg.clip, cfg.clip);
                    a[k] = cfg.decay * a[k] + (1.0 - cfg.decay) * gc * gc;
                    p[k] -= cfg.learning_rate * gc / (std::sqrt(a[k]) + cfg.epsilon);
                    if (cfg.weight_clip)
                        p[k] = std::clamp(p[k], -cfg.weight_clip_value, cfg.weight_clip_value);
                }
            }
        }
    }
};

}  // namespace entwit
