#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "entwit/errors.hpp"
#include "entwit/model.hpp"
#include "entwit/serial.hpp"

namespace entwit {

namespace detail {
constexpr char kCheckpointMagic[4] = {'Q', 'S', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_string(std::ostream& out, const std::string& s) {
    write_pod(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    auto n = read_pod<std::uint32_t>(in);
    if (n > 4096) throw format_error("checkpoint: implausible string length");
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw format_error("checkpoint: truncated string");
    return s;
}

inline void write_shape(std::ostream& out, const std::vector<std::int64_t>& shape) {
    write_pod(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) write_pod(out, static_cast<std::int64_t>(d));
}

inline std::vector<std::int64_t> read_shape(std::istream& in) {
    auto n = read_pod<std::uint32_t>(in);
    if (n > 8) throw format_error("checkpoint: implausible shape rank");
    std::vector<std::int64_t> s(n);
    for (auto& d : s) d = read_pod<std::int64_t>(in);
    return s;
}

inline void write_layer_descriptor(std::ostream& out, const Layer& l) {
    write_pod(out, static_cast<std::uint32_t>(l.kind));
    switch (l.kind) {
        case LayerKind::conv2d:
        case LayerKind::conv2d_transpose:
        case LayerKind::fully_connected:
            write_shape(out, l.w.shape);
            break;
        case LayerKind::batch_norm:
            write_pod(out, static_cast<std::uint32_t>(l.gamma_rr.size()));
            write_pod(out, l.bn_eps);
            write_pod(out, l.bn_momentum);
            break;
        case LayerKind::max_pool:
        case LayerKind::upsample:
            write_pod(out, static_cast<std::uint32_t>(l.window));
            break;
        case LayerKind::reshape:
            write_shape(out, l.out_tail);
            break;
        default:
            break;
    }
}

inline Layer read_layer_descriptor(std::istream& in) {
    Layer l;
    auto kind = read_pod<std::uint32_t>(in);
    if (kind > static_cast<std::uint32_t>(LayerKind::modulus))
        throw format_error("checkpoint: unknown layer kind");
    l.kind = static_cast<LayerKind>(kind);
    switch (l.kind) {
        case LayerKind::conv2d:
        case LayerKind::conv2d_transpose:
        case LayerKind::fully_connected: {
            std::vector<std::int64_t> ws = read_shape(in);
            l.w = CTensor(ws);
            std::int64_t bias_n = l.kind == LayerKind::fully_connected
                                      ? ws.at(0)
                                      : (l.kind == LayerKind::conv2d ? ws.at(0) : ws.at(1));
            l.bias = CTensor({bias_n});
            break;
        }
        case LayerKind::batch_norm: {
            auto c = read_pod<std::uint32_t>(in);
            l.bn_eps = read_pod<double>(in);
            l.bn_momentum = read_pod<double>(in);
            l.gamma_rr.assign(c, 0.0);
            l.gamma_ri.assign(c, 0.0);
            l.gamma_ii.assign(c, 0.0);
            l.beta = CTensor({static_cast<std::int64_t>(c)});
            l.run_mean_r.assign(c, 0.0);
            l.run_mean_i.assign(c, 0.0);
            l.run_vrr.assign(c, 0.0);
            l.run_vri.assign(c, 0.0);
            l.run_vii.assign(c, 0.0);
            break;
        }
        case LayerKind::max_pool:
        case LayerKind::upsample:
            l.window = static_cast<int>(read_pod<std::uint32_t>(in));
            break;
        case LayerKind::reshape:
            l.out_tail = read_shape(in);
            break;
        default:
            break;
    }
    return l;
}

inline void write_network_params(std::ostream& out, Network& net) {
    for (Layer& l : net.layers) {
        for_each_param_array(l.kind, l, [&](std::vector<double>& a) {
            out.write(reinterpret_cast<const char*>(a.data()),
                      static_cast<std::streamsize>(a.size() * sizeof(double)));
        });
        for_each_buffer_array(l, [&](std::vector<double>& a) {
            out.write(reinterpret_cast<const char*>(a.data()),
                      static_cast<std::streamsize>(a.size() * sizeof(double)));
        });
    }
}

inline void read_network_params(std::istream& in, Network& net) {
    for (Layer& l : net.layers) {
        for_each_param_array(l.kind, l, [&](std::vector<double>& a) {
            in.read(reinterpret_cast<char*>(a.data()),
                    static_cast<std::streamsize>(a.size() * sizeof(double)));
        });
        for_each_buffer_array(l, [&](std::vector<double>& a) {
            in.read(reinterpret_cast<char*>(a.data()),
                    static_cast<std::streamsize>(a.size() * sizeof(double)));
        });
        if (!in) throw format_error("checkpoint: truncated parameter block");
    }
}
}  // namespace detail

inline void save_checkpoint(ModelState& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.write(detail::kCheckpointMagic, 4);
    detail::write_pod(out, detail::kCheckpointVersion);
    detail::write_pod(out, static_cast<std::int32_t>(m.arch.n_qubits));
    detail::write_pod(out, static_cast<std::int32_t>(m.arch.dim));
    detail::write_pod(out, static_cast<std::int32_t>(m.arch.latent_dim));
    detail::write_string(out, m.arch.preset);
    detail::write_pod(out, m.weights.w1);
    detail::write_pod(out, m.weights.w2);
    detail::write_pod(out, m.weights.wa);
    detail::write_pod(out, static_cast<std::uint64_t>(m.step_count));
    Network* nets[4] = {&m.er, &m.eg, &m.gen, &m.dis};
    for (Network* net : nets) {
        detail::write_pod(out, static_cast<std::uint32_t>(net->layers.size()));
        for (const Layer& l : net->layers) detail::write_layer_descriptor(out, l);
    }
    for (Network* net : nets) detail::write_network_params(out, *net);
    if (!out) throw io_error("write failed: " + path);
}

inline ModelState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0)
        throw format_error("not a checkpoint file: " + path);
    auto version = detail::read_pod<std::uint32_t>(in);
    if (version != detail::kCheckpointVersion)
        throw std::invalid_argument("unsupported checkpoint version");
    ModelState m;
    m.arch.n_qubits = detail::read_pod<std::int32_t>(in);
    m.arch.dim = detail::read_pod<std::int32_t>(in);
    m.arch.latent_dim = detail::read_pod<std::int32_t>(in);
    m.arch.preset = detail::read_string(in);
    m.weights.w1 = detail::read_pod<double>(in);
    m.weights.w2 = detail::read_pod<double>(in);
    m.weights.wa = detail::read_pod<double>(in);
    m.step_count = static_cast<std::int64_t>(detail::read_pod<std::uint64_t>(in));
    Network* nets[4] = {&m.er, &m.eg, &m.gen, &m.dis};
    for (Network* net : nets) {
        auto count = detail::read_pod<std::uint32_t>(in);
        if (count > 1024) throw format_error("checkpoint: implausible layer count");
        net->layers.clear();
        for (std::uint32_t i = 0; i < count; ++i)
            net->layers.push_back(detail::read_layer_descriptor(in));
    }
    for (Network* net : nets) detail::read_network_params(in, *net);
    return m;
}

/// Loads and validates against an expected system size.
inline ModelState load_checkpoint(const std::string& path, int expected_n_qubits) {
    ModelState m = load_checkpoint(path);
    if (m.arch.n_qubits != expected_n_qubits)
        throw std::invalid_argument("checkpoint is for " + std::to_string(m.arch.n_qubits) +
                                    " qubits, expected " + std::to_string(expected_n_qubits));
    return m;
}

}  // namespace entwit
