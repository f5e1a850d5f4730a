#pragma once

#include <array>
#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "entwit/errors.hpp"
#include "entwit/gme.hpp"
#include "entwit/parallel.hpp"
#include "entwit/qstate.hpp"
#include "entwit/rng.hpp"
#include "entwit/serial.hpp"
#include "entwit/tensor.hpp"

namespace entwit {

/// Record labels. 0 marks the normal (training) class.
enum class SampleLabel : std::uint8_t {
    separable = 0,
    entangled = 1,
    bisep_a_bc = 2,
    bisep_b_ac = 3,
    bisep_c_ab = 4,
};

/// Fixed-stride binary container: header, then count records of dim*dim
/// complex entries (row-major re,im float64 pairs) plus an optional label
/// byte. Magic "QSDM", version 1.
struct Dataset {
    std::uint32_t dim = 0;
    bool labeled = false;
    std::vector<std::complex<double>> data;  // count * dim * dim
    std::vector<std::uint8_t> labels;        // count when labeled

    std::int64_t count() const {
        return dim == 0 ? 0
                        : static_cast<std::int64_t>(data.size()) /
                              (static_cast<std::int64_t>(dim) * dim);
    }

    CMat record(std::int64_t i) const {
        std::int64_t d = dim;
        CMat m(d, d);
        const std::complex<double>* p = data.data() + i * d * d;
        for (std::int64_t r = 0; r < d; ++r)
            for (std::int64_t c = 0; c < d; ++c) m(r, c) = p[r * d + c];
        return m;
    }

    /// (B,1,d,d) network input built from the given record indices.
    CTensor batch(const std::vector<std::int64_t>& indices) const {
        std::int64_t d = dim;
        CTensor t({static_cast<std::int64_t>(indices.size()), 1, d, d});
        for (std::size_t b = 0; b < indices.size(); ++b) {
            const std::complex<double>* p = data.data() + indices[b] * d * d;
            std::int64_t off = static_cast<std::int64_t>(b) * d * d;
            for (std::int64_t i = 0; i < d * d; ++i) {
                t.re[off + i] = p[i].real();
                t.im[off + i] = p[i].imag();
            }
        }
        return t;
    }
};

namespace detail {
constexpr char kDatasetMagic[4] = {'Q', 'S', 'D', 'M'};
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace detail

inline void write_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.write(detail::kDatasetMagic, 4);
    detail::write_pod(out, detail::kDatasetVersion);
    detail::write_pod(out, ds.dim);
    detail::write_pod(out, static_cast<std::uint64_t>(ds.count()));
    detail::write_pod(out, static_cast<std::uint32_t>(ds.labeled ? 1 : 0));
    std::int64_t stride = static_cast<std::int64_t>(ds.dim) * ds.dim;
    for (std::int64_t i = 0; i < ds.count(); ++i) {
        out.write(reinterpret_cast<const char*>(ds.data.data() + i * stride),
                  stride * static_cast<std::int64_t>(sizeof(std::complex<double>)));
        if (ds.labeled) detail::write_pod(out, ds.labels[i]);
    }
    if (!out) throw io_error("write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, detail::kDatasetMagic, 4) != 0)
        throw format_error("not a dataset file: " + path);
    auto version = detail::read_pod<std::uint32_t>(in);
    if (version != detail::kDatasetVersion)
        throw std::invalid_argument("unsupported dataset version");
    Dataset ds;
    ds.dim = detail::read_pod<std::uint32_t>(in);
    auto count = detail::read_pod<std::uint64_t>(in);
    auto flags = detail::read_pod<std::uint32_t>(in);
    ds.labeled = (flags & 1u) != 0;
    if (ds.dim == 0) throw format_error("dataset with dim 0");
    std::int64_t stride = static_cast<std::int64_t>(ds.dim) * ds.dim;
    ds.data.resize(static_cast<std::size_t>(count) * stride);
    if (ds.labeled) ds.labels.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(ds.data.data() + i * stride),
                stride * static_cast<std::int64_t>(sizeof(std::complex<double>)));
        if (!in) throw format_error("truncated record in " + path);
        if (ds.labeled) ds.labels[i] = detail::read_pod<std::uint8_t>(in);
    }
    return ds;
}

// ---- generation ----

enum class DatasetKind {
    separable_2q,
    separable_3q,
    biseparable,
    bipartition_mixture,
    product_pure,
    entangled_2q,
    entangled_pure,
};

inline DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "separable_2q") return DatasetKind::separable_2q;
    if (s == "separable_3q") return DatasetKind::separable_3q;
    if (s == "biseparable") return DatasetKind::biseparable;
    if (s == "bipartition_mixture") return DatasetKind::bipartition_mixture;
    if (s == "product_pure") return DatasetKind::product_pure;
    if (s == "entangled_2q") return DatasetKind::entangled_2q;
    if (s == "entangled_pure") return DatasetKind::entangled_pure;
    throw std::invalid_argument("unknown dataset kind: " + s);
}

struct GenOptions {
    int n_qubits = 2;               // pure-state kinds
    std::array<int, 2> block = {1, 2};  // biseparable: entangled pair, 0-indexed
    int max_terms = 20;             // mixture length upper bound
    int gme_restarts = 20;
    double gme_epsilon = 1e-4;
};

namespace detail {

inline SampleLabel bisep_label(std::array<int, 2> block) {
    int a = std::min(block[0], block[1]), b = std::max(block[0], block[1]);
    if (a == 1 && b == 2) return SampleLabel::bisep_a_bc;
    if (a == 0 && b == 2) return SampleLabel::bisep_b_ac;
    if (a == 0 && b == 1) return SampleLabel::bisep_c_ab;
    throw std::invalid_argument("biseparable: block must name two distinct qubits of three");
}

inline DensityMatrix generate_one(DatasetKind kind, const GenOptions& opt, Rng& rng,
                                  SampleLabel& label) {
    switch (kind) {
        case DatasetKind::separable_2q:
            label = SampleLabel::separable;
            return separable_mixed_state(random_mixture_spec({2, 2}, rng, opt.max_terms), rng);
        case DatasetKind::separable_3q:
            label = SampleLabel::separable;
            return separable_mixed_state(random_mixture_spec({2, 2, 2}, rng, opt.max_terms), rng);
        case DatasetKind::biseparable: {
            label = bisep_label(opt.block);
            MixtureSpec spec = random_mixture_spec({2, 2, 2}, rng, opt.max_terms);
            return biseparable_state({2, 2, 2}, opt.block, spec, rng);
        }
        case DatasetKind::bipartition_mixture: {
            label = SampleLabel::separable;
            std::array<MixtureSpec, 3> parts = {random_mixture_spec({2, 2, 2}, rng, opt.max_terms),
                                                random_mixture_spec({2, 2, 2}, rng, opt.max_terms),
                                                random_mixture_spec({2, 2, 2}, rng, opt.max_terms)};
            std::vector<double> w = rng.dirichlet(3);
            return mixture_of_bipartitions({2, 2, 2}, parts, {w[0], w[1], w[2]}, rng);
        }
        case DatasetKind::product_pure:
            label = SampleLabel::separable;
            return projector(random_pure_product_state(opt.n_qubits, rng));
        case DatasetKind::entangled_2q:
            label = SampleLabel::entangled;
            return sample_entangled_2qubit(rng);
        case DatasetKind::entangled_pure: {
            label = SampleLabel::entangled;
            for (int attempt = 0; attempt < 1000; ++attempt) {
                PureState psi = random_pure_state(opt.n_qubits, rng);
                GmeResult res = gme_label(psi, opt.gme_restarts, opt.gme_epsilon, rng.next_u64());
                if (res.entangled) return projector(psi);
            }
            throw std::runtime_error("entangled_pure: rejection sampling stalled");
        }
    }
    throw std::logic_error("generate_one: unknown kind");
}

}  // namespace detail

/// Generates `count` records with per-sample derived seeds (base + index), so
/// parallel and serial runs produce bit-identical datasets.
inline Dataset generate_dataset(DatasetKind kind, std::int64_t count, std::uint64_t seed,
                                const GenOptions& opt = GenOptions{}) {
    if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
    int dim;
    switch (kind) {
        case DatasetKind::separable_2q:
        case DatasetKind::entangled_2q:
            dim = 4;
            break;
        case DatasetKind::separable_3q:
        case DatasetKind::biseparable:
        case DatasetKind::bipartition_mixture:
            dim = 8;
            break;
        case DatasetKind::product_pure:
        case DatasetKind::entangled_pure:
            if (opt.n_qubits < 1) throw std::invalid_argument("generate_dataset: n_qubits < 1");
            dim = 1 << opt.n_qubits;
            break;
        default:
            throw std::logic_error("generate_dataset: unknown kind");
    }
    if (kind == DatasetKind::biseparable) detail::bisep_label(opt.block);  // validate now

    Dataset ds;
    ds.dim = static_cast<std::uint32_t>(dim);
    ds.labeled = true;
    std::int64_t stride = static_cast<std::int64_t>(dim) * dim;
    ds.data.resize(static_cast<std::size_t>(count * stride));
    ds.labels.resize(count);
    parallel_for(count, [&](std::int64_t i) {
        Rng rng(derived_seed(seed, static_cast<std::uint64_t>(i)));
        SampleLabel label;
        DensityMatrix rho = detail::generate_one(kind, opt, rng, label);
        std::complex<double>* p = ds.data.data() + i * stride;
        for (int r = 0; r < dim; ++r)
            for (int c = 0; c < dim; ++c) p[r * dim + c] = rho.mat(r, c);
        ds.labels[i] = static_cast<std::uint8_t>(label);
    });
    return ds;
}

inline Dataset generate_dataset_file(DatasetKind kind, std::int64_t count, std::uint64_t seed,
                                     const std::string& out_path,
                                     const GenOptions& opt = GenOptions{}) {
    Dataset ds = generate_dataset(kind, count, seed, opt);
    write_dataset(out_path, ds);
    return ds;
}

}  // namespace entwit
