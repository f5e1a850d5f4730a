#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "entwit/rng.hpp"

namespace entwit {

using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

/// d x d Hermitian, positive semidefinite, unit-trace complex matrix.
struct DensityMatrix {
    CMat mat;
    Eigen::Index dim() const { return mat.rows(); }
};

/// Unit-norm amplitude vector over n qubits.
struct PureState {
    int n_qubits = 0;
    CVec amp;
};

/// Convex mixture recipe: m product terms over the given subsystem factors.
struct MixtureSpec {
    std::vector<int> subsystem_dims;
    int n_terms = 1;
    std::vector<double> weights;  // size n_terms, non-negative, sums to 1
};

inline void validate_mixture_spec(const MixtureSpec& spec) {
    if (spec.subsystem_dims.empty())
        throw std::invalid_argument("MixtureSpec: no subsystems");
    for (int d : spec.subsystem_dims)
        if (d < 1) throw std::invalid_argument("MixtureSpec: subsystem dim < 1");
    if (spec.n_terms < 1 || static_cast<int>(spec.weights.size()) != spec.n_terms)
        throw std::invalid_argument("MixtureSpec: weight count != n_terms");
    double sum = 0.0;
    for (double w : spec.weights) {
        if (w < 0.0 || w > 1.0) throw std::invalid_argument("MixtureSpec: weight outside [0,1]");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("MixtureSpec: weights do not sum to 1");
}

/// Draws a MixtureSpec with m ~ U{1..max_terms} and flat-Dirichlet weights.
inline MixtureSpec random_mixture_spec(std::vector<int> subsystem_dims, Rng& rng,
                                       int max_terms = 20) {
    MixtureSpec spec;
    spec.subsystem_dims = std::move(subsystem_dims);
    spec.n_terms = rng.uniform_int(1, max_terms);
    spec.weights = rng.dirichlet(spec.n_terms);
    return spec;
}

inline CMat kron(const CMat& a, const CMat& b) {
    if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("kron: empty operand");
    CMat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline CVec kron(const CVec& a, const CVec& b) {
    CVec out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i)
        out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

/// rho = H H^dagger / tr(H H^dagger); exposed for injection in tests.
inline DensityMatrix density_from_factor(const CMat& h) {
    CMat hh = h * h.adjoint();
    std::complex<double> tr = hh.trace();
    if (std::abs(tr) == 0.0) throw std::invalid_argument("density_from_factor: zero trace");
    return {hh / tr.real()};
}

/// Full-rank state from the Ginibre construction.
inline DensityMatrix random_density_matrix(int dim, Rng& rng) {
    if (dim < 1) throw std::invalid_argument("random_density_matrix: dim must be >= 1");
    CMat h(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) h(i, j) = rng.complex_gaussian();
    return density_from_factor(h);
}

/// Sum_i w_i * kron-chain of factors[i]; w and per-term factor lists supplied.
inline DensityMatrix mixture_from_terms(const std::vector<double>& weights,
                                        const std::vector<std::vector<CMat>>& factors) {
    if (weights.empty() || weights.size() != factors.size())
        throw std::invalid_argument("mixture_from_terms: size mismatch");
    CMat acc;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        CMat term = factors[i][0];
        for (std::size_t j = 1; j < factors[i].size(); ++j) term = kron(term, factors[i][j]);
        if (i == 0)
            acc = weights[i] * term;
        else
            acc += weights[i] * term;
    }
    return {acc};
}

/// Fully-separable mixed state: Sum_i lambda_i rho^1_i x ... x rho^n_i.
inline DensityMatrix separable_mixed_state(const MixtureSpec& spec, Rng& rng) {
    validate_mixture_spec(spec);
    std::vector<std::vector<CMat>> factors(spec.n_terms);
    for (int i = 0; i < spec.n_terms; ++i) {
        factors[i].reserve(spec.subsystem_dims.size());
        for (int d : spec.subsystem_dims) factors[i].push_back(random_density_matrix(d, rng).mat);
    }
    return mixture_from_terms(spec.weights, factors);
}

/// Reorders tensor factors: subsystem at position p of the input occupies
/// position perm[p] of the output.
inline CMat permute_subsystems(const CMat& m, const std::vector<int>& dims,
                               const std::vector<int>& perm) {
    Eigen::Index total = 1;
    for (int d : dims) total *= d;
    if (m.rows() != total || m.cols() != total || perm.size() != dims.size())
        throw std::invalid_argument("permute_subsystems: dimension mismatch");
    int n = static_cast<int>(dims.size());
    std::vector<int> out_dims(n);
    for (int p = 0; p < n; ++p) out_dims[perm[p]] = dims[p];
    // strides of each subsystem index within the row/col offsets
    std::vector<Eigen::Index> in_stride(n, 1), out_stride(n, 1);
    for (int p = n - 2; p >= 0; --p) in_stride[p] = in_stride[p + 1] * dims[p + 1];
    for (int p = n - 2; p >= 0; --p) out_stride[p] = out_stride[p + 1] * out_dims[p + 1];
    CMat out(total, total);
    std::vector<int> ri(n, 0), ci(n, 0);
    for (Eigen::Index r = 0; r < total; ++r) {
        Eigen::Index rem = r;
        for (int p = 0; p < n; ++p) {
            ri[p] = static_cast<int>(rem / in_stride[p]);
            rem %= in_stride[p];
        }
        Eigen::Index ro = 0;
        for (int p = 0; p < n; ++p) ro += ri[p] * out_stride[perm[p]];
        for (Eigen::Index c = 0; c < total; ++c) {
            rem = c;
            for (int p = 0; p < n; ++p) {
                ci[p] = static_cast<int>(rem / in_stride[p]);
                rem %= in_stride[p];
            }
            Eigen::Index co = 0;
            for (int p = 0; p < n; ++p) co += ci[p] * out_stride[perm[p]];
            out(ro, co) = m(r, c);
        }
    }
    return out;
}

/// Transposes the named tensor factors of rho.
inline CMat partial_transpose(const CMat& rho, const std::vector<int>& dims,
                              const std::vector<int>& transposed_set) {
    Eigen::Index total = 1;
    for (int d : dims) {
        if (d < 1) throw std::invalid_argument("partial_transpose: subsystem dim < 1");
        total *= d;
    }
    if (rho.rows() != total || rho.cols() != total)
        throw std::invalid_argument("partial_transpose: dims do not match matrix size");
    int n = static_cast<int>(dims.size());
    std::vector<bool> flip(n, false);
    for (int s : transposed_set) {
        if (s < 0 || s >= n) throw std::invalid_argument("partial_transpose: bad subsystem index");
        flip[s] = true;
    }
    std::vector<Eigen::Index> stride(n, 1);
    for (int p = n - 2; p >= 0; --p) stride[p] = stride[p + 1] * dims[p + 1];
    CMat out(total, total);
    std::vector<int> ri(n), ci(n);
    for (Eigen::Index r = 0; r < total; ++r) {
        Eigen::Index rem = r;
        for (int p = 0; p < n; ++p) {
            ri[p] = static_cast<int>(rem / stride[p]);
            rem %= stride[p];
        }
        for (Eigen::Index c = 0; c < total; ++c) {
            rem = c;
            for (int p = 0; p < n; ++p) {
                ci[p] = static_cast<int>(rem / stride[p]);
                rem %= stride[p];
            }
            Eigen::Index ro = 0, co = 0;
            for (int p = 0; p < n; ++p) {
                int rr = flip[p] ? ci[p] : ri[p];
                int cc = flip[p] ? ri[p] : ci[p];
                ro += rr * stride[p];
                co += cc * stride[p];
            }
            out(ro, co) = rho(r, c);
        }
    }
    return out;
}

inline double min_eigenvalue_hermitian(const CMat& m) {
    CMat h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<CMat> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

constexpr double kPptTolerance = -1e-10;

/// True iff the partial transpose over `cut` has no eigenvalue below -1e-10.
inline bool is_ppt(const CMat& rho, const std::vector<int>& dims, const std::vector<int>& cut) {
    return min_eigenvalue_hermitian(partial_transpose(rho, dims, cut)) >= kPptTolerance;
}

/// Bi-separable state: the two subsystems in `entangled_block` are merged into
/// one factor drawn NPT (entangled), the rest are independent single factors.
/// Factors are built in layout order [spectators..., merged pair], then the
/// subsystems are permuted back to their input positions.
inline DensityMatrix biseparable_state(const std::vector<int>& subsystem_dims,
                                       std::array<int, 2> entangled_block,
                                       const MixtureSpec& spec, Rng& rng) {
    int n = static_cast<int>(subsystem_dims.size());
    int a = entangled_block[0], b = entangled_block[1];
    if (a < 0 || b < 0 || a >= n || b >= n || a == b)
        throw std::invalid_argument("biseparable_state: bad block indices");
    if (a > b) std::swap(a, b);
    if (spec.n_terms < 1 || static_cast<int>(spec.weights.size()) != spec.n_terms)
        throw std::invalid_argument("biseparable_state: bad mixture spec");

    std::vector<int> spectators;
    for (int p = 0; p < n; ++p)
        if (p != a && p != b) spectators.push_back(p);
    int pair_dim = subsystem_dims[a] * subsystem_dims[b];

    std::vector<std::vector<CMat>> factors(spec.n_terms);
    for (int i = 0; i < spec.n_terms; ++i) {
        for (int p : spectators) factors[i].push_back(random_density_matrix(subsystem_dims[p], rng).mat);
        // rejection-sample the merged factor until its internal cut is NPT
        std::vector<int> pair_dims = {subsystem_dims[a], subsystem_dims[b]};
        CMat pair;
        int attempts = 0;
        do {
            pair = random_density_matrix(pair_dim, rng).mat;
            if (++attempts > 1000000)
                throw std::runtime_error("biseparable_state: NPT rejection sampling stalled");
        } while (is_ppt(pair, pair_dims, {0}));
        factors[i].push_back(pair);
    }
    DensityMatrix layout = mixture_from_terms(spec.weights, factors);

    // layout qubit order: spectators (original order), then a, then b
    std::vector<int> layout_order = spectators;
    layout_order.push_back(a);
    layout_order.push_back(b);
    bool identity = true;
    for (int p = 0; p < n; ++p) identity &= (layout_order[p] == p);
    if (identity) return layout;
    std::vector<int> layout_dims(n);
    for (int p = 0; p < n; ++p) layout_dims[p] = subsystem_dims[layout_order[p]];
    return {permute_subsystems(layout.mat, layout_dims, layout_order)};
}

/// Convex combination of the three bi-separable families of a 3-party system.
/// part_weights orders the families as A|BC, B|AC, C|AB.
inline DensityMatrix mixture_of_bipartitions(const std::vector<int>& subsystem_dims,
                                             const std::array<MixtureSpec, 3>& part_specs,
                                             const std::array<double, 3>& part_weights,
                                             Rng& rng) {
    if (subsystem_dims.size() != 3)
        throw std::invalid_argument("mixture_of_bipartitions: needs exactly 3 subsystems");
    double sum = part_weights[0] + part_weights[1] + part_weights[2];
    if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("mixture_of_bipartitions: weights do not sum to 1");
    static constexpr std::array<std::array<int, 2>, 3> kBlocks = {{{1, 2}, {0, 2}, {0, 1}}};
    CMat acc;
    bool first = true;
    for (int k = 0; k < 3; ++k) {
        if (part_weights[k] == 0.0) continue;
        DensityMatrix part = biseparable_state(subsystem_dims, kBlocks[k], part_specs[k], rng);
        if (first) {
            acc = part_weights[k] * part.mat;
            first = false;
        } else {
            acc += part_weights[k] * part.mat;
        }
    }
    if (first) throw std::invalid_argument("mixture_of_bipartitions: all weights zero");
    return {acc};
}

inline CVec random_unit_vector(int dim, Rng& rng) {
    CVec v(dim);
    for (int i = 0; i < dim; ++i) v(i) = rng.complex_gaussian();
    double norm = v.norm();
    if (norm == 0.0) return random_unit_vector(dim, rng);
    return v / norm;
}

/// Kronecker product of independently drawn single-qubit unit vectors.
inline PureState random_pure_product_state(int n_qubits, Rng& rng) {
    if (n_qubits < 1) throw std::invalid_argument("random_pure_product_state: n_qubits < 1");
    CVec amp = random_unit_vector(2, rng);
    for (int q = 1; q < n_qubits; ++q) amp = kron(amp, random_unit_vector(2, rng));
    return {n_qubits, amp};
}

/// Normalized complex Gaussian vector (Haar-distributed direction).
inline PureState random_pure_state(int n_qubits, Rng& rng) {
    if (n_qubits < 1) throw std::invalid_argument("random_pure_state: n_qubits < 1");
    return {n_qubits, random_unit_vector(1 << n_qubits, rng)};
}

inline DensityMatrix projector(const PureState& psi) {
    return {psi.amp * psi.amp.adjoint()};
}

/// Rejection-samples 4x4 Ginibre states until one is NPT across the 1|2 cut.
/// For two qubits NPT is exactly entanglement.
inline DensityMatrix sample_entangled_2qubit(Rng& rng, std::int64_t* attempts_out = nullptr) {
    static const std::vector<int> dims = {2, 2};
    for (std::int64_t attempt = 1; attempt <= 1000000; ++attempt) {
        DensityMatrix rho = random_density_matrix(4, rng);
        if (!is_ppt(rho.mat, dims, {1})) {
            if (attempts_out) *attempts_out = attempt;
            return rho;
        }
    }
    throw std::runtime_error("sample_entangled_2qubit: rejection loop exceeded 1e6 attempts");
}

/// Invariant checks used by generators' consumers and tests.
inline bool is_valid_density(const CMat& m, double herm_tol = 1e-12, double trace_tol = 1e-10,
                             double psd_tol = -1e-10) {
    if (m.rows() != m.cols() || m.rows() < 1) return false;
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > herm_tol) return false;
    if (std::abs(m.trace() - std::complex<double>(1.0, 0.0)) > trace_tol) return false;
    return min_eigenvalue_hermitian(m) >= psd_tol;
}

}  // namespace entwit
