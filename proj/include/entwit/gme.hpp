#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "entwit/parallel.hpp"
#include "entwit/qstate.hpp"
#include "entwit/rng.hpp"

namespace entwit {

/// Non-symmetric complex tensor with one index per mode, row-major
/// (last mode fastest).
struct OrderMTensor {
    std::vector<int> mode_dims;
    std::vector<std::complex<double>> entries;

    int order() const { return static_cast<int>(mode_dims.size()); }
    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int d : mode_dims) n *= d;
        return n;
    }
};

inline OrderMTensor tensor_from_pure_state(const PureState& psi) {
    OrderMTensor t;
    t.mode_dims.assign(psi.n_qubits, 2);
    t.entries.assign(psi.amp.data(), psi.amp.data() + psi.amp.size());
    return t;
}

inline double frobenius_norm(const OrderMTensor& a) {
    double s = 0.0;
    for (const auto& e : a.entries) s += std::norm(e);
    return std::sqrt(s);
}

namespace detail {
inline void check_blocks(const OrderMTensor& a, const std::vector<CVec>& blocks) {
    if (static_cast<int>(blocks.size()) != a.order())
        throw std::invalid_argument("block_contract: block count != tensor order");
    for (int i = 0; i < a.order(); ++i)
        if (blocks[i].size() != a.mode_dims[i])
            throw std::invalid_argument("block_contract: block length mismatch");
}
}  // namespace detail

/// f = Sum_J A[j1..jm] x^(1)_{j1} ... x^(m)_{jm}  (bilinear, no conjugation).
inline std::complex<double> block_contract(const OrderMTensor& a,
                                           const std::vector<CVec>& blocks) {
    detail::check_blocks(a, blocks);
    int m = a.order();
    std::complex<double> acc = 0.0;
    std::vector<int> idx(m, 0);
    for (std::int64_t flat = 0; flat < a.numel(); ++flat) {
        std::complex<double> prod = a.entries[flat];
        for (int i = 0; i < m; ++i) prod *= blocks[i](idx[i]);
        acc += prod;
        for (int i = m - 1; i >= 0; --i) {
            if (++idx[i] < a.mode_dims[i]) break;
            idx[i] = 0;
        }
    }
    return acc;
}

/// Partial derivative df/dx^(skip): contraction over every mode except `skip`.
inline CVec block_contract_skip(const OrderMTensor& a, const std::vector<CVec>& blocks,
                                int skip) {
    detail::check_blocks(a, blocks);
    int m = a.order();
    if (skip < 0 || skip >= m) throw std::invalid_argument("block_contract_skip: bad mode");
    CVec out = CVec::Zero(a.mode_dims[skip]);
    std::vector<int> idx(m, 0);
    for (std::int64_t flat = 0; flat < a.numel(); ++flat) {
        std::complex<double> prod = a.entries[flat];
        for (int i = 0; i < m; ++i)
            if (i != skip) prod *= blocks[i](idx[i]);
        out(idx[skip]) += prod;
        for (int i = m - 1; i >= 0; --i) {
            if (++idx[i] < a.mode_dims[i]) break;
            idx[i] = 0;
        }
    }
    return out;
}

namespace detail {
inline double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

inline std::vector<CVec> split_blocks(const OrderMTensor& a, const CVec& x) {
    std::int64_t n = 0;
    for (int d : a.mode_dims) n += d;
    if (x.size() != n) throw std::invalid_argument("sym_apply: stacked vector length mismatch");
    std::vector<CVec> blocks;
    blocks.reserve(a.mode_dims.size());
    Eigen::Index off = 0;
    for (int d : a.mode_dims) {
        blocks.push_back(x.segment(off, d));
        off += d;
    }
    return blocks;
}
}  // namespace detail

/// Action of the symmetric embedding without materializing it: block i of the
/// result is (m-1)! * df/dx^(i). The bilinear pairing <x, sym_apply(A,x)>
/// equals m! * f(x); the m=2 case reproduces [[0,A],[A^T,0]] exactly.
inline CVec sym_apply(const OrderMTensor& a, const CVec& x) {
    std::vector<CVec> blocks = detail::split_blocks(a, x);
    int m = a.order();
    double w = detail::factorial(m - 1);
    CVec out(x.size());
    Eigen::Index off = 0;
    for (int i = 0; i < m; ++i) {
        out.segment(off, a.mode_dims[i]) = w * block_contract_skip(a, blocks, i);
        off += a.mode_dims[i];
    }
    return out;
}

/// lambda = S* x^m = m! * Sum_J conj(A_J) x^(1)_{j1} ... x^(m)_{jm}.
inline std::complex<double> sym_conj_contract(const OrderMTensor& a, const CVec& x) {
    std::vector<CVec> blocks = detail::split_blocks(a, x);
    int m = a.order();
    std::complex<double> acc = 0.0;
    std::vector<int> idx(m, 0);
    for (std::int64_t flat = 0; flat < a.numel(); ++flat) {
        std::complex<double> prod = std::conj(a.entries[flat]);
        for (int i = 0; i < m; ++i) prod *= blocks[i](idx[i]);
        acc += prod;
        for (int i = m - 1; i >= 0; --i) {
            if (++idx[i] < a.mode_dims[i]) break;
            idx[i] = 0;
        }
    }
    return detail::factorial(m) * acc;
}

struct UEigenpairOptions {
    double alpha_s = 1.0;   // positive shift keeping |lambda_k| monotone
    double tol = 1e-10;     // stop when |lambda_k - lambda_{k-1}| < tol
    int max_iter = 2000;
};

/// Unitary eigenpair of A: lambda_A is the largest product-state overlap found
/// from this start; block_vectors are the unit product factors.
struct UEigenpair {
    double lambda_a = 0.0;
    double lambda_s = 0.0;
    std::vector<CVec> block_vectors;
    int iterations = 0;
    bool converged = false;
    std::vector<double> lambda_history;  // |lambda_k| per iteration
};

/// Shifted power iteration on the implicit symmetric embedding:
///   x_hat_k = lambda_{k-1} * sym_apply(A, conj(x_{k-1})) + alpha_s * x_{k-1}.
inline UEigenpair u_eigenpair(const OrderMTensor& a, const UEigenpairOptions& opts, Rng& rng) {
    if (opts.alpha_s <= 0.0) throw std::invalid_argument("u_eigenpair: alpha_s must be > 0");
    int m = a.order();
    std::int64_t n = 0;
    for (int d : a.mode_dims) n += d;

    CVec x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = rng.complex_gaussian();
    x /= x.norm();

    std::complex<double> lambda = sym_conj_contract(a, x);
    UEigenpair res;
    res.lambda_history.reserve(std::min(opts.max_iter, 256));
    res.lambda_history.push_back(std::abs(lambda));
    // convergence must be sustained so the recorded |lambda| tail is flat to
    // within the tolerance, not just the final step
    int settled = 0;
    for (int k = 1; k <= opts.max_iter; ++k) {
        CVec xhat = lambda * sym_apply(a, x.conjugate()) + opts.alpha_s * x;
        double norm = xhat.norm();
        if (norm == 0.0) break;  // degenerate start; caller restarts
        x = xhat / norm;
        std::complex<double> next = sym_conj_contract(a, x);
        res.lambda_history.push_back(std::abs(next));
        res.iterations = k;
        settled = std::abs(next - lambda) < opts.tol ? settled + 1 : 0;
        lambda = next;
        if (settled >= 10) {
            res.converged = true;
            break;
        }
    }

    res.lambda_s = std::abs(lambda);
    double root_m = std::pow(std::sqrt(static_cast<double>(m)), m);
    res.lambda_a = root_m / detail::factorial(m) * res.lambda_s;

    // phase-correct so the contraction is real positive, then scale blocks to
    // unit norm (the returned U-eigenvector carries a sqrt(m) factor per block)
    std::complex<double> phase(1.0, 0.0);
    if (res.lambda_s > 0.0)
        phase = std::pow(std::complex<double>(res.lambda_s, 0.0) / lambda,
                         1.0 / static_cast<double>(m));
    CVec xc = phase * x;
    std::vector<CVec> blocks = detail::split_blocks(a, xc);
    for (auto& blk : blocks) {
        double bn = blk.norm();
        if (bn > 0.0) blk /= bn;
    }
    res.block_vectors = std::move(blocks);
    return res;
}

struct GmeResult {
    double lambda_a = 0.0;  // max over restarts
    bool entangled = false;
    int best_restart = -1;
};

/// Labels a pure state by the largest product overlap over several restarts:
/// entangled iff max lambda_A < 1 - epsilon.
inline GmeResult gme_label(const PureState& psi, int restarts = 20, double epsilon = 1e-4,
                           std::uint64_t seed = 12345,
                           const UEigenpairOptions& opts = UEigenpairOptions{}) {
    if (psi.amp.size() != (Eigen::Index{1} << psi.n_qubits))
        throw std::invalid_argument("gme_label: amplitude length != 2^n_qubits");
    if (restarts < 1) throw std::invalid_argument("gme_label: restarts must be >= 1");
    OrderMTensor a = tensor_from_pure_state(psi);

    std::vector<UEigenpair> runs(restarts);
    parallel_for(restarts, [&](std::int64_t r) {
        Rng rng(derived_seed(seed, static_cast<std::uint64_t>(r)));
        runs[r] = u_eigenpair(a, opts, rng);
    });

    GmeResult out;
    bool any_converged = false;
    for (int r = 0; r < restarts; ++r) {
        if (!runs[r].converged) continue;
        any_converged = true;
        if (out.best_restart < 0 || runs[r].lambda_a > out.lambda_a) {
            out.lambda_a = runs[r].lambda_a;
            out.best_restart = r;
        }
    }
    if (!any_converged) throw std::runtime_error("gme_label: no restart converged");
    out.entangled = out.lambda_a < 1.0 - epsilon;
    return out;
}

}  // namespace entwit
