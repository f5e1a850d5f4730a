#include <catch2/catch_amalgamated.hpp>

#include <Eigen/SVD>
#include <complex>
#include <vector>

#include "entwit/gme.hpp"
#include "entwit/qstate.hpp"
#include "gme_oracle.hpp"
#include "test_support.hpp"

using namespace entwit;
using std::complex;
using testsup::bell_phi_plus;
using testsup::brute_force_product_overlap;
using testsup::ghz3;
using testsup::w3;

namespace {

OrderMTensor tensor_from_amp(const CVec& amp, int n_qubits) {
    PureState psi{n_qubits, amp};
    return tensor_from_pure_state(psi);
}

}  // namespace

TEST_CASE("block_contract of an outer product of real unit blocks is 1") {
    Rng rng(3);
    std::vector<CVec> blocks;
    for (int i = 0; i < 3; ++i) {
        CVec v(2);
        v(0) = rng.gaussian();
        v(1) = rng.gaussian();
        v /= v.norm();
        blocks.push_back(v);
    }
    OrderMTensor a;
    a.mode_dims = {2, 2, 2};
    a.entries.resize(8);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                a.entries[4 * i + 2 * j + k] = blocks[0](i) * blocks[1](j) * blocks[2](k);
    REQUIRE(std::abs(block_contract(a, blocks) - complex<double>(1.0)) < 1e-12);
}

TEST_CASE("block_contract picks out a single entry") {
    OrderMTensor a;
    a.mode_dims = {2, 2};
    a.entries = {0.0, 1.0, 0.0, 0.0};  // A[0][1] = 1
    CVec e0 = CVec::Zero(2), e1 = CVec::Zero(2);
    e0(0) = 1.0;
    e1(1) = 1.0;
    REQUIRE(std::abs(block_contract(a, {e0, e1}) - complex<double>(1.0)) < 1e-15);
}

TEST_CASE("block_contract rejects mismatched block lengths") {
    OrderMTensor a;
    a.mode_dims = {2, 2};
    a.entries.assign(4, 1.0);
    CVec v2 = CVec::Ones(2), v3 = CVec::Ones(3);
    REQUIRE_THROWS_AS(block_contract(a, {v2, v3}), std::invalid_argument);
    REQUIRE_THROWS_AS(block_contract_skip(a, {v2, v3}, 0), std::invalid_argument);
}

TEST_CASE("skip-mode contraction matches finite differences of f") {
    Rng rng(7);
    OrderMTensor a;
    a.mode_dims = {2, 3, 2};
    a.entries.resize(12);
    for (auto& e : a.entries) e = rng.complex_gaussian();
    std::vector<CVec> blocks;
    for (int d : a.mode_dims) blocks.push_back(random_unit_vector(d, rng));

    const double h = 1e-6;
    for (int mode = 0; mode < 3; ++mode) {
        CVec grad = block_contract_skip(a, blocks, mode);
        for (int j = 0; j < a.mode_dims[mode]; ++j) {
            auto plus = blocks, minus = blocks;
            plus[mode](j) += h;
            minus[mode](j) -= h;
            complex<double> fd = (block_contract(a, plus) - block_contract(a, minus)) / (2.0 * h);
            REQUIRE(std::abs(fd - grad(j)) < 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("sym_apply on a matrix reproduces [[0,A],[A^T,0]]") {
    Rng rng(11);
    OrderMTensor a;
    a.mode_dims = {2, 2};
    a.entries.resize(4);
    for (auto& e : a.entries) e = rng.complex_gaussian();
    CMat am(2, 2);
    am(0, 0) = a.entries[0];
    am(0, 1) = a.entries[1];
    am(1, 0) = a.entries[2];
    am(1, 1) = a.entries[3];

    CVec x(4);
    for (int i = 0; i < 4; ++i) x(i) = rng.complex_gaussian();
    CVec y = sym_apply(a, x);
    CVec u = x.segment(0, 2), v = x.segment(2, 2);
    CVec expect(4);
    expect.segment(0, 2) = am * v;
    expect.segment(2, 2) = am.transpose() * u;
    REQUIRE((y - expect).norm() < 1e-12);
}

TEST_CASE("sym_apply fixed point on an outer product of real unit blocks") {
    Rng rng(13);
    std::vector<CVec> blocks;
    for (int i = 0; i < 3; ++i) {
        CVec v(2);
        v(0) = rng.gaussian();
        v(1) = rng.gaussian();
        v /= v.norm();
        blocks.push_back(v);
    }
    OrderMTensor a;
    a.mode_dims = {2, 2, 2};
    a.entries.resize(8);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                a.entries[4 * i + 2 * j + k] = blocks[0](i) * blocks[1](j) * blocks[2](k);
    CVec x(6);
    x << blocks[0], blocks[1], blocks[2];
    CVec y = sym_apply(a, x);
    double fact2 = 2.0;  // (m-1)! with m = 3
    for (int i = 0; i < 3; ++i)
        REQUIRE((y.segment(2 * i, 2) - fact2 * blocks[i]).norm() < 1e-12);
}

TEST_CASE("bilinear pairing identity <x, sym_apply(A,x)> = m! f(x)") {
    Rng rng(17);
    OrderMTensor a;
    a.mode_dims = {2, 2, 2};
    a.entries.resize(8);
    for (auto& e : a.entries) e = rng.complex_gaussian();
    CVec x(6);
    for (int i = 0; i < 6; ++i) x(i) = rng.complex_gaussian();
    std::vector<CVec> blocks = {x.segment(0, 2), x.segment(2, 2), x.segment(4, 2)};
    complex<double> lhs = (x.transpose() * sym_apply(a, x)).value();
    complex<double> rhs = 6.0 * block_contract(a, blocks);
    REQUIRE(std::abs(lhs - rhs) < 1e-10);
}

TEST_CASE("u_eigenpair rejects non-positive alpha") {
    Rng rng(1);
    OrderMTensor a = tensor_from_amp(bell_phi_plus(), 2);
    UEigenpairOptions opts;
    opts.alpha_s = 0.0;
    REQUIRE_THROWS_AS(u_eigenpair(a, opts, rng), std::invalid_argument);
}

TEST_CASE("product basis state has unit overlap") {
    CVec amp = CVec::Zero(4);
    amp(0) = 1.0;  // |00>
    GmeResult res = gme_label({2, amp}, 10, 1e-4, 7);
    REQUIRE(std::abs(res.lambda_a - 1.0) < 1e-8);
    REQUIRE(!res.entangled);
}

TEST_CASE("Bell state overlap is 1/sqrt(2)") {
    const double expect = 0.7071067811865476;
    GmeResult res = gme_label({2, bell_phi_plus()}, 20, 1e-4, 7);
    REQUIRE(std::abs(res.lambda_a - expect) < 1e-6);
    REQUIRE(res.entangled);

    OrderMTensor a = tensor_from_amp(bell_phi_plus(), 2);
    Rng rng(5);
    double oracle = brute_force_product_overlap(a.entries, a.mode_dims, 2000, 100, rng);
    REQUIRE(std::abs(res.lambda_a - oracle) < 1e-4);
}

TEST_CASE("GHZ3 overlap is 1/sqrt(2)") {
    const double expect = 0.7071067811865476;
    GmeResult res = gme_label({3, ghz3()}, 20, 1e-4, 7);
    REQUIRE(std::abs(res.lambda_a - expect) < 1e-4);
    REQUIRE(res.entangled);
}

TEST_CASE("W3 overlap is 2/3") {
    GmeResult res = gme_label({3, w3()}, 20, 1e-4, 7);
    REQUIRE(res.entangled);
    OrderMTensor a = tensor_from_amp(w3(), 3);
    Rng rng(9);
    double oracle = brute_force_product_overlap(a.entries, a.mode_dims, 2000, 100, rng);
    REQUIRE(std::abs(res.lambda_a - oracle) < 1e-3);
    REQUIRE(std::abs(res.lambda_a - 2.0 / 3.0) < 1e-3);
}

TEST_CASE("lambda_A of unit tensors lies in (0, 1]") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        Rng rng(seed);
        int n = 2 + static_cast<int>(seed % 4);  // 2..5 qubits
        PureState psi = random_pure_state(n, rng);
        GmeResult res = gme_label(psi, 5, 1e-4, seed + 1);
        CAPTURE(seed, n);
        REQUIRE(res.lambda_a > 0.0);
        REQUIRE(res.lambda_a <= 1.0 + 1e-8);
    }
}

TEST_CASE("pure product states have overlap 1 and label separable") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        PureState psi = random_pure_product_state(3, rng);
        GmeResult res = gme_label(psi, 5, 1e-4, seed + 1);
        CAPTURE(seed);
        REQUIRE(std::abs(res.lambda_a - 1.0) < 1e-6);
        REQUIRE(!res.entangled);
    }
}

TEST_CASE("single qubit states are always product") {
    Rng rng(21);
    PureState psi = random_pure_state(1, rng);
    GmeResult res = gme_label(psi, 5, 1e-4, 3);
    REQUIRE(std::abs(res.lambda_a - 1.0) < 1e-8);
    REQUIRE(!res.entangled);
}

TEST_CASE("lambda_A is invariant under a local unitary on one mode") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        PureState psi = random_pure_state(3, rng);
        GmeResult base = gme_label(psi, 10, 1e-4, 41);

        // Haar-ish single-qubit unitary from Gram-Schmidt on Gaussian columns
        CMat u(2, 2);
        u(0, 0) = rng.complex_gaussian();
        u(1, 0) = rng.complex_gaussian();
        u.col(0) /= u.col(0).norm();
        CVec g(2);
        g(0) = rng.complex_gaussian();
        g(1) = rng.complex_gaussian();
        g -= u.col(0) * (u.col(0).adjoint() * g).value();
        u.col(1) = g / g.norm();

        CMat full = kron(kron(u, CMat::Identity(2, 2)), CMat::Identity(2, 2));
        PureState rotated{3, full * psi.amp};
        GmeResult rot = gme_label(rotated, 10, 1e-4, 41);
        CAPTURE(trial);
        REQUIRE(std::abs(base.lambda_a - rot.lambda_a) < 1e-6);
    }
}

TEST_CASE("convergence history settles to within 10x tolerance") {
    Rng rng(51);
    PureState psi = random_pure_state(3, rng);
    OrderMTensor a = tensor_from_pure_state(psi);
    UEigenpairOptions opts;
    Rng start(4);
    UEigenpair pair = u_eigenpair(a, opts, start);
    REQUIRE(pair.converged);
    REQUIRE(pair.lambda_history.size() >= 2);
    std::size_t n = pair.lambda_history.size();
    std::size_t tail = std::min<std::size_t>(10, n);
    double lo = pair.lambda_history[n - tail], hi = lo;
    for (std::size_t i = n - tail; i < n; ++i) {
        lo = std::min(lo, pair.lambda_history[i]);
        hi = std::max(hi, pair.lambda_history[i]);
    }
    REQUIRE(hi - lo < opts.tol * 10);
}

TEST_CASE("more restarts never lower the best overlap") {
    Rng rng(61);
    PureState psi = random_pure_state(3, rng);
    GmeResult few = gme_label(psi, 5, 1e-4, 77);
    GmeResult many = gme_label(psi, 20, 1e-4, 77);  // shares the first 5 seeds
    REQUIRE(few.lambda_a <= many.lambda_a + 1e-15);
}

TEST_CASE("matrix case agrees with the largest singular value") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        PureState psi = random_pure_state(2, rng);
        CMat reshaped(2, 2);
        reshaped(0, 0) = psi.amp(0);
        reshaped(0, 1) = psi.amp(1);
        reshaped(1, 0) = psi.amp(2);
        reshaped(1, 1) = psi.amp(3);
        Eigen::JacobiSVD<CMat> svd(reshaped);
        double sigma = svd.singularValues()(0);
        GmeResult res = gme_label(psi, 10, 1e-4, seed + 5);
        CAPTURE(seed);
        REQUIRE(std::abs(res.lambda_a - sigma) < 1e-8);
    }
}

TEST_CASE("u_eigenpair block vectors are unit and lambda relation holds") {
    Rng rng(71);
    PureState psi = random_pure_state(4, rng);
    OrderMTensor a = tensor_from_pure_state(psi);
    Rng start(6);
    UEigenpair pair = u_eigenpair(a, UEigenpairOptions{}, start);
    REQUIRE(pair.converged);
    for (const CVec& b : pair.block_vectors) REQUIRE(std::abs(b.norm() - 1.0) < 1e-10);
    int m = a.order();
    double root_m = std::pow(std::sqrt(static_cast<double>(m)), m);
    double fact = 1.0;
    for (int k = 2; k <= m; ++k) fact *= k;
    REQUIRE(std::abs(pair.lambda_a - root_m / fact * pair.lambda_s) < 1e-12);
}

TEST_CASE("a strict majority of random 2-qubit pure states are entangled") {
    int entangled = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        Rng rng(static_cast<std::uint64_t>(i) + 1000);
        PureState psi = random_pure_state(2, rng);
        if (gme_label(psi, 5, 1e-4, i + 1).entangled) ++entangled;
    }
    CAPTURE(entangled);
    REQUIRE(entangled > n / 2);
}
