#include <catch2/catch_amalgamated.hpp>

#include "entwit/qstate.hpp"
#include "test_support.hpp"

using namespace entwit;
using testsup::bell_phi_plus;
using testsup::min_eig;
using testsup::pt_second_qubit_4x4;

TEST_CASE("random_density_matrix dim 1 is the scalar 1") {
    Rng rng(7);
    DensityMatrix rho = random_density_matrix(1, rng);
    REQUIRE(rho.dim() == 1);
    REQUIRE(std::abs(rho.mat(0, 0) - std::complex<double>(1.0, 0.0)) < 1e-15);
}

TEST_CASE("density_from_factor with identity H gives the maximally mixed state") {
    DensityMatrix rho = density_from_factor(CMat::Identity(2, 2));
    REQUIRE((rho.mat - 0.5 * CMat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("random_density_matrix rejects dim 0") {
    Rng rng(1);
    REQUIRE_THROWS_AS(random_density_matrix(0, rng), std::invalid_argument);
}

TEST_CASE("random_density_matrix satisfies the density invariants over many seeds") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        Rng rng(seed);
        DensityMatrix rho = random_density_matrix(4, rng);
        CAPTURE(seed);
        REQUIRE((rho.mat - rho.mat.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE(std::abs(rho.mat.trace() - std::complex<double>(1.0, 0.0)) < 1e-10);
        REQUIRE(min_eig(rho.mat) >= -1e-10);
    }
}

TEST_CASE("kron identities") {
    CMat i2 = CMat::Identity(2, 2);
    REQUIRE((kron(i2, i2) - CMat::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);

    CMat p0 = CMat::Zero(2, 2), p1 = CMat::Zero(2, 2);
    p0(0, 0) = 1.0;
    p1(1, 1) = 1.0;
    CMat k = kron(p0, p1);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            REQUIRE(k(r, c) == (r == 1 && c == 1 ? std::complex<double>(1.0)
                                                 : std::complex<double>(0.0)));
}

TEST_CASE("kron trace is multiplicative") {
    Rng rng(3);
    DensityMatrix a = random_density_matrix(2, rng);
    CMat b(2, 2);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) b(r, c) = rng.complex_gaussian();
    std::complex<double> lhs = kron(a.mat, b).trace();
    std::complex<double> rhs = a.mat.trace() * b.trace();
    REQUIRE(std::abs(lhs - rhs) < 1e-12);
}

TEST_CASE("single product term mixture reduces to the kron of its factors") {
    CMat p0 = CMat::Zero(2, 2);
    p0(0, 0) = 1.0;
    DensityMatrix rho = mixture_from_terms({1.0}, {{p0, p0}});
    CMat expect = CMat::Zero(4, 4);
    expect(0, 0) = 1.0;
    REQUIRE((rho.mat - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("separable 2-qubit states are PPT across the 1|2 cut") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        MixtureSpec spec = random_mixture_spec({2, 2}, rng);
        DensityMatrix rho = separable_mixed_state(spec, rng);
        CAPTURE(seed, spec.n_terms);
        REQUIRE(is_valid_density(rho.mat));
        // independent oracle: explicit partial transpose + eigensolver
        REQUIRE(min_eig(pt_second_qubit_4x4(rho.mat)) >= -1e-10);
        REQUIRE(is_ppt(rho.mat, {2, 2}, {1}));
    }
}

TEST_CASE("separable 3-qubit states are PPT across every single-qubit cut") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        MixtureSpec spec = random_mixture_spec({2, 2, 2}, rng, 5);
        DensityMatrix rho = separable_mixed_state(spec, rng);
        CAPTURE(seed);
        REQUIRE(is_valid_density(rho.mat));
        for (int cut = 0; cut < 3; ++cut) REQUIRE(is_ppt(rho.mat, {2, 2, 2}, {cut}));
    }
}

TEST_CASE("invalid mixture weights are rejected") {
    Rng rng(1);
    MixtureSpec bad{{2, 2}, 2, {0.7, 0.7}};
    REQUIRE_THROWS_AS(separable_mixed_state(bad, rng), std::invalid_argument);
}

TEST_CASE("product state with Bell pair: NPT inside the pair, PPT across the spectator") {
    CVec bell = bell_phi_plus();
    CMat bell_rho = bell * bell.adjoint();
    CMat p0 = CMat::Zero(2, 2);
    p0(0, 0) = 1.0;
    DensityMatrix rho = mixture_from_terms({1.0}, {{p0, bell_rho}});
    REQUIRE(is_ppt(rho.mat, {2, 2, 2}, {0}));        // A|BC cut
    REQUIRE(!is_ppt(rho.mat, {2, 2, 2}, {2}));       // B|C entanglement shows on C
    REQUIRE(is_valid_density(rho.mat));
}

TEST_CASE("biseparable_state draws an NPT pair and valid densities") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        MixtureSpec spec = random_mixture_spec({2, 2, 2}, rng, 4);
        DensityMatrix rho = biseparable_state({2, 2, 2}, {1, 2}, spec, rng);
        CAPTURE(seed);
        REQUIRE(is_valid_density(rho.mat));
        REQUIRE(is_ppt(rho.mat, {2, 2, 2}, {0}));  // separable across the A|BC cut
    }
}

TEST_CASE("biseparable block (A,C) equals the swap-conjugated (B,C) construction") {
    MixtureSpec spec{{2, 2, 2}, 3, {0.5, 0.3, 0.2}};
    Rng rng1(42), rng2(42);
    DensityMatrix x = biseparable_state({2, 2, 2}, {0, 2}, spec, rng1);
    DensityMatrix y = biseparable_state({2, 2, 2}, {1, 2}, spec, rng2);
    CMat y_perm = permute_subsystems(y.mat, {2, 2, 2}, {1, 0, 2});
    REQUIRE((x.mat - y_perm).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("biseparable rejects out-of-range block indices") {
    Rng rng(1);
    MixtureSpec spec{{2, 2, 2}, 1, {1.0}};
    REQUIRE_THROWS_AS(biseparable_state({2, 2, 2}, {0, 3}, spec, rng), std::invalid_argument);
}

TEST_CASE("mixture_of_bipartitions with a single live weight reduces to biseparable_state") {
    MixtureSpec spec{{2, 2, 2}, 2, {0.6, 0.4}};
    Rng rng1(9), rng2(9);
    DensityMatrix x = mixture_of_bipartitions({2, 2, 2}, {spec, spec, spec}, {1.0, 0.0, 0.0}, rng1);
    DensityMatrix y = biseparable_state({2, 2, 2}, {1, 2}, spec, rng2);
    REQUIRE((x.mat - y.mat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mixture_of_bipartitions is a valid density and Hermitian") {
    Rng rng(11);
    MixtureSpec spec{{2, 2, 2}, 2, {0.5, 0.5}};
    DensityMatrix rho =
        mixture_of_bipartitions({2, 2, 2}, {spec, spec, spec}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, rng);
    REQUIRE(is_valid_density(rho.mat));
    REQUIRE((rho.mat - rho.mat.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    std::array<double, 3> bad = {0.5, 0.2, 0.2};
    REQUIRE_THROWS_AS(mixture_of_bipartitions({2, 2, 2}, {spec, spec, spec}, bad, rng),
                      std::invalid_argument);
}

TEST_CASE("pure product state of basis factors") {
    CVec e0 = CVec::Zero(2), e1 = CVec::Zero(2);
    e0(0) = 1.0;
    e1(1) = 1.0;
    CVec prod = kron(e0, e1);
    REQUIRE(prod(1) == std::complex<double>(1.0));
    REQUIRE(prod(0) == std::complex<double>(0.0));
    REQUIRE(prod(2) == std::complex<double>(0.0));
    REQUIRE(prod(3) == std::complex<double>(0.0));
}

TEST_CASE("random pure states are unit norm") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        REQUIRE(std::abs(random_pure_product_state(3, rng).amp.norm() - 1.0) < 1e-12);
        REQUIRE(std::abs(random_pure_state(2, rng).amp.norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("partial transpose of a product state stays PSD") {
    Rng rng(5);
    DensityMatrix a = random_density_matrix(2, rng);
    DensityMatrix b = random_density_matrix(2, rng);
    CMat prod = kron(a.mat, b.mat);
    CMat pt = partial_transpose(prod, {2, 2}, {1});
    REQUIRE((pt - kron(a.mat, b.mat.transpose())).cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE(min_eig(pt) >= -1e-12);
}

TEST_CASE("Bell state partial transpose has eigenvalue -1/2") {
    CVec bell = bell_phi_plus();
    CMat rho = bell * bell.adjoint();
    CMat pt = partial_transpose(rho, {2, 2}, {1});
    REQUIRE(std::abs(min_eig(pt) + 0.5) < 1e-12);
    // agrees with the hand-written oracle
    REQUIRE((pt - pt_second_qubit_4x4(rho)).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(!is_ppt(rho, {2, 2}, {1}));
}

TEST_CASE("partial transpose is an involution, bit-exact") {
    Rng rng(17);
    DensityMatrix rho = random_density_matrix(8, rng);
    CMat once = partial_transpose(rho.mat, {2, 2, 2}, {0, 2});
    CMat twice = partial_transpose(once, {2, 2, 2}, {0, 2});
    REQUIRE((twice - rho.mat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("partial transpose validates dimensions") {
    Rng rng(2);
    DensityMatrix rho = random_density_matrix(4, rng);
    REQUIRE_THROWS_AS(partial_transpose(rho.mat, {2, 3}, {0}), std::invalid_argument);
    REQUIRE_THROWS_AS(partial_transpose(rho.mat, {2, 2}, {5}), std::invalid_argument);
}

TEST_CASE("maximally mixed state is PPT") {
    CMat rho = CMat::Identity(4, 4) / 4.0;
    REQUIRE(is_ppt(rho, {2, 2}, {1}));
}

TEST_CASE("sampled entangled 2-qubit states are NPT and valid") {
    Rng rng(23);
    for (int i = 0; i < 20; ++i) {
        std::int64_t attempts = 0;
        DensityMatrix rho = sample_entangled_2qubit(rng, &attempts);
        REQUIRE(attempts >= 1);
        REQUIRE(!is_ppt(rho.mat, {2, 2}, {1}));
        REQUIRE(is_valid_density(rho.mat));
    }
}

TEST_CASE("NPT acceptance rate over random 2-qubit states is positive") {
    Rng rng(29);
    int npt = 0;
    const int attempts = 2000;
    for (int i = 0; i < attempts; ++i)
        if (!is_ppt(random_density_matrix(4, rng).mat, {2, 2}, {1})) ++npt;
    double rate = static_cast<double>(npt) / attempts;
    CAPTURE(rate);
    REQUIRE(npt > 0);
}

TEST_CASE("identical seeds reproduce states bit-exactly") {
    Rng a(1234), b(1234);
    DensityMatrix ra = random_density_matrix(4, a);
    DensityMatrix rb = random_density_matrix(4, b);
    REQUIRE((ra.mat - rb.mat).cwiseAbs().maxCoeff() == 0.0);

    Rng c(99), d(99);
    MixtureSpec sc = random_mixture_spec({2, 2}, c);
    MixtureSpec sd = random_mixture_spec({2, 2}, d);
    REQUIRE(sc.n_terms == sd.n_terms);
    DensityMatrix rc = separable_mixed_state(sc, c);
    DensityMatrix rd = separable_mixed_state(sd, d);
    REQUIRE((rc.mat - rd.mat).cwiseAbs().maxCoeff() == 0.0);
}
