#include "qot/herm.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace qot;
using qot_test::rand_herm;

namespace {

HermitianOperator diag_op(const std::vector<double>& d) {
    CMatrix m = CMatrix::Zero(static_cast<Index>(d.size()), static_cast<Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) m(static_cast<Index>(i), static_cast<Index>(i)) = d[i];
    return HermitianOperator(m);
}

HermitianOperator pauli_x() {
    CMatrix m(2, 2);
    m << 0.0, 1.0, 1.0, 0.0;
    return HermitianOperator(m);
}

} // namespace

TEST_CASE("HermitianOperator validates its invariants") {
    CMatrix bad(2, 2);
    bad << 1.0, Complex(0.0, 1.0), Complex(0.0, 1.0), 1.0; // A(1,0) should be -i
    CHECK_THROWS_AS(HermitianOperator{bad}, std::invalid_argument);

    CMatrix nonfinite = CMatrix::Zero(2, 2);
    nonfinite(0, 0) = std::nan("");
    CHECK_THROWS_AS(HermitianOperator{nonfinite}, std::invalid_argument);

    CHECK_THROWS_AS(HermitianOperator{CMatrix::Zero(0, 0)}, std::invalid_argument);
    CHECK_THROWS_AS(HermitianOperator{CMatrix::Zero(2, 3)}, std::invalid_argument);
}

TEST_CASE("spectral_decompose: diagonal and Pauli cases, ascending order") {
    auto sd = spectral_decompose(diag_op({2.0, 1.0}));
    CHECK(sd.eigenvalues(0) == doctest::Approx(1.0));
    CHECK(sd.eigenvalues(1) == doctest::Approx(2.0));

    auto sx = spectral_decompose(pauli_x());
    CHECK(sx.eigenvalues(0) == doctest::Approx(-1.0));
    CHECK(sx.eigenvalues(1) == doctest::Approx(1.0));
}

TEST_CASE("spectral_decompose: reconstruction residual on random input") {
    Rng rng(11);
    const HermitianOperator a = rand_herm(rng, 4, 2.5);
    const auto sd = spectral_decompose(a);
    const CMatrix rebuilt =
        sd.eigenvectors * sd.eigenvalues.asDiagonal() * sd.eigenvectors.adjoint();
    CHECK((rebuilt - a.matrix()).norm() <= 1e-10 * (1.0 + a.matrix().norm()));
    for (Index k = 0; k + 1 < sd.eigenvalues.size(); ++k)
        CHECK(sd.eigenvalues(k) <= sd.eigenvalues(k + 1));
}

TEST_CASE("lift: closed-form cases") {
    const HermitianOperator zero2 = HermitianOperator::zero(2);
    CHECK(max_abs(lift([](double t) { return std::exp(t); }, zero2).matrix() -
                  CMatrix::Identity(2, 2)) < 1e-14);

    const HermitianOperator xsq = lift([](double t) { return t * t; }, pauli_x());
    CHECK(max_abs(xsq.matrix() - CMatrix::Identity(2, 2)) < 1e-14);

    const HermitianOperator ent =
        lift([](double t) { return t * std::log(t) - t; }, diag_op({0.3, 0.7}));
    CHECK(ent.matrix()(0, 0).real() == doctest::Approx(0.3 * std::log(0.3) - 0.3));
    CHECK(ent.matrix()(1, 1).real() == doctest::Approx(0.7 * std::log(0.7) - 0.7));
}

TEST_CASE("lift: domain error names the offending eigenvalue") {
    CHECK_THROWS_WITH_AS(lift([](double t) { return std::log(t); }, diag_op({-1.0, 2.0})),
                         doctest::Contains("eigenvalue"), std::domain_error);
}

TEST_CASE("kron: identities, diagonals, trace multiplicativity") {
    const HermitianOperator id2 = HermitianOperator::identity(2);
    CHECK(max_abs(kron(id2, id2).matrix() - CMatrix::Identity(4, 4)) < 1e-15);

    const HermitianOperator k = kron(diag_op({1.0, 2.0}), diag_op({3.0, 4.0}));
    const std::vector<double> expect{3.0, 4.0, 6.0, 8.0};
    for (Index i = 0; i < 4; ++i) CHECK(k.matrix()(i, i).real() == doctest::Approx(expect[i]));

    Rng rng(5);
    const HermitianOperator a = rand_herm(rng, 3), b = rand_herm(rng, 2);
    CHECK(trace_re(kron(a, b)) == doctest::Approx(trace_re(a) * trace_re(b)).epsilon(1e-12));
}

TEST_CASE("oplus: eigenvalue sums and cancellation") {
    const HermitianOperator s = oplus(diag_op({1.0, 2.0}), diag_op({10.0, 20.0}));
    const std::vector<double> expect{11.0, 21.0, 12.0, 22.0};
    for (Index i = 0; i < 4; ++i) CHECK(s.matrix()(i, i).real() == doctest::Approx(expect[i]));

    const double lam = 0.73;
    const HermitianOperator zero =
        oplus(lam * HermitianOperator::identity(2), -lam * HermitianOperator::identity(3));
    CHECK(max_abs(zero.matrix()) < 1e-14);
}

TEST_CASE("oplus: spectrum is the Minkowski sum of spectra") {
    Rng rng(17);
    const HermitianOperator u = rand_herm(rng, 2), v = rand_herm(rng, 2);
    const auto su = spectral_decompose(u), sv = spectral_decompose(v);
    std::vector<double> sums;
    for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 2; ++j) sums.push_back(su.eigenvalues(i) + sv.eigenvalues(j));
    std::sort(sums.begin(), sums.end());
    const auto so = spectral_decompose(oplus(u, v));
    for (Index k = 0; k < 4; ++k)
        CHECK(so.eigenvalues(k) == doctest::Approx(sums[static_cast<std::size_t>(k)]).epsilon(1e-9));
}

TEST_CASE("partial traces: product states, identity, duality pairing") {
    Rng rng(23);
    const ProductSpace sp(2, 2);
    const HermitianOperator rho = random_density(rng, 2), sigma = random_density(rng, 2);
    CHECK(hs_norm(partial_trace_1(kron(rho, sigma), sp) - rho) < 1e-13);
    CHECK(hs_norm(partial_trace_2(kron(rho, sigma), sp) - sigma) < 1e-13);

    const HermitianOperator id4 = HermitianOperator::identity(4);
    CHECK(max_abs(partial_trace_1(id4, sp).matrix() - 2.0 * CMatrix::Identity(2, 2)) < 1e-15);
    CHECK(max_abs(partial_trace_2(id4, sp).matrix() - 2.0 * CMatrix::Identity(2, 2)) < 1e-15);

    const ProductSpace sp32(3, 2);
    const HermitianOperator g = rand_herm(rng, 6), u = rand_herm(rng, 3), v = rand_herm(rng, 2);
    CHECK(hs_inner(g, oplus(u, HermitianOperator::zero(2))) ==
          doctest::Approx(hs_inner(partial_trace_1(g, sp32), u)).epsilon(1e-12));
    CHECK(hs_inner(g, oplus(HermitianOperator::zero(3), v)) ==
          doctest::Approx(hs_inner(partial_trace_2(g, sp32), v)).epsilon(1e-12));

    CHECK_THROWS_AS(partial_trace_1(g, ProductSpace(2, 2)), std::invalid_argument);
}

TEST_CASE("partial traces: trace preservation and oplus adjointness") {
    Rng rng(29);
    const ProductSpace sp(3, 2);
    const HermitianOperator g = rand_herm(rng, 6), u = rand_herm(rng, 3), v = rand_herm(rng, 2);
    CHECK(trace_re(partial_trace_1(g, sp)) == doctest::Approx(trace_re(g)).epsilon(1e-12));
    CHECK(trace_re(partial_trace_2(g, sp)) == doctest::Approx(trace_re(g)).epsilon(1e-12));

    const double lhs = hs_inner(g, oplus(u, v));
    const double rhs = hs_inner(partial_trace_1(g, sp), u) + hs_inner(partial_trace_2(g, sp), v);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("trace_function: identity, exp, agreement with lift") {
    Rng rng(31);
    const HermitianOperator a = rand_herm(rng, 3);
    CHECK(trace_function([](double t) { return t; }, a) ==
          doctest::Approx(trace_re(a)).epsilon(1e-12));

    CHECK(trace_function([](double t) { return std::exp(t); }, diag_op({0.0, std::log(2.0)})) ==
          doctest::Approx(3.0));

    auto f = [](double t) { return std::cos(t) + t * t; };
    CHECK(trace_function(f, a) == doctest::Approx(trace_re(lift(f, a))).epsilon(1e-12));
}

TEST_CASE("hs_inner: identities and bilinearity") {
    CHECK(hs_inner(HermitianOperator::identity(3), HermitianOperator::identity(3)) ==
          doctest::Approx(3.0));

    Rng rng(37);
    const HermitianOperator a = rand_herm(rng, 3), b = rand_herm(rng, 3), c = rand_herm(rng, 3);
    CHECK(hs_inner(a, a) >= 0.0);
    CHECK(hs_inner(a, a) == doctest::Approx(hs_norm(a) * hs_norm(a)).epsilon(1e-12));
    const double alpha = 0.6, beta = -1.7;
    CHECK(hs_inner(alpha * a + beta * b, c) ==
          doctest::Approx(alpha * hs_inner(a, c) + beta * hs_inner(b, c)).epsilon(1e-12));
    CHECK(hs_inner(a, b) == doctest::Approx(hs_inner(b, a)).epsilon(1e-12));

    CHECK_THROWS_AS(hs_inner(a, HermitianOperator::identity(2)), std::invalid_argument);
}

TEST_CASE("smallest_eigenvalue") {
    CHECK(smallest_eigenvalue(diag_op({3.0, -1.0, 2.0})) == doctest::Approx(-1.0));
    CHECK(smallest_eigenvalue(0.4 * HermitianOperator::identity(3)) == doctest::Approx(0.4));

    Rng rng(41);
    const HermitianOperator a = rand_herm(rng, 4);
    CHECK(smallest_eigenvalue(a) == doctest::Approx(spectral_decompose(a).eigenvalues(0)));
}

TEST_CASE("hermitian_project: fixed points and idempotence") {
    Rng rng(43);
    const HermitianOperator a = rand_herm(rng, 3);
    CHECK(hs_norm(hermitian_project(a.matrix()) - a) < 1e-15);

    CMatrix m(2, 2);
    m << 0.0, 1.0, 0.0, 0.0;
    const HermitianOperator p = hermitian_project(m);
    CHECK(p.matrix()(0, 1).real() == doctest::Approx(0.5));
    CHECK(p.matrix()(1, 0).real() == doctest::Approx(0.5));
    CHECK(hs_norm(hermitian_project(p.matrix()) - p) == doctest::Approx(0.0));
}

TEST_CASE("lifting is an algebra homomorphism") {
    Rng rng(47);
    const HermitianOperator a = rand_herm(rng, 4);
    auto f1 = [](double t) { return std::exp(0.3 * t); };
    auto f2 = [](double t) { return t * t - 0.5; };

    const double scale = 1.0 + hs_norm(lift(f1, a)) + hs_norm(lift(f2, a));
    CHECK(hs_norm(lift([&](double t) { return f1(t) + f2(t); }, a) - (lift(f1, a) + lift(f2, a))) <
          1e-9 * scale);
    CHECK((lift([&](double t) { return f1(t) * f2(t); }, a).matrix() -
           lift(f1, a).matrix() * lift(f2, a).matrix())
              .norm() < 1e-9 * scale);
    CHECK(hs_norm(lift([&](double t) { return f1(f2(t)); }, a) - lift(f1, lift(f2, a))) <
          1e-9 * scale);
}
