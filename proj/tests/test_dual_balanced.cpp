#include "qot/dual_balanced.hpp"

#include "qot/convergence.hpp"
#include "qot/primal_oracle.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace qot;
using qot_test::rand_herm;
using qot_test::scalar_instance;
using qot_test::scalar_op;

namespace {

// Kinked conjugate used as a capability-gate probe.
Regularizer non_c1_regularizer() {
    Regularizer r = make_quadratic();
    r.name = "hinge";
    r.psi = [](double x) { return std::max(x, 0.0); };
    r.c1_psi = false;
    r.strictly_convex_psi = false;
    return r;
}

DualPotentials zeros(const BalancedInstance& inst) {
    return {HermitianOperator::zero(inst.space.d1), HermitianOperator::zero(inst.space.d2)};
}

} // namespace

TEST_CASE("BalancedInstance validates marginals") {
    const ProductSpace sp(1, 1);
    CHECK_THROWS_AS(BalancedInstance(sp, scalar_op(0.0), scalar_op(0.5), scalar_op(1.0), 0.1,
                                     make_von_neumann()),
                    std::invalid_argument); // trace != 1
    CHECK_THROWS_AS(BalancedInstance(sp, scalar_op(0.0), scalar_op(1.0), scalar_op(1.0), -0.1,
                                     make_von_neumann()),
                    std::invalid_argument); // epsilon <= 0
}

TEST_CASE("eval_dual: scalar closed forms") {
    const BalancedInstance vn = scalar_instance(0.5, 0.2, make_von_neumann());
    // Optimum of s - eps e^{(s-c)/eps} sits at s = c with value c - eps.
    CHECK(eval_dual({scalar_op(0.2), scalar_op(0.3)}, vn) == doctest::Approx(0.3).epsilon(1e-12));

    const BalancedInstance quad = scalar_instance(0.5, 0.2, make_quadratic());
    // Optimum of s - eps ((s-c)/eps)_+^2/2 sits at s = c + eps with value c + eps/2.
    CHECK(eval_dual({scalar_op(0.3), scalar_op(0.4)}, quad) ==
          doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("eval_dual: invariance under opposite translations") {
    Rng rng(3);
    const BalancedInstance inst = qot_test::random_balanced(5, 2, 3, 0.4, make_von_neumann());
    const DualPotentials p{rand_herm(rng, 2), rand_herm(rng, 3)};
    const double base = eval_dual(p, inst);
    for (double lam : {-10.0, -1.3, 0.7, 10.0}) {
        const DualPotentials shifted{p.U + lam * HermitianOperator::identity(2),
                                     p.V + (-lam) * HermitianOperator::identity(3)};
        CHECK(eval_dual(shifted, inst) == doctest::Approx(base).epsilon(1e-10));
    }
}

TEST_CASE("grad_dual: vanishes at the scalar optimum, matches finite differences") {
    const BalancedInstance vn = scalar_instance(0.5, 0.2, make_von_neumann());
    const auto [gu, gv] = grad_dual({scalar_op(0.2), scalar_op(0.3)}, vn);
    CHECK(hs_norm(gu) < 1e-10);
    CHECK(hs_norm(gv) < 1e-10);

    Rng rng(9);
    for (const Regularizer& reg : {make_von_neumann(), make_tsallis(2.0)}) {
        const BalancedInstance inst = qot_test::random_balanced(11, 2, 2, 0.5, reg);
        const DualPotentials p{rand_herm(rng, 2, 0.4), rand_herm(rng, 2, 0.4)};
        const auto [g1, g2] = grad_dual(p, inst);
        const HermitianOperator du = rand_herm(rng, 2), dv = rand_herm(rng, 2);
        const double h = 1e-5;
        const double fd = (eval_dual({p.U + h * du, p.V + h * dv}, inst) -
                           eval_dual({p.U + (-h) * du, p.V + (-h) * dv}, inst)) /
                          (2.0 * h);
        const double analytic = hs_inner(g1, du) + hs_inner(g2, dv);
        CHECK(std::abs(fd - analytic) <= 1e-6 * (1.0 + std::abs(analytic)));
    }
}

TEST_CASE("grad_dual: unchanged by opposite translations") {
    Rng rng(15);
    const BalancedInstance inst = qot_test::random_balanced(21, 2, 2, 0.3, make_von_neumann());
    const DualPotentials p{rand_herm(rng, 2), rand_herm(rng, 2)};
    const auto [g1, g2] = grad_dual(p, inst);
    const DualPotentials q{p.U + 2.5 * HermitianOperator::identity(2),
                           p.V + (-2.5) * HermitianOperator::identity(2)};
    const auto [h1, h2] = grad_dual(q, inst);
    CHECK(hs_norm(g1 - h1) < 1e-10);
    CHECK(hs_norm(g2 - h2) < 1e-10);
}

TEST_CASE("grad_dual: capability error without C1") {
    const BalancedInstance inst = scalar_instance(0.5, 0.2, non_c1_regularizer());
    CHECK_THROWS_AS(grad_dual(zeros(inst), inst), CapabilityError);
    CHECK_THROWS_AS(recover_plan(zeros(inst), inst), CapabilityError);
}

TEST_CASE("transform_F2: scalar closed form and optimality residual") {
    const BalancedInstance vn = scalar_instance(0.7, 0.25, make_von_neumann());
    const HermitianOperator vbar = transform_F2(scalar_op(0.2), vn);
    CHECK(vbar.matrix()(0, 0).real() == doctest::Approx(0.7 - 0.2).epsilon(1e-8)); // c - U

    const HermitianOperator ubar = transform_F1(scalar_op(-0.1), vn);
    CHECK(ubar.matrix()(0, 0).real() == doctest::Approx(0.7 + 0.1).epsilon(1e-8)); // c - V
}

TEST_CASE("transform_F2: product structure at zero cost") {
    const Index d = 2;
    Rng rng(33);
    const HermitianOperator rho = random_density(rng, d), sigma = random_density(rng, d);
    const double eps = 0.5;
    const BalancedInstance inst(ProductSpace(d, d), HermitianOperator::zero(d * d), rho, sigma,
                                eps, make_von_neumann());
    const HermitianOperator u = lift([&](double t) { return eps * std::log(t); }, rho);
    const HermitianOperator vbar = transform_F2(u, inst);
    const HermitianOperator expected = lift([&](double t) { return eps * std::log(t); }, sigma);
    CHECK(hs_norm(vbar - expected) < 1e-7);

    const HermitianOperator gamma = lift(inst.reg.psi_prime, dual_argument({u, vbar}, inst));
    CHECK(hs_norm(partial_trace_2(gamma, inst.space) - sigma) <= 1e-8);
}

TEST_CASE("transforms: residuals re-verified on random instances") {
    Rng rng(39);
    const BalancedInstance inst = qot_test::random_balanced(45, 2, 2, 0.5, make_von_neumann());
    const HermitianOperator u = rand_herm(rng, 2, 0.3);
    const HermitianOperator vbar = transform_F2(u, inst);
    const HermitianOperator gamma = lift(inst.reg.psi_prime, dual_argument({u, vbar}, inst));
    CHECK(hs_norm(partial_trace_2(gamma, inst.space) - inst.sigma) <= 1e-9);

    const HermitianOperator v = rand_herm(rng, 2, 0.3);
    const HermitianOperator ubar = transform_F1(v, inst);
    const HermitianOperator gamma1 = lift(inst.reg.psi_prime, dual_argument({ubar, v}, inst));
    CHECK(hs_norm(partial_trace_1(gamma1, inst.space) - inst.rho) <= 1e-9);
}

TEST_CASE("transforms: swap symmetry when the instance is swap symmetric") {
    const Index d = 2;
    Rng rng(51);
    const HermitianOperator rho = random_density(rng, d);
    const HermitianOperator c0 = rand_herm(rng, d * d);
    // Symmetrize the cost under the factor swap (i,j) -> (j,i).
    CMatrix swapped(d * d, d * d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            for (Index k = 0; k < d; ++k)
                for (Index l = 0; l < d; ++l)
                    swapped(j * d + i, l * d + k) = c0.matrix()(i * d + j, k * d + l);
    const HermitianOperator cost = hermitian_project(0.5 * (c0.matrix() + swapped));
    const BalancedInstance inst(ProductSpace(d, d), cost, rho, rho, 0.4, make_von_neumann());

    const HermitianOperator x = rand_herm(rng, d, 0.5);
    CHECK(hs_norm(transform_F1(x, inst) - transform_F2(x, inst)) < 1e-7);
}

TEST_CASE("transforms require a strictly convex conjugate") {
    const BalancedInstance quad = scalar_instance(0.5, 0.2, make_quadratic());
    CHECK_THROWS_AS(transform_F2(scalar_op(0.0), quad), CapabilityError);
    CHECK_THROWS_AS(sinkhorn(zeros(quad), quad, 1e-8, 10), CapabilityError);
}

TEST_CASE("transform inner solver reports non-convergence with the residual") {
    const BalancedInstance inst = qot_test::random_balanced(85, 2, 2, 0.4, make_von_neumann());
    TransformOptions opt;
    opt.max_inner = 1;
    CHECK_THROWS_WITH_AS(transform_F2(HermitianOperator::zero(2), inst, opt),
                         doctest::Contains("residual"), std::runtime_error);
}

TEST_CASE("sinkhorn: scalar instance converges immediately to U + V = c") {
    const BalancedInstance vn = scalar_instance(0.5, 0.2, make_von_neumann());
    const SolveReport rep = sinkhorn(zeros(vn), vn, 1e-10, 5);
    REQUIRE(rep.converged);
    CHECK(rep.iterations <= 2);
    CHECK(rep.potentials.U.matrix()(0, 0).real() + rep.potentials.V.matrix()(0, 0).real() ==
          doctest::Approx(0.5).epsilon(1e-9));
    CHECK(rep.dual_value == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("sinkhorn: zero cost recovers the product coupling") {
    const BalancedInstance base = qot_test::random_balanced(63, 2, 2, 0.3, make_von_neumann());
    const BalancedInstance zero_cost(base.space, HermitianOperator::zero(4), base.rho, base.sigma,
                                     0.3, make_von_neumann());
    const SolveReport rep = sinkhorn(zeros(zero_cost), zero_cost, 1e-9, 100);
    REQUIRE(rep.converged);
    CHECK(hs_norm(*rep.plan - kron(zero_cost.rho, zero_cost.sigma)) < 1e-7);
}

TEST_CASE("sinkhorn: dual values non-decreasing, certificates at the fixed point") {
    const BalancedInstance inst = qot_test::random_balanced(77, 3, 2, 0.4, make_von_neumann());
    const SolveReport rep = sinkhorn(zeros(inst), inst, 1e-9, 200);
    REQUIRE(rep.converged);
    for (std::size_t i = 0; i + 1 < rep.history.size(); ++i)
        CHECK(rep.history[i + 1].dual_value >= rep.history[i].dual_value - 1e-12);

    CHECK(rep.residual1 <= 1e-9);
    CHECK(rep.residual2 <= 1e-9);
    CHECK(trace_re(*rep.plan) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(smallest_eigenvalue(*rep.plan) >= -1e-10);

    // Maximizer characterization: fixed point of both transforms...
    CHECK(hs_norm(rep.potentials.V - transform_F2(rep.potentials.U, inst)) < 1e-6);
    CHECK(hs_norm(rep.potentials.U - transform_F1(rep.potentials.V, inst)) < 1e-6);
    // ...and primal value of the recovered plan matches the dual value.
    const double primal = eval_primal(*rep.plan, inst);
    CHECK(std::abs(primal - rep.dual_value) <= 1e-6 * (1.0 + std::abs(rep.dual_value)));
}

TEST_CASE("sinkhorn: non-converged report is flagged, not thrown") {
    const BalancedInstance inst = qot_test::random_balanced(81, 2, 2, 0.2, make_von_neumann());
    const SolveReport rep = sinkhorn(zeros(inst), inst, 1e-13, 1);
    CHECK_FALSE(rep.converged);
    CHECK(rep.iterations == 1);
}

TEST_CASE("maximize_dual: agrees with sinkhorn and pins lambda_1(V) = 0") {
    for (std::uint64_t seed : {101, 102}) {
        const BalancedInstance inst =
            qot_test::random_balanced(seed, 2, 2, 0.5, make_von_neumann());
        const SolveReport via_sinkhorn = sinkhorn(zeros(inst), inst, 1e-9, 200);
        const SolveReport via_ascent = maximize_dual(zeros(inst), inst, 1e-8, 100000);
        REQUIRE(via_sinkhorn.converged);
        REQUIRE(via_ascent.converged);
        CHECK(std::abs(via_sinkhorn.dual_value - via_ascent.dual_value) < 1e-6);
        CHECK(std::abs(smallest_eigenvalue(via_ascent.potentials.V)) < 1e-12);
    }
}

TEST_CASE("maximize_dual: quadratic scalar instance reaches c + eps/2") {
    const BalancedInstance quad = scalar_instance(0.5, 0.2, make_quadratic());
    const SolveReport rep = maximize_dual(zeros(quad), quad, 1e-10, 20000);
    REQUIRE(rep.converged);
    CHECK(rep.dual_value == doctest::Approx(0.6).epsilon(1e-8));
}

TEST_CASE("maximize_dual: maximizers coincide after recentering (strictly convex case)") {
    const BalancedInstance inst = qot_test::random_balanced(117, 2, 2, 0.4, make_von_neumann());
    Rng rng(118);
    const SolveReport a = maximize_dual(zeros(inst), inst, 1e-9, 100000);
    const SolveReport b =
        maximize_dual({rand_herm(rng, 2, 0.7), rand_herm(rng, 2, 0.7)}, inst, 1e-9, 100000);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    const DualPotentials ra = recenter_potentials(a.potentials);
    const DualPotentials rb = recenter_potentials(b.potentials);
    CHECK(hs_norm(ra.U - rb.U) < 1e-6);
    CHECK(hs_norm(ra.V - rb.V) < 1e-6);
}

TEST_CASE("recover_plan: psi'(0) fills the plan when W = 0") {
    Rng rng(131);
    const HermitianOperator u = rand_herm(rng, 2, 0.5), v = rand_herm(rng, 2, 0.5);
    const HermitianOperator cost = oplus(u, v);
    Rng rng2(132);
    const HermitianOperator rho = random_density(rng2, 2), sigma = random_density(rng2, 2);

    const BalancedInstance vn(ProductSpace(2, 2), cost, rho, sigma, 0.3, make_von_neumann());
    CHECK(hs_norm(recover_plan({u, v}, vn) - HermitianOperator::identity(4)) < 1e-12);

    const BalancedInstance quad(ProductSpace(2, 2), cost, rho, sigma, 0.3, make_quadratic());
    CHECK(hs_norm(recover_plan({u, v}, quad)) < 1e-12);
}

TEST_CASE("marginal_residuals: product plan, uniform plan, gradient consistency") {
    const BalancedInstance inst = qot_test::random_balanced(141, 2, 2, 0.5, make_von_neumann());
    const auto [r1, r2] = marginal_residuals(kron(inst.rho, inst.sigma), inst);
    CHECK(r1 < 1e-13);
    CHECK(r2 < 1e-13);

    const HermitianOperator uniform = HermitianOperator::identity(4) * 0.25;
    const auto [u1, u2] = marginal_residuals(uniform, inst);
    CHECK(u1 > 1e-3); // generated marginals are not the maximally mixed state

    Rng rng(143);
    const DualPotentials p{rand_herm(rng, 2, 0.4), rand_herm(rng, 2, 0.4)};
    const auto [g1, g2] = grad_dual(p, inst);
    const auto [m1, m2] = marginal_residuals(recover_plan(p, inst), inst);
    CHECK(m1 == doctest::Approx(hs_norm(g1)).epsilon(1e-12));
    CHECK(m2 == doctest::Approx(hs_norm(g2)).epsilon(1e-12));
}

TEST_CASE("weak duality: feasible plans dominate the dual functional") {
    Rng rng(151);
    for (const Regularizer& reg : {make_von_neumann(), make_quadratic(), make_tsallis(2.0)}) {
        const BalancedInstance inst = qot_test::random_balanced(153, 2, 2, 0.4, reg);
        const FeasibleSet fs = FeasibleSet::of(inst);
        for (int k = 0; k < 5; ++k) {
            const HermitianOperator seed_plan =
                psd_project(rand_herm(rng, 4, 0.8) + 0.5 * HermitianOperator::identity(4));
            const HermitianOperator gamma = project_to_feasible(seed_plan, fs);
            const DualPotentials p{rand_herm(rng, 2, 0.5), rand_herm(rng, 2, 0.5)};
            CHECK(eval_primal(gamma, inst) >= eval_dual(p, inst) - 1e-9);
        }
    }
}

TEST_CASE("coercivity witness: ascent iterates stay bounded") {
    const BalancedInstance inst = qot_test::random_balanced(161, 2, 2, 0.3, make_von_neumann());
    Rng rng(162);
    const SolveReport rep =
        maximize_dual({rand_herm(rng, 2, 3.0), rand_herm(rng, 2, 3.0)}, inst, 1e-8, 100000);
    REQUIRE(rep.converged);
    CHECK(sup_norm(rep.potentials.U) < 1e3);
    CHECK(sup_norm(rep.potentials.V) < 1e3);
}
