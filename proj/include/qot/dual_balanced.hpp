#pragma once

#include "qot/ascent.hpp"
#include "qot/herm.hpp"
#include "qot/regularizer.hpp"
#include "qot/report.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace qot {

// ------------------------------ Instance ------------------------------------

// Balanced problem data: cost C on H1 (x) H2, density-matrix marginals with
// trivial kernel, regularization strength epsilon.
struct BalancedInstance {
    BalancedInstance(ProductSpace sp, HermitianOperator cost_, HermitianOperator rho_,
                     HermitianOperator sigma_, double epsilon_, Regularizer reg_)
        : space(sp),
          cost(std::move(cost_)),
          rho(std::move(rho_)),
          sigma(std::move(sigma_)),
          epsilon(epsilon_),
          reg(std::move(reg_)) {
        if (cost.dim() != space.dim() || rho.dim() != space.d1 || sigma.dim() != space.d2)
            throw std::invalid_argument("BalancedInstance: dimension mismatch");
        if (!(epsilon > 0.0))
            throw std::invalid_argument("BalancedInstance: epsilon must be positive");
        if (smallest_eigenvalue(rho) <= 0.0 || smallest_eigenvalue(sigma) <= 0.0)
            throw std::invalid_argument("BalancedInstance: marginals must be positive definite");
        if (std::abs(trace_re(rho) - 1.0) > 1e-10 || std::abs(trace_re(sigma) - 1.0) > 1e-10)
            throw std::invalid_argument("BalancedInstance: marginals must have unit trace");
    }

    ProductSpace space;
    HermitianOperator cost;
    HermitianOperator rho;
    HermitianOperator sigma;
    double epsilon;
    Regularizer reg;
};

namespace detail {

// sum psi(lambda_k(W)): +inf propagates (line-search trial points may push the
// exponential past the floating range); NaN is a genuine failure.
inline double psi_trace(const ScalarFn& psi, const CMatrix& w) {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(w, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("psi_trace: eigensolver failed to converge");
    double acc = 0.0;
    for (Index k = 0; k < solver.eigenvalues().size(); ++k) {
        const double v = psi(solver.eigenvalues()(k));
        if (std::isnan(v)) throw std::runtime_error("psi_trace: psi returned NaN");
        acc += v;
    }
    return acc;
}

inline CMatrix psi_prime_of(const ScalarFn& psi_prime, const CMatrix& w) {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(w);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("psi_prime_of: eigensolver failed to converge");
    RVector fx(solver.eigenvalues().size());
    for (Index k = 0; k < fx.size(); ++k) fx(k) = psi_prime(solver.eigenvalues()(k));
    CMatrix m = solver.eigenvectors() * fx.asDiagonal() * solver.eigenvectors().adjoint();
    return 0.5 * (m + m.adjoint().eval());
}

inline CMatrix oplus_raw(const CMatrix& u, const CMatrix& v) {
    const Index d1 = u.rows(), d2 = v.rows();
    CMatrix out = CMatrix::Zero(d1 * d2, d1 * d2);
    for (Index i = 0; i < d1; ++i)
        for (Index k = 0; k < d1; ++k)
            for (Index j = 0; j < d2; ++j)
                out(i * d2 + j, k * d2 + j) += u(i, k);
    for (Index i = 0; i < d1; ++i)
        for (Index j = 0; j < d2; ++j)
            for (Index l = 0; l < d2; ++l)
                out(i * d2 + j, i * d2 + l) += v(j, l);
    return out;
}

inline CMatrix ptrace1_raw(const CMatrix& g, Index d1, Index d2) {
    CMatrix out = CMatrix::Zero(d1, d1);
    for (Index i = 0; i < d1; ++i)
        for (Index k = 0; k < d1; ++k)
            for (Index j = 0; j < d2; ++j)
                out(i, k) += g(i * d2 + j, k * d2 + j);
    return out;
}

inline CMatrix ptrace2_raw(const CMatrix& g, Index d1, Index d2) {
    CMatrix out = CMatrix::Zero(d2, d2);
    for (Index j = 0; j < d2; ++j)
        for (Index l = 0; l < d2; ++l)
            for (Index i = 0; i < d1; ++i)
                out(j, l) += g(i * d2 + j, i * d2 + l);
    return out;
}

inline double min_eig(const CMatrix& a) {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(a, Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(0);
}

} // namespace detail

// W = (U (+) V - C) / epsilon, the argument fed to psi everywhere.
inline HermitianOperator dual_argument(const DualPotentials& p, const BalancedInstance& inst) {
    return hermitian_project(
        (detail::oplus_raw(p.U.matrix(), p.V.matrix()) - inst.cost.matrix()) / inst.epsilon);
}

// ------------------------------ Dual functional -----------------------------

// D^eps(U,V) = Tr[U rho] + Tr[V sigma] - eps Tr[psi((U (+) V - C)/eps)].
inline double eval_dual(const DualPotentials& p, const BalancedInstance& inst) {
    const CMatrix w =
        (detail::oplus_raw(p.U.matrix(), p.V.matrix()) - inst.cost.matrix()) / inst.epsilon;
    return hs_inner(p.U, inst.rho) + hs_inner(p.V, inst.sigma) -
           inst.epsilon * detail::psi_trace(inst.reg.psi, w);
}

// Gradient (rho - P1[psi'(W)], sigma - P2[psi'(W)]); vanishes at maximizers.
inline std::pair<HermitianOperator, HermitianOperator> grad_dual(const DualPotentials& p,
                                                                 const BalancedInstance& inst) {
    require_c1(inst.reg, "grad_dual");
    const CMatrix w =
        (detail::oplus_raw(p.U.matrix(), p.V.matrix()) - inst.cost.matrix()) / inst.epsilon;
    const CMatrix gamma = detail::psi_prime_of(inst.reg.psi_prime, w);
    const Index d1 = inst.space.d1, d2 = inst.space.d2;
    return {hermitian_project(inst.rho.matrix() - detail::ptrace1_raw(gamma, d1, d2)),
            hermitian_project(inst.sigma.matrix() - detail::ptrace2_raw(gamma, d1, d2))};
}

// Plan recovery Gamma = psi'((U (+) V - C)/eps); PSD since psi' >= 0.
inline HermitianOperator recover_plan(const DualPotentials& p, const BalancedInstance& inst) {
    require_c1(inst.reg, "recover_plan");
    return lift(inst.reg.psi_prime, dual_argument(p, inst));
}

inline std::pair<double, double> marginal_residuals(const HermitianOperator& plan,
                                                    const BalancedInstance& inst) {
    const Index d1 = inst.space.d1, d2 = inst.space.d2;
    detail::require_product_dim(plan, inst.space, "marginal_residuals");
    return {(detail::ptrace1_raw(plan.matrix(), d1, d2) - inst.rho.matrix()).norm(),
            (detail::ptrace2_raw(plan.matrix(), d1, d2) - inst.sigma.matrix()).norm()};
}

// ------------------------------ Transforms ----------------------------------

struct TransformOptions {
    double inner_tol = 1e-9;
    int max_inner = 50000;
};

namespace detail {

struct TransformOutcome {
    CMatrix result;
    int iterations = 0;
    bool converged = false;
    double residual = 0.0;
};

inline void require_transform_converged(const TransformOutcome& out, const char* who) {
    if (!out.converged) {
        std::ostringstream os;
        os << who << ": inner solver did not reach tolerance (residual " << out.residual
           << " after " << out.iterations << " iterations)";
        throw std::runtime_error(os.str());
    }
}

// Shared inner solve for both transforms. `fix_first` = true maximizes over V
// at fixed U (the F2 transform); false maximizes over U at fixed V.
inline TransformOutcome transform_inner(const CMatrix& fixed, const BalancedInstance& inst,
                                        bool fix_first, const CMatrix& warm_start,
                                        const TransformOptions& opt) {
    const Index d1 = inst.space.d1, d2 = inst.space.d2;
    const double eps = inst.epsilon;
    const CMatrix& target = fix_first ? inst.sigma.matrix() : inst.rho.matrix();

    auto w_of = [&](const CMatrix& x) -> CMatrix {
        return ((fix_first ? oplus_raw(fixed, x) : oplus_raw(x, fixed)) - inst.cost.matrix()) / eps;
    };
    auto value = [&](const CMatrix& x) {
        return vec_dot(x, target) - eps * psi_trace(inst.reg.psi, w_of(x));
    };
    auto grad = [&](const CMatrix& x) -> CMatrix {
        const CMatrix gamma = psi_prime_of(inst.reg.psi_prime, w_of(x));
        return target - (fix_first ? ptrace2_raw(gamma, d1, d2) : ptrace1_raw(gamma, d1, d2));
    };

    AscentOptions aopt;
    aopt.grad_tol = opt.inner_tol;
    aopt.max_iters = opt.max_inner;
    aopt.value_noise = 1e-13; // stall honestly at the evaluation-noise floor
    auto res = bb_ascent(value, grad, warm_start, aopt);
    return {0.5 * (res.x + res.x.adjoint().eval()), res.iterations, res.converged, res.grad_norm};
}

} // namespace detail

// (C,psi,eps)-transform of U: the V maximizing V |-> D^eps(U, V), i.e. the
// unique solution of sigma = P2[psi'((U (+) V - C)/eps)].
inline HermitianOperator transform_F2(const HermitianOperator& u, const BalancedInstance& inst,
                                      const TransformOptions& opt = {}) {
    require_strictly_convex(inst.reg, "transform_F2");
    require_c1(inst.reg, "transform_F2");
    const CMatrix warm = CMatrix::Zero(inst.space.d2, inst.space.d2);
    const auto out = detail::transform_inner(u.matrix(), inst, true, warm, opt);
    detail::require_transform_converged(out, "transform_F2");
    return hermitian_project(out.result);
}

// Mirror transform: the U maximizing U |-> D^eps(U, V).
inline HermitianOperator transform_F1(const HermitianOperator& v, const BalancedInstance& inst,
                                      const TransformOptions& opt = {}) {
    require_strictly_convex(inst.reg, "transform_F1");
    require_c1(inst.reg, "transform_F1");
    const CMatrix warm = CMatrix::Zero(inst.space.d1, inst.space.d1);
    const auto out = detail::transform_inner(v.matrix(), inst, false, warm, opt);
    detail::require_transform_converged(out, "transform_F1");
    return hermitian_project(out.result);
}

// ------------------------------ Sinkhorn ------------------------------------

// Alternating transforms with lambda_1 recentering:
//   V^n = F2(U^{n-1}) - lambda_1(F2(U^{n-1})) Id,
//   U^n = F1(F2(U^{n-1})) + lambda_1(F2(U^{n-1})) Id.
// Warm starts keep the dual value non-decreasing: the F2 solve starts from
// V^{n-1} and the F1 solve from U^{n-1}, and ascent only improves from there.
// Stops on the marginal residuals of the recovered plan.
inline SolveReport sinkhorn(const DualPotentials& p0, const BalancedInstance& inst, double tol,
                            int max_outer) {
    require_strictly_convex(inst.reg, "sinkhorn");
    require_c1(inst.reg, "sinkhorn");
    if (!(tol > 0.0) || max_outer < 1)
        throw std::invalid_argument("sinkhorn: tol must be positive and max_outer >= 1");

    TransformOptions topt;
    topt.inner_tol = std::min(1e-9, 0.1 * tol);

    const Index d1 = inst.space.d1, d2 = inst.space.d2;
    CMatrix u = p0.U.matrix(), v = p0.V.matrix();

    // Inner solves that stall at their evaluation-noise floor are still used:
    // they improve the warm start monotonically, and the recovered plan's
    // marginal residuals remain the arbiter of outer convergence.
    SolveReport rep{{hermitian_project(u), hermitian_project(v)}, {}, 0.0, {}, 0.0, 0.0, 0, false, {}};
    for (int n = 1; n <= max_outer; ++n) {
        auto f2 = detail::transform_inner(u, inst, true, v, topt);
        const double lam = detail::min_eig(f2.result);
        v = f2.result - lam * CMatrix::Identity(d2, d2);
        auto f1 = detail::transform_inner(f2.result, inst, false, u, topt);
        u = f1.result + lam * CMatrix::Identity(d1, d1);

        rep.potentials = {hermitian_project(u), hermitian_project(v)};
        rep.plan = recover_plan(rep.potentials, inst);
        std::tie(rep.residual1, rep.residual2) = marginal_residuals(*rep.plan, inst);
        rep.dual_value = eval_dual(rep.potentials, inst);
        rep.iterations = n;
        rep.history.push_back({n, rep.dual_value, rep.residual1, rep.residual2, lam,
                               f2.iterations + f1.iterations});
        if (rep.residual1 <= tol && rep.residual2 <= tol) {
            rep.converged = true;
            break;
        }
    }
    return rep;
}

// ------------------------------ Joint ascent --------------------------------

// Gradient ascent on (U,V) jointly, with the lambda_1(V) = 0 renormalization
// applied after every accepted step. Works for any C1 conjugate (strict
// convexity not needed for ascent; uniqueness is simply not claimed then).
inline SolveReport maximize_dual(const DualPotentials& p0, const BalancedInstance& inst,
                                 double tol, int max_iter) {
    require_c1(inst.reg, "maximize_dual");
    if (!(tol > 0.0) || max_iter < 1)
        throw std::invalid_argument("maximize_dual: tol must be positive and max_iter >= 1");

    const Index d1 = inst.space.d1, d2 = inst.space.d2;
    const double eps = inst.epsilon;

    auto value = [&](const PotentialVec& p) {
        const CMatrix w = (detail::oplus_raw(p.u, p.v) - inst.cost.matrix()) / eps;
        return vec_dot(p.u, inst.rho.matrix()) + vec_dot(p.v, inst.sigma.matrix()) -
               eps * detail::psi_trace(inst.reg.psi, w);
    };
    auto grad = [&](const PotentialVec& p) -> PotentialVec {
        const CMatrix w = (detail::oplus_raw(p.u, p.v) - inst.cost.matrix()) / eps;
        const CMatrix gamma = detail::psi_prime_of(inst.reg.psi_prime, w);
        return {inst.rho.matrix() - detail::ptrace1_raw(gamma, d1, d2),
                inst.sigma.matrix() - detail::ptrace2_raw(gamma, d1, d2)};
    };
    auto recenter = [&](PotentialVec p) -> PotentialVec {
        const double lam = detail::min_eig(p.v);
        p.u += lam * CMatrix::Identity(d1, d1);
        p.v -= lam * CMatrix::Identity(d2, d2);
        return p;
    };

    AscentOptions aopt;
    aopt.grad_tol = tol;
    aopt.max_iters = max_iter;
    auto res = bb_ascent(value, grad, PotentialVec{p0.U.matrix(), p0.V.matrix()}, aopt, recenter);

    DualPotentials p{hermitian_project(res.x.u), hermitian_project(res.x.v)};
    auto plan = recover_plan(p, inst);
    auto [r1, r2] = marginal_residuals(plan, inst);
    SolveReport rep{std::move(p), std::move(plan), res.value,          {}, r1, r2,
                    res.iterations, res.converged, {}};
    return rep;
}

} // namespace qot
