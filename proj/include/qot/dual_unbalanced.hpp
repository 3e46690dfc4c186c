#pragma once

#include "qot/ascent.hpp"
#include "qot/dual_balanced.hpp"
#include "qot/herm.hpp"
#include "qot/primal_energy.hpp"
#include "qot/regularizer.hpp"
#include "qot/report.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace qot {

// ------------------------------ Instance ------------------------------------

// Unbalanced problem data: marginals are positive definite but need not have
// unit trace; tau1, tau2 weight the relative-entropy marginal penalties.
struct UnbalancedInstance {
    UnbalancedInstance(ProductSpace sp, HermitianOperator cost_, HermitianOperator rho_,
                       HermitianOperator sigma_, double epsilon_, double tau1_, double tau2_,
                       Regularizer reg_)
        : space(sp),
          cost(std::move(cost_)),
          rho(std::move(rho_)),
          sigma(std::move(sigma_)),
          epsilon(epsilon_),
          tau1(tau1_),
          tau2(tau2_),
          reg(std::move(reg_)) {
        if (cost.dim() != space.dim() || rho.dim() != space.d1 || sigma.dim() != space.d2)
            throw std::invalid_argument("UnbalancedInstance: dimension mismatch");
        if (!(epsilon > 0.0) || !(tau1 > 0.0) || !(tau2 > 0.0))
            throw std::invalid_argument("UnbalancedInstance: epsilon, tau1, tau2 must be positive");
        if (smallest_eigenvalue(rho) <= 0.0 || smallest_eigenvalue(sigma) <= 0.0)
            throw std::invalid_argument("UnbalancedInstance: marginals must be positive definite");
    }

    ProductSpace space;
    HermitianOperator cost;
    HermitianOperator rho;
    HermitianOperator sigma;
    double epsilon;
    double tau1;
    double tau2;
    Regularizer reg;
};

inline UnbalancedInstance with_taus(const BalancedInstance& b, double tau1, double tau2) {
    return UnbalancedInstance(b.space, b.cost, b.rho, b.sigma, b.epsilon, tau1, tau2, b.reg);
}

// ------------------------------ Relative entropy -----------------------------

// E(alpha|eta) = Tr[alpha(log alpha - log eta - Id) + eta] with the kernel
// convention alpha(log alpha - log eta) = 0 on ker eta when ker eta is
// contained in ker alpha; +inf when the support of alpha meets ker eta.
inline double relative_entropy(const HermitianOperator& alpha, const HermitianOperator& eta) {
    if (alpha.dim() != eta.dim())
        throw std::invalid_argument("relative_entropy: dimension mismatch");
    const auto sa = spectral_decompose(alpha);
    const auto se = spectral_decompose(eta);
    if (sa.eigenvalues(0) < -1e-10 || se.eigenvalues(0) < -1e-10)
        throw std::invalid_argument("relative_entropy: inputs must be PSD within tolerance");

    // Support-vs-kernel test: squared overlap of every substantial alpha
    // eigenvector with the numerical kernel of eta.
    for (Index i = 0; i < sa.eigenvalues.size(); ++i) {
        if (sa.eigenvalues(i) <= 1e-10) continue;
        double overlap = 0.0;
        for (Index j = 0; j < se.eigenvalues.size(); ++j) {
            if (se.eigenvalues(j) >= 1e-12) continue;
            overlap += std::norm(se.eigenvectors.col(j).dot(sa.eigenvectors.col(i)));
        }
        if (overlap > 1e-8) return kInf;
    }

    double tr_alpha_log_alpha = 0.0, tr_alpha = 0.0;
    for (Index i = 0; i < sa.eigenvalues.size(); ++i) {
        const double lam = std::max(sa.eigenvalues(i), 0.0);
        tr_alpha += lam;
        if (lam > 0.0) tr_alpha_log_alpha += lam * std::log(lam);
    }
    double tr_alpha_log_eta = 0.0, tr_eta = 0.0;
    for (Index j = 0; j < se.eigenvalues.size(); ++j) {
        const double lam = std::max(se.eigenvalues(j), 0.0);
        tr_eta += lam;
        if (lam >= 1e-12) {
            const double weight = (se.eigenvectors.col(j).adjoint() * alpha.matrix() *
                                   se.eigenvectors.col(j))(0, 0).real();
            tr_alpha_log_eta += std::log(lam) * weight;
        }
    }
    return tr_alpha_log_alpha - tr_alpha_log_eta - tr_alpha + tr_eta;
}

namespace detail {

// log(eta) with eigenvalues clamped to >= 1e-14; eta must be PD to 1e-12.
inline CMatrix log_pd(const HermitianOperator& eta, const char* who) {
    const auto sd = spectral_decompose(eta);
    if (sd.eigenvalues(0) < 1e-12)
        throw std::domain_error(std::string(who) + ": operator has a numerically zero eigenvalue");
    RVector fx(sd.eigenvalues.size());
    for (Index k = 0; k < fx.size(); ++k) fx(k) = std::log(std::max(sd.eigenvalues(k), 1e-14));
    CMatrix m = sd.eigenvectors * fx.asDiagonal() * sd.eigenvectors.adjoint();
    return 0.5 * (m + m.adjoint().eval());
}

inline double exp_trace(const CMatrix& m) {
    return psi_trace([](double x) { return std::exp(x); }, m);
}

inline CMatrix exp_of(const CMatrix& m) {
    return psi_prime_of([](double x) { return std::exp(x); }, m);
}

} // namespace detail

// Legendre transform of E(.|eta): E*(A|eta) = Tr[e^{A + log eta} - eta].
inline double relative_entropy_conjugate(const HermitianOperator& a, const HermitianOperator& eta) {
    if (a.dim() != eta.dim())
        throw std::invalid_argument("relative_entropy_conjugate: dimension mismatch");
    const CMatrix arg = a.matrix() + detail::log_pd(eta, "relative_entropy_conjugate");
    return detail::exp_trace(arg) - trace_re(eta);
}

// ------------------------------ Dual functional -----------------------------

// D^{eps,tau}(U,V) = -tau1 Tr[e^{-U/tau1 + log rho} - rho]
//                    -tau2 Tr[e^{-V/tau2 + log sigma} - sigma]
//                    -eps Tr[psi((U (+) V - C)/eps)].
inline double eval_dual_unbalanced(const DualPotentials& p, const UnbalancedInstance& inst) {
    const CMatrix log_rho = detail::log_pd(inst.rho, "eval_dual_unbalanced");
    const CMatrix log_sigma = detail::log_pd(inst.sigma, "eval_dual_unbalanced");
    const CMatrix w =
        (detail::oplus_raw(p.U.matrix(), p.V.matrix()) - inst.cost.matrix()) / inst.epsilon;
    const double t1 = detail::exp_trace(-p.U.matrix() / inst.tau1 + log_rho) - trace_re(inst.rho);
    const double t2 = detail::exp_trace(-p.V.matrix() / inst.tau2 + log_sigma) - trace_re(inst.sigma);
    return -inst.tau1 * t1 - inst.tau2 * t2 -
           inst.epsilon * detail::psi_trace(inst.reg.psi, w);
}

// Gradient (e^{-U/tau1 + log rho} - P1[psi'(W)], e^{-V/tau2 + log sigma} - P2[psi'(W)]).
inline std::pair<HermitianOperator, HermitianOperator> grad_dual_unbalanced(
    const DualPotentials& p, const UnbalancedInstance& inst) {
    require_c1(inst.reg, "grad_dual_unbalanced");
    const CMatrix w =
        (detail::oplus_raw(p.U.matrix(), p.V.matrix()) - inst.cost.matrix()) / inst.epsilon;
    const CMatrix gamma = detail::psi_prime_of(inst.reg.psi_prime, w);
    const Index d1 = inst.space.d1, d2 = inst.space.d2;
    const CMatrix e1 = detail::exp_of(-p.U.matrix() / inst.tau1 +
                                      detail::log_pd(inst.rho, "grad_dual_unbalanced"));
    const CMatrix e2 = detail::exp_of(-p.V.matrix() / inst.tau2 +
                                      detail::log_pd(inst.sigma, "grad_dual_unbalanced"));
    return {hermitian_project(e1 - detail::ptrace1_raw(gamma, d1, d2)),
            hermitian_project(e2 - detail::ptrace2_raw(gamma, d1, d2))};
}

inline HermitianOperator dual_argument(const DualPotentials& p, const UnbalancedInstance& inst) {
    return hermitian_project(
        (detail::oplus_raw(p.U.matrix(), p.V.matrix()) - inst.cost.matrix()) / inst.epsilon);
}

inline HermitianOperator recover_plan(const DualPotentials& p, const UnbalancedInstance& inst) {
    require_c1(inst.reg, "recover_plan");
    return lift(inst.reg.psi_prime, dual_argument(p, inst));
}

// F^{eps,tau}(Gamma) = F^eps(Gamma) + tau1 E(P1 Gamma | rho) + tau2 E(P2 Gamma | sigma).
inline double eval_primal_unbalanced(const HermitianOperator& plan, const UnbalancedInstance& inst) {
    detail::require_product_dim(plan, inst.space, "eval_primal_unbalanced");
    const double base = primal_energy(plan, inst.cost, inst.epsilon, inst.reg);
    if (base == kInf) return kInf;
    const double e1 = relative_entropy(partial_trace_1(plan, inst.space), inst.rho);
    if (e1 == kInf) return kInf;
    const double e2 = relative_entropy(partial_trace_2(plan, inst.space), inst.sigma);
    if (e2 == kInf) return kInf;
    return base + inst.tau1 * e1 + inst.tau2 * e2;
}

// ------------------------------ Transforms ----------------------------------

namespace detail {

inline TransformOutcome transform_inner_tau(const CMatrix& fixed, const UnbalancedInstance& inst,
                                            bool fix_first, const CMatrix& warm_start,
                                            const TransformOptions& opt) {
    require_c1(inst.reg, fix_first ? "transform_F2_tau" : "transform_F1_tau");
    const Index d1 = inst.space.d1, d2 = inst.space.d2;
    const double eps = inst.epsilon;
    const double tau = fix_first ? inst.tau2 : inst.tau1;
    const CMatrix log_marginal = fix_first ? log_pd(inst.sigma, "transform_F2_tau")
                                           : log_pd(inst.rho, "transform_F1_tau");

    auto w_of = [&](const CMatrix& x) -> CMatrix {
        return ((fix_first ? oplus_raw(fixed, x) : oplus_raw(x, fixed)) - inst.cost.matrix()) / eps;
    };
    auto value = [&](const CMatrix& x) {
        return -tau * exp_trace(-x / tau + log_marginal) -
               eps * psi_trace(inst.reg.psi, w_of(x));
    };
    auto grad = [&](const CMatrix& x) -> CMatrix {
        const CMatrix gamma = psi_prime_of(inst.reg.psi_prime, w_of(x));
        return exp_of(-x / tau + log_marginal) -
               (fix_first ? ptrace2_raw(gamma, d1, d2) : ptrace1_raw(gamma, d1, d2));
    };

    AscentOptions aopt;
    aopt.grad_tol = opt.inner_tol;
    aopt.max_iters = opt.max_inner;
    aopt.value_noise = 1e-13; // stall honestly at the evaluation-noise floor
    auto res = bb_ascent(value, grad, warm_start, aopt);
    return {0.5 * (res.x + res.x.adjoint().eval()), res.iterations, res.converged, res.grad_norm};
}

} // namespace detail

// (C,psi,eps,tau)-transform of U: the unique V with
// e^{-V/tau2 + log sigma} = P2[psi'((U (+) V - C)/eps)]. Strict convexity of
// psi is not needed; the exponential penalty already makes the inner problem
// strictly concave.
inline HermitianOperator transform_F2_tau(const HermitianOperator& u,
                                          const UnbalancedInstance& inst,
                                          const TransformOptions& opt = {}) {
    const CMatrix warm = CMatrix::Zero(inst.space.d2, inst.space.d2);
    const auto out = detail::transform_inner_tau(u.matrix(), inst, true, warm, opt);
    detail::require_transform_converged(out, "transform_F2_tau");
    return hermitian_project(out.result);
}

inline HermitianOperator transform_F1_tau(const HermitianOperator& v,
                                          const UnbalancedInstance& inst,
                                          const TransformOptions& opt = {}) {
    const CMatrix warm = CMatrix::Zero(inst.space.d1, inst.space.d1);
    const auto out = detail::transform_inner_tau(v.matrix(), inst, false, warm, opt);
    detail::require_transform_converged(out, "transform_F1_tau");
    return hermitian_project(out.result);
}

// ------------------------------ Solvers -------------------------------------

// Joint BB ascent on the coercive unbalanced dual. No recentering step: the
// functional is not translation invariant and its maximizer is unique. When
// the joint line search bottoms out on the evaluation-noise floor above the
// requested tolerance, block-coordinate sweeps (the tau-transform solves,
// each certified against its own block objective) polish the iterate the
// rest of the way; each sweep can only increase the dual value.
inline SolveReport maximize_dual_unbalanced(const DualPotentials& p0,
                                            const UnbalancedInstance& inst, double tol,
                                            int max_iter) {
    require_c1(inst.reg, "maximize_dual_unbalanced");
    if (!(tol > 0.0) || max_iter < 1)
        throw std::invalid_argument("maximize_dual_unbalanced: bad tol or max_iter");

    const Index d1 = inst.space.d1, d2 = inst.space.d2;
    const double eps = inst.epsilon;
    const CMatrix log_rho = detail::log_pd(inst.rho, "maximize_dual_unbalanced");
    const CMatrix log_sigma = detail::log_pd(inst.sigma, "maximize_dual_unbalanced");

    auto value = [&](const PotentialVec& p) {
        const CMatrix w = (detail::oplus_raw(p.u, p.v) - inst.cost.matrix()) / eps;
        const double t1 = detail::exp_trace(-p.u / inst.tau1 + log_rho) - trace_re(inst.rho);
        const double t2 = detail::exp_trace(-p.v / inst.tau2 + log_sigma) - trace_re(inst.sigma);
        return -inst.tau1 * t1 - inst.tau2 * t2 - eps * detail::psi_trace(inst.reg.psi, w);
    };
    auto grad = [&](const PotentialVec& p) -> PotentialVec {
        const CMatrix w = (detail::oplus_raw(p.u, p.v) - inst.cost.matrix()) / eps;
        const CMatrix gamma = detail::psi_prime_of(inst.reg.psi_prime, w);
        return {detail::exp_of(-p.u / inst.tau1 + log_rho) - detail::ptrace1_raw(gamma, d1, d2),
                detail::exp_of(-p.v / inst.tau2 + log_sigma) - detail::ptrace2_raw(gamma, d1, d2)};
    };

    AscentOptions aopt;
    aopt.grad_tol = tol;
    aopt.max_iters = max_iter;
    // Large tau makes the marginal terms nearly flat while the psi term stays
    // stiff; allow gradient-certified steps once value gains drop below the
    // eigendecomposition noise.
    aopt.value_noise = 1e-13;
    auto res = bb_ascent(value, grad, PotentialVec{p0.U.matrix(), p0.V.matrix()}, aopt);

    int iterations = res.iterations;
    bool converged = res.converged;
    CMatrix u = 0.5 * (res.x.u + res.x.u.adjoint().eval());
    CMatrix v = 0.5 * (res.x.v + res.x.v.adjoint().eval());
    if (!converged) {
        TransformOptions topt;
        topt.inner_tol = std::min(1e-10, 0.1 * tol);
        for (int sweep = 0; sweep < 200 && iterations < max_iter; ++sweep) {
            auto f2 = detail::transform_inner_tau(u, inst, true, v, topt);
            v = f2.result;
            auto f1 = detail::transform_inner_tau(v, inst, false, u, topt);
            u = f1.result;
            iterations += f2.iterations + f1.iterations;
            const auto [s1, s2] =
                grad_dual_unbalanced({hermitian_project(u), hermitian_project(v)}, inst);
            if (std::sqrt(vec_dot(s1.matrix(), s1.matrix()) +
                          vec_dot(s2.matrix(), s2.matrix())) <= tol) {
                converged = true;
                break;
            }
            // Both blocks pinned at their floors without reaching tol: no
            // further progress is possible, report honestly.
            if (!f2.converged && !f1.converged) break;
        }
    }

    DualPotentials p{hermitian_project(u), hermitian_project(v)};
    auto plan = recover_plan(p, inst);
    auto [g1, g2] = grad_dual_unbalanced(p, inst);
    SolveReport rep{std::move(p), std::move(plan), eval_dual_unbalanced(
                        {hermitian_project(u), hermitian_project(v)}, inst),
                    {}, hs_norm(g1), hs_norm(g2), iterations, converged, {}};
    return rep;
}

// Alternating transform sweeps; independent cross-check of the joint ascent.
// Warm starts make the recorded dual values non-decreasing.
inline SolveReport alternate_dual_unbalanced(const DualPotentials& p0,
                                             const UnbalancedInstance& inst, double tol,
                                             int max_outer) {
    require_c1(inst.reg, "alternate_dual_unbalanced");
    if (!(tol > 0.0) || max_outer < 1)
        throw std::invalid_argument("alternate_dual_unbalanced: bad tol or max_outer");

    TransformOptions topt;
    topt.inner_tol = std::min(1e-9, 0.1 * tol);

    CMatrix u = p0.U.matrix(), v = p0.V.matrix();
    SolveReport rep{{hermitian_project(u), hermitian_project(v)}, {}, 0.0, {}, 0.0, 0.0, 0, false, {}};
    double best_residual = kInf;
    int last_progress = 0;
    for (int n = 1; n <= max_outer; ++n) {
        auto f2 = detail::transform_inner_tau(u, inst, true, v, topt);
        v = f2.result;
        auto f1 = detail::transform_inner_tau(v, inst, false, u, topt);
        u = f1.result;

        rep.potentials = {hermitian_project(u), hermitian_project(v)};
        rep.dual_value = eval_dual_unbalanced(rep.potentials, inst);
        auto [g1, g2] = grad_dual_unbalanced(rep.potentials, inst);
        rep.residual1 = hs_norm(g1);
        rep.residual2 = hs_norm(g2);
        rep.iterations = n;
        rep.history.push_back({n, rep.dual_value, rep.residual1, rep.residual2, 0.0,
                               f2.iterations + f1.iterations});
        if (rep.residual1 <= tol && rep.residual2 <= tol) {
            rep.converged = true;
            break;
        }
        // Residual flatlined at the block-solve floor; stop honestly.
        const double res = std::max(rep.residual1, rep.residual2);
        if (res < 0.95 * best_residual) {
            best_residual = res;
            last_progress = n;
        } else if (n - last_progress > 20) {
            break;
        }
    }
    rep.plan = recover_plan(rep.potentials, inst);
    return rep;
}

} // namespace qot
