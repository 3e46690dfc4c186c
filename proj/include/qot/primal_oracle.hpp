#pragma once

#include "qot/dual_balanced.hpp"
#include "qot/dual_unbalanced.hpp"
#include "qot/herm.hpp"
#include "qot/primal_energy.hpp"
#include "qot/regularizer.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>

namespace qot {

// The primal oracle certifies duality gaps without trusting the dual solvers:
// it shares only herm_core and the regularizers with them, so agreement of
// values is evidence rather than tautology.

// ------------------------------ Feasible set --------------------------------

struct FeasibleSet {
    enum class Mode { balanced, unbalanced };

    static FeasibleSet balanced(ProductSpace space, HermitianOperator rho,
                                HermitianOperator sigma) {
        return FeasibleSet{Mode::balanced, space, std::move(rho), std::move(sigma)};
    }
    static FeasibleSet unbalanced(ProductSpace space) {
        return FeasibleSet{Mode::unbalanced, space, {}, {}};
    }
    static FeasibleSet of(const BalancedInstance& inst) {
        return balanced(inst.space, inst.rho, inst.sigma);
    }

    Mode mode;
    ProductSpace space;
    std::optional<HermitianOperator> rho;
    std::optional<HermitianOperator> sigma;
};

// ------------------------------ Projections ---------------------------------

// Eigenvalue clipping onto the PSD cone.
inline HermitianOperator psd_project(const HermitianOperator& a) {
    const auto sd = spectral_decompose(a);
    RVector clipped = sd.eigenvalues.cwiseMax(0.0);
    return hermitian_project(sd.eigenvectors * clipped.asDiagonal() * sd.eigenvectors.adjoint());
}

namespace detail {

// Orthogonal projection onto {G : P1 G = rho, P2 G = sigma}. The correction
// a (x) Id + Id (x) b solves the normal equations; the common trace defect s
// is split evenly between the two factors so the double-counted trace shift
// cancels.
inline CMatrix affine_marginal_project(const CMatrix& g, const ProductSpace& sp,
                                       const CMatrix& rho, const CMatrix& sigma) {
    const Index d1 = sp.d1, d2 = sp.d2;
    const CMatrix r1 = rho - ptrace1_raw(g, d1, d2);
    const CMatrix r2 = sigma - ptrace2_raw(g, d1, d2);
    const double s = r1.trace().real();
    const CMatrix a = (r1 - (s / (2.0 * d1)) * CMatrix::Identity(d1, d1)) / static_cast<double>(d2);
    const CMatrix b = (r2 - (s / (2.0 * d2)) * CMatrix::Identity(d2, d2)) / static_cast<double>(d1);
    return g + oplus_raw(a, b);
}

} // namespace detail

// Dykstra's alternating projections between the affine marginal set and the
// PSD cone. Unlike plain alternating projections this converges to the
// projection of the input, giving a deterministic feasible-point generator.
// The cone projection is applied last, so the returned plan is exactly PSD
// and only the marginal residual carries the iteration error.
inline HermitianOperator project_to_feasible(const HermitianOperator& g0,
                                             const FeasibleSet& feasible) {
    if (feasible.mode != FeasibleSet::Mode::balanced)
        throw std::invalid_argument("project_to_feasible: requires a balanced feasible set");
    detail::require_product_dim(g0, feasible.space, "project_to_feasible");
    const ProductSpace& sp = feasible.space;
    const CMatrix& rho = feasible.rho->matrix();
    const CMatrix& sigma = feasible.sigma->matrix();

    CMatrix x = g0.matrix();
    CMatrix p = CMatrix::Zero(x.rows(), x.cols());
    CMatrix q = p;
    constexpr int kMaxIters = 10000;
    double aff_res = kInf;
    for (int it = 0; it < kMaxIters; ++it) {
        const CMatrix y = detail::affine_marginal_project(x + p, sp, rho, sigma);
        p = x + p - y;
        const CMatrix z = psd_project(hermitian_project(y + q)).matrix();
        q = y + q - z;
        x = z;

        aff_res = std::max((detail::ptrace1_raw(x, sp.d1, sp.d2) - rho).norm(),
                           (detail::ptrace2_raw(x, sp.d1, sp.d2) - sigma).norm());
        // Drive well past the 1e-9 contract; the PSD membership is exact.
        if (aff_res <= 1e-11) return hermitian_project(x);
    }
    if (aff_res <= 1e-9) return hermitian_project(x);
    throw std::runtime_error("project_to_feasible: Dykstra iteration cap reached");
}

// ------------------------------ Primal evaluation ---------------------------

inline double eval_primal(const HermitianOperator& plan, const BalancedInstance& inst) {
    detail::require_product_dim(plan, inst.space, "eval_primal");
    return primal_energy(plan, inst.cost, inst.epsilon, inst.reg);
}

// ------------------------------ Primal minimizers ---------------------------

struct PrimalReport {
    HermitianOperator plan;
    double value = 0.0;
    double residual = 0.0; // projected-gradient map norm at return
    int iterations = 0;
    bool converged = false;
};

namespace detail {

// The descent works on the C1 convex extension of phi, linear below the cut:
// optimal plans can have eigenvalues at e^{-|W|/eps} scale (far below any
// useful floor), and the raw phi'(floor) gradient makes Euclidean projected
// steps oscillate around such boundary modes instead of pinning them to the
// cone face. Below the cut the extended gradient points outward, the
// projection holds the mode at zero, and the value bias of the truncation is
// O(eps * cut * |log cut|). Reported values are re-evaluated with the true
// phi at the feasible iterate, so certificates are unaffected.
inline constexpr double kPrimalEigCut = 1e-7;

inline double phi_extended(const Regularizer& reg, double lam) {
    if (lam >= kPrimalEigCut) return reg.phi(lam);
    return reg.phi(kPrimalEigCut) + reg.phi_prime(kPrimalEigCut) * (lam - kPrimalEigCut);
}

inline double primal_energy_extended(const HermitianOperator& plan, const HermitianOperator& cost,
                                     double epsilon, const Regularizer& reg) {
    const auto sd = spectral_decompose(plan);
    double acc = 0.0;
    for (Index k = 0; k < sd.eigenvalues.size(); ++k)
        acc += phi_extended(reg, std::max(sd.eigenvalues(k), 0.0));
    return hs_inner(cost, plan) + epsilon * acc;
}

inline CMatrix phi_prime_extended(const Regularizer& reg, const CMatrix& g) {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(g);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("phi_prime_extended: eigensolver failed");
    RVector fx(solver.eigenvalues().size());
    for (Index k = 0; k < fx.size(); ++k)
        fx(k) = reg.phi_prime(std::max(solver.eigenvalues()(k), kPrimalEigCut));
    CMatrix m = solver.eigenvectors() * fx.asDiagonal() * solver.eigenvectors().adjoint();
    return 0.5 * (m + m.adjoint().eval());
}

// Spectral projected gradient: Barzilai-Borwein trial steps, halving
// backtracking against the maximum of the last few values. The nonmonotone
// window lets the BB step ride out the stiff spectrum near the cone boundary
// (plans with nearly zero eigenvalues put the plain-PG rate out of reach).
// `project` must be the exact projection onto the feasible set.
template <class ValueFn, class GradFn, class ProjectFn>
PrimalReport projected_gradient_minimize(ValueFn&& value, GradFn&& grad, ProjectFn&& project,
                                         HermitianOperator g0, double tol, int max_iter) {
    constexpr int kWindow = 10;
    HermitianOperator x = project(g0);
    double f = value(x);
    CMatrix grad_mat = grad(x.matrix());
    std::vector<double> recent{f};

    double t = 1.0;
    bool have_pair = false;
    CMatrix x_prev, grad_prev;

    PrimalReport rep{x, f, kInf, 0, false};
    HermitianOperator best_plan = x;
    double best_value = f;
    for (int it = 0; it < max_iter; ++it) {
        if (have_pair) {
            const CMatrix s = rep.plan.matrix() - x_prev;
            const CMatrix y = grad_mat - grad_prev;
            const double sy = vec_dot(s, y);
            t = sy > 0.0 ? std::min(std::max(vec_dot(s, s) / sy, 1e-10), 1e6)
                         : std::min(t * 2.0, 1e6);
        }
        double f_ref = recent[0];
        for (double v : recent) f_ref = std::max(f_ref, v);

        bool accepted = false;
        HermitianOperator x_next = rep.plan;
        double f_next = f;
        CMatrix step;
        double t_used = t;
        // Slack covers the feasibility wobble of the inexact projection
        // (~1e-11 in the iterate) seen through the gradient.
        const double slack = 1e-11 * (1.0 + std::abs(f) + grad_mat.norm());
        for (int k = 0; k < 60; ++k) {
            x_next = project(hermitian_project(rep.plan.matrix() - t_used * grad_mat));
            step = x_next.matrix() - rep.plan.matrix();
            f_next = value(x_next);
            const double decrease = 1e-4 * vec_dot(grad_mat, step); // <= 0 for a projected step
            if (std::isfinite(f_next) && f_next <= f_ref + decrease + slack) {
                accepted = true;
                break;
            }
            t_used *= 0.5;
        }
        if (!accepted) { // pinned at the projection noise floor
            rep.plan = best_plan;
            rep.value = best_value;
            return rep;
        }

        rep.residual = step.norm() / t_used;
        x_prev = rep.plan.matrix();
        grad_prev = grad_mat;
        have_pair = true;
        rep.plan = x_next;
        f = f_next;
        rep.value = f;
        grad_mat = grad(rep.plan.matrix());
        recent.push_back(f);
        if (recent.size() > kWindow) recent.erase(recent.begin());
        if (f < best_value) {
            best_value = f;
            best_plan = rep.plan;
        }
        rep.iterations = it + 1;
        if (rep.residual <= tol) {
            rep.converged = true;
            return rep;
        }
    }
    rep.plan = best_plan; // best-so-far, flagged non-converged
    rep.value = best_value;
    return rep;
}

} // namespace detail

// Independent minimizer of F^eps over {PSD, P1 G = rho, P2 G = sigma}. Does
// not touch any dual-solver code path.
inline PrimalReport minimize_primal_balanced(const BalancedInstance& inst, double tol,
                                             int max_iter) {
    const FeasibleSet fs = FeasibleSet::of(inst);
    auto value = [&](const HermitianOperator& g) {
        return detail::primal_energy_extended(g, inst.cost, inst.epsilon, inst.reg);
    };
    auto grad = [&](const CMatrix& g) -> CMatrix {
        return inst.cost.matrix() + inst.epsilon * detail::phi_prime_extended(inst.reg, g);
    };
    auto project = [&](const HermitianOperator& g) { return project_to_feasible(g, fs); };
    PrimalReport rep = detail::projected_gradient_minimize(value, grad, project,
                                                           kron(inst.rho, inst.sigma), tol,
                                                           max_iter);
    rep.value = eval_primal(rep.plan, inst); // true functional at the feasible plan
    return rep;
}

// Unbalanced variant: PSD cone only; the marginal penalties enter through the
// gradient terms tau_i (log P_i Gamma - log marginal) embedded by the partial
// trace adjoint.
inline PrimalReport minimize_primal_unbalanced(const UnbalancedInstance& inst, double tol,
                                               int max_iter) {
    const Index d1 = inst.space.d1, d2 = inst.space.d2;
    const CMatrix log_rho = detail::log_pd(inst.rho, "minimize_primal_unbalanced");
    const CMatrix log_sigma = detail::log_pd(inst.sigma, "minimize_primal_unbalanced");

    auto floored_log = [](const CMatrix& m) -> CMatrix {
        Eigen::SelfAdjointEigenSolver<CMatrix> solver(m);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("minimize_primal_unbalanced: eigensolver failed");
        RVector fx(solver.eigenvalues().size());
        for (Index k = 0; k < fx.size(); ++k)
            fx(k) = std::log(std::max(solver.eigenvalues()(k), 1e-12));
        CMatrix out = solver.eigenvectors() * fx.asDiagonal() * solver.eigenvectors().adjoint();
        return 0.5 * (out + out.adjoint().eval());
    };

    auto value = [&](const HermitianOperator& g) {
        const double base = detail::primal_energy_extended(g, inst.cost, inst.epsilon, inst.reg);
        const double e1 = relative_entropy(partial_trace_1(g, inst.space), inst.rho);
        const double e2 = relative_entropy(partial_trace_2(g, inst.space), inst.sigma);
        return base + inst.tau1 * e1 + inst.tau2 * e2;
    };
    auto grad = [&](const CMatrix& g) -> CMatrix {
        const CMatrix m1 = floored_log(detail::ptrace1_raw(g, d1, d2)) - log_rho;
        const CMatrix m2 = floored_log(detail::ptrace2_raw(g, d1, d2)) - log_sigma;
        return inst.cost.matrix() + inst.epsilon * detail::phi_prime_extended(inst.reg, g) +
               detail::oplus_raw(inst.tau1 * m1, inst.tau2 * m2);
    };
    auto project = [&](const HermitianOperator& g) { return psd_project(g); };

    const double scale = 1.0 / std::sqrt(trace_re(inst.rho) * trace_re(inst.sigma));
    PrimalReport rep = detail::projected_gradient_minimize(
        value, grad, project, kron(inst.rho, inst.sigma) * scale, tol, max_iter);
    rep.value = eval_primal_unbalanced(rep.plan, inst); // true functional
    return rep;
}

// ------------------------------ Certification -------------------------------

struct GapRecord {
    double primal = 0.0;
    double dual = 0.0;
    double gap = 0.0;
    double relative_gap = 0.0;
};

inline GapRecord duality_gap(double primal_value, double dual_value) {
    GapRecord rec;
    rec.primal = primal_value;
    rec.dual = dual_value;
    rec.gap = primal_value - dual_value;
    rec.relative_gap = rec.gap / (1.0 + std::abs(dual_value));
    return rec;
}

struct FenchelYoungResult {
    bool ok = false;
    double slack = 0.0; // Tr[phi(G)] + Tr[psi(W)] - <W, G>
};

// <W, Gamma> <= Tr[phi(Gamma)] + Tr[psi(W)], with equality at conjugate pairs.
inline FenchelYoungResult fenchel_young_check(const HermitianOperator& gamma,
                                              const HermitianOperator& w, const Regularizer& reg) {
    if (gamma.dim() != w.dim())
        throw std::invalid_argument("fenchel_young_check: dimension mismatch");
    const auto sd = spectral_decompose(gamma);
    double phi_sum = 0.0;
    for (Index k = 0; k < sd.eigenvalues.size(); ++k) {
        double lam = sd.eigenvalues(k);
        if (lam < -1e-10)
            throw std::invalid_argument("fenchel_young_check: Gamma is not PSD within tolerance");
        phi_sum += reg.phi(std::max(lam, 0.0));
    }
    const double psi_sum = detail::psi_trace(reg.psi, w.matrix());
    FenchelYoungResult res;
    res.slack = phi_sum + psi_sum - hs_inner(w, gamma);
    res.ok = res.slack >= -1e-9;
    return res;
}

} // namespace qot
