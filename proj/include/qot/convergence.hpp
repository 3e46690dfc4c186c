#pragma once

#include "qot/dual_balanced.hpp"
#include "qot/dual_unbalanced.hpp"
#include "qot/mollify.hpp"
#include "qot/primal_oracle.hpp"
#include "qot/report.hpp"

#include <cmath>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qot {

// Experiments reproducing the limit statements: tau -> infinity convergence of
// values, plans, recentered potentials and transforms, plus mollification
// sweeps for nonsmooth conjugates.

// ------------------------------ Recentering ---------------------------------

// (U + lambda_1(V) Id, V - lambda_1(V) Id); leaves the balanced dual value
// unchanged and pins lambda_1(V) = 0.
inline DualPotentials recenter_potentials(const DualPotentials& p) {
    const double lam = smallest_eigenvalue(p.V);
    return {p.U + lam * HermitianOperator::identity(p.U.dim()),
            p.V - lam * HermitianOperator::identity(p.V.dim())};
}

// ------------------------------ Tau sweep -----------------------------------

struct TauRecord {
    double tau1 = 0.0;
    double tau2 = 0.0;
    double primal_value = 0.0; // F^{eps,tau} at the recovered plan
    double dual_value = 0.0;
    double gap = 0.0;
    double plan_distance = 0.0;      // HS distance to the balanced plan
    double potential_distance = 0.0; // recentered potentials vs balanced maximizer
    double entropy_penalty_1 = 0.0;  // tau1 E(P1 Gamma | rho)
    double entropy_penalty_2 = 0.0;
    bool converged = false;
};

struct TauSweepResult {
    SolveReport balanced;          // Sinkhorn reference solve
    std::vector<TauRecord> records;
    bool aborted = false;          // some solve failed to converge
};

struct SweepOptions {
    double tol = 1e-8;
    // Large tau pushes the unbalanced gradient-noise floor above 1e-8; the
    // quantities recorded per grid point (values, plans, recentered
    // potentials) are insensitive to the weak translation mode, so 5e-6 is
    // ample for the convergence thresholds.
    double unbalanced_tol = 5e-6;
    int max_outer = 400;
    int max_dual_iters = 200000;
    bool asymmetric = false; // tau2 = 2 tau1 instead of tau2 = tau1
    int threads = 1;         // per-grid-point solves are independent
};

// For each tau in the ascending grid, solve the unbalanced problem by joint
// ascent and compare against a balanced Sinkhorn reference (two independent
// solver paths). Aborts with partial records if any solve fails to converge.
inline TauSweepResult tau_sweep(const BalancedInstance& base, const std::vector<double>& tau_grid,
                                const SweepOptions& opt = {}) {
    require_strictly_convex(base.reg, "tau_sweep");
    require_c1(base.reg, "tau_sweep");
    for (std::size_t i = 0; i + 1 < tau_grid.size(); ++i)
        if (!(tau_grid[i] < tau_grid[i + 1]))
            throw std::invalid_argument("tau_sweep: tau grid must be strictly ascending");

    const Index d1 = base.space.d1, d2 = base.space.d2;
    const DualPotentials zero{HermitianOperator::zero(d1), HermitianOperator::zero(d2)};

    TauSweepResult result{sinkhorn(zero, base, opt.tol, opt.max_outer), {}, false};
    if (!result.balanced.converged) {
        result.aborted = true;
        return result;
    }
    const DualPotentials ref = recenter_potentials(result.balanced.potentials);
    const HermitianOperator& ref_plan = *result.balanced.plan;

    auto solve_one = [&](double tau) {
        const double tau1 = tau, tau2 = opt.asymmetric ? 2.0 * tau : tau;
        const UnbalancedInstance uinst = with_taus(base, tau1, tau2);
        const SolveReport rep =
            maximize_dual_unbalanced(zero, uinst, opt.unbalanced_tol, opt.max_dual_iters);

        TauRecord rec;
        rec.tau1 = tau1;
        rec.tau2 = tau2;
        rec.dual_value = rep.dual_value;
        rec.converged = rep.converged;
        const HermitianOperator& plan = *rep.plan;
        rec.primal_value = eval_primal_unbalanced(plan, uinst);
        rec.gap = rec.primal_value - rec.dual_value;
        rec.plan_distance = hs_norm(plan - ref_plan);
        const DualPotentials rc = recenter_potentials(rep.potentials);
        rec.potential_distance = std::sqrt(std::pow(hs_norm(rc.U - ref.U), 2) +
                                           std::pow(hs_norm(rc.V - ref.V), 2));
        rec.entropy_penalty_1 =
            tau1 * relative_entropy(partial_trace_1(plan, base.space), base.rho);
        rec.entropy_penalty_2 =
            tau2 * relative_entropy(partial_trace_2(plan, base.space), base.sigma);
        return rec;
    };

    if (opt.threads > 1) {
        // Solves are pure; run in waves and assemble in grid order.
        std::vector<TauRecord> recs(tau_grid.size());
        for (std::size_t i0 = 0; i0 < tau_grid.size(); i0 += static_cast<std::size_t>(opt.threads)) {
            const std::size_t i1 =
                std::min(tau_grid.size(), i0 + static_cast<std::size_t>(opt.threads));
            std::vector<std::future<TauRecord>> wave;
            for (std::size_t i = i0; i < i1; ++i)
                wave.push_back(std::async(std::launch::async, solve_one, tau_grid[i]));
            for (std::size_t i = i0; i < i1; ++i) recs[i] = wave[i - i0].get();
        }
        for (const TauRecord& rec : recs) {
            result.records.push_back(rec);
            if (!rec.converged) {
                result.aborted = true;
                break;
            }
        }
        return result;
    }

    for (double tau : tau_grid) {
        const TauRecord rec = solve_one(tau);
        result.records.push_back(rec);
        if (!rec.converged) {
            result.aborted = true;
            break;
        }
    }
    return result;
}

// ------------------------------ Transform convergence -----------------------

struct TransformCheckRecord {
    double tau = 0.0;
    double distance_F2 = 0.0; // |F2_tau(U_tau) - F2(U_limit)|_HS
    double distance_F1 = 0.0;
};

struct TransformCheckReport {
    std::vector<TransformCheckRecord> records;
    bool decreasing = false; // both distance columns strictly decreasing
    bool aborted = false;
};

// Feeds the sequences U_tau -> U_limit, V_tau -> V_limit through the
// (C,psi,eps,tau)-transforms and measures the distance to the balanced
// transform of the limit.
inline TransformCheckReport transform_convergence_check(
    const BalancedInstance& base, const HermitianOperator& u_limit,
    const HermitianOperator& v_limit, const std::vector<HermitianOperator>& u_seq,
    const std::vector<HermitianOperator>& v_seq, const std::vector<double>& tau_grid,
    const TransformOptions& topt = {}) {
    require_strictly_convex(base.reg, "transform_convergence_check");
    require_c1(base.reg, "transform_convergence_check");
    if (u_seq.size() != tau_grid.size() || v_seq.size() != tau_grid.size())
        throw std::invalid_argument("transform_convergence_check: sequence/grid size mismatch");

    TransformCheckReport report;
    HermitianOperator f2_limit = transform_F2(u_limit, base, topt);
    HermitianOperator f1_limit = transform_F1(v_limit, base, topt);
    for (std::size_t i = 0; i < tau_grid.size(); ++i) {
        const UnbalancedInstance uinst = with_taus(base, tau_grid[i], tau_grid[i]);
        TransformCheckRecord rec;
        rec.tau = tau_grid[i];
        try {
            rec.distance_F2 = hs_norm(transform_F2_tau(u_seq[i], uinst, topt) - f2_limit);
            rec.distance_F1 = hs_norm(transform_F1_tau(v_seq[i], uinst, topt) - f1_limit);
        } catch (const std::runtime_error&) {
            report.aborted = true;
            return report;
        }
        report.records.push_back(rec);
    }
    report.decreasing = true;
    for (std::size_t i = 0; i + 1 < report.records.size(); ++i)
        if (!(report.records[i + 1].distance_F2 < report.records[i].distance_F2) ||
            !(report.records[i + 1].distance_F1 < report.records[i].distance_F1))
            report.decreasing = false;
    return report;
}

// ------------------------------ Mollification sweep -------------------------

struct MollifyRecord {
    int n = 0;
    double dual_value = 0.0;           // D^{eps,n} via the mollified conjugate
    double gap = 0.0;                  // base primal-oracle value minus dual_value
    double plan_distance = 0.0;        // vs the direct plan (when the base is C1)
    double potential_distance = 0.0;   // recentered potentials vs direct maximizer
    double max_potential_norm = 0.0;   // max(|U_n|_inf, |V_n|_inf), equi-coercivity witness
    double sup_psi_diff = 0.0;         // sup over a grid of psi_n - psi
    bool converged = false;
};

struct MollifySweepReport {
    std::vector<MollifyRecord> records;
    double base_primal_value = 0.0;            // primal oracle on the base problem
    std::optional<double> direct_dual_value;   // maximize_dual on the base (if C1)
    bool aborted = false;
};

// For each n: mollify the base conjugate, solve the balanced dual, and record
// the gap against the base primal oracle together with the maximizer norms
// (bounded uniformly in n by equi-coercivity).
inline MollifySweepReport mollification_sweep(const BalancedInstance& base,
                                              const std::vector<int>& n_grid,
                                              const SweepOptions& opt = {}) {
    MollifySweepReport report;
    const Index d1 = base.space.d1, d2 = base.space.d2;
    const DualPotentials zero{HermitianOperator::zero(d1), HermitianOperator::zero(d2)};

    const PrimalReport oracle = minimize_primal_balanced(base, 1e-6, 100000);
    report.base_primal_value = oracle.value;

    std::optional<DualPotentials> direct_ref;
    std::optional<HermitianOperator> direct_plan;
    if (base.reg.c1_psi) {
        const SolveReport direct = maximize_dual(zero, base, opt.tol, opt.max_dual_iters);
        report.direct_dual_value = direct.dual_value;
        direct_ref = recenter_potentials(direct.potentials);
        direct_plan = direct.plan;
    }

    for (int n : n_grid) {
        BalancedInstance inst_n(base.space, base.cost, base.rho, base.sigma, base.epsilon,
                                mollify(base.reg, n));
        const SolveReport rep = maximize_dual(zero, inst_n, opt.tol, opt.max_dual_iters);

        MollifyRecord rec;
        rec.n = n;
        rec.dual_value = rep.dual_value;
        rec.gap = report.base_primal_value - rep.dual_value;
        rec.converged = rep.converged;
        rec.max_potential_norm = std::max(sup_norm(rep.potentials.U), sup_norm(rep.potentials.V));
        if (direct_plan) rec.plan_distance = hs_norm(*rep.plan - *direct_plan);
        if (direct_ref) {
            const DualPotentials rc = recenter_potentials(rep.potentials);
            rec.potential_distance = std::sqrt(std::pow(hs_norm(rc.U - direct_ref->U), 2) +
                                               std::pow(hs_norm(rc.V - direct_ref->V), 2));
        }
        double sup_diff = 0.0;
        for (double x = -6.0; x <= 3.0 + 1e-12; x += 0.05)
            sup_diff = std::max(sup_diff, std::abs(inst_n.reg.psi(x) - base.reg.psi(x)));
        rec.sup_psi_diff = sup_diff;

        report.records.push_back(rec);
        if (!rep.converged) {
            report.aborted = true;
            break;
        }
    }
    return report;
}

// ------------------------------ CSV emission --------------------------------

// One row per grid point: tau_or_n, primal_value, dual_value, gap,
// plan_distance, potential_distance, entropy_penalty_1, entropy_penalty_2,
// converged.
inline std::string sweep_csv_header() {
    return "tau_or_n,primal_value,dual_value,gap,plan_distance,potential_distance,"
           "entropy_penalty_1,entropy_penalty_2,converged";
}

namespace detail {
inline void csv_row(std::ostringstream& os, double key, double primal, double dual, double gap,
                    double plan_dist, double pot_dist, double pen1, double pen2, bool converged) {
    os.precision(17);
    os << key << ',' << primal << ',' << dual << ',' << gap << ',' << plan_dist << ','
       << pot_dist << ',' << pen1 << ',' << pen2 << ',' << (converged ? 1 : 0) << '\n';
}
} // namespace detail

inline std::string to_csv(const TauSweepResult& sweep) {
    std::ostringstream os;
    os << sweep_csv_header() << '\n';
    for (const auto& r : sweep.records)
        detail::csv_row(os, r.tau1, r.primal_value, r.dual_value, r.gap, r.plan_distance,
                        r.potential_distance, r.entropy_penalty_1, r.entropy_penalty_2,
                        r.converged);
    return os.str();
}

inline std::string to_csv(const MollifySweepReport& sweep) {
    std::ostringstream os;
    os << sweep_csv_header() << '\n';
    for (const auto& r : sweep.records)
        detail::csv_row(os, r.n, sweep.base_primal_value, r.dual_value, r.gap, r.plan_distance,
                        r.potential_distance, 0.0, 0.0, r.converged);
    return os.str();
}

inline std::string to_csv(const TransformCheckReport& report) {
    std::ostringstream os;
    os << "tau,distance_F2,distance_F1\n";
    os.precision(17);
    for (const auto& r : report.records)
        os << r.tau << ',' << r.distance_F2 << ',' << r.distance_F1 << '\n';
    return os.str();
}

} // namespace qot
