#pragma once

#include "qot/config.hpp"
#include "qot/convergence.hpp"
#include "qot/dual_balanced.hpp"
#include "qot/dual_unbalanced.hpp"
#include "qot/primal_oracle.hpp"
#include "qot/version.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace qot {

inline constexpr int kExitConverged = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNotConverged = 2;

namespace detail {

struct InstanceData {
    ProductSpace space;
    HermitianOperator cost;
    HermitianOperator rho;
    HermitianOperator sigma;
};

inline InstanceData resolve_instance(const RunConfig& cfg) {
    if (cfg.generator) {
        GeneratedData data = generate_data(*cfg.generator);
        return {ProductSpace(cfg.generator->d1, cfg.generator->d2), std::move(data.cost),
                std::move(data.rho), std::move(data.sigma)};
    }
    if (!(cfg.cost && cfg.rho && cfg.sigma))
        throw std::invalid_argument("run: config has no usable instance");
    return {ProductSpace(cfg.rho->dim(), cfg.sigma->dim()), *cfg.cost, *cfg.rho, *cfg.sigma};
}

inline nlohmann::json history_to_json(const std::vector<IterationRecord>& history) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& h : history)
        out.push_back({{"iteration", h.iteration},
                       {"dual_value", h.dual_value},
                       {"residual1", h.residual1},
                       {"residual2", h.residual2},
                       {"lambda_shift", h.lambda_shift},
                       {"inner_iterations", h.inner_iterations}});
    return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("run: cannot open " + path + " for writing");
    os << text;
}

class ReportWriter {
public:
    ReportWriter(const RunConfig& cfg, const char* mode)
        : cfg_(cfg), start_(std::chrono::steady_clock::now()) {
        report_["version"] = kVersion;
        report_["mode"] = mode;
        report_["config"] = cfg.echo;
        std::filesystem::create_directories(cfg.output_dir);
    }

    nlohmann::json& json() { return report_; }

    void add_solve(const SolveReport& rep, const std::optional<double>& primal) {
        report_["converged"] = rep.converged;
        report_["iterations"] = rep.iterations;
        report_["dual_value"] = rep.dual_value;
        report_["marginal_residuals"] = {rep.residual1, rep.residual2};
        report_["potentials"] = {{"U", matrix_to_json(rep.potentials.U)},
                                 {"V", matrix_to_json(rep.potentials.V)}};
        if (!rep.history.empty()) report_["history"] = history_to_json(rep.history);
        if (primal) {
            report_["primal_value"] = *primal;
            report_["gap"] = *primal - rep.dual_value;
        }
        write_matrix_file(path("potential_U.json"), rep.potentials.U);
        write_matrix_file(path("potential_V.json"), rep.potentials.V);
        if (rep.plan) {
            report_["plan"] = matrix_to_json(*rep.plan);
            write_matrix_file(path("plan.json"), *rep.plan);
        }
    }

    std::string path(const std::string& name) const {
        return (std::filesystem::path(cfg_.output_dir) / name).string();
    }

    void finish() {
        const auto elapsed = std::chrono::steady_clock::now() - start_;
        report_["wall_time_ms"] =
            cfg_.canonical
                ? 0.0
                : std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(elapsed)
                      .count();
        write_text_file(path("report.json"), report_.dump(2) + "\n");
    }

private:
    const RunConfig& cfg_;
    std::chrono::steady_clock::time_point start_;
    nlohmann::json report_;
};

} // namespace detail

// Scalar closed-form suite: the d1 = d2 = 1 instance with c = 0.5, eps = 0.2
// has balanced optimum 0.3 (von Neumann, at U + V = c) and 0.6 (quadratic, at
// U + V = c + eps); dual solvers, Sinkhorn, and the primal oracle must agree
// to 1e-8.
inline bool run_selftest(std::ostream& out) {
    bool all_ok = true;
    auto check = [&](const char* name, bool ok) {
        out << (ok ? "[PASS] " : "[FAIL] ") << name << "\n";
        all_ok = all_ok && ok;
    };
    CMatrix one(1, 1), half(1, 1);
    one(0, 0) = 1.0;
    half(0, 0) = 0.5;
    const HermitianOperator unit{one}, cost{half};
    const DualPotentials zero{HermitianOperator::zero(1), HermitianOperator::zero(1)};

    {
        const BalancedInstance vn(ProductSpace(1, 1), cost, unit, unit, 0.2, make_von_neumann());
        const SolveReport sk = sinkhorn(zero, vn, 1e-10, 10);
        check("von Neumann scalar: Sinkhorn value 0.3",
              sk.converged && std::abs(sk.dual_value - 0.3) <= 1e-8);
        check("von Neumann scalar: Sinkhorn potentials sum to c",
              std::abs(sk.potentials.U.matrix()(0, 0).real() +
                       sk.potentials.V.matrix()(0, 0).real() - 0.5) <= 1e-8);
        const SolveReport asc = maximize_dual(zero, vn, 1e-10, 100000);
        check("von Neumann scalar: joint ascent value 0.3",
              asc.converged && std::abs(asc.dual_value - 0.3) <= 1e-8);
        const PrimalReport pr = minimize_primal_balanced(vn, 1e-8, 20000);
        check("von Neumann scalar: primal oracle value 0.3",
              pr.converged && std::abs(pr.value - 0.3) <= 1e-8);
        check("von Neumann scalar: duality gap closes",
              std::abs(pr.value - sk.dual_value) <= 1e-8);
    }
    {
        const BalancedInstance quad(ProductSpace(1, 1), cost, unit, unit, 0.2, make_quadratic());
        const SolveReport asc = maximize_dual(zero, quad, 1e-10, 100000);
        check("quadratic scalar: joint ascent value 0.6",
              asc.converged && std::abs(asc.dual_value - 0.6) <= 1e-8);
        const PrimalReport pr = minimize_primal_balanced(quad, 1e-8, 20000);
        check("quadratic scalar: primal oracle value 0.6",
              pr.converged && std::abs(pr.value - 0.6) <= 1e-8);
        check("quadratic scalar: duality gap closes",
              std::abs(pr.value - asc.dual_value) <= 1e-8);
    }
    return all_ok;
}

// Dispatch a parsed config: solve, write report.json plus matrix/CSV
// artifacts into the output directory, and map the outcome to the exit code
// contract (0 converged, 2 not converged; errors are thrown and mapped to 1
// by the caller).
inline int run(RunConfig cfg, std::ostream& log = std::cout) {
    if (const char* env_seed = std::getenv("QOT_SEED"); env_seed && cfg.generator)
        cfg.generator->seed = std::strtoull(env_seed, nullptr, 10);

    if (cfg.mode == RunMode::selftest) {
        detail::ReportWriter writer(cfg, "selftest");
        const bool ok = run_selftest(log);
        writer.json()["converged"] = ok;
        writer.finish();
        return ok ? kExitConverged : kExitNotConverged;
    }

    const detail::InstanceData data = detail::resolve_instance(cfg);
    const Regularizer reg = make_regularizer(cfg.regularizer);

    switch (cfg.mode) {
        case RunMode::balanced: {
            detail::ReportWriter writer(cfg, "balanced");
            const BalancedInstance inst(data.space, data.cost, data.rho, data.sigma, cfg.epsilon,
                                        reg);
            const DualPotentials zero{HermitianOperator::zero(data.space.d1),
                                      HermitianOperator::zero(data.space.d2)};
            // Sinkhorn where the conjugate supports it, joint ascent otherwise.
            const SolveReport rep =
                (reg.strictly_convex_psi && reg.c1_psi)
                    ? sinkhorn(zero, inst, cfg.tol, std::min(cfg.max_iter, 1000))
                    : maximize_dual(zero, inst, cfg.tol, cfg.max_iter);
            const PrimalReport oracle = minimize_primal_balanced(inst, 1e-6, cfg.max_iter);
            writer.add_solve(rep, oracle.value);
            writer.json()["primal_converged"] = oracle.converged;
            writer.finish();
            return rep.converged && oracle.converged ? kExitConverged : kExitNotConverged;
        }
        case RunMode::unbalanced: {
            detail::ReportWriter writer(cfg, "unbalanced");
            const UnbalancedInstance inst(data.space, data.cost, data.rho, data.sigma, cfg.epsilon,
                                          cfg.tau[0], cfg.tau[1], reg);
            const DualPotentials zero{HermitianOperator::zero(data.space.d1),
                                      HermitianOperator::zero(data.space.d2)};
            const SolveReport rep = maximize_dual_unbalanced(zero, inst, cfg.tol, cfg.max_iter);
            const PrimalReport oracle = minimize_primal_unbalanced(inst, 1e-6, cfg.max_iter);
            writer.add_solve(rep, oracle.value);
            writer.json()["primal_converged"] = oracle.converged;
            writer.finish();
            return rep.converged && oracle.converged ? kExitConverged : kExitNotConverged;
        }
        case RunMode::tau_sweep: {
            detail::ReportWriter writer(cfg, "tau_sweep");
            const BalancedInstance inst(data.space, data.cost, data.rho, data.sigma, cfg.epsilon,
                                        reg);
            SweepOptions opt;
            opt.tol = cfg.tol;
            opt.max_dual_iters = cfg.max_iter;
            opt.threads = cfg.threads;
            const TauSweepResult sweep = tau_sweep(inst, cfg.tau_grid, opt);
            detail::write_text_file(writer.path("sweep.csv"), to_csv(sweep));
            writer.add_solve(sweep.balanced, {});
            writer.json()["aborted"] = sweep.aborted;
            writer.json()["sweep_csv"] = "sweep.csv";
            writer.json()["grid_points"] = sweep.records.size();
            writer.finish();
            return sweep.aborted ? kExitNotConverged : kExitConverged;
        }
        case RunMode::mollify_sweep: {
            detail::ReportWriter writer(cfg, "mollify_sweep");
            const BalancedInstance inst(data.space, data.cost, data.rho, data.sigma, cfg.epsilon,
                                        reg);
            SweepOptions opt;
            opt.tol = cfg.tol;
            opt.max_dual_iters = cfg.max_iter;
            const MollifySweepReport sweep = mollification_sweep(inst, cfg.n_grid, opt);
            detail::write_text_file(writer.path("sweep.csv"), to_csv(sweep));
            writer.json()["aborted"] = sweep.aborted;
            writer.json()["sweep_csv"] = "sweep.csv";
            writer.json()["base_primal_value"] = sweep.base_primal_value;
            if (sweep.direct_dual_value)
                writer.json()["direct_dual_value"] = *sweep.direct_dual_value;
            writer.finish();
            return sweep.aborted ? kExitNotConverged : kExitConverged;
        }
        case RunMode::transform_check: {
            detail::ReportWriter writer(cfg, "transform_check");
            const BalancedInstance inst(data.space, data.cost, data.rho, data.sigma, cfg.epsilon,
                                        reg);
            // Limit potentials and the 1/tau perturbation come from a seeded
            // stream independent of the instance draw.
            Rng rng((cfg.generator ? cfg.generator->seed : 0) + 0x517cc1b7u);
            const HermitianOperator u_inf = random_hermitian(rng, data.space.d1, false) * 0.3;
            const HermitianOperator v_inf = random_hermitian(rng, data.space.d2, false) * 0.3;
            const HermitianOperator zu = random_hermitian(rng, data.space.d1, false);
            const HermitianOperator zv = random_hermitian(rng, data.space.d2, false);
            std::vector<HermitianOperator> useq, vseq;
            for (double tau : cfg.tau_grid) {
                useq.push_back(u_inf + (1.0 / tau) * zu);
                vseq.push_back(v_inf + (1.0 / tau) * zv);
            }
            const TransformCheckReport rep =
                transform_convergence_check(inst, u_inf, v_inf, useq, vseq, cfg.tau_grid);
            detail::write_text_file(writer.path("sweep.csv"), to_csv(rep));
            writer.json()["aborted"] = rep.aborted;
            writer.json()["distances_decreasing"] = rep.decreasing;
            writer.json()["sweep_csv"] = "sweep.csv";
            writer.finish();
            return rep.aborted ? kExitNotConverged : kExitConverged;
        }
        case RunMode::selftest:
            break; // handled above
    }
    throw std::logic_error("run: unhandled mode");
}

} // namespace qot
