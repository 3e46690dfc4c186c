#pragma once

#include "qot/generate.hpp"
#include "qot/matrix_io.hpp"
#include "qot/mollify.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qot {

// Carries every violation found, not just the first.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : std::runtime_error(join(violations)), violations_(std::move(violations)) {}
    const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::ostringstream os;
        os << "invalid config (" << v.size() << " violation" << (v.size() == 1 ? "" : "s") << "):";
        for (const auto& s : v) os << "\n  - " << s;
        return os.str();
    }
    std::vector<std::string> violations_;
};

enum class RunMode { balanced, unbalanced, tau_sweep, mollify_sweep, transform_check, selftest };

struct RunConfig {
    RunMode mode = RunMode::selftest;
    std::optional<GeneratorSpec> generator;
    std::optional<HermitianOperator> cost;
    std::optional<HermitianOperator> rho;
    std::optional<HermitianOperator> sigma;
    std::string regularizer = "von_neumann";
    double epsilon = 0.5;
    std::vector<double> tau{1.0, 1.0};             // unbalanced mode
    std::vector<double> tau_grid{1.0, 10.0, 100.0}; // tau_sweep / transform_check
    std::vector<int> n_grid{4, 16, 64};            // mollify_sweep
    double tol = 1e-8;
    int max_iter = 200000;
    int threads = 1;
    bool canonical = false; // zero out wall time in the report
    std::string output_dir = ".";
    nlohmann::json echo;    // config as parsed, for the report
};

namespace detail {

inline std::optional<RunMode> mode_from_string(const std::string& s) {
    if (s == "balanced") return RunMode::balanced;
    if (s == "unbalanced") return RunMode::unbalanced;
    if (s == "tau_sweep") return RunMode::tau_sweep;
    if (s == "mollify_sweep") return RunMode::mollify_sweep;
    if (s == "transform_check") return RunMode::transform_check;
    if (s == "selftest") return RunMode::selftest;
    return {};
}

inline const char* mode_to_string(RunMode m) {
    switch (m) {
        case RunMode::balanced: return "balanced";
        case RunMode::unbalanced: return "unbalanced";
        case RunMode::tau_sweep: return "tau_sweep";
        case RunMode::mollify_sweep: return "mollify_sweep";
        case RunMode::transform_check: return "transform_check";
        case RunMode::selftest: return "selftest";
    }
    return "?";
}

// Matrix field: inline matrix object or a path string.
inline std::optional<HermitianOperator> parse_matrix_field(const nlohmann::json& j,
                                                           const std::string& field,
                                                           std::vector<std::string>& violations) {
    try {
        if (j.is_string()) return read_matrix_file(j.get<std::string>());
        if (j.is_object()) return matrix_from_json(j);
        violations.push_back("instance." + field + ": expected a matrix object or file path");
    } catch (const std::exception& e) {
        violations.push_back("instance." + field + ": " + e.what());
    }
    return {};
}

} // namespace detail

inline RunConfig parse_config(const std::string& text) {
    std::vector<std::string> violations;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError({std::string("not valid JSON: ") + e.what()});
    }
    if (!j.is_object()) throw ConfigError({"top-level config must be a JSON object"});

    RunConfig cfg;
    cfg.echo = j;

    if (!j.contains("mode") || !j.at("mode").is_string()) {
        violations.push_back("mode: required string field");
    } else if (auto m = detail::mode_from_string(j.at("mode").get<std::string>())) {
        cfg.mode = *m;
    } else {
        violations.push_back("mode: unknown mode '" + j.at("mode").get<std::string>() + "'");
    }

    if (j.contains("regularizer")) {
        if (!j.at("regularizer").is_string()) {
            violations.push_back("regularizer: expected a string");
        } else {
            cfg.regularizer = j.at("regularizer").get<std::string>();
            try {
                (void)make_regularizer(cfg.regularizer);
            } catch (const std::exception& e) {
                violations.push_back(std::string("regularizer: ") + e.what());
            }
        }
    }

    if (j.contains("epsilon")) {
        if (!j.at("epsilon").is_number() || !(j.at("epsilon").get<double>() > 0.0))
            violations.push_back("epsilon: must be a positive number");
        else
            cfg.epsilon = j.at("epsilon").get<double>();
    }

    auto parse_positive_array = [&](const char* key, auto& out) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_array() || j.at(key).empty()) {
            violations.push_back(std::string(key) + ": must be a non-empty array");
            return;
        }
        out.clear();
        for (const auto& e : j.at(key)) {
            if (!e.is_number() || !(e.get<double>() > 0.0)) {
                violations.push_back(std::string(key) + ": entries must be positive numbers");
                return;
            }
            out.push_back(e.get<typename std::decay_t<decltype(out)>::value_type>());
        }
    };
    parse_positive_array("tau", cfg.tau);
    if (cfg.tau.size() == 1) cfg.tau.push_back(cfg.tau[0]);
    if (cfg.tau.size() != 2) violations.push_back("tau: expected one or two entries");
    parse_positive_array("tau_grid", cfg.tau_grid);
    if (j.contains("n_grid")) {
        if (!j.at("n_grid").is_array() || j.at("n_grid").empty()) {
            violations.push_back("n_grid: must be a non-empty array");
        } else {
            cfg.n_grid.clear();
            for (const auto& e : j.at("n_grid")) {
                if (!e.is_number_integer() || e.get<int>() < 1) {
                    violations.push_back("n_grid: entries must be positive integers");
                    break;
                }
                cfg.n_grid.push_back(e.get<int>());
            }
        }
    }
    for (std::size_t i = 0; i + 1 < cfg.tau_grid.size(); ++i)
        if (!(cfg.tau_grid[i] < cfg.tau_grid[i + 1])) {
            violations.push_back("tau_grid: must be strictly ascending");
            break;
        }

    if (j.contains("tol")) {
        if (!j.at("tol").is_number() || !(j.at("tol").get<double>() > 0.0))
            violations.push_back("tol: must be a positive number");
        else
            cfg.tol = j.at("tol").get<double>();
    }
    if (j.contains("max_iter")) {
        if (!j.at("max_iter").is_number_integer() || j.at("max_iter").get<int>() < 1)
            violations.push_back("max_iter: must be a positive integer");
        else
            cfg.max_iter = j.at("max_iter").get<int>();
    }
    if (j.contains("threads")) {
        if (!j.at("threads").is_number_integer() || j.at("threads").get<int>() < 1)
            violations.push_back("threads: must be a positive integer");
        else
            cfg.threads = j.at("threads").get<int>();
    }
    if (j.contains("canonical")) {
        if (!j.at("canonical").is_boolean())
            violations.push_back("canonical: must be a boolean");
        else
            cfg.canonical = j.at("canonical").get<bool>();
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string())
            violations.push_back("output_dir: must be a string");
        else
            cfg.output_dir = j.at("output_dir").get<std::string>();
    }

    if (j.contains("instance")) {
        const auto& inst = j.at("instance");
        if (!inst.is_object()) {
            violations.push_back("instance: must be an object");
        } else if (inst.contains("generator")) {
            const auto& g = inst.at("generator");
            GeneratorSpec spec;
            if (!g.contains("dims") || !g.at("dims").is_array() || g.at("dims").size() != 2 ||
                !g.at("dims").at(0).is_number_integer() || !g.at("dims").at(1).is_number_integer() ||
                g.at("dims").at(0).get<Index>() < 1 || g.at("dims").at(1).get<Index>() < 1) {
                violations.push_back("instance.generator.dims: expected two integers >= 1");
            } else {
                spec.d1 = g.at("dims").at(0).get<Index>();
                spec.d2 = g.at("dims").at(1).get<Index>();
            }
            if (g.contains("seed")) {
                if (!g.at("seed").is_number_unsigned() && !g.at("seed").is_number_integer())
                    violations.push_back("instance.generator.seed: expected an integer");
                else
                    spec.seed = g.at("seed").get<std::uint64_t>();
            }
            if (g.contains("cost")) {
                const std::string c = g.at("cost").is_string() ? g.at("cost").get<std::string>() : "";
                if (c == "random_hermitian")
                    spec.cost = GeneratorSpec::Cost::random_hermitian;
                else if (c == "quadrature-like" || c == "quadrature_like")
                    spec.cost = GeneratorSpec::Cost::quadrature_like;
                else
                    violations.push_back(
                        "instance.generator.cost: expected random_hermitian | quadrature-like");
            }
            if (g.contains("marginals")) {
                const std::string m =
                    g.at("marginals").is_string() ? g.at("marginals").get<std::string>() : "";
                if (m == "random_density")
                    spec.marginals = GeneratorSpec::Marginals::random_density;
                else if (m == "uniform")
                    spec.marginals = GeneratorSpec::Marginals::uniform;
                else
                    violations.push_back(
                        "instance.generator.marginals: expected random_density | uniform");
            }
            cfg.generator = spec;
        } else {
            for (const char* field : {"cost", "rho", "sigma"})
                if (!inst.contains(field))
                    violations.push_back(std::string("instance.") + field +
                                         ": required when no generator is given");
            if (inst.contains("cost")) cfg.cost = detail::parse_matrix_field(inst.at("cost"), "cost", violations);
            if (inst.contains("rho")) cfg.rho = detail::parse_matrix_field(inst.at("rho"), "rho", violations);
            if (inst.contains("sigma"))
                cfg.sigma = detail::parse_matrix_field(inst.at("sigma"), "sigma", violations);
            if (cfg.cost && cfg.rho && cfg.sigma &&
                cfg.cost->dim() != cfg.rho->dim() * cfg.sigma->dim())
                violations.push_back("instance: cost dim must equal rho dim * sigma dim");
        }
    } else if (cfg.mode != RunMode::selftest) {
        violations.push_back("instance: required for every mode except selftest");
    }

    if (!violations.empty()) throw ConfigError(std::move(violations));
    return cfg;
}

} // namespace qot
