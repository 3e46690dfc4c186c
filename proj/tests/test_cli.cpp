#include "qot/config.hpp"
#include "qot/matrix_io.hpp"
#include "qot/runner.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qot;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream os(p);
    os << text;
}

struct TempDir {
    TempDir() {
        dir = fs::temp_directory_path() /
              ("qot_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
    fs::path dir;
    static inline int counter = 0;
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(QOT_CLI_PATH) + " " + args + " > /dev/null 2> /dev/null";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("parse_config: minimal generator config and regularizer strings") {
    const RunConfig cfg = parse_config(R"({
        "mode": "balanced",
        "instance": {"generator": {"dims": [2, 2], "seed": 7}},
        "regularizer": "tsallis:q=1.5",
        "epsilon": 0.25
    })");
    CHECK(cfg.mode == RunMode::balanced);
    REQUIRE(cfg.generator.has_value());
    CHECK(cfg.generator->d1 == 2);
    CHECK(cfg.generator->seed == 7);
    CHECK(cfg.epsilon == doctest::Approx(0.25));
    CHECK(make_regularizer(cfg.regularizer).psi(1.0) ==
          doctest::Approx(make_tsallis(1.5).psi(1.0)));
}

TEST_CASE("parse_config: every violation reported, fields named") {
    try {
        parse_config(R"({
            "mode": "sideways",
            "instance": {"generator": {"dims": [2, 2]}},
            "tau": [1.0, -3.0],
            "epsilon": -1.0,
            "regularizer": "entropy"
        })");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.violations().size() == 4);
        bool tau_named = false;
        for (const auto& v : e.violations()) tau_named = tau_named || v.find("tau") == 0;
        CHECK(tau_named);
    }

    CHECK_THROWS_AS(parse_config("not json at all"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"mode": "balanced"})"), ConfigError); // no instance
}

TEST_CASE("parse_config: explicit matrices, dimension cross-check") {
    const HermitianOperator rho = uniform_density(2), sigma = uniform_density(3);
    const nlohmann::json cfg_json{
        {"mode", "unbalanced"},
        {"tau", {1.0, 2.0}},
        {"instance", {{"cost", matrix_to_json(HermitianOperator::zero(6))},
                      {"rho", matrix_to_json(rho)},
                      {"sigma", matrix_to_json(sigma)}}}};
    const RunConfig cfg = parse_config(cfg_json.dump());
    REQUIRE(cfg.cost.has_value());
    CHECK(cfg.cost->dim() == 6);

    nlohmann::json bad = cfg_json;
    bad["instance"]["cost"] = matrix_to_json(HermitianOperator::zero(4));
    CHECK_THROWS_AS(parse_config(bad.dump()), ConfigError);
}

TEST_CASE("generator: quadrature-like costs and uniform marginals") {
    const RunConfig cfg = parse_config(R"({
        "mode": "balanced",
        "instance": {"generator": {"dims": [2, 3], "seed": 4, "cost": "quadrature-like",
                                   "marginals": "uniform"}},
        "epsilon": 0.3
    })");
    REQUIRE(cfg.generator.has_value());
    const auto data = qot::detail::generate_data(*cfg.generator);
    CHECK(data.cost.dim() == 6);
    CHECK(sup_norm(data.cost) == doctest::Approx(1.0));
    CHECK(hs_norm(data.rho - uniform_density(2)) < 1e-15);
    CHECK(hs_norm(data.sigma - uniform_density(3)) < 1e-15);

    // Degenerate 1x1 quadrature cost is identically zero and stays usable.
    CHECK(max_abs(quadrature_cost(ProductSpace(1, 1)).matrix()) == 0.0);
}

TEST_CASE("matrix files: round-trip to 1e-15 per entry, non-Hermitian rejected") {
    TempDir tmp;
    Rng rng(5);
    const HermitianOperator a = qot_test::rand_herm(rng, 3, 1.7);
    const fs::path file = tmp.dir / "a.json";
    write_matrix_file(file.string(), a);
    const HermitianOperator b = read_matrix_file(file.string());
    CHECK(max_abs(a.matrix() - b.matrix()) <= 1e-15);

    nlohmann::json j = matrix_to_json(a);
    j["re"][0][1] = j["re"][0][1].get<double>() + 1e-3;
    CHECK_THROWS_AS(matrix_from_json(j), std::invalid_argument);
}

TEST_CASE("run: balanced mode writes a report with a small gap") {
    TempDir tmp;
    RunConfig cfg = parse_config(R"({
        "mode": "balanced",
        "instance": {"generator": {"dims": [2, 2], "seed": 11}},
        "regularizer": "von_neumann",
        "epsilon": 0.5
    })");
    cfg.output_dir = tmp.dir.string();
    cfg.canonical = true;
    std::ostringstream sink;
    CHECK(run(cfg, sink) == kExitConverged);

    const nlohmann::json rep = nlohmann::json::parse(slurp(tmp.dir / "report.json"));
    CHECK(rep.at("converged").get<bool>());
    CHECK(std::abs(rep.at("gap").get<double>()) <=
          1e-5 * (1.0 + std::abs(rep.at("dual_value").get<double>())));
    CHECK(rep.at("gap").get<double>() >= -1e-9);
    CHECK(rep.at("version").get<std::string>() == kVersion);

    const HermitianOperator plan = read_matrix_file((tmp.dir / "plan.json").string());
    CHECK(std::abs(trace_re(plan) - 1.0) <= 1e-7);
}

TEST_CASE("run: deterministic reports under the canonical flag") {
    TempDir tmp1, tmp2;
    const std::string config = R"({
        "mode": "unbalanced",
        "instance": {"generator": {"dims": [2, 2], "seed": 3}},
        "tau": [1.0, 2.0],
        "epsilon": 0.4
    })";
    std::ostringstream sink;
    RunConfig a = parse_config(config);
    a.output_dir = tmp1.dir.string();
    a.canonical = true;
    RunConfig b = parse_config(config);
    b.output_dir = tmp2.dir.string();
    b.canonical = true;
    CHECK(run(a, sink) == kExitConverged);
    CHECK(run(b, sink) == kExitConverged);
    CHECK(slurp(tmp1.dir / "report.json") == slurp(tmp2.dir / "report.json"));
}

TEST_CASE("run: sweep modes emit CSV artifacts") {
    TempDir tmp;
    RunConfig cfg = parse_config(R"({
        "mode": "tau_sweep",
        "instance": {"generator": {"dims": [2, 2], "seed": 5}},
        "epsilon": 0.4,
        "tau_grid": [1.0, 10.0, 100.0],
        "threads": 2
    })");
    cfg.output_dir = tmp.dir.string();
    std::ostringstream sink;
    CHECK(run(cfg, sink) == kExitConverged);
    const std::string csv = slurp(tmp.dir / "sweep.csv");
    CHECK(csv.rfind("tau_or_n,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4); // header + 3 grid rows
}

TEST_CASE("run: transform_check and mollify_sweep modes") {
    TempDir tmp;
    std::ostringstream sink;

    RunConfig tc = parse_config(R"({
        "mode": "transform_check",
        "instance": {"generator": {"dims": [2, 2], "seed": 9}},
        "epsilon": 0.5,
        "tau_grid": [100.0, 10000.0]
    })");
    tc.output_dir = (tmp.dir / "tc").string();
    CHECK(run(tc, sink) == kExitConverged);
    const nlohmann::json tc_rep = nlohmann::json::parse(slurp(tmp.dir / "tc" / "report.json"));
    CHECK(tc_rep.at("distances_decreasing").get<bool>());

    RunConfig ms = parse_config(R"({
        "mode": "mollify_sweep",
        "instance": {"generator": {"dims": [1, 1], "seed": 2}},
        "regularizer": "quadratic",
        "epsilon": 0.2,
        "n_grid": [2, 4]
    })");
    ms.output_dir = (tmp.dir / "ms").string();
    CHECK(run(ms, sink) == kExitConverged);
    const nlohmann::json ms_rep = nlohmann::json::parse(slurp(tmp.dir / "ms" / "report.json"));
    CHECK(ms_rep.contains("direct_dual_value"));
    CHECK(slurp(tmp.dir / "ms" / "sweep.csv").rfind("tau_or_n,", 0) == 0);
}

TEST_CASE("run: selftest passes") {
    TempDir tmp;
    RunConfig cfg;
    cfg.mode = RunMode::selftest;
    cfg.output_dir = tmp.dir.string();
    std::ostringstream out;
    CHECK(run(cfg, out) == kExitConverged);
    CHECK(out.str().find("[FAIL]") == std::string::npos);
    CHECK(out.str().find("[PASS]") != std::string::npos);
}

TEST_CASE("cli binary: exit-code contract and QOT_SEED override") {
    TempDir tmp;
    CHECK(run_cli("selftest --out " + (tmp.dir / "st").string()) == 0);

    const fs::path cfg_path = tmp.dir / "cfg.json";
    spit(cfg_path, R"({
        "mode": "balanced",
        "instance": {"generator": {"dims": [2, 2], "seed": 11}},
        "regularizer": "von_neumann",
        "epsilon": 0.5
    })");
    CHECK(run_cli("run " + cfg_path.string() + " --out " + (tmp.dir / "a").string() +
                  " --canonical") == 0);
    CHECK(run_cli("run " + cfg_path.string() + " --out " + (tmp.dir / "b").string() +
                  " --canonical") == 0);
    CHECK(slurp(tmp.dir / "a" / "report.json") == slurp(tmp.dir / "b" / "report.json"));

    // Same config under a different seed must change the instance.
    const std::string env_cmd = "QOT_SEED=77 " + std::string(QOT_CLI_PATH) + " run " +
                                cfg_path.string() + " --out " + (tmp.dir / "c").string() +
                                " --canonical > /dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(env_cmd.c_str())) == 0);
    CHECK(slurp(tmp.dir / "a" / "report.json") != slurp(tmp.dir / "c" / "report.json"));

    // Non-converged runs exit 2.
    CHECK(run_cli("run " + cfg_path.string() + " --out " + (tmp.dir / "d").string() +
                  " --max-iter 1") == 2);

    // Broken configs exit 1 with a message.
    const fs::path bad_path = tmp.dir / "bad.json";
    spit(bad_path, R"({"mode": "балансед"})");
    CHECK(run_cli("run " + bad_path.string()) == 1);
    CHECK(run_cli("run " + (tmp.dir / "missing.json").string()) == 1);
}
