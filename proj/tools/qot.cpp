#include "qot/runner.hpp"
#include "qot/version.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"qot: quantum optimal transport solver toolkit"};
    app.set_version_flag("--version", std::string("qot ") + qot::kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    double tol = -1.0;
    int max_iter = -1;
    int threads = -1;
    bool canonical = false;

    CLI::App* cmd_run = app.add_subcommand("run", "solve the problem described by a JSON config");
    cmd_run->add_option("config", config_path, "path to the config JSON")->required();
    cmd_run->add_option("--out", out_dir, "output directory (overrides config)");
    cmd_run->add_option("--tol", tol, "solver tolerance (overrides config)");
    cmd_run->add_option("--max-iter", max_iter, "iteration cap (overrides config)");
    cmd_run->add_option("--threads", threads, "parallel solves per sweep wave (overrides config)");
    cmd_run->add_flag("--canonical", canonical, "zero the wall-time field for byte-stable reports");

    CLI::App* cmd_selftest =
        app.add_subcommand("selftest", "run the scalar closed-form suite and exit");
    cmd_selftest->add_option("--out", out_dir, "output directory for report.json");

    CLI11_PARSE(app, argc, argv);

    try {
        qot::RunConfig cfg;
        if (cmd_run->parsed()) {
            cfg = qot::parse_config(read_file(config_path));
        } else {
            cfg.mode = qot::RunMode::selftest;
            cfg.echo = nlohmann::json{{"mode", "selftest"}};
        }
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (tol > 0.0) cfg.tol = tol;
        if (max_iter > 0) cfg.max_iter = max_iter;
        if (threads > 0) cfg.threads = threads;
        if (canonical) cfg.canonical = true;
        return qot::run(std::move(cfg));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return qot::kExitError;
    }
}
