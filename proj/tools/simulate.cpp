// simulate <run> --config <path> [--seed N] [--out DIR] [--threads N]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "nmsim/labcli/commands.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

void list_models() {
    using namespace nmsim::labcli;
    std::cout << "atom_cavity         runs: sse sme compare converge ensemble markovian\n"
              << "linear_optomech     runs: sse sme compare converge\n"
              << "quadratic_optomech  runs: sse sme compare converge phonon_fixture\n";
}

}  // namespace

int main(int argc, char** argv) {
    using namespace nmsim;
    using namespace nmsim::labcli;

    CLI::App app{"Joint SSE / reduced non-Markovian SME simulator"};
    std::string run;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out_dir = "out";
    bool show_models = false;
    bool show_version = false;

    app.add_option("run", run, "sse | sme | compare | converge | ensemble | markovian | phonon_fixture");
    app.add_option("--config", config_path, "JSON experiment configuration");
    app.add_option("--seed", seed, "override the configured seed");
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--threads", threads, "ensemble worker threads (0 = all cores)");
    app.add_flag("--list-models", show_models, "list models and supported runs");
    app.add_flag("--version", show_version, "print version");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    if (show_version) {
        std::cout << "simulate " << kVersion << '\n';
        return 0;
    }
    if (show_models) {
        list_models();
        return 0;
    }

    std::optional<ExperimentConfig> cfg;
    // failures after the config has loaded still leave a report with the exit status
    auto fail = [&](int code, const std::string& msg) {
        std::cerr << msg << '\n';
        if (cfg) {
            try {
                RunReport report;
                report.config = *cfg;
                report.exit_status = code;
                report.error = msg;
                std::filesystem::create_directories(out_dir);
                write_report(std::filesystem::path(out_dir) / (to_string(cfg->run) + "_report.json"), report);
            } catch (const std::exception&) {
            }
        }
        return code;
    };

    try {
        if (run.empty()) throw ConfigError("run", "missing run name");
        if (config_path.empty()) throw ConfigError("--config", "missing configuration file");
        ExperimentConfig loaded = load_config(config_path);
        loaded.run = parse_run(run);
        if (seed) loaded.seed = *seed;
        if (threads) loaded.threads = *threads;
        cfg = loaded;
        const RunReport report = run_command(loaded, out_dir);
        std::cout << report.to_json().dump(2) << '\n';
        return 0;
    } catch (const ConfigError& e) {
        return fail(kExitConfig, std::string("config error: ") + e.what());
    } catch (const InvalidParameter& e) {
        return fail(kExitConfig, std::string("config error: ") + e.what());
    } catch (const InvalidDimension& e) {
        return fail(kExitConfig, std::string("config error: ") + e.what());
    } catch (const NumericalFailure& e) {
        std::string msg = "numerical failure";
        if (e.time() >= 0.0) msg += " at t = " + format_double(e.time());
        return fail(kExitNumerical, msg + ": " + e.what());
    } catch (const std::exception& e) {
        return fail(kExitConfig, std::string("error: ") + e.what());
    }
}
