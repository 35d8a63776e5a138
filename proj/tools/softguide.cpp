#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <thread>

#include "softguide/cli.hpp"
#include "softguide/errors.hpp"
#include "softguide/parallel.hpp"

namespace {

bool env_verbose() {
    const char* v = std::getenv("SOFTGUIDE_VERBOSE");
    return v != nullptr && *v != '\0' && std::string(v) != "0";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bound states of soft-wall bent waveguides"};
    app.require_subcommand(1, 1);

    std::string config_path, out_dir;
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    bool verbose = false;
    softguide::SweepSpec sweep;

    app.add_option("--config", config_path, "JSON configuration file")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory (overrides output.dir)");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--verbose", verbose, "progress on stderr (also SOFTGUIDE_VERBOSE=1)");
    app.fallthrough();

    app.add_subcommand("frames", "frames, assumption checks and tube round trips");
    app.add_subcommand("transverse", "cross-section ground state eps0 and kappa0");
    app.add_subcommand("criterion", "binding criterion and its on-axis value");
    app.add_subcommand("bind", "bound state energy from the Birman-Schwinger spectrum");
    app.add_subcommand("direct", "three-dimensional finite-difference check (binding or hardwall mode)");
    auto* sw = app.add_subcommand("sweep", "criterion and binding over one numeric parameter");
    sw->add_option("--param", sweep.param, "dotted config path, e.g. curve.bump_bend.height")->required();
    sw->add_option("--from", sweep.from, "first value")->required();
    sw->add_option("--to", sweep.to, "last value")->required();
    sw->add_option("--steps", sweep.steps, "number of rows")->required()->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    softguide::RunContext ctx{std::cout, std::cerr, verbose || env_verbose()};
    try {
        softguide::set_thread_count(threads);
        softguide::RunConfig cfg = softguide::load_config(config_path);
        if (!out_dir.empty()) {
            cfg.out_dir = out_dir;
            cfg.resolved["output"]["dir"] = out_dir;
        }
        softguide::run_command(command, cfg, sweep, ctx);
    } catch (const softguide::Error& e) {
        std::cerr << "softguide " << command << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "softguide " << command << ": unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
