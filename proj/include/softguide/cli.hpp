#pragma once

#include <iosfwd>
#include <string>

#include "softguide/config.hpp"

namespace softguide {

struct SweepSpec {
    std::string param;
    double from = 0.0, to = 0.0;
    int steps = 0;
};

struct RunContext {
    std::ostream& out;   // one-line results
    std::ostream& log;   // progress, only when verbose
    bool verbose = false;
};

// Runs one subcommand (frames, transverse, criterion, bind, direct, sweep), writing its CSV files
// and the resolved configuration into cfg.out_dir. Errors propagate with the stage name prefixed
// and their exit code kept.
void run_command(const std::string& command, const RunConfig& cfg, const SweepSpec& sweep, RunContext& ctx);

// Row of the sweep table for one configuration: criterion and binding on the same inputs.
std::string sweep_header(const std::string& param);
std::string sweep_row(const RunConfig& cfg, double param_value, const TransverseGroundState& gs);

}  // namespace softguide
