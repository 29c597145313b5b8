#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "nsch/config.hpp"
#include "nsch/timestepper.hpp"

namespace nsch {

// Initial state for the configured scenario; u = 0 unless velocity files are given (then projected).
// Throws ConfigError on file shape mismatch or out-of-box data.
SimState make_scenario(const RunConfig& cfg, const ModelSpec& spec);

struct RunOptions {
    int threads = 1;
    std::ostream* log = nullptr;
};

struct RunOutcome {
    bool ok = true;
    std::string failure;  // failure site when !ok
    int steps = 0;
    double wall_seconds = 0.0;
    std::vector<std::string> artifacts;  // paths relative to the output directory
};

// Validates, runs the configured mode and writes ledger(s), snapshots and manifest.txt into
// cfg.output.directory. Hard invariant failures are reported in the outcome (and manifest),
// configuration errors are thrown.
RunOutcome run_simulation(const RunConfig& cfg, const RunOptions& opts = {});

}  // namespace nsch
