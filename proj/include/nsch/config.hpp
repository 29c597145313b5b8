#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsch/grid.hpp"
#include "nsch/material.hpp"
#include "nsch/timestepper.hpp"

namespace nsch {

// Malformed or invalid configuration; model hypothesis violations come through as ModelError.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class ScenarioKind { uniform, spinodal, droplet, file };
enum class RunMode { nondegenerate, continuation };

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::spinodal;
    double phi_mean = 0.0;   // uniform value / spinodal mean
    double psi_mean = 0.3;   // uniform value of psi (uniform, spinodal)
    double amplitude = 0.01; // spinodal noise amplitude
    double radius = 0.0;     // droplet radius, 0 means lx/4
    double psi_base = 0.05;  // droplet: psi = base + boost (1 - phi^2)
    double psi_boost = 0.2;
    std::string phi_file, psi_file, ux_file, uy_file;
    bool operator==(const ScenarioConfig&) const = default;
};

struct OutputConfig {
    std::string directory = "out";
    int snapshot_stride = 0;  // 0: initial and final only
    std::string ledger = "ledger.csv";
    int flux_stride = 10;
    bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
    Grid2D grid{64, 64, 16.0, 16.0};
    ModelParameters model;
    SolverConfig solver;
    ScenarioConfig scenario;
    std::uint64_t seed = 1;
    double t_final = 0.2;
    RunMode mode = RunMode::nondegenerate;
    std::vector<double> epsilons;  // empty: default schedule
    OutputConfig output;
    bool operator==(const RunConfig&) const = default;
};

// Parses INI text ([grid], [model], [solver], [scenario], [run], [output]); every key is
// optional, unknown sections or keys are errors. overrides are "section.key=value".
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

// Builds the model and checks solver, scenario and mode consistency.
// Throws ModelError (hypothesis named) or ConfigError.
ModelSpec validate_config(const RunConfig& cfg);

// Full INI echo; parse_config(config_text(c)) == c.
std::string config_text(const RunConfig& cfg);

const char* to_string(ScenarioKind k);
const char* to_string(RunMode m);

}  // namespace nsch
