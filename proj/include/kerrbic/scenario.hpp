#pragma once

#include "kerrbic/dynamics.hpp"

#include <json.hpp>

#include <exception>
#include <string>
#include <vector>

namespace kerrbic::scenario {

inline constexpr int schema_version = 1;

/// A validated scenario document. See README for the schema.
struct Scenario {
  nlohmann::json doc;
  std::string name;
  std::string task;
  std::string origin;  ///< file the scenario came from, for messages
};

/// Parses and validates. JSON syntax errors and schema violations throw ConfigError with
/// the line/column (syntax) or field path (schema).
Scenario parse_scenario(const std::string& text, const std::string& origin = "<string>");

/// Accepts a file path or the name of a bundled preset.
Scenario load_scenario(const std::string& path_or_preset);

std::string preset_directory();
std::vector<std::string> preset_names();

/// Sets a dot-separated field (e.g. "coupling.kappa_i_over_wa"); the field must already exist.
void set_path(nlohmann::json& doc, const std::string& path, const nlohmann::json& value);

struct SweepAxis {
  std::string path;
  std::vector<nlohmann::json> values;
};

std::vector<SweepAxis> sweep_axes(const Scenario& s);

/// Cartesian product of the sweep axes, first axis slowest. A scenario without axes yields itself.
std::vector<nlohmann::json> expand_sweep(const Scenario& s);

/// Config pieces, exposed for tests.
SimulationConfig build_config(const nlohmann::json& doc);
/// States are objects ({"kind": "fock", "n": 10}) or strings ("fock:10", "coherent:50[:phase]",
/// "poisson:40", "vacuum").
DensityMatrix build_initial_state(const nlohmann::json& state, int dim);
/// Smallest dim holding the state (Poisson tails below 1e-10).
int auto_state_dim(const nlohmann::json& state);
/// dim from the document, or derived from the initial state when "auto".
int resolve_dim(const nlohmann::json& doc);

struct RunOptions {
  std::string out_dir;
  int workers = 0;  ///< 0: KERRBIC_WORKERS or the hardware concurrency
};

struct RunReport {
  std::size_t points = 0;
  std::vector<std::string> files;  ///< everything written, relative to out_dir
};

/// Runs every sweep point (in parallel) and writes the per-point outputs plus summary.csv.
/// Output bytes do not depend on the worker count.
RunReport run(const Scenario& s, const RunOptions& options);

/// Effective number of worker threads for a sweep of `points` points.
int worker_count(int requested, std::size_t points);

/// 2 for configuration problems, 3 for accuracy or integrator failures, 1 otherwise.
int exit_code_for(const std::exception& e);

}  // namespace kerrbic::scenario
