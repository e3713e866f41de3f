#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccbf/sim.hpp"

namespace ccbf {

/// Parsed scenario file, before model construction. All agent indices in
/// the file format are 1-based; they are converted on build.
struct ScenarioFile {
  int schema_version = 1;

  struct Agent {
    int state_dim = 1;
    int input_dim = 1;
    double desired_position = 0.0;
    double barrier_radius = 1.0;
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 0.0;
    std::string controller = "zero";  // zero | half_sontag
    double eta = 1.0;
    double u_nom = 0.0;
    bool operator==(const Agent&) const = default;
  };
  std::vector<Agent> agents;

  bool graph_complete = true;
  std::vector<std::pair<int, int>> graph_edges;  // 1-based when explicit

  std::string dynamics_kind = "single_integrator_formation";
  double xi = 1.0;

  double k0 = 5.0;
  double inner_dt = 0.01;
  int rounds = 100;

  double horizon = 1.0;
  double control_dt = 1e-3;
  std::string integrator = "rk4";  // rk4 | euler
  std::string mode = "distributed_base";

  std::vector<double> initial_state;

  double h_floor = 1e-6;
  std::string altruism_reference = "nominal";  // nominal | baseline_optimum

  std::optional<std::string> trace_path;
  std::optional<std::string> rounds_trace_path;

  bool operator==(const ScenarioFile&) const = default;
};

class ScenarioParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Carries every validation problem found, not just the first.
class ScenarioValidationError : public std::runtime_error {
 public:
  explicit ScenarioValidationError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Parses and validates the scenario text (JSON with // comments).
/// Unknown keys anywhere are rejected. Throws ScenarioParseError on
/// malformed text and ScenarioValidationError listing every violated
/// constraint otherwise.
ScenarioFile parse_scenario(const std::string& text);

/// Canonical serialization; parse(serialize(f)) == f.
std::string serialize_scenario(const ScenarioFile& f);

/// Instantiates the models, graph, and simulation settings.
std::pair<Scenario, SimConfig> build_scenario(const ScenarioFile& f);

SimMode parse_mode(const std::string& name);
std::string mode_name(SimMode mode);

}  // namespace ccbf
