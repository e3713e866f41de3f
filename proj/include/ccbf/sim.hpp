#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ccbf/altruism.hpp"
#include "ccbf/consensus.hpp"

namespace ccbf {

enum class SimMode {
  NoIntervention,
  CcbfSingle,
  DistributedBase,
  DistributedAltruistic,
  Centralized,
};

enum class IntegratorKind { RK4, Euler };

/// Which reference the altruistic local objective tracks.
enum class AltruismReference { Nominal, BaselineOptimum };

struct SimConfig {
  double horizon = 1.0;
  double control_dt = 1e-3;
  IntegratorKind integrator = IntegratorKind::RK4;
  SimMode mode = SimMode::DistributedBase;
  int rounds_per_step = 100;
  double consensus_exit_tol = 1e-8;
  bool record_rounds = false;

  void validate() const;
};

/// Everything needed to run one experiment.
struct Scenario {
  CouplingGraph graph;
  std::vector<AgentModel> models;
  SystemState x0;
  std::vector<Vec> u_nom;
  double k0 = 5.0;
  double inner_dt = 0.01;
  std::vector<double> eta;
  double h_floor = 1e-6;
  AltruismReference alt_ref = AltruismReference::Nominal;
};

/// Time-indexed record of one run. Row k holds the state at t_k and the
/// input held over [t_k, t_k + dt); the final row repeats the last held
/// input against the terminal state.
struct SimTrace {
  std::vector<double> t;
  std::vector<SystemState> x;
  std::vector<std::vector<Vec>> u;
  std::vector<std::vector<double>> h;
  std::vector<std::vector<double>> h_plus;
  std::vector<std::vector<double>> psi;
  bool has_disagreement = false;
  std::vector<double> disagreement;
  bool has_u2_min = false;
  std::vector<double> u2_min;
  std::vector<bool> u2_min_lower_bound;

  struct RoundRow {
    double t;
    int round;
    double disagreement;
    std::vector<Vec> u;
  };
  /// Inner consensus diagnostics, recorded per round when enabled.
  std::vector<RoundRow> rounds;

  int agents() const { return t.empty() ? 0 : static_cast<int>(h[0].size()); }
  int steps() const { return static_cast<int>(t.size()); }
};

class NonFiniteStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A solver became infeasible mid-run; carries the simulation time.
class RuntimeInfeasibleError : public std::runtime_error {
 public:
  RuntimeInfeasibleError(double t, int agent, const std::string& what)
      : std::runtime_error(what), t(t), agent(agent) {}
  double t;
  int agent;  // -1 when the centralized problem failed
};

/// One classical fourth-order step of the coupled system under held
/// inputs. Throws NonFiniteStateError when the state leaves IEEE range.
SystemState step_rk4(const std::vector<AgentModel>& models,
                     const CouplingGraph& g, const SystemState& x,
                     const std::vector<Vec>& u, double dt);

SystemState step_euler(const std::vector<AgentModel>& models,
                       const CouplingGraph& g, const SystemState& x,
                       const std::vector<Vec>& u, double dt);

/// Runs the configured control mode over the horizon with zero-order-hold
/// inputs and records the full trace. Deterministic: identical scenario
/// and config give identical traces.
SimTrace run_scenario(const SimConfig& cfg, const Scenario& sc);

struct AgentInvariance {
  double min_h = 0.0;
  double min_h_plus = 0.0;
  std::optional<double> first_violation;
};

struct InvarianceReport {
  std::vector<AgentInvariance> agents;
  bool all_safe(double) const;
};

/// Per-agent barrier minima and the first time, if any, h drops below -tol.
InvarianceReport check_forward_invariance(const SimTrace& trace, double tol);

/// Comma-separated trace with the documented column order:
/// t, x_1..x_n, u_1..u_n, h_1..h_n, hplus_1..hplus_n, psi_1..psi_n,
/// then disagreement and u2_min when the run produced them.
void write_trace_csv(const SimTrace& trace, std::ostream& os);

/// Inner-round channel: t, round, disagreement, u_1..u_n.
void write_rounds_csv(const SimTrace& trace, std::ostream& os);

}  // namespace ccbf
