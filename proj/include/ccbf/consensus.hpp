#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ccbf/barrier.hpp"
#include "ccbf/qp.hpp"

namespace ccbf {

/// State of the distributed solver. y[(i, j)] is agent i's allocation
/// toward neighbor j's safety condition, defined for j in N_i^- and
/// warm-started across control steps. c holds the matching duals from the
/// last round (zero off support).
///
/// Dual sign convention: c[(i, j)] is the sensitivity of agent i's local
/// cost to loosening its row for condition j, i.e. the negative of the
/// usual nonnegative multiplier. Active rows therefore carry c <= 0, and
/// the update law below moves allocation toward the agents whose rows bind
/// hardest, which is what makes the flow settle at equal duals per
/// condition.
struct ConsensusState {
  std::map<std::pair<int, int>, double> y;
  std::map<std::pair<int, int>, double> c;
  double k0 = 5.0;
  double inner_dt = 0.01;

  static ConsensusState init(const CouplingGraph& g, double k0,
                             double inner_dt);
};

class LocalInfeasibleError : public std::runtime_error {
 public:
  LocalInfeasibleError(int agent, std::string what)
      : std::runtime_error(std::move(what)), agent(agent) {}
  int agent;
};

struct LocalSolution {
  Vec u;
  /// Duals of the coupling rows keyed by condition index (see
  /// ConsensusState for the sign convention).
  std::map<int, double> c;
  /// The allocations the solve was run against.
  std::map<int, double> y;
};

/// Agent i's local problem: minimize ||u_i - u_nom_i||^2 over u_i subject
/// to, for each condition j in N_i^-,
///   a_ji' u_i + sum_{k in N_j+} (y_i^j - y_k^j) + b_ji >= 0,
/// plus the agent's first-order condition row, plus an optional extra row
/// (row * u + s >= 0). Allocations enter as data from the consensus state;
/// they move only through update_aux. Throws LocalInfeasibleError.
LocalSolution solve_local(int i, const std::vector<AgentModel>& models,
                          const CouplingGraph& g, const SystemState& x,
                          const Vec& u_nom_i, const ConsensusState& cs,
                          const std::pair<RowVec, double>* extra_row = nullptr,
                          const std::vector<CcbfCoefficients>* coeffs = nullptr);

/// Forward-Euler step of the allocation flow
///   ydot_i^j = -k0 * sum_{k in N_j+} (c_i^j - c_k^j)   for j in N_i^-
/// with step cs.inner_dt; stores the supplied duals in the result. The sum
/// of allocations within one condition is conserved exactly.
ConsensusState update_aux(const ConsensusState& cs, const CouplingGraph& g,
                          const std::map<std::pair<int, int>, double>& c);

/// Largest dual disagreement within any single condition.
double dual_disagreement(const std::map<std::pair<int, int>, double>& c,
                         const CouplingGraph& g);

struct RoundRecord {
  int round = 0;
  double disagreement = 0.0;
  std::vector<Vec> u;
};

struct ConsensusOptions {
  int rounds = 100;
  /// Early exit once duals agree to this tolerance.
  double exit_tol = 1e-8;
  bool record_rounds = false;
  /// Per-agent extra rows (e.g. altruism conditions); size n when set.
  const std::vector<std::pair<RowVec, double>>* extra_rows = nullptr;
  /// Precomputed coefficients for this state (assembled internally if null).
  const std::vector<CcbfCoefficients>* coeffs = nullptr;
  /// Optional convergence target: stop once every input is within
  /// u_target_tol (sup norm) of the matching entry.
  const std::vector<Vec>* u_target = nullptr;
  double u_target_tol = 0.0;
};

struct ConsensusResult {
  std::vector<Vec> u;
  double disagreement = 0.0;
  int rounds_used = 0;
  /// The allocation flow reached the local-feasibility boundary and could
  /// not continue; the returned inputs are the last feasible ones.
  bool pinned = false;
  std::vector<RoundRecord> log;
};

/// Alternates local solves and allocation updates for up to opt.rounds
/// bulk-synchronous rounds, mutating cs in place (allocations are
/// warm-started across calls). Every returned input comes from a feasible
/// set of local solves, so the summed coupled conditions hold at every
/// round.
///
/// Two safeguards keep the Euler discretization inside the feasible
/// region the continuous flow never leaves: an allocation step that would
/// make some local problem infeasible is retried with a halved step
/// (backing off to no move, which ends the run at the pinned allocation),
/// and a warm-started allocation that is infeasible at a new state is
/// contracted toward zero before the first round. Throws
/// LocalInfeasibleError when no feasible allocation is found at all.
ConsensusResult run_consensus_round(const std::vector<AgentModel>& models,
                                    const CouplingGraph& g,
                                    const SystemState& x,
                                    const std::vector<Vec>& u_nom,
                                    ConsensusState& cs,
                                    const ConsensusOptions& opt = {});

}  // namespace ccbf
