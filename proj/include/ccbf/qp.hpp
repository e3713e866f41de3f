#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccbf/barrier.hpp"

namespace ccbf {

/// Dense convex program  min 0.5 z'Hz + f'z  s.t.  A z + c >= 0.
/// H must be symmetric positive semidefinite. Problems assembled from the
/// safety filters put the squared input deviation in H (so the objective is
/// half the plain squared norm; multipliers scale accordingly).
struct QuadraticProgram {
  Mat hessian;
  Vec linear;
  Mat ineq_rows;
  Vec ineq_consts;

  int dim() const { return static_cast<int>(hessian.rows()); }
  int rows() const { return static_cast<int>(ineq_rows.rows()); }

  /// Checks symmetry (1e-12), PSD-ness (eigenvalues >= -1e-10), and
  /// consistent row dimensions. Throws std::invalid_argument.
  void validate() const;

  /// Plain-text dump for debugging (dimensions, H, f, A, c).
  std::string to_text() const;
};

enum class QpStatus { Optimal, Infeasible, Unbounded };

struct QpSolution {
  Vec z;
  /// One multiplier per inequality row, nonnegative at Optimal.
  Vec multipliers;
  QpStatus status = QpStatus::Optimal;
  int iterations = 0;
  /// Rows still violated at the phase-1 optimum when Infeasible.
  std::vector<int> infeasible_rows;
};

/// Previous active set and point, reused to skip phase 1 when still valid.
struct QpWarmStart {
  Vec z;
  std::vector<int> active;
};

/// Raised when the active-set loop exceeds its iteration cap; signals
/// numerical trouble and is never swallowed.
class QpMaxIterationsError : public std::runtime_error {
 public:
  explicit QpMaxIterationsError(int iters)
      : std::runtime_error("qp solver exceeded " + std::to_string(iters) +
                           " iterations") {}
};

/// Primal active-set solver for small dense convex QPs. Returns a
/// KKT-certified optimum, or Infeasible with a phase-1 certificate, or
/// Unbounded when a feasible descent ray exists. Ties in pivoting are
/// broken toward the lowest row index so runs are deterministic.
QpSolution solve_qp(const QuadraticProgram& p,
                    const QpWarmStart* warm = nullptr);

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;        // most negative row value (0 if all feasible)
  double complementarity = 0.0;
  double dual = 0.0;          // most negative multiplier (0 if all >= 0)
};

KktResiduals kkt_residuals(const QuadraticProgram& p, const QpSolution& s);

/// Stacked-input safety-filter program: one coupled-safety row per agent
/// followed by one first-order condition row per agent, in agent order.
/// Decision variables are the agent inputs stacked by agent index.
QuadraticProgram assemble_centralized(const std::vector<AgentModel>& models,
                                      const CouplingGraph& g,
                                      const SystemState& x,
                                      const std::vector<Vec>& u_nom);

/// Auxiliary-variable form. The coupled row of each agent m is split into
/// one row per contributing in-neighbor j, tied together by allocation
/// variables y[j][m] (one per contributor per condition):
///   a_mj' u_j + sum_{k in N_m+} (y_j^m - y_k^m) + b_mj >= 0.
/// Summing a condition's rows telescopes the allocations away, which makes
/// the split program equivalent to the centralized one in the inputs.
/// Variable order: inputs stacked by agent, then allocations grouped by
/// condition index m ascending, contributor j ascending. Row order: split
/// coupled rows (m ascending, j ascending), then first-order rows by agent.
QuadraticProgram assemble_centralized_aux(const std::vector<AgentModel>& models,
                                          const CouplingGraph& g,
                                          const SystemState& x,
                                          const std::vector<Vec>& u_nom);

/// Offsets of each agent's input block in the stacked decision vector.
std::vector<int> input_offsets(const std::vector<AgentModel>& models);

}  // namespace ccbf
