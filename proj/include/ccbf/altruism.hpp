#pragma once

#include <stdexcept>
#include <vector>

#include "ccbf/consensus.hpp"

namespace ccbf {

class ZeroWeightError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateRowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Safety-importance weight eta / max(h, floor). The raw ratio eta / h is
/// undefined at h = 0; the floor keeps the weight finite as an agent
/// reaches (or crosses) its safety boundary.
double compute_weight(double eta, double h_value, double floor);

struct SafetyWeights {
  std::vector<double> eta;
  double floor = 1e-6;
  std::vector<double> w;
};

/// Weights for every agent from the current barrier values.
SafetyWeights compute_weights(const std::vector<double>& eta,
                              const std::vector<AgentModel>& models,
                              const SystemState& x, double floor);

/// Relatedness r(i, j) = w_j / w_i: how much agent i values agent j's
/// safety relative to its own. r(i, i) = 1; reciprocal pairs multiply to 1.
class Relatedness {
 public:
  explicit Relatedness(std::vector<double> weights)
      : w_(std::move(weights)) {}

  double operator()(int i, int j) const {
    const double wi = w_.at(i);
    if (wi == 0.0)
      throw ZeroWeightError("relatedness undefined: agent " +
                            std::to_string(i + 1) + " has zero weight");
    return w_.at(j) / wi;
  }

  const std::vector<double>& weights() const { return w_; }

 private:
  std::vector<double> w_;
};

/// Own-safety cost of an input: C = -a_ii' u_i - b_ii. The printed
/// convention reads C >= 0 as the input contributing positively (a
/// negative cost) toward the agent's own coupled safety condition.
double safety_cost(const CcbfCoefficients& coeffs_i, const Vec& u_i);

/// Benefit of donor i's input to the owner of coeffs_j:
/// B = a_ji' u_i + b_ji. Requires the donor to appear in j's condition.
double safety_benefit(const CcbfCoefficients& coeffs_j, int donor,
                      const Vec& u_i);

/// Hamilton's-rule condition as one linear row on u_i:
///   sum_{j in N_i^-} r(i,j) * (a_ji' u_i + b_ji) >= 0,
/// returned as (row, s) with row * u_i + s >= 0. The self term enters with
/// r(i,i) = 1, so weighted benefit to others is traded against own cost.
std::pair<RowVec, double> altruism_row(int i,
                                       const std::vector<CcbfCoefficients>& coeffs,
                                       const CouplingGraph& g,
                                       const Relatedness& r);

/// Local problem of solve_local augmented with the agent's altruism row;
/// the objective reference u_ref_i takes the place of the nominal input.
LocalSolution solve_local_altruistic(int i,
                                     const std::vector<AgentModel>& models,
                                     const CouplingGraph& g,
                                     const SystemState& x, const Vec& u_ref_i,
                                     const ConsensusState& cs,
                                     const Relatedness& r);

/// Threshold input of the two-agent feasibility metric,
///   value = -(b_22 + a_21 u_1 + b_21) / a_22,
/// computed from agent 2's coefficients exactly as printed. When a_22 > 0
/// the safe set for u_2 is [value, inf) and value is a true minimum
/// (lower_bound == true); when a_22 < 0 the safe set is (-inf, value] and
/// the value is an upper endpoint instead.
struct UMinResult {
  double value = 0.0;
  bool lower_bound = false;
};

UMinResult u_min_metric(const CcbfCoefficients& coeffs_agent2, double u1_star);

}  // namespace ccbf
