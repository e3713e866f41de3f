#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "ccbf/topology.hpp"

namespace ccbf {

using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Mat = Eigen::MatrixXd;

/// Full system state, one vector per agent.
using SystemState = std::vector<Vec>;

/// Control-affine agent dynamics xdot = f(x_self, x_in) + g(x_self) u.
///
/// Neighbor conventions: `x_in` holds the states of the agent's in-neighbors
/// in ascending index order, self excluded. `drift_jacobian` returns the
/// blocks df/dx in the order [self, then in-neighbors ascending excluding
/// self], mirroring the (x_self, x_in) argument layout. An agent with
/// input_dim == 0 is uncontrolled and its input_map is an N x 0 matrix.
struct AgentDynamics {
  int state_dim = 1;
  int input_dim = 0;
  std::function<Vec(const Vec&, const std::vector<Vec>&)> drift;
  std::function<Mat(const Vec&)> input_map;
  std::function<std::vector<Mat>(const Vec&, const std::vector<Vec>&)> drift_jacobian;
};

/// Parameters of the 1D single-integrator formation family. The drift of
/// agent i is -xi * sum over neighbors j of ((x_i - x_j) - delta(i, j)),
/// with delta(i, j) = desired_positions[i] - desired_positions[j]. The
/// self term is excluded from the sum (it is identically zero).
struct FormationParams {
  double xi = 1.0;
  std::vector<double> desired_positions;

  double delta(int i, int j) const {
    return desired_positions.at(i) - desired_positions.at(j);
  }
};

/// Formation coupling drift for agent i at the given full state. Sums over
/// the agent's neighbor set (in and out); formation scenarios require a
/// symmetric graph so this coincides with the in-neighbor sum used by
/// constraint assembly.
double formation_drift(const FormationParams& params, const CouplingGraph& g,
                       int i, const SystemState& x);

/// Builds the AgentDynamics of one formation agent (scalar state, unit
/// input map when controlled). Requires a symmetric graph.
AgentDynamics make_formation_agent(const FormationParams& params,
                                   const CouplingGraph& g, int i,
                                   bool has_input);

/// xdot = f(x_self, x_in) + g(x_self) u.
Vec eval_dynamics(const AgentDynamics& a, const Vec& x_self,
                  const std::vector<Vec>& x_in, const Vec& u);

/// Worst relative error between drift_jacobian and a central finite
/// difference of the drift with step h, across all blocks and entries.
double check_jacobian(const AgentDynamics& a, const Vec& x_self,
                      const std::vector<Vec>& x_in, double h);

/// Collects (x_self, in-neighbor states excluding self) for agent i.
std::pair<Vec, std::vector<Vec>> gather_in_states(const CouplingGraph& g,
                                                  int i,
                                                  const SystemState& x);

}  // namespace ccbf
