#include "ccbf/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ccbf {

std::pair<Vec, std::vector<Vec>> gather_in_states(const CouplingGraph& g,
                                                  int i,
                                                  const SystemState& x) {
  if (static_cast<int>(x.size()) != g.size())
    throw std::invalid_argument("state has " + std::to_string(x.size()) +
                                " entries, expected " +
                                std::to_string(g.size()));
  std::vector<Vec> nbrs;
  for (int j : g.in_neighbors(i))
    if (j != i) nbrs.push_back(x[j]);
  return {x[i], nbrs};
}

double formation_drift(const FormationParams& params, const CouplingGraph& g,
                       int i, const SystemState& x) {
  if (static_cast<int>(x.size()) != g.size())
    throw std::invalid_argument("missing neighbor state: have " +
                                std::to_string(x.size()) + " of " +
                                std::to_string(g.size()));
  double acc = 0.0;
  for (int j : g.neighbors(i)) {
    if (j == i) continue;
    if (x[j].size() != 1 || x[i].size() != 1)
      throw std::invalid_argument("formation agents are one-dimensional");
    acc += (x[i](0) - x[j](0)) - params.delta(i, j);
  }
  return -params.xi * acc;
}

AgentDynamics make_formation_agent(const FormationParams& params,
                                   const CouplingGraph& g, int i,
                                   bool has_input) {
  if (params.xi <= 0)
    throw std::invalid_argument("coupling gain xi must be positive");
  if (static_cast<int>(params.desired_positions.size()) != g.size())
    throw std::invalid_argument("one desired position per agent required");
  if (!g.is_symmetric())
    throw std::invalid_argument(
        "formation dynamics require a symmetric coupling graph");
  std::vector<int> others;
  for (int j : g.in_neighbors(i))
    if (j != i) others.push_back(j);
  const double xi = params.xi;
  std::vector<double> deltas;
  for (int j : others) deltas.push_back(params.delta(i, j));

  AgentDynamics a;
  a.state_dim = 1;
  a.input_dim = has_input ? 1 : 0;
  a.drift = [others, deltas, xi](const Vec& xs, const std::vector<Vec>& xin) {
    if (xin.size() != others.size())
      throw std::invalid_argument("missing neighbor state in formation drift");
    double acc = 0.0;
    for (size_t k = 0; k < others.size(); ++k)
      acc += (xs(0) - xin[k](0)) - deltas[k];
    Vec out(1);
    out(0) = -xi * acc;
    return out;
  };
  a.input_map = [has_input](const Vec&) {
    return has_input ? Mat::Identity(1, 1) : Mat(1, 0);
  };
  const size_t n_others = others.size();
  a.drift_jacobian = [n_others, xi](const Vec&, const std::vector<Vec>&) {
    std::vector<Mat> blocks(n_others + 1, Mat(1, 1));
    blocks[0](0, 0) = -xi * static_cast<double>(n_others);
    for (size_t k = 1; k <= n_others; ++k) blocks[k](0, 0) = xi;
    return blocks;
  };
  return a;
}

Vec eval_dynamics(const AgentDynamics& a, const Vec& x_self,
                  const std::vector<Vec>& x_in, const Vec& u) {
  if (x_self.size() != a.state_dim)
    throw std::invalid_argument("state dimension mismatch");
  if (u.size() != a.input_dim)
    throw std::invalid_argument("input dimension mismatch: got " +
                                std::to_string(u.size()) + ", expected " +
                                std::to_string(a.input_dim));
  Vec xdot = a.drift(x_self, x_in);
  if (a.input_dim > 0) xdot += a.input_map(x_self) * u;
  return xdot;
}

double check_jacobian(const AgentDynamics& a, const Vec& x_self,
                      const std::vector<Vec>& x_in, double h) {
  if (h <= 0) throw std::invalid_argument("step must be positive");
  const std::vector<Mat> jacs = a.drift_jacobian(x_self, x_in);
  if (jacs.size() != x_in.size() + 1)
    throw std::invalid_argument("jacobian block count mismatch");

  double worst = 0.0;
  for (size_t s = 0; s < jacs.size(); ++s) {
    const Vec& pt = (s == 0) ? x_self : x_in[s - 1];
    if (jacs[s].cols() != pt.size())
      throw std::invalid_argument("jacobian block dimension mismatch");
    for (int c = 0; c < pt.size(); ++c) {
      Vec xp_self = x_self, xm_self = x_self;
      std::vector<Vec> xp_in = x_in, xm_in = x_in;
      if (s == 0) {
        xp_self(c) += h;
        xm_self(c) -= h;
      } else {
        xp_in[s - 1](c) += h;
        xm_in[s - 1](c) -= h;
      }
      Vec fd = (a.drift(xp_self, xp_in) - a.drift(xm_self, xm_in)) / (2 * h);
      for (int r = 0; r < fd.size(); ++r) {
        double err =
            std::abs(fd(r) - jacs[s](r, c)) / (1.0 + std::abs(jacs[s](r, c)));
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

}  // namespace ccbf
