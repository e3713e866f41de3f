#pragma once

// Shared builders for the canonical two-agent coupled scenario used across
// the test suites: xi = 2.5, desired separation 1.4, ball radius 0.5,
// alpha = beta = gamma = 10, initial state (-0.3, 0.3).

#include <random>

#include "ccbf/altruism.hpp"
#include "ccbf/sim.hpp"

namespace fixtures {

using namespace ccbf;

inline Vec scalar(double v) { return Vec::Constant(1, v); }

struct TwoAgent {
  CouplingGraph graph = CouplingGraph::complete(2);
  std::vector<AgentModel> models;
  SystemState x0;
  std::vector<Vec> u_nom;
};

inline TwoAgent two_agent(ControllerKind kind = ControllerKind::Zero,
                          bool agent2_controlled = true,
                          double gamma = 10.0) {
  TwoAgent s;
  FormationParams p;
  p.xi = 2.5;
  p.desired_positions = {-0.7, 0.7};
  for (int i = 0; i < 2; ++i) {
    AgentModel m;
    const bool controlled = i == 0 || agent2_controlled;
    m.dynamics = make_formation_agent(p, s.graph, i, controlled);
    m.barrier = make_ball_barrier(0.5, 10.0, 10.0, gamma);
    m.controller.kind = controlled ? kind : ControllerKind::Zero;
    s.models.push_back(std::move(m));
    s.u_nom.push_back(controlled ? scalar(0.0) : Vec(0));
  }
  s.x0 = {scalar(-0.3), scalar(0.3)};
  return s;
}

// random formation instance: n agents, complete graph, all controlled,
// coefficients kept away from degeneracy so solver-oracle comparisons stay
// well conditioned
struct RandomInstance {
  CouplingGraph graph;
  std::vector<AgentModel> models;
  SystemState x;
  std::vector<Vec> u_nom;
};

inline RandomInstance random_formation(std::mt19937& rng, int max_agents = 4,
                                       bool mixed_controllers = true) {
  std::uniform_int_distribution<int> nd(2, max_agents);
  const int n = nd(rng);
  std::uniform_real_distribution<double> xi_d(1.0, 3.0);
  std::uniform_real_distribution<double> gain_d(2.0, 12.0);
  std::uniform_real_distribution<double> pos_d(0.3, 0.8);
  std::uniform_real_distribution<double> des_d(-2.0, 2.0);
  std::uniform_int_distribution<int> coin(0, 1);

  RandomInstance inst{CouplingGraph::complete(n), {}, {}, {}};
  FormationParams p;
  p.xi = xi_d(rng);
  for (int i = 0; i < n; ++i) p.desired_positions.push_back(des_d(rng));

  for (int i = 0; i < n; ++i) {
    AgentModel m;
    m.dynamics = make_formation_agent(p, inst.graph, i, true);
    m.barrier = make_ball_barrier(1.0, gain_d(rng), gain_d(rng), gain_d(rng));
    m.controller.kind = (mixed_controllers && coin(rng))
                            ? ControllerKind::HalfSontag
                            : ControllerKind::Zero;
    inst.models.push_back(std::move(m));
    const double sign = coin(rng) ? 1.0 : -1.0;
    inst.x.push_back(scalar(sign * pos_d(rng)));
    inst.u_nom.push_back(scalar(0.0));
  }
  return inst;
}

}  // namespace fixtures
