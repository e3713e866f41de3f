#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ccbf/consensus.hpp"
#include "fixtures.hpp"

using namespace ccbf;
using fixtures::scalar;

namespace {

Vec centralized_optimum(const std::vector<AgentModel>& models,
                        const CouplingGraph& g, const SystemState& x,
                        const std::vector<Vec>& u_nom) {
  const QuadraticProgram p = assemble_centralized(models, g, x, u_nom);
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  return s.z;
}

}  // namespace

TEST_CASE("decoupled local problem reduces to the plain filter") {
  const auto g1 = CouplingGraph::complete(1);
  FormationParams fp;
  fp.xi = 1.0;
  fp.desired_positions = {0.0};
  AgentModel m;
  m.dynamics = make_formation_agent(fp, g1, 0, true);
  m.barrier = make_ball_barrier(0.5, 10.0, 10.0, 10.0);
  const SystemState x = {scalar(0.1)};

  ConsensusState cs = ConsensusState::init(g1, 5.0, 0.01);
  // nominal already satisfies both rows at this mild state
  const LocalSolution sol = solve_local(0, {m}, g1, x, scalar(0.2), cs);
  CHECK(sol.u(0) == doctest::Approx(0.2).epsilon(1e-10));
  CHECK(sol.c.at(0) == doctest::Approx(0.0));
}

TEST_CASE("local problem of the canonical system at zero allocation") {
  auto s = fixtures::two_agent(ControllerKind::Zero, true);
  ConsensusState cs = ConsensusState::init(s.graph, 5.0, 0.01);
  const LocalSolution sol =
      solve_local(0, s.models, s.graph, s.x0, scalar(0.0), cs);
  // binding own condition: 4.25 u - 6.5 >= 0; the neighbor condition row
  // -0.75 u + 1.5 >= 0 stays slack
  CHECK(sol.u(0) == doctest::Approx(6.5 / 4.25).epsilon(1e-9));
  CHECK(sol.c.at(0) == doctest::Approx(-(6.5 / 4.25) / 4.25).epsilon(1e-9));
  CHECK(sol.c.at(1) == doctest::Approx(0.0));
  CHECK(sol.y.at(0) == 0.0);
  CHECK(sol.y.at(1) == 0.0);

  // a contradictory extra row turns it infeasible
  const std::pair<RowVec, double> bad{RowVec::Zero(1), -1.0};
  CHECK_THROWS_AS(
      solve_local(0, s.models, s.graph, s.x0, scalar(0.0), cs, &bad),
      LocalInfeasibleError);
}

TEST_CASE("allocation update law") {
  const auto g = CouplingGraph::complete(2);
  ConsensusState cs = ConsensusState::init(g, 1.0, 0.1);

  // equal duals within each condition leave allocations unchanged
  std::map<std::pair<int, int>, double> c = cs.c;
  c[{0, 0}] = c[{1, 0}] = -0.4;
  c[{0, 1}] = c[{1, 1}] = 0.7;
  const ConsensusState same = update_aux(cs, g, c);
  for (const auto& [k, v] : same.y) CHECK(v == doctest::Approx(0.0));

  // dual gap of 2 on condition 1 moves 0.2 between the owners
  c = cs.c;
  c[{0, 1}] = 2.0;
  c[{1, 1}] = 0.0;
  const ConsensusState moved = update_aux(cs, g, c);
  CHECK(moved.y.at({0, 1}) == doctest::Approx(-0.2));
  CHECK(moved.y.at({1, 1}) == doctest::Approx(0.2));
  CHECK(moved.y.at({0, 0}) == doctest::Approx(0.0));
  CHECK(moved.c.at({0, 1}) == 2.0);

  // per-condition allocation sums are conserved under random duals
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> d(-2, 2);
  ConsensusState state = ConsensusState::init(g, 3.0, 0.05);
  for (auto& [k, v] : state.y) v = d(rng);
  for (int iter = 0; iter < 50; ++iter) {
    std::map<std::pair<int, int>, double> duals;
    for (const auto& [k, v] : state.c) duals[k] = d(rng);
    const double sum0 = state.y.at({0, 0}) + state.y.at({1, 0});
    const double sum1 = state.y.at({0, 1}) + state.y.at({1, 1});
    state = update_aux(state, g, duals);
    CHECK(state.y.at({0, 0}) + state.y.at({1, 0}) ==
          doctest::Approx(sum0).epsilon(1e-12));
    CHECK(state.y.at({0, 1}) + state.y.at({1, 1}) ==
          doctest::Approx(sum1).epsilon(1e-12));
  }
}

TEST_CASE("allocation gauge freedom") {
  auto s = fixtures::two_agent(ControllerKind::Zero, true);
  ConsensusState cs = ConsensusState::init(s.graph, 5.0, 0.01);
  cs.y[{0, 0}] = 0.3;
  cs.y[{1, 0}] = -0.1;
  const LocalSolution before =
      solve_local(0, s.models, s.graph, s.x0, scalar(0.0), cs);
  // shift every allocation of condition 0 by the same constant
  cs.y[{0, 0}] += 5.0;
  cs.y[{1, 0}] += 5.0;
  const LocalSolution after =
      solve_local(0, s.models, s.graph, s.x0, scalar(0.0), cs);
  CHECK(before.u(0) == doctest::Approx(after.u(0)).epsilon(1e-12));
  CHECK(before.c.at(0) == doctest::Approx(after.c.at(0)).epsilon(1e-10));
}

TEST_CASE("single round on decoupled agents") {
  const auto g = CouplingGraph(2, {{0, 0}, {1, 1}});
  FormationParams fp;
  fp.xi = 1.0;
  fp.desired_positions = {0.0, 0.0};
  std::vector<AgentModel> models;
  for (int i = 0; i < 2; ++i) {
    AgentModel m;
    m.dynamics = make_formation_agent(fp, g, i, true);
    m.barrier = make_ball_barrier(0.5, 10.0, 10.0, 10.0);
    models.push_back(std::move(m));
  }
  const SystemState x = {scalar(0.2), scalar(-0.3)};
  const std::vector<Vec> u_nom = {scalar(0.0), scalar(0.0)};
  ConsensusState cs = ConsensusState::init(g, 5.0, 0.01);
  ConsensusOptions opt;
  opt.rounds = 1;
  const ConsensusResult res =
      run_consensus_round(models, g, x, u_nom, cs, opt);
  CHECK(res.disagreement == doctest::Approx(0.0));
  // each agent solved its own filter in isolation
  for (int i = 0; i < 2; ++i) {
    const QuadraticProgram p = assemble_centralized({models[i]},
                                                    CouplingGraph::complete(1),
                                                    {x[i]}, {u_nom[i]});
    const QpSolution s = solve_qp(p);
    CHECK(res.u[i](0) == doctest::Approx(s.z(0)).epsilon(1e-9));
  }
}

TEST_CASE("consensus converges to the centralized optimum") {
  auto s = fixtures::two_agent(ControllerKind::Zero, true);
  const Vec ustar = centralized_optimum(s.models, s.graph, s.x0, s.u_nom);

  ConsensusState cs = ConsensusState::init(s.graph, 5.0, 0.01);
  ConsensusOptions opt;
  opt.rounds = 2000;
  opt.exit_tol = 1e-12;
  const ConsensusResult res =
      run_consensus_round(s.models, s.graph, s.x0, s.u_nom, cs, opt);
  CHECK(std::abs(res.u[0](0) - ustar(0)) <= 1e-3);
  CHECK(std::abs(res.u[1](0) - ustar(1)) <= 1e-3);
}

TEST_CASE("every round satisfies the coupled conditions") {
  auto s = fixtures::two_agent(ControllerKind::Zero, true);
  const auto coeffs = assemble_all(s.models, s.graph, s.x0);

  ConsensusState cs = ConsensusState::init(s.graph, 5.0, 0.01);
  ConsensusOptions opt;
  opt.rounds = 500;
  opt.exit_tol = 1e-12;
  opt.record_rounds = true;
  opt.coeffs = &coeffs;
  const ConsensusResult res =
      run_consensus_round(s.models, s.graph, s.x0, s.u_nom, cs, opt);
  REQUIRE(!res.log.empty());
  for (const auto& rec : res.log) {
    for (int i = 0; i < 2; ++i) {
      CHECK(eval_psi(coeffs[i], rec.u) >= -1e-6);
      auto [xs, xin] = gather_in_states(s.graph, i, s.x0);
      auto [row, cst] = first_order_condition_row(s.models[i], xs, xin);
      CHECK(row.dot(rec.u[i]) + cst >= -1e-6);
    }
  }
}

TEST_CASE("larger gains need no more rounds") {
  auto s = fixtures::two_agent(ControllerKind::Zero, true);
  const Vec ustar = centralized_optimum(s.models, s.graph, s.x0, s.u_nom);
  const auto coeffs = assemble_all(s.models, s.graph, s.x0);

  std::vector<int> rounds_needed;
  for (const double k0 : {1.0, 5.0, 25.0}) {
    ConsensusState cs = ConsensusState::init(s.graph, k0, 0.01);
    ConsensusOptions opt;
    opt.rounds = 20000;
    opt.exit_tol = 0.0;
    opt.record_rounds = true;
    opt.coeffs = &coeffs;
    const ConsensusResult res =
        run_consensus_round(s.models, s.graph, s.x0, s.u_nom, cs, opt);
    int first = -1;
    for (const auto& rec : res.log) {
      double err = 0.0;
      for (int i = 0; i < 2; ++i)
        err = std::max(err, std::abs(rec.u[i](0) - ustar(i)));
      if (err <= 1e-3) {
        first = rec.round;
        break;
      }
    }
    REQUIRE(first > 0);
    rounds_needed.push_back(first);
  }
  CHECK(rounds_needed[0] >= rounds_needed[1]);
  CHECK(rounds_needed[1] >= rounds_needed[2]);
}

TEST_CASE("warm-started allocations survive small state changes") {
  auto s = fixtures::two_agent(ControllerKind::HalfSontag, true);
  ConsensusState cs = ConsensusState::init(s.graph, 5.0, 0.01);
  SystemState x = s.x0;
  ConsensusOptions opt;
  opt.rounds = 100;
  for (int step = 0; step < 20; ++step) {
    const ConsensusResult res =
        run_consensus_round(s.models, s.graph, x, s.u_nom, cs, opt);
    const auto coeffs = assemble_all(s.models, s.graph, x);
    for (int i = 0; i < 2; ++i) CHECK(eval_psi(coeffs[i], res.u) >= -1e-6);
    // drift the state slightly, as one control step would
    x[0](0) -= 2e-3;
    x[1](0) += 2e-3;
  }
}
