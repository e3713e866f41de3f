#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ccbf/altruism.hpp"
#include "fixtures.hpp"

using namespace ccbf;
using fixtures::scalar;

namespace {

// synthetic multi-agent coefficient sets for the weight-dominance
// properties: every agent gets a scalar input and random condition rows
struct SyntheticInstance {
  CouplingGraph graph = CouplingGraph::complete(3);
  std::vector<CcbfCoefficients> coeffs;
  std::vector<Vec> u_nbrs;   // fixed neighbor inputs
  std::vector<double> w;     // importance weights, agent 0 dominant
};

SyntheticInstance make_instance(std::mt19937& rng) {
  std::uniform_real_distribution<double> d(-5.0, 5.0);
  std::uniform_real_distribution<double> big(1e10, 1e12);
  SyntheticInstance inst;
  for (int i = 0; i < 3; ++i) {
    CcbfCoefficients c;
    c.agent = i;
    for (int j = 0; j < 3; ++j) {
      c.a[j] = scalar(d(rng));
      c.b[j] = d(rng);
    }
    inst.coeffs.push_back(c);
    inst.u_nbrs.push_back(scalar(d(rng)));
  }
  const double scale = big(rng);
  inst.w = {scale, 1.0, std::uniform_real_distribution<double>(0.5, 2.0)(rng)};
  return inst;
}

double psi_at(const SyntheticInstance& inst, int i, double ui) {
  std::vector<Vec> u = inst.u_nbrs;
  u[i] = scalar(ui);
  return eval_psi(inst.coeffs[i], u);
}

double neighbor_contribution(const SyntheticInstance& inst, int i) {
  double s = 0.0;
  for (const auto& [j, a] : inst.coeffs[i].a) {
    if (j == i) continue;
    s += a.dot(inst.u_nbrs[j]) + inst.coeffs[i].b.at(j);
  }
  return s;
}

}  // namespace

TEST_CASE("importance weights") {
  CHECK(compute_weight(1000.0, 0.08, 1e-6) == doctest::Approx(12500.0));
  CHECK(compute_weight(0.0, 0.3, 1e-6) == doctest::Approx(0.0));
  CHECK(compute_weight(1.0, 1e-9, 1e-6) == doctest::Approx(1e6));
  CHECK_THROWS_AS(compute_weight(1.0, 0.1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(compute_weight(-1.0, 0.1, 1e-6), std::invalid_argument);
}

TEST_CASE("relatedness") {
  const Relatedness r({12.5, 12500.0});
  CHECK(r(0, 1) == doctest::Approx(1000.0));
  CHECK(r(0, 0) == doctest::Approx(1.0));
  CHECK(r(1, 1) == doctest::Approx(1.0));
  const Relatedness eq({3.0, 3.0});
  CHECK(eq(0, 1) == doctest::Approx(1.0));

  const Relatedness zero({0.0, 1.0});
  CHECK_THROWS_AS(zero(0, 1), ZeroWeightError);

  // reciprocity whenever both weights are positive
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(1e-5, 1e5);
  for (int trial = 0; trial < 200; ++trial) {
    const Relatedness rr({d(rng), d(rng)});
    CHECK(rr(0, 1) * rr(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("safety cost and benefit on the canonical coefficients") {
  auto s = fixtures::two_agent(ControllerKind::Zero, true);
  const auto c2 = assemble_coefficients(1, s.models, s.graph, s.x0);

  CHECK(safety_cost(c2, scalar(0.0)) == doctest::Approx(6.5).epsilon(1e-9));
  CHECK(safety_cost(c2, scalar(1.0)) == doctest::Approx(10.75).epsilon(1e-9));

  CcbfCoefficients zero;
  zero.agent = 0;
  zero.a[0] = scalar(0.0);
  zero.b[0] = 0.0;
  CHECK(safety_cost(zero, scalar(0.7)) == doctest::Approx(0.0));
  CHECK(safety_benefit(zero, 0, scalar(0.9)) == doctest::Approx(0.0));

  CHECK(safety_benefit(c2, 0, scalar(-4.0)) == doctest::Approx(4.5).epsilon(1e-9));
  CHECK(safety_benefit(c2, 0, scalar(0.0)) == doctest::Approx(1.5).epsilon(1e-9));
  CHECK_THROWS_AS(safety_benefit(c2, 2, scalar(0.0)), std::invalid_argument);
}

TEST_CASE("altruism row") {
  // single agent: collapses to its own condition row
  const auto g1 = CouplingGraph::complete(1);
  CcbfCoefficients self;
  self.agent = 0;
  self.a[0] = scalar(2.5);
  self.b[0] = -0.75;
  const Relatedness r1({4.0});
  auto [row1, s1] = altruism_row(0, {self}, g1, r1);
  CHECK(row1(0) == doctest::Approx(2.5));
  CHECK(s1 == doctest::Approx(-0.75));

  // canonical two-agent system, heavy weight on agent 2
  auto s = fixtures::two_agent(ControllerKind::Zero, true);
  const auto coeffs = assemble_all(s.models, s.graph, s.x0);
  const Relatedness r({1.0, 1000.0});
  auto [row, cst] = altruism_row(0, coeffs, s.graph, r);
  CHECK(row(0) == doctest::Approx(4.25 + 1000.0 * -0.75).epsilon(1e-9));
  CHECK(cst == doctest::Approx(-6.5 + 1000.0 * 1.5).epsilon(1e-9));

  // vanishing regard for the neighbor reduces to the self row
  const Relatedness selfish({1.0, 0.0});
  auto [row0, cst0] = altruism_row(0, coeffs, s.graph, selfish);
  CHECK(row0(0) == doctest::Approx(4.25).epsilon(1e-9));
  CHECK(cst0 == doctest::Approx(-6.5).epsilon(1e-9));
}

TEST_CASE("dominant own weight makes the altruistic solve match the base one") {
  std::mt19937 rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = fixtures::random_formation(rng);
    const int n = inst.graph.size();
    ConsensusState cs = ConsensusState::init(inst.graph, 5.0, 0.01);
    std::vector<double> w(n, 1.0);
    w[0] = 1e10;
    const Relatedness r(w);
    try {
      const LocalSolution base =
          solve_local(0, inst.models, inst.graph, inst.x, inst.u_nom[0], cs);
      const LocalSolution alt = solve_local_altruistic(
          0, inst.models, inst.graph, inst.x, inst.u_nom[0], cs, r);
      CHECK(std::abs(base.u(0) - alt.u(0)) <= 1e-6);
    } catch (const LocalInfeasibleError&) {
      // a locally infeasible draw says nothing about the property
    }
  }
}

TEST_CASE("symmetric problem gives antisymmetric inputs") {
  auto s = fixtures::two_agent(ControllerKind::Zero, true);
  ConsensusState cs = ConsensusState::init(s.graph, 5.0, 0.01);
  const Relatedness r({1.0, 1.0});
  const LocalSolution u0 = solve_local_altruistic(0, s.models, s.graph, s.x0,
                                                  scalar(0.0), cs, r);
  const LocalSolution u1 = solve_local_altruistic(1, s.models, s.graph, s.x0,
                                                  scalar(0.0), cs, r);
  CHECK(u0.u(0) == doctest::Approx(-u1.u(0)).epsilon(1e-9));
}

TEST_CASE("biased scenario stays feasible and safe through consensus") {
  auto s = fixtures::two_agent(ControllerKind::HalfSontag, true);
  const auto coeffs = assemble_all(s.models, s.graph, s.x0);
  const SafetyWeights w =
      compute_weights({1.0, 1000.0}, s.models, s.x0, 1e-6);
  const Relatedness r(w.w);
  std::vector<std::pair<RowVec, double>> extra;
  for (int i = 0; i < 2; ++i)
    extra.push_back(altruism_row(i, coeffs, s.graph, r));

  ConsensusState cs = ConsensusState::init(s.graph, 5.0, 0.01);
  ConsensusOptions opt;
  opt.rounds = 300;
  opt.record_rounds = true;
  opt.coeffs = &coeffs;
  opt.extra_rows = &extra;
  const ConsensusResult res =
      run_consensus_round(s.models, s.graph, s.x0, s.u_nom, cs, opt);
  REQUIRE(!res.log.empty());
  for (const auto& rec : res.log)
    for (int i = 0; i < 2; ++i) CHECK(eval_psi(coeffs[i], rec.u) >= -1e-6);
}

TEST_CASE("two-agent feasibility threshold") {
  auto s = fixtures::two_agent(ControllerKind::Zero, true);
  const auto c2 = assemble_coefficients(1, s.models, s.graph, s.x0);
  const UMinResult m = u_min_metric(c2, 0.0);
  CHECK(m.value == doctest::Approx(-(-6.5 + 1.5) / -4.25).epsilon(1e-9));
  CHECK(m.value == doctest::Approx(-1.1764705882352942).epsilon(1e-9));
  CHECK_FALSE(m.lower_bound);  // a_22 < 0: upper endpoint

  CcbfCoefficients clean;
  clean.agent = 1;
  clean.a[0] = scalar(0.4);
  clean.a[1] = scalar(2.0);
  clean.b[0] = 0.0;
  clean.b[1] = 0.0;
  const UMinResult z = u_min_metric(clean, 0.0);
  CHECK(z.value == doctest::Approx(0.0));
  CHECK(z.lower_bound);

  CcbfCoefficients degenerate = clean;
  degenerate.a[1] = scalar(1e-13);
  CHECK_THROWS_AS(u_min_metric(degenerate, 0.0), DegenerateRowError);
}

TEST_CASE("weight dominance: altruism-feasible inputs are safe inputs") {
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> offset(0.0, 4.0);
  int instances = 0;
  while (instances < 20) {
    const SyntheticInstance inst = make_instance(rng);
    if (neighbor_contribution(inst, 0) < 0.0) continue;
    ++instances;
    const Relatedness r(inst.w);
    auto [row, cst] = altruism_row(0, inst.coeffs, inst.graph, r);
    if (std::abs(row(0)) < 1e-9) continue;
    // sample the boundary and points into the feasible half-space
    for (int k = 0; k < 100; ++k) {
      const double boundary = -cst / row(0);
      const double ui = boundary + (row(0) > 0 ? 1.0 : -1.0) *
                                       (k == 0 ? 0.0 : offset(rng));
      REQUIRE(row(0) * ui + cst >= -1e-9);
      const double psi = psi_at(inst, 0, ui);
      CHECK(psi >= -1e-6 * (1.0 + std::abs(psi)));
    }
  }
}

TEST_CASE("weight dominance: safe set intersects the altruism half-space") {
  std::mt19937 rng(43);
  int instances = 0;
  while (instances < 20) {
    const SyntheticInstance inst = make_instance(rng);
    const Relatedness r(inst.w);
    auto [row, cst] = altruism_row(0, inst.coeffs, inst.graph, r);

    // own safe set given the fixed neighbor inputs, as one row on u_0
    const double a_self = inst.coeffs[0].a.at(0)(0);
    const double c_self =
        inst.coeffs[0].b.at(0) + neighbor_contribution(inst, 0);

    QuadraticProgram safe;
    safe.hessian = Mat::Identity(1, 1);
    safe.linear = Vec::Zero(1);
    safe.ineq_rows = Mat::Constant(1, 1, a_self);
    safe.ineq_consts = Vec::Constant(1, c_self);
    if (solve_qp(safe).status != QpStatus::Optimal) continue;  // empty safe set
    ++instances;

    QuadraticProgram both = safe;
    both.ineq_rows = Mat::Zero(2, 1);
    both.ineq_rows << a_self, row(0);
    both.ineq_consts = Vec::Zero(2);
    both.ineq_consts << c_self, cst;
    CHECK(solve_qp(both).status == QpStatus::Optimal);
  }
}
