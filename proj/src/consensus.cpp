#include "ccbf/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ccbf {

ConsensusState ConsensusState::init(const CouplingGraph& g, double k0,
                                    double inner_dt) {
  if (k0 <= 0) throw std::invalid_argument("k0 must be positive");
  if (inner_dt <= 0) throw std::invalid_argument("inner_dt must be positive");
  ConsensusState cs;
  cs.k0 = k0;
  cs.inner_dt = inner_dt;
  for (int i = 0; i < g.size(); ++i)
    for (int j : g.out_neighbors(i)) {
      cs.y[{i, j}] = 0.0;
      cs.c[{i, j}] = 0.0;
    }
  return cs;
}

namespace {

// local QP data for agent i at fixed coefficients and allocations
QuadraticProgram build_local_qp(int i, const std::vector<AgentModel>& models,
                                const CouplingGraph& g, const SystemState& x,
                                const Vec& u_nom_i,
                                const std::map<std::pair<int, int>, double>& y,
                                const std::pair<RowVec, double>* extra_row,
                                const std::vector<CcbfCoefficients>& coeffs,
                                std::vector<int>* condition_of_row) {
  const int mi = models[i].dynamics.input_dim;
  const auto& conditions = g.out_neighbors(i);
  const int n_extra = extra_row ? 1 : 0;
  QuadraticProgram p;
  p.hessian = Mat::Identity(mi, mi);
  p.linear = -u_nom_i;
  p.ineq_rows = Mat::Zero(static_cast<int>(conditions.size()) + 1 + n_extra, mi);
  p.ineq_consts = Vec::Zero(p.ineq_rows.rows());

  int r = 0;
  for (int j : conditions) {
    const Vec& a_ji = coeffs[j].a.at(i);
    double ysum = 0.0;
    for (int k : g.in_neighbors(j)) ysum += y.at({i, j}) - y.at({k, j});
    p.ineq_rows.row(r).head(a_ji.size()) = a_ji.transpose();
    p.ineq_consts(r) = ysum + coeffs[j].b.at(i);
    if (condition_of_row) condition_of_row->push_back(j);
    ++r;
  }
  auto [xs, xin] = gather_in_states(g, i, x);
  auto [row, s] = first_order_condition_row(models[i], xs, xin);
  p.ineq_rows.row(r).head(row.size()) = row;
  p.ineq_consts(r) = s;
  if (condition_of_row) condition_of_row->push_back(-1);
  ++r;
  if (extra_row) {
    p.ineq_rows.row(r).head(extra_row->first.size()) = extra_row->first;
    p.ineq_consts(r) = extra_row->second;
    if (condition_of_row) condition_of_row->push_back(-2);
  }
  return p;
}

std::optional<LocalSolution> try_solve_local(
    int i, const std::vector<AgentModel>& models, const CouplingGraph& g,
    const SystemState& x, const Vec& u_nom_i,
    const std::map<std::pair<int, int>, double>& y,
    const std::pair<RowVec, double>* extra_row,
    const std::vector<CcbfCoefficients>& coeffs) {
  LocalSolution out;
  for (int j : g.out_neighbors(i)) out.y[j] = y.at({i, j});

  if (models[i].dynamics.input_dim == 0) {
    // nothing to decide; the agent only relays allocations
    out.u = Vec(0);
    for (int j : g.out_neighbors(i)) out.c[j] = 0.0;
    return out;
  }

  std::vector<int> condition_of_row;
  const QuadraticProgram p = build_local_qp(i, models, g, x, u_nom_i, y,
                                            extra_row, coeffs,
                                            &condition_of_row);
  const QpSolution sol = solve_qp(p);
  if (sol.status != QpStatus::Optimal) return std::nullopt;
  out.u = sol.z;
  for (size_t r = 0; r < condition_of_row.size(); ++r)
    if (condition_of_row[r] >= 0)
      out.c[condition_of_row[r]] = -sol.multipliers(static_cast<int>(r));
  return out;
}

}  // namespace

LocalSolution solve_local(int i, const std::vector<AgentModel>& models,
                          const CouplingGraph& g, const SystemState& x,
                          const Vec& u_nom_i, const ConsensusState& cs,
                          const std::pair<RowVec, double>* extra_row,
                          const std::vector<CcbfCoefficients>* coeffs) {
  std::vector<CcbfCoefficients> local;
  if (!coeffs) {
    local = assemble_all(models, g, x);
    coeffs = &local;
  }
  auto sol = try_solve_local(i, models, g, x, u_nom_i, cs.y, extra_row, *coeffs);
  if (!sol)
    throw LocalInfeasibleError(
        i, "local problem of agent " + std::to_string(i + 1) + " infeasible");
  return *sol;
}

ConsensusState update_aux(const ConsensusState& cs, const CouplingGraph& g,
                          const std::map<std::pair<int, int>, double>& c) {
  ConsensusState out = cs;
  out.c = c;
  for (auto& [key, value] : out.y) {
    const auto [i, j] = key;
    double acc = 0.0;
    for (int k : g.in_neighbors(j)) acc += c.at({i, j}) - c.at({k, j});
    value += cs.inner_dt * (-cs.k0 * acc);
  }
  return out;
}

double dual_disagreement(const std::map<std::pair<int, int>, double>& c,
                         const CouplingGraph& g) {
  double dis = 0.0;
  for (int j = 0; j < g.size(); ++j) {
    const auto& owners = g.in_neighbors(j);
    for (size_t a = 0; a < owners.size(); ++a)
      for (size_t b = a + 1; b < owners.size(); ++b)
        dis = std::max(dis, std::abs(c.at({owners[a], j}) - c.at({owners[b], j})));
  }
  return dis;
}

ConsensusResult run_consensus_round(const std::vector<AgentModel>& models,
                                    const CouplingGraph& g,
                                    const SystemState& x,
                                    const std::vector<Vec>& u_nom,
                                    ConsensusState& cs,
                                    const ConsensusOptions& opt) {
  if (opt.rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  const int n = g.size();
  std::vector<CcbfCoefficients> local;
  const std::vector<CcbfCoefficients>* coeffs = opt.coeffs;
  if (!coeffs) {
    local = assemble_all(models, g, x);
    coeffs = &local;
  }

  int offender = -1;
  auto solve_all = [&](const std::map<std::pair<int, int>, double>& y)
      -> std::optional<std::vector<LocalSolution>> {
    std::vector<LocalSolution> sols;
    sols.reserve(n);
    for (int i = 0; i < n; ++i) {
      const std::pair<RowVec, double>* extra =
          opt.extra_rows ? &(*opt.extra_rows)[i] : nullptr;
      auto s = try_solve_local(i, models, g, x, u_nom[i], y, extra, *coeffs);
      if (!s) {
        offender = i;
        return std::nullopt;
      }
      sols.push_back(std::move(*s));
    }
    return sols;
  };

  // a warm-started allocation can be infeasible at a fresh state; contract
  // it toward zero until the locals solve again
  std::map<std::pair<int, int>, double> y = cs.y;
  auto sols = solve_all(y);
  for (int tries = 0; !sols && tries < 80; ++tries) {
    for (auto& [key, v] : y) v *= 0.5;
    sols = solve_all(y);
  }
  if (!sols) {
    for (auto& [key, v] : y) v = 0.0;
    sols = solve_all(y);
  }
  if (!sols)
    throw LocalInfeasibleError(offender, "local problem of agent " +
                                             std::to_string(offender + 1) +
                                             " infeasible at zero allocation");

  ConsensusResult res;
  std::map<std::pair<int, int>, double> c = cs.c;
  for (int round = 1; round <= opt.rounds; ++round) {
    res.u.clear();
    for (int i = 0; i < n; ++i) res.u.push_back((*sols)[i].u);
    for (int i = 0; i < n; ++i)
      for (const auto& [j, cij] : (*sols)[i].c) c[{i, j}] = cij;
    res.disagreement = dual_disagreement(c, g);
    res.rounds_used = round;
    if (opt.record_rounds)
      res.log.push_back({round, res.disagreement, res.u});
    if (opt.u_target) {
      double gap = 0.0;
      for (int i = 0; i < n; ++i)
        if (res.u[i].size() > 0)
          gap = std::max(gap,
                         (res.u[i] - (*opt.u_target)[i]).cwiseAbs().maxCoeff());
      if (gap <= opt.u_target_tol) break;
    }
    if (res.disagreement <= opt.exit_tol || round == opt.rounds) break;

    // Euler step with feasibility backtracking
    ConsensusState probe = cs;
    probe.y = y;
    probe.c = c;
    bool moved = false;
    double dt = cs.inner_dt;
    for (int bt = 0; bt < 40; ++bt) {
      probe.inner_dt = dt;
      ConsensusState next = update_aux(probe, g, c);
      auto trial = solve_all(next.y);
      if (trial) {
        y = next.y;
        sols = std::move(trial);
        moved = true;
        break;
      }
      dt *= 0.5;
    }
    if (!moved) {
      // the flow cannot continue without making a local problem
      // infeasible; park at the boundary
      res.pinned = true;
      break;
    }
  }

  cs.y = y;
  cs.c = c;
  return res;
}

}  // namespace ccbf
