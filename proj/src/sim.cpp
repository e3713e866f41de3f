#include "ccbf/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace ccbf {

void SimConfig::validate() const {
  if (control_dt <= 0) throw std::invalid_argument("control_dt must be positive");
  if (horizon < control_dt)
    throw std::invalid_argument("horizon must cover at least one control step");
  if (rounds_per_step < 1)
    throw std::invalid_argument("rounds_per_step must be >= 1");
}

namespace {

SystemState system_derivative(const std::vector<AgentModel>& models,
                              const CouplingGraph& g, const SystemState& x,
                              const std::vector<Vec>& u) {
  SystemState d(x.size());
  for (int i = 0; i < g.size(); ++i) {
    auto [xs, xin] = gather_in_states(g, i, x);
    d[i] = eval_dynamics(models[i].dynamics, xs, xin, u[i]);
  }
  return d;
}

SystemState axpy(const SystemState& x, const SystemState& d, double c) {
  SystemState r = x;
  for (size_t i = 0; i < x.size(); ++i) r[i] += c * d[i];
  return r;
}

void check_finite(const SystemState& x, double t) {
  for (size_t i = 0; i < x.size(); ++i)
    if (!x[i].allFinite())
      throw NonFiniteStateError("state of agent " + std::to_string(i + 1) +
                                " became non-finite at t=" + std::to_string(t));
}

}  // namespace

SystemState step_rk4(const std::vector<AgentModel>& models,
                     const CouplingGraph& g, const SystemState& x,
                     const std::vector<Vec>& u, double dt) {
  if (dt == 0) throw std::invalid_argument("dt must be nonzero");
  const SystemState k1 = system_derivative(models, g, x, u);
  const SystemState k2 = system_derivative(models, g, axpy(x, k1, dt / 2), u);
  const SystemState k3 = system_derivative(models, g, axpy(x, k2, dt / 2), u);
  const SystemState k4 = system_derivative(models, g, axpy(x, k3, dt), u);
  SystemState out = x;
  for (size_t i = 0; i < x.size(); ++i)
    out[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  check_finite(out, 0.0);
  return out;
}

SystemState step_euler(const std::vector<AgentModel>& models,
                       const CouplingGraph& g, const SystemState& x,
                       const std::vector<Vec>& u, double dt) {
  SystemState out = axpy(x, system_derivative(models, g, x, u), dt);
  check_finite(out, 0.0);
  return out;
}

namespace {

std::vector<Vec> zero_inputs(const std::vector<AgentModel>& models) {
  std::vector<Vec> u;
  for (const auto& m : models) u.push_back(Vec::Zero(m.dynamics.input_dim));
  return u;
}

// minimum-norm input of the single controlled agent satisfying the coupled
// conditions of all other agents (their inputs are empty)
std::vector<Vec> solve_ccbf_single(const std::vector<AgentModel>& models,
                                   const CouplingGraph& g,
                                   const std::vector<CcbfCoefficients>& coeffs,
                                   double t) {
  int enforcer = -1;
  for (size_t i = 0; i < models.size(); ++i) {
    if (models[i].dynamics.input_dim > 0) {
      if (enforcer >= 0)
        throw std::invalid_argument(
            "single-enforcer mode needs exactly one controlled agent");
      enforcer = static_cast<int>(i);
    }
  }
  if (enforcer < 0)
    throw std::invalid_argument("single-enforcer mode needs a controlled agent");

  std::vector<std::pair<RowVec, double>> rows;
  for (int m = 0; m < g.size(); ++m) {
    if (m == enforcer) continue;
    auto it = coeffs[m].a.find(enforcer);
    if (it == coeffs[m].a.end()) continue;
    double b_sum = 0.0;
    for (const auto& [j, bj] : coeffs[m].b) b_sum += bj;
    rows.emplace_back(it->second.transpose(), b_sum);
  }

  std::vector<Vec> u = zero_inputs(models);
  const int mi = models[enforcer].dynamics.input_dim;
  if (rows.empty()) return u;
  if (rows.size() == 1) {
    const auto& [a, c] = rows.front();
    if (c >= 0) return u;
    const double nrm2 = a.squaredNorm();
    if (nrm2 < 1e-24)
      throw RuntimeInfeasibleError(t, enforcer,
                                   "enforced condition has no input channel");
    u[enforcer] = (-c / nrm2) * a.transpose();
    return u;
  }
  QuadraticProgram p;
  p.hessian = Mat::Identity(mi, mi);
  p.linear = Vec::Zero(mi);
  p.ineq_rows = Mat::Zero(static_cast<int>(rows.size()), mi);
  p.ineq_consts = Vec::Zero(static_cast<int>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    p.ineq_rows.row(static_cast<int>(r)) = rows[r].first;
    p.ineq_consts(static_cast<int>(r)) = rows[r].second;
  }
  const QpSolution sol = solve_qp(p);
  if (sol.status != QpStatus::Optimal)
    throw RuntimeInfeasibleError(t, enforcer,
                                 "single-enforcer conditions infeasible");
  u[enforcer] = sol.z;
  return u;
}

}  // namespace

SimTrace run_scenario(const SimConfig& cfg, const Scenario& sc) {
  cfg.validate();
  const int n = sc.graph.size();
  const bool distributed = cfg.mode == SimMode::DistributedBase ||
                           cfg.mode == SimMode::DistributedAltruistic;
  if (distributed) {
    for (const auto& m : sc.models)
      if (m.dynamics.input_dim < 1)
        throw std::invalid_argument(
            "distributed modes need every agent controlled");
  }

  SimTrace trace;
  trace.has_disagreement = distributed;
  bool u2min_applicable = n == 2;
  for (const auto& m : sc.models)
    if (m.dynamics.state_dim != 1) u2min_applicable = false;
  if (n == 2 && sc.models[1].dynamics.input_dim != 1) u2min_applicable = false;
  trace.has_u2_min = u2min_applicable;

  SystemState x = sc.x0;
  ConsensusState cs = ConsensusState::init(sc.graph, sc.k0, sc.inner_dt);
  QpWarmStart central_warm;
  bool have_warm = false;

  const int steps = static_cast<int>(std::llround(cfg.horizon / cfg.control_dt));
  for (int s = 0; s <= steps; ++s) {
    const double t = s * cfg.control_dt;
    const auto coeffs = assemble_all(sc.models, sc.graph, x);

    std::vector<Vec> u;
    double dis = 0.0;
    switch (cfg.mode) {
      case SimMode::NoIntervention:
        u = zero_inputs(sc.models);
        break;
      case SimMode::CcbfSingle:
        u = solve_ccbf_single(sc.models, sc.graph, coeffs, t);
        break;
      case SimMode::Centralized: {
        const QuadraticProgram p =
            assemble_centralized(sc.models, sc.graph, x, sc.u_nom);
        const QpSolution sol =
            solve_qp(p, have_warm ? &central_warm : nullptr);
        if (sol.status != QpStatus::Optimal)
          throw RuntimeInfeasibleError(t, -1, "centralized problem " +
                                                  std::string(sol.status ==
                                                                      QpStatus::Infeasible
                                                                  ? "infeasible"
                                                                  : "unbounded") +
                                                  " at t=" + std::to_string(t));
        central_warm.z = sol.z;
        central_warm.active.clear();
        for (int r = 0; r < p.rows(); ++r)
          if (sol.multipliers(r) > 1e-10) central_warm.active.push_back(r);
        have_warm = true;
        const auto off = input_offsets(sc.models);
        u.clear();
        for (int i = 0; i < n; ++i)
          u.push_back(sol.z.segment(off[i], sc.models[i].dynamics.input_dim));
        break;
      }
      case SimMode::DistributedBase:
      case SimMode::DistributedAltruistic: {
        ConsensusOptions opt;
        opt.rounds = cfg.rounds_per_step;
        opt.exit_tol = cfg.consensus_exit_tol;
        opt.record_rounds = cfg.record_rounds;
        opt.coeffs = &coeffs;

        std::vector<std::pair<RowVec, double>> extra;
        std::vector<Vec> ref = sc.u_nom;
        if (cfg.mode == SimMode::DistributedAltruistic) {
          const SafetyWeights w =
              compute_weights(sc.eta, sc.models, x, sc.h_floor);
          const Relatedness r(w.w);
          for (int i = 0; i < n; ++i)
            extra.push_back(altruism_row(i, coeffs, sc.graph, r));
          opt.extra_rows = &extra;
          if (sc.alt_ref == AltruismReference::BaselineOptimum) {
            const QuadraticProgram p =
                assemble_centralized(sc.models, sc.graph, x, sc.u_nom);
            const QpSolution sol = solve_qp(p);
            if (sol.status != QpStatus::Optimal)
              throw RuntimeInfeasibleError(
                  t, -1, "baseline reference infeasible at t=" + std::to_string(t));
            const auto off = input_offsets(sc.models);
            for (int i = 0; i < n; ++i)
              ref[i] = sol.z.segment(off[i], sc.models[i].dynamics.input_dim);
          }
        }
        try {
          const ConsensusResult res = run_consensus_round(
              sc.models, sc.graph, x, ref, cs, opt);
          u = res.u;
          dis = res.disagreement;
          for (const auto& rec : res.log)
            trace.rounds.push_back({t, rec.round, rec.disagreement, rec.u});
        } catch (const LocalInfeasibleError& e) {
          throw RuntimeInfeasibleError(
              t, e.agent, std::string(e.what()) + " at t=" + std::to_string(t));
        }
        break;
      }
    }

    trace.t.push_back(t);
    trace.x.push_back(x);
    trace.u.push_back(u);
    std::vector<double> h_row, hp_row, psi_row;
    for (int i = 0; i < n; ++i) {
      h_row.push_back(sc.models[i].barrier.value(x[i]));
      hp_row.push_back(coeffs[i].h_plus);
      psi_row.push_back(eval_psi(coeffs[i], u));
    }
    trace.h.push_back(h_row);
    trace.h_plus.push_back(hp_row);
    trace.psi.push_back(psi_row);
    if (distributed) trace.disagreement.push_back(dis);
    if (u2min_applicable) {
      const double u1 =
          sc.models[0].dynamics.input_dim > 0 ? u[0](0) : 0.0;
      const UMinResult m = u_min_metric(coeffs[1], u1);
      trace.u2_min.push_back(m.value);
      trace.u2_min_lower_bound.push_back(m.lower_bound);
    }

    if (s < steps) {
      x = (cfg.integrator == IntegratorKind::RK4)
              ? step_rk4(sc.models, sc.graph, x, u, cfg.control_dt)
              : step_euler(sc.models, sc.graph, x, u, cfg.control_dt);
    }
  }
  return trace;
}

bool InvarianceReport::all_safe(double tol) const {
  for (const auto& a : agents)
    if (a.min_h < -tol) return false;
  return true;
}

InvarianceReport check_forward_invariance(const SimTrace& trace, double tol) {
  InvarianceReport rep;
  const int n = trace.agents();
  rep.agents.resize(n);
  for (int i = 0; i < n; ++i) {
    rep.agents[i].min_h = std::numeric_limits<double>::infinity();
    rep.agents[i].min_h_plus = std::numeric_limits<double>::infinity();
  }
  for (int s = 0; s < trace.steps(); ++s) {
    for (int i = 0; i < n; ++i) {
      rep.agents[i].min_h = std::min(rep.agents[i].min_h, trace.h[s][i]);
      rep.agents[i].min_h_plus =
          std::min(rep.agents[i].min_h_plus, trace.h_plus[s][i]);
      if (!rep.agents[i].first_violation && trace.h[s][i] < -tol)
        rep.agents[i].first_violation = trace.t[s];
    }
  }
  return rep;
}

namespace {

void put(std::ostream& os, double v, bool lead_comma = true) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  if (lead_comma) os << ',';
  os << buf;
}

}  // namespace

void write_trace_csv(const SimTrace& trace, std::ostream& os) {
  const int n = trace.agents();
  os << 't';
  for (int i = 1; i <= n; ++i) os << ",x_" << i;
  for (int i = 1; i <= n; ++i) os << ",u_" << i;
  for (int i = 1; i <= n; ++i) os << ",h_" << i;
  for (int i = 1; i <= n; ++i) os << ",hplus_" << i;
  for (int i = 1; i <= n; ++i) os << ",psi_" << i;
  if (trace.has_disagreement) os << ",disagreement";
  if (trace.has_u2_min) os << ",u2_min";
  os << '\n';
  for (int s = 0; s < trace.steps(); ++s) {
    put(os, trace.t[s], false);
    for (int i = 0; i < n; ++i) {
      if (trace.x[s][i].size() != 1)
        throw std::invalid_argument("csv traces need one-dimensional states");
      put(os, trace.x[s][i](0));
    }
    for (int i = 0; i < n; ++i)
      put(os, trace.u[s][i].size() > 0 ? trace.u[s][i](0) : 0.0);
    for (int i = 0; i < n; ++i) put(os, trace.h[s][i]);
    for (int i = 0; i < n; ++i) put(os, trace.h_plus[s][i]);
    for (int i = 0; i < n; ++i) put(os, trace.psi[s][i]);
    if (trace.has_disagreement) put(os, trace.disagreement[s]);
    if (trace.has_u2_min) put(os, trace.u2_min[s]);
    os << '\n';
  }
}

void write_rounds_csv(const SimTrace& trace, std::ostream& os) {
  const int n = trace.agents();
  os << "t,round,disagreement";
  for (int i = 1; i <= n; ++i) os << ",u_" << i;
  os << '\n';
  for (const auto& row : trace.rounds) {
    put(os, row.t, false);
    os << ',' << row.round;
    put(os, row.disagreement);
    for (int i = 0; i < n; ++i)
      put(os, row.u[i].size() > 0 ? row.u[i](0) : 0.0);
    os << '\n';
  }
}

}  // namespace ccbf
