#include "ccbf/barrier.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ccbf {

BarrierFunction make_ball_barrier(double radius, double alpha, double beta,
                                  double gamma) {
  if (radius <= 0) throw std::invalid_argument("radius must be positive");
  if (alpha <= 0 || beta <= 0)
    throw std::invalid_argument("alpha and beta must be positive");
  if (gamma < 0) throw std::invalid_argument("gamma must be nonnegative");
  BarrierFunction b;
  b.value = [radius](const Vec& x) {
    return 0.5 * (radius * radius - x.squaredNorm());
  };
  b.grad = [](const Vec& x) { return RowVec(-x.transpose()); };
  b.hess = [](const Vec& x) {
    return Mat(-Mat::Identity(x.size(), x.size()));
  };
  b.alpha = alpha;
  b.beta = beta;
  b.gamma = gamma;
  return b;
}

double half_sontag_lambda(double a, double b, double eps) {
  return (-a + std::sqrt(a * a + eps * b * b)) / (2.0 * b);
}

Vec eval_half_sontag(const AgentModel& m, const Vec& x_self,
                     const std::vector<Vec>& x_in) {
  if (m.dynamics.input_dim < 1)
    throw std::invalid_argument("half-Sontag needs at least one input");
  const RowVec grad = m.barrier.grad(x_self);
  const Vec f = m.dynamics.drift(x_self, x_in);
  const RowVec lg = grad * m.dynamics.input_map(x_self);
  const double a = grad.dot(f) + m.barrier.alpha * m.barrier.value(x_self);
  const double b = lg.squaredNorm();
  if (b < m.controller.singular_tol) return Vec::Zero(m.dynamics.input_dim);
  return half_sontag_lambda(a, b, m.controller.sontag_eps) * lg.transpose();
}

Vec eval_controller(const AgentModel& m, const Vec& x_self,
                    const std::vector<Vec>& x_in) {
  switch (m.controller.kind) {
    case ControllerKind::Zero:
      return Vec::Zero(m.dynamics.input_dim);
    case ControllerKind::HalfSontag:
      return eval_half_sontag(m, x_self, x_in);
    case ControllerKind::Custom:
      if (!m.controller.custom_eval)
        throw std::invalid_argument("custom controller has no evaluator");
      return m.controller.custom_eval(x_self, x_in);
  }
  return Vec::Zero(m.dynamics.input_dim);
}

double eval_h_plus(const AgentModel& m, const Vec& x_self,
                   const std::vector<Vec>& x_in) {
  const RowVec grad = m.barrier.grad(x_self);
  const Vec f = m.dynamics.drift(x_self, x_in);
  double hp = grad.dot(f) + m.barrier.alpha * m.barrier.value(x_self);
  if (m.dynamics.input_dim > 0) {
    const RowVec lg = grad * m.dynamics.input_map(x_self);
    hp += lg.dot(eval_controller(m, x_self, x_in));
  }
  return hp;
}

namespace {

// Lg h(x_i) * k(x_i, x_nbrs) as a scalar function of the in-neighborhood,
// re-evaluated from scratch so finite differencing sees every dependency.
double composite_term(const AgentModel& m, const Vec& x_self,
                      const std::vector<Vec>& x_in) {
  if (m.dynamics.input_dim == 0) return 0.0;
  const RowVec lg = m.barrier.grad(x_self) * m.dynamics.input_map(x_self);
  return lg.dot(eval_controller(m, x_self, x_in));
}

}  // namespace

CcbfCoefficients assemble_coefficients(int i,
                                       const std::vector<AgentModel>& models,
                                       const CouplingGraph& g,
                                       const SystemState& x, double fd_step) {
  if (static_cast<int>(models.size()) != g.size())
    throw std::invalid_argument("model count does not match graph size");
  if (static_cast<int>(x.size()) != g.size())
    throw std::invalid_argument("missing states for two-hop assembly");

  const AgentModel& mi = models[i];
  auto [xi_state, xi_in] = gather_in_states(g, i, x);
  const RowVec grad = mi.barrier.grad(xi_state);
  const Mat hess = mi.barrier.hess(xi_state);
  const Vec fi = mi.dynamics.drift(xi_state, xi_in);
  const std::vector<Mat> jacs = mi.dynamics.drift_jacobian(xi_state, xi_in);
  const double lf_h = grad.dot(fi);
  RowVec lg_h(mi.dynamics.input_dim);
  if (mi.dynamics.input_dim > 0)
    lg_h = grad * mi.dynamics.input_map(xi_state);
  else
    lg_h = RowVec(0);

  const double h_plus = eval_h_plus(mi, xi_state, xi_in);
  const bool zero_k = (mi.controller.kind == ControllerKind::Zero);

  CcbfCoefficients out;
  out.agent = i;
  out.h_plus = h_plus;

  const std::vector<int>& in_nbrs = g.in_neighbors(i);
  // slot of agent j's block in the jacobian list: self first, then others
  auto jac_of = [&](int j) -> const Mat& {
    if (j == i) return jacs[0];
    size_t slot = 1;
    for (int q : in_nbrs) {
      if (q == i) continue;
      if (q == j) return jacs[slot];
      ++slot;
    }
    throw std::logic_error("neighbor not found in jacobian blocks");
  };

  for (int j : in_nbrs) {
    // d(Lf h)/dx_j: the hessian term appears only for the self block
    RowVec dphi;
    if (j == i)
      dphi = fi.transpose() * hess + grad * jac_of(i);
    else
      dphi = grad * jac_of(j);

    // d(Lg h * k)/dx_j, central differences unless the controller is zero
    RowVec drho = RowVec::Zero(x[j].size());
    if (!zero_k && mi.dynamics.input_dim > 0) {
      for (int c = 0; c < x[j].size(); ++c) {
        SystemState xp = x, xm = x;
        xp[j](c) += fd_step;
        xm[j](c) -= fd_step;
        auto [sp, ip] = gather_in_states(g, i, xp);
        auto [sm, im] = gather_in_states(g, i, xm);
        drho(c) = (composite_term(mi, sp, ip) - composite_term(mi, sm, im)) /
                  (2 * fd_step);
      }
    }

    const RowVec row = dphi + drho;
    auto [xj_state, xj_in] = gather_in_states(g, j, x);
    const AgentModel& mj = models[j];
    const Vec fj = mj.dynamics.drift(xj_state, xj_in);

    Vec a_ij;
    if (mj.dynamics.input_dim > 0)
      a_ij = (row * mj.dynamics.input_map(xj_state)).transpose();
    else
      a_ij = Vec(0);
    double b_ij = row.dot(fj);

    if (j == i) {
      if (mi.dynamics.input_dim > 0)
        a_ij += mi.barrier.alpha * lg_h.transpose();
      b_ij += mi.barrier.alpha * lf_h + mi.barrier.beta * h_plus;
    }
    out.a[j] = a_ij;
    out.b[j] = b_ij;
  }
  return out;
}

std::vector<CcbfCoefficients> assemble_all(const std::vector<AgentModel>& models,
                                           const CouplingGraph& g,
                                           const SystemState& x,
                                           double fd_step) {
  std::vector<CcbfCoefficients> out;
  out.reserve(models.size());
  for (int i = 0; i < g.size(); ++i)
    out.push_back(assemble_coefficients(i, models, g, x, fd_step));
  return out;
}

double eval_psi(const CcbfCoefficients& c, const std::vector<Vec>& u) {
  double psi = 0.0;
  for (const auto& [j, a_j] : c.a) {
    if (j < 0 || j >= static_cast<int>(u.size()))
      throw std::invalid_argument("input list does not cover neighbor " +
                                  std::to_string(j + 1));
    if (u[j].size() != a_j.size())
      throw std::invalid_argument("input dimension mismatch for agent " +
                                  std::to_string(j + 1));
    psi += a_j.dot(u[j]) + c.b.at(j);
  }
  return psi;
}

std::pair<RowVec, double> first_order_condition_row(
    const AgentModel& m, const Vec& x_self, const std::vector<Vec>& x_in) {
  const RowVec grad = m.barrier.grad(x_self);
  RowVec row(m.dynamics.input_dim);
  double s = m.barrier.gamma * m.barrier.value(x_self);
  if (m.dynamics.input_dim > 0) {
    row = grad * m.dynamics.input_map(x_self);
    s -= row.dot(eval_controller(m, x_self, x_in));
  } else {
    row = RowVec(0);
  }
  return {row, s};
}

namespace {

// one classical RK4 step of the coupled system under held inputs
SystemState rk4_flow_step(const std::vector<AgentModel>& models,
                          const CouplingGraph& g, const SystemState& x,
                          const std::vector<Vec>& u, double dt) {
  auto deriv = [&](const SystemState& s) {
    SystemState d(s.size());
    for (int i = 0; i < g.size(); ++i) {
      auto [xs, xin] = gather_in_states(g, i, s);
      d[i] = eval_dynamics(models[i].dynamics, xs, xin, u[i]);
    }
    return d;
  };
  auto saxpy = [](const SystemState& s, const SystemState& d, double c) {
    SystemState r = s;
    for (size_t i = 0; i < s.size(); ++i) r[i] += c * d[i];
    return r;
  };
  SystemState k1 = deriv(x);
  SystemState k2 = deriv(saxpy(x, k1, dt / 2));
  SystemState k3 = deriv(saxpy(x, k2, dt / 2));
  SystemState k4 = deriv(saxpy(x, k3, dt));
  SystemState out = x;
  for (size_t i = 0; i < x.size(); ++i)
    out[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return out;
}

}  // namespace

double fd_psi_oracle(int i, const std::vector<AgentModel>& models,
                     const CouplingGraph& g, const SystemState& x,
                     const std::vector<Vec>& u, double dt) {
  if (dt <= 0) throw std::invalid_argument("dt must be positive");
  const SystemState xp = rk4_flow_step(models, g, x, u, dt);
  const SystemState xm = rk4_flow_step(models, g, x, u, -dt);
  auto hp_at = [&](const SystemState& s) {
    auto [xs, xin] = gather_in_states(g, i, s);
    return eval_h_plus(models[i], xs, xin);
  };
  const double hdot = (hp_at(xp) - hp_at(xm)) / (2 * dt);
  return hdot + models[i].barrier.beta * hp_at(x);
}

}  // namespace ccbf
