#pragma once

#include <functional>
#include <map>
#include <vector>

#include "ccbf/dynamics.hpp"
#include "ccbf/topology.hpp"

namespace ccbf {

/// Scalar barrier h with first and second derivatives, plus the linear
/// class-K gains used by the safety conditions built on it:
///   alpha scales h inside the high-order candidate,
///   beta  scales the candidate in the coupled safety condition,
///   gamma scales h in the first-order tracking condition.
struct BarrierFunction {
  std::function<double(const Vec&)> value;
  std::function<RowVec(const Vec&)> grad;
  std::function<Mat(const Vec&)> hess;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.0;
};

/// h(x) = 0.5 * (r^2 - ||x||^2): stay within distance r of the origin.
BarrierFunction make_ball_barrier(double radius, double alpha, double beta,
                                  double gamma);

enum class ControllerKind { Zero, HalfSontag, Custom };

/// Virtual feedback used only inside the high-order candidate; it is a
/// design handle, not necessarily an executed input.
struct VirtualController {
  ControllerKind kind = ControllerKind::Zero;
  /// Coefficient under the square root of the half-Sontag gain.
  double sontag_eps = 0.1;
  /// Below this ||Lg h||^2 the half-Sontag gain is replaced by zero.
  double singular_tol = 1e-12;
  /// Used when kind == Custom. Must depend only on (x_self, x_in).
  std::function<Vec(const Vec&, const std::vector<Vec>&)> custom_eval;
};

/// One agent's model: plant, barrier, and virtual controller.
struct AgentModel {
  AgentDynamics dynamics;
  BarrierFunction barrier;
  VirtualController controller;
};

/// Smooth minimum-intervention gain lambda(a, b) = (-a + sqrt(a^2 +
/// eps*b^2)) / (2b). Undefined at b = 0; callers guard with singular_tol.
double half_sontag_lambda(double a, double b, double eps);

/// k = lambda(Lf h + alpha h, ||Lg h||^2) * (Lg h)^T, or zero when
/// ||Lg h||^2 falls below the controller's singular tolerance.
Vec eval_half_sontag(const AgentModel& m, const Vec& x_self,
                     const std::vector<Vec>& x_in);

/// Dispatches on the controller kind. Returns a vector of the agent's
/// input dimension (empty for uncontrolled agents).
Vec eval_controller(const AgentModel& m, const Vec& x_self,
                    const std::vector<Vec>& x_in);

/// High-order candidate h+ = Lf h + Lg h * k + alpha * h.
double eval_h_plus(const AgentModel& m, const Vec& x_self,
                   const std::vector<Vec>& x_in);

/// Linear pieces of one agent's coupled safety condition at a fixed state:
/// the condition reads sum over in-neighbors j of (a[j]^T u_j + b[j]) >= 0.
/// Keys are exactly the agent's in-neighbors; a[j] has the dimension of
/// agent j's input (possibly zero).
struct CcbfCoefficients {
  int agent = -1;
  std::map<int, Vec> a;
  std::map<int, double> b;
  double h_plus = 0.0;
};

/// Assembles agent i's coupled safety condition at the current state.
/// Derivatives of the composite term (Lg h * k) are analytic (zero) for the
/// Zero controller and central finite differences with step fd_step for
/// HalfSontag and Custom controllers. Needs states of i's two-hop
/// neighborhood (the full state vector is validated).
CcbfCoefficients assemble_coefficients(int i,
                                       const std::vector<AgentModel>& models,
                                       const CouplingGraph& g,
                                       const SystemState& x,
                                       double fd_step = 1e-6);

/// Convenience: coefficients for every agent at the same state.
std::vector<CcbfCoefficients> assemble_all(const std::vector<AgentModel>& models,
                                           const CouplingGraph& g,
                                           const SystemState& x,
                                           double fd_step = 1e-6);

/// psi = sum_j a[j]^T u_j + b[j] over the coefficient keys. `u` is the full
/// per-agent input list. psi >= 0 is the coupled safety condition.
double eval_psi(const CcbfCoefficients& c, const std::vector<Vec>& u);

/// First-order tracking condition row: returns (row, s) such that
/// row * u_i + s >= 0 encodes Lg h u_i + gamma h >= Lg h k.
std::pair<RowVec, double> first_order_condition_row(const AgentModel& m,
                                                    const Vec& x_self,
                                                    const std::vector<Vec>& x_in);

/// Independent check of the assembled condition: differentiates
/// t -> h_i+(x(t)) numerically along the flow under constant inputs and
/// returns (d/dt h+ + beta * h+), which eval_psi must reproduce.
double fd_psi_oracle(int i, const std::vector<AgentModel>& models,
                     const CouplingGraph& g, const SystemState& x,
                     const std::vector<Vec>& u, double dt);

}  // namespace ccbf
