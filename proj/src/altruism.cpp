#include "ccbf/altruism.hpp"

#include <algorithm>
#include <cmath>

namespace ccbf {

double compute_weight(double eta, double h_value, double floor) {
  if (floor <= 0) throw std::invalid_argument("weight floor must be positive");
  if (eta < 0) throw std::invalid_argument("eta must be nonnegative");
  return eta / std::max(h_value, floor);
}

SafetyWeights compute_weights(const std::vector<double>& eta,
                              const std::vector<AgentModel>& models,
                              const SystemState& x, double floor) {
  if (eta.size() != models.size() || x.size() != models.size())
    throw std::invalid_argument("weights need one eta and state per agent");
  SafetyWeights w;
  w.eta = eta;
  w.floor = floor;
  for (size_t i = 0; i < models.size(); ++i)
    w.w.push_back(compute_weight(eta[i], models[i].barrier.value(x[i]), floor));
  return w;
}

double safety_cost(const CcbfCoefficients& coeffs_i, const Vec& u_i) {
  if (coeffs_i.agent < 0)
    throw std::invalid_argument("coefficients carry no owner index");
  const Vec& a_ii = coeffs_i.a.at(coeffs_i.agent);
  if (a_ii.size() != u_i.size())
    throw std::invalid_argument("input dimension mismatch in safety cost");
  return -a_ii.dot(u_i) - coeffs_i.b.at(coeffs_i.agent);
}

double safety_benefit(const CcbfCoefficients& coeffs_j, int donor,
                      const Vec& u_i) {
  auto it = coeffs_j.a.find(donor);
  if (it == coeffs_j.a.end())
    throw std::invalid_argument("agent " + std::to_string(donor + 1) +
                                " does not enter this safety condition");
  if (it->second.size() != u_i.size())
    throw std::invalid_argument("input dimension mismatch in safety benefit");
  return it->second.dot(u_i) + coeffs_j.b.at(donor);
}

std::pair<RowVec, double> altruism_row(int i,
                                       const std::vector<CcbfCoefficients>& coeffs,
                                       const CouplingGraph& g,
                                       const Relatedness& r) {
  const int mi = static_cast<int>(coeffs[i].a.at(i).size());
  RowVec row = RowVec::Zero(mi);
  double s = 0.0;
  for (int j : g.out_neighbors(i)) {
    const double rij = r(i, j);
    row += rij * coeffs[j].a.at(i).transpose();
    s += rij * coeffs[j].b.at(i);
  }
  return {row, s};
}

LocalSolution solve_local_altruistic(int i,
                                     const std::vector<AgentModel>& models,
                                     const CouplingGraph& g,
                                     const SystemState& x, const Vec& u_ref_i,
                                     const ConsensusState& cs,
                                     const Relatedness& r) {
  const auto coeffs = assemble_all(models, g, x);
  const auto extra = altruism_row(i, coeffs, g, r);
  return solve_local(i, models, g, x, u_ref_i, cs, &extra, &coeffs);
}

UMinResult u_min_metric(const CcbfCoefficients& coeffs_agent2, double u1_star) {
  if (coeffs_agent2.agent != 1)
    throw std::invalid_argument("metric is defined on agent 2's condition");
  if (!coeffs_agent2.a.count(0) || !coeffs_agent2.a.count(1))
    throw std::invalid_argument("metric needs both agents in the condition");
  if (coeffs_agent2.a.at(1).size() != 1)
    throw std::invalid_argument("metric needs a scalar input on agent 2");
  const double a22 = coeffs_agent2.a.at(1)(0);
  const double a21 = coeffs_agent2.a.at(0).size() > 0
                         ? coeffs_agent2.a.at(0)(0)
                         : 0.0;
  const double b21 = coeffs_agent2.b.at(0);
  const double b22 = coeffs_agent2.b.at(1);
  if (std::abs(a22) < 1e-12)
    throw DegenerateRowError("agent 2 input coefficient is numerically zero");
  UMinResult out;
  out.value = -(b22 + a21 * u1_star + b21) / a22;
  out.lower_bound = a22 > 0;
  return out;
}

}  // namespace ccbf
