#include "ccbf/scenario.hpp"

#include <json.hpp>

#include <cmath>
#include <set>
#include <sstream>

namespace ccbf {

using nlohmann::json;

ScenarioValidationError::ScenarioValidationError(std::vector<std::string> problems)
    : std::runtime_error([&problems] {
        std::string msg = "invalid scenario:";
        for (const auto& p : problems) msg += "\n  - " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

namespace {

class Collector {
 public:
  void add(const std::string& path, const std::string& what) {
    problems_.push_back(path + ": " + what);
  }
  void finish() {
    if (!problems_.empty())
      throw ScenarioValidationError(std::move(problems_));
  }
  bool clean() const { return problems_.empty(); }

 private:
  std::vector<std::string> problems_;
};

void reject_unknown_keys(const json& obj, const std::string& path,
                         const std::set<std::string>& allowed, Collector& errs) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) errs.add(path, "unknown key '" + it.key() + "'");
}

template <typename T>
bool fetch(const json& obj, const std::string& path, const std::string& key,
           T& out, Collector& errs, bool required = true) {
  if (!obj.contains(key)) {
    if (required) errs.add(path + "." + key, "missing");
    return false;
  }
  try {
    out = obj.at(key).get<T>();
    return true;
  } catch (const json::exception&) {
    errs.add(path + "." + key, "wrong type");
    return false;
  }
}

}  // namespace

ScenarioFile parse_scenario(const std::string& text) {
  json root;
  try {
    root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ScenarioParseError(std::string("parse error: ") + e.what());
  }
  if (!root.is_object()) throw ScenarioParseError("scenario must be an object");

  Collector errs;
  ScenarioFile f;

  reject_unknown_keys(root, "$",
                      {"schema_version", "agents", "graph", "dynamics",
                       "solver", "sim", "initial_state", "altruism", "output"},
                      errs);

  fetch(root, "$", "schema_version", f.schema_version, errs);
  if (root.contains("schema_version") && f.schema_version != 1)
    errs.add("$.schema_version", "unsupported version " +
                                     std::to_string(f.schema_version));

  // agents
  if (!root.contains("agents") || !root["agents"].is_array() ||
      root["agents"].empty()) {
    errs.add("$.agents", "must be a non-empty array");
  } else {
    int idx = 1;
    for (const auto& a : root["agents"]) {
      const std::string path = "$.agents[" + std::to_string(idx) + "]";
      ScenarioFile::Agent ag;
      if (!a.is_object()) {
        errs.add(path, "must be an object");
        ++idx;
        continue;
      }
      reject_unknown_keys(a, path,
                          {"state_dim", "input_dim", "desired_position",
                           "barrier", "alpha", "beta", "gamma", "controller",
                           "eta", "u_nom"},
                          errs);
      fetch(a, path, "state_dim", ag.state_dim, errs, false);
      fetch(a, path, "input_dim", ag.input_dim, errs);
      fetch(a, path, "desired_position", ag.desired_position, errs);
      fetch(a, path, "alpha", ag.alpha, errs);
      fetch(a, path, "beta", ag.beta, errs);
      fetch(a, path, "gamma", ag.gamma, errs);
      fetch(a, path, "controller", ag.controller, errs, false);
      fetch(a, path, "eta", ag.eta, errs, false);
      fetch(a, path, "u_nom", ag.u_nom, errs, false);
      if (a.contains("barrier")) {
        const auto& b = a["barrier"];
        if (!b.is_object()) {
          errs.add(path + ".barrier", "must be an object");
        } else {
          reject_unknown_keys(b, path + ".barrier", {"kind", "radius"}, errs);
          std::string kind;
          fetch(b, path + ".barrier", "kind", kind, errs);
          if (kind != "ball")
            errs.add(path + ".barrier.kind", "unsupported barrier '" + kind + "'");
          fetch(b, path + ".barrier", "radius", ag.barrier_radius, errs);
        }
      } else {
        errs.add(path + ".barrier", "missing");
      }

      if (ag.state_dim != 1) errs.add(path + ".state_dim", "must be 1");
      if (ag.input_dim != 0 && ag.input_dim != 1)
        errs.add(path + ".input_dim", "must be 0 or 1");
      if (ag.barrier_radius <= 0) errs.add(path + ".barrier.radius", "must be positive");
      if (ag.alpha <= 0) errs.add(path + ".alpha", "must be positive");
      if (ag.beta <= 0) errs.add(path + ".beta", "must be positive");
      if (ag.gamma < 0) errs.add(path + ".gamma", "must be nonnegative");
      if (ag.eta < 0) errs.add(path + ".eta", "must be nonnegative");
      if (ag.controller != "zero" && ag.controller != "half_sontag")
        errs.add(path + ".controller",
                 "unknown controller '" + ag.controller + "'");
      f.agents.push_back(ag);
      ++idx;
    }
  }
  const int n = static_cast<int>(f.agents.size());

  // graph
  if (!root.contains("graph")) {
    errs.add("$.graph", "missing");
  } else if (root["graph"].is_string()) {
    if (root["graph"].get<std::string>() != "complete")
      errs.add("$.graph", "string form must be \"complete\"");
    f.graph_complete = true;
  } else if (root["graph"].is_object()) {
    reject_unknown_keys(root["graph"], "$.graph", {"edges"}, errs);
    f.graph_complete = false;
    if (!root["graph"].contains("edges") || !root["graph"]["edges"].is_array()) {
      errs.add("$.graph.edges", "must be an array of [i, j] pairs");
    } else {
      for (const auto& e : root["graph"]["edges"]) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
            !e[1].is_number_integer()) {
          errs.add("$.graph.edges", "entries must be [i, j] integer pairs");
          continue;
        }
        f.graph_edges.emplace_back(e[0].get<int>(), e[1].get<int>());
      }
      for (const auto& [i, j] : f.graph_edges)
        if (i < 1 || i > n || j < 1 || j > n)
          errs.add("$.graph.edges",
                   "edge (" + std::to_string(i) + ", " + std::to_string(j) +
                       ") references a missing agent");
    }
  } else {
    errs.add("$.graph", "must be \"complete\" or an edge-list object");
  }

  // dynamics
  if (root.contains("dynamics") && root["dynamics"].is_object()) {
    reject_unknown_keys(root["dynamics"], "$.dynamics", {"kind", "xi"}, errs);
    fetch(root["dynamics"], "$.dynamics", "kind", f.dynamics_kind, errs);
    fetch(root["dynamics"], "$.dynamics", "xi", f.xi, errs);
    if (f.dynamics_kind != "single_integrator_formation")
      errs.add("$.dynamics.kind", "unknown kind '" + f.dynamics_kind + "'");
    if (f.xi <= 0) errs.add("$.dynamics.xi", "must be positive");
  } else {
    errs.add("$.dynamics", "missing");
  }

  // solver
  if (root.contains("solver")) {
    if (!root["solver"].is_object()) {
      errs.add("$.solver", "must be an object");
    } else {
      reject_unknown_keys(root["solver"], "$.solver",
                          {"k0", "inner_dt", "rounds"}, errs);
      fetch(root["solver"], "$.solver", "k0", f.k0, errs, false);
      fetch(root["solver"], "$.solver", "inner_dt", f.inner_dt, errs, false);
      fetch(root["solver"], "$.solver", "rounds", f.rounds, errs, false);
      if (f.k0 <= 0) errs.add("$.solver.k0", "must be positive");
      if (f.inner_dt <= 0) errs.add("$.solver.inner_dt", "must be positive");
      if (f.rounds < 1) errs.add("$.solver.rounds", "must be >= 1");
    }
  }

  // sim
  if (root.contains("sim") && root["sim"].is_object()) {
    reject_unknown_keys(root["sim"], "$.sim",
                        {"horizon", "control_dt", "integrator", "mode"}, errs);
    fetch(root["sim"], "$.sim", "horizon", f.horizon, errs);
    fetch(root["sim"], "$.sim", "control_dt", f.control_dt, errs);
    fetch(root["sim"], "$.sim", "integrator", f.integrator, errs, false);
    fetch(root["sim"], "$.sim", "mode", f.mode, errs);
    if (f.control_dt <= 0) errs.add("$.sim.control_dt", "must be positive");
    if (f.horizon < f.control_dt)
      errs.add("$.sim.horizon", "must cover at least one control step");
    if (f.integrator != "rk4" && f.integrator != "euler")
      errs.add("$.sim.integrator", "must be rk4 or euler");
    try {
      parse_mode(f.mode);
    } catch (const std::invalid_argument& e) {
      errs.add("$.sim.mode", e.what());
    }
  } else {
    errs.add("$.sim", "missing");
  }

  // initial state
  if (!root.contains("initial_state") || !root["initial_state"].is_array()) {
    errs.add("$.initial_state", "must be an array, one value per agent");
  } else {
    for (const auto& v : root["initial_state"]) {
      if (!v.is_number()) {
        errs.add("$.initial_state", "entries must be numbers");
        break;
      }
      f.initial_state.push_back(v.get<double>());
    }
    if (n > 0 && static_cast<int>(f.initial_state.size()) != n)
      errs.add("$.initial_state", "needs exactly " + std::to_string(n) +
                                      " entries");
  }

  // altruism
  if (root.contains("altruism")) {
    if (!root["altruism"].is_object()) {
      errs.add("$.altruism", "must be an object");
    } else {
      reject_unknown_keys(root["altruism"], "$.altruism",
                          {"h_floor", "reference"}, errs);
      fetch(root["altruism"], "$.altruism", "h_floor", f.h_floor, errs, false);
      fetch(root["altruism"], "$.altruism", "reference", f.altruism_reference,
            errs, false);
      if (f.h_floor <= 0) errs.add("$.altruism.h_floor", "must be positive");
      if (f.altruism_reference != "nominal" &&
          f.altruism_reference != "baseline_optimum")
        errs.add("$.altruism.reference",
                 "must be nominal or baseline_optimum");
    }
  }

  // output
  if (root.contains("output")) {
    if (!root["output"].is_object()) {
      errs.add("$.output", "must be an object");
    } else {
      reject_unknown_keys(root["output"], "$.output", {"trace", "rounds_trace"},
                          errs);
      std::string s;
      if (fetch(root["output"], "$.output", "trace", s, errs, false))
        f.trace_path = s;
      if (fetch(root["output"], "$.output", "rounds_trace", s, errs, false))
        f.rounds_trace_path = s;
    }
  }

  // cross checks that need a fully formed file
  if (errs.clean()) {
    if (!f.graph_complete) {
      std::set<std::pair<int, int>> seen;
      for (const auto& e : f.graph_edges)
        if (!seen.insert(e).second)
          errs.add("$.graph.edges", "duplicate edge (" +
                                        std::to_string(e.first) + ", " +
                                        std::to_string(e.second) + ")");
      for (int i = 1; i <= n; ++i)
        if (!seen.count({i, i}))
          errs.add("$.graph.edges",
                   "missing self-loop for agent " + std::to_string(i));
      for (const auto& [i, j] : f.graph_edges)
        if (!seen.count({j, i}))
          errs.add("$.graph.edges", "formation dynamics need a symmetric "
                                    "graph; edge (" +
                                        std::to_string(i) + ", " +
                                        std::to_string(j) + ") has no reverse");
    }
    const SimMode mode = parse_mode(f.mode);
    if (mode == SimMode::CcbfSingle) {
      int controlled = 0;
      for (const auto& a : f.agents) controlled += a.input_dim > 0 ? 1 : 0;
      if (controlled != 1)
        errs.add("$.sim.mode",
                 "ccbf_single needs exactly one controlled agent");
    }
    if (mode == SimMode::DistributedBase ||
        mode == SimMode::DistributedAltruistic) {
      for (size_t i = 0; i < f.agents.size(); ++i)
        if (f.agents[i].input_dim < 1)
          errs.add("$.agents[" + std::to_string(i + 1) + "].input_dim",
                   "distributed modes need every agent controlled");
    }
  }

  errs.finish();
  return f;
}

std::string serialize_scenario(const ScenarioFile& f) {
  json root;
  root["schema_version"] = f.schema_version;
  root["agents"] = json::array();
  for (const auto& a : f.agents) {
    json ja;
    ja["state_dim"] = a.state_dim;
    ja["input_dim"] = a.input_dim;
    ja["desired_position"] = a.desired_position;
    ja["barrier"] = {{"kind", "ball"}, {"radius", a.barrier_radius}};
    ja["alpha"] = a.alpha;
    ja["beta"] = a.beta;
    ja["gamma"] = a.gamma;
    ja["controller"] = a.controller;
    ja["eta"] = a.eta;
    ja["u_nom"] = a.u_nom;
    root["agents"].push_back(ja);
  }
  if (f.graph_complete) {
    root["graph"] = "complete";
  } else {
    json edges = json::array();
    for (const auto& [i, j] : f.graph_edges) edges.push_back({i, j});
    root["graph"] = {{"edges", edges}};
  }
  root["dynamics"] = {{"kind", f.dynamics_kind}, {"xi", f.xi}};
  root["solver"] = {{"k0", f.k0}, {"inner_dt", f.inner_dt}, {"rounds", f.rounds}};
  root["sim"] = {{"horizon", f.horizon},
                 {"control_dt", f.control_dt},
                 {"integrator", f.integrator},
                 {"mode", f.mode}};
  root["initial_state"] = f.initial_state;
  root["altruism"] = {{"h_floor", f.h_floor},
                      {"reference", f.altruism_reference}};
  if (f.trace_path || f.rounds_trace_path) {
    json out;
    if (f.trace_path) out["trace"] = *f.trace_path;
    if (f.rounds_trace_path) out["rounds_trace"] = *f.rounds_trace_path;
    root["output"] = out;
  }
  return root.dump(2) + "\n";
}

SimMode parse_mode(const std::string& name) {
  if (name == "no_intervention") return SimMode::NoIntervention;
  if (name == "ccbf_single") return SimMode::CcbfSingle;
  if (name == "distributed_base") return SimMode::DistributedBase;
  if (name == "distributed_altruistic") return SimMode::DistributedAltruistic;
  if (name == "centralized") return SimMode::Centralized;
  throw std::invalid_argument("unknown mode '" + name + "'");
}

std::string mode_name(SimMode mode) {
  switch (mode) {
    case SimMode::NoIntervention: return "no_intervention";
    case SimMode::CcbfSingle: return "ccbf_single";
    case SimMode::DistributedBase: return "distributed_base";
    case SimMode::DistributedAltruistic: return "distributed_altruistic";
    case SimMode::Centralized: return "centralized";
  }
  return "unknown";
}

std::pair<Scenario, SimConfig> build_scenario(const ScenarioFile& f) {
  const int n = static_cast<int>(f.agents.size());
  CouplingGraph graph = [&] {
    if (f.graph_complete) return CouplingGraph::complete(n);
    std::vector<std::pair<int, int>> edges;
    for (const auto& [i, j] : f.graph_edges) edges.emplace_back(i - 1, j - 1);
    return CouplingGraph(n, edges);
  }();

  FormationParams params;
  params.xi = f.xi;
  for (const auto& a : f.agents)
    params.desired_positions.push_back(a.desired_position);

  std::vector<AgentModel> models;
  SystemState x0;
  std::vector<Vec> u_nom;
  std::vector<double> eta;
  for (int i = 0; i < n; ++i) {
    const auto& a = f.agents[i];
    AgentModel m;
    m.dynamics = make_formation_agent(params, graph, i, a.input_dim > 0);
    m.barrier = make_ball_barrier(a.barrier_radius, a.alpha, a.beta, a.gamma);
    m.controller.kind = a.controller == "half_sontag"
                            ? ControllerKind::HalfSontag
                            : ControllerKind::Zero;
    models.push_back(std::move(m));
    Vec x(1);
    x(0) = f.initial_state[i];
    x0.push_back(x);
    u_nom.push_back(a.input_dim > 0 ? Vec::Constant(1, a.u_nom) : Vec(0));
    eta.push_back(a.eta);
  }

  Scenario sc{std::move(graph), std::move(models), std::move(x0),
              std::move(u_nom), f.k0,  f.inner_dt,
              std::move(eta),   f.h_floor,
              f.altruism_reference == "baseline_optimum"
                  ? AltruismReference::BaselineOptimum
                  : AltruismReference::Nominal};

  SimConfig cfg;
  cfg.horizon = f.horizon;
  cfg.control_dt = f.control_dt;
  cfg.integrator = f.integrator == "euler" ? IntegratorKind::Euler
                                           : IntegratorKind::RK4;
  cfg.mode = parse_mode(f.mode);
  cfg.rounds_per_step = f.rounds;
  return {std::move(sc), cfg};
}

}  // namespace ccbf
