#include "ccbf/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <sstream>

#include "ccbf/scenario.hpp"

namespace ccbf {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitProperty = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunOverrides {
  std::string mode;        // empty = keep file setting
  std::string controller;  // empty = keep per-agent settings
};

ScenarioFile load_scenario_file(const std::string& path,
                                const RunOverrides& ov) {
  ScenarioFile f = parse_scenario(read_file(path));
  if (!ov.mode.empty() || !ov.controller.empty()) {
    if (!ov.mode.empty()) f.mode = ov.mode;
    if (!ov.controller.empty())
      for (auto& a : f.agents) a.controller = ov.controller;
    // overrides go through the full validator again
    f = parse_scenario(serialize_scenario(f));
  }
  return f;
}

std::string trace_name(const std::string& scenario_path, const ScenarioFile& f,
                       const RunOverrides& ov) {
  if (f.trace_path && ov.mode.empty() && ov.controller.empty())
    return *f.trace_path;
  std::string stem = fs::path(scenario_path).stem().string();
  if (!ov.mode.empty()) stem += "_" + ov.mode;
  if (!ov.controller.empty()) stem += "_" + ov.controller;
  return stem + "_trace.csv";
}

struct RunResult {
  SimTrace trace;
  InvarianceReport report;
  double seconds = 0.0;
  fs::path trace_file;
};

RunResult execute_run(const std::string& scenario_path, const RunOverrides& ov,
                      const fs::path& out_dir, std::ostream* log) {
  const ScenarioFile f = load_scenario_file(scenario_path, ov);
  auto [sc, cfg] = build_scenario(f);
  if (f.rounds_trace_path) cfg.record_rounds = true;

  const auto t0 = std::chrono::steady_clock::now();
  RunResult r;
  r.trace = run_scenario(cfg, sc);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                  .count();
  r.report = check_forward_invariance(r.trace, 1e-4);

  fs::create_directories(out_dir);
  r.trace_file = out_dir / trace_name(scenario_path, f, ov);
  {
    std::ofstream os(r.trace_file);
    if (!os) throw std::runtime_error("cannot write '" + r.trace_file.string() + "'");
    write_trace_csv(r.trace, os);
  }
  if (f.rounds_trace_path) {
    std::ofstream os(out_dir / *f.rounds_trace_path);
    write_rounds_csv(r.trace, os);
  }

  if (log) {
    *log << "scenario: " << scenario_path << "\n"
         << "mode: " << (ov.mode.empty() ? f.mode : ov.mode) << ", steps: "
         << r.trace.steps() << ", runtime: " << r.seconds << " s\n";
    for (size_t i = 0; i < r.report.agents.size(); ++i) {
      const auto& a = r.report.agents[i];
      *log << "agent " << i + 1 << ": min h = " << a.min_h
           << ", min h+ = " << a.min_h_plus;
      if (a.first_violation)
        *log << ", first violation at t = " << *a.first_violation;
      *log << "\n";
    }
    *log << "trace: " << r.trace_file.string() << "\n";
  }
  return r;
}

// --- csv column extraction for compare ----------------------------------

struct CsvColumn {
  std::vector<double> t;
  std::vector<double> value;
};

CsvColumn read_csv_column(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("'" + path + "' is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  int t_idx = -1, v_idx = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "t") t_idx = static_cast<int>(i);
    if (header[i] == name) v_idx = static_cast<int>(i);
  }
  if (t_idx < 0) throw std::runtime_error("'" + path + "' has no t column");
  if (v_idx < 0)
    throw std::runtime_error("'" + path + "' has no column '" + name + "'");
  CsvColumn col;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int idx = 0;
    double tv = 0, vv = 0;
    while (std::getline(ss, cell, ',')) {
      if (idx == t_idx) tv = std::stod(cell);
      if (idx == v_idx) vv = std::stod(cell);
      ++idx;
    }
    col.t.push_back(tv);
    col.value.push_back(vv);
  }
  return col;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// --- verify property suite ----------------------------------------------

struct PropertyLog {
  std::ostream& out;
  bool all_passed = true;

  void record(const std::string& name, bool pass, const std::string& detail) {
    out << (pass ? "PASS " : "FAIL ") << name;
    if (!detail.empty()) out << ": " << detail;
    out << "\n";
    all_passed = all_passed && pass;
  }
};

SystemState random_state(const std::vector<AgentModel>& models,
                         std::mt19937& rng) {
  // states drawn inside each agent's safe ball, away from the origin edge
  SystemState x;
  for (const auto& m : models) {
    std::uniform_real_distribution<double> d(-0.85, 0.85);
    Vec xi(m.dynamics.state_dim);
    // scale by the barrier radius recovered from h(0) = r^2 / 2
    const double r = std::sqrt(2.0 * m.barrier.value(Vec::Zero(m.dynamics.state_dim)));
    for (int k = 0; k < xi.size(); ++k) xi(k) = d(rng) * r;
    x.push_back(xi);
  }
  return x;
}

std::vector<Vec> random_inputs(const std::vector<AgentModel>& models,
                               std::mt19937& rng) {
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  std::vector<Vec> u;
  for (const auto& m : models) {
    Vec ui(m.dynamics.input_dim);
    for (int k = 0; k < ui.size(); ++k) ui(k) = d(rng);
    u.push_back(ui);
  }
  return u;
}

void verify_scenario(const std::string& path, PropertyLog& log) {
  const ScenarioFile f = load_scenario_file(path, {});
  auto [sc, cfg] = build_scenario(f);
  const int n = sc.graph.size();
  std::mt19937 rng(12345);

  {  // barrier derivative consistency
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const SystemState x = random_state(sc.models, rng);
      for (int i = 0; i < n; ++i) {
        const auto& b = sc.models[i].barrier;
        const double h = 1e-5;
        for (int c = 0; c < x[i].size(); ++c) {
          Vec xp = x[i], xm = x[i];
          xp(c) += h;
          xm(c) -= h;
          const double fd = (b.value(xp) - b.value(xm)) / (2 * h);
          worst = std::max(worst, std::abs(fd - b.grad(x[i])(c)) /
                                      (1.0 + std::abs(b.grad(x[i])(c))));
          const RowVec gd = (b.grad(xp) - b.grad(xm)) / (2 * h);
          for (int rr = 0; rr < gd.size(); ++rr)
            worst = std::max(worst, std::abs(gd(rr) - b.hess(x[i])(rr, c)) /
                                        (1.0 + std::abs(b.hess(x[i])(rr, c))));
        }
      }
    }
    log.record("barrier-derivative-consistency", worst <= 1e-4,
               "max relative error " + fmt(worst));
  }

  {  // drift jacobian against finite differences
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const SystemState x = random_state(sc.models, rng);
      for (int i = 0; i < n; ++i) {
        auto [xs, xin] = gather_in_states(sc.graph, i, x);
        worst = std::max(worst,
                         check_jacobian(sc.models[i].dynamics, xs, xin, 1e-6));
      }
    }
    log.record("drift-jacobian-consistency", worst <= 1e-4,
               "max relative error " + fmt(worst));
  }

  {  // assembled condition against the flow oracle
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const SystemState x = random_state(sc.models, rng);
      const std::vector<Vec> u = random_inputs(sc.models, rng);
      for (int i = 0; i < n; ++i) {
        const auto c = assemble_coefficients(i, sc.models, sc.graph, x);
        const double psi = eval_psi(c, u);
        const double oracle = fd_psi_oracle(i, sc.models, sc.graph, x, u, 1e-6);
        worst = std::max(worst, std::abs(psi - oracle) / (1.0 + std::abs(psi)));
      }
    }
    log.record("psi-flow-oracle", worst <= 1e-3,
               "max relative error " + fmt(worst));
  }

  const SimTrace trace = run_scenario(cfg, sc);
  const InvarianceReport rep = check_forward_invariance(trace, 1e-4);
  {
    std::ostringstream d;
    for (size_t i = 0; i < rep.agents.size(); ++i) {
      d << "min h_" << i + 1 << " = " << rep.agents[i].min_h;
      if (i + 1 < rep.agents.size()) d << ", ";
    }
    log.record("forward-invariance", rep.all_safe(1e-4), d.str());
  }

  if (cfg.mode == SimMode::DistributedBase) {
    // static agreement with the centralized optimum at the initial state
    ConsensusState cs = ConsensusState::init(sc.graph, sc.k0, sc.inner_dt);
    ConsensusOptions opt;
    opt.rounds = 20000;
    opt.exit_tol = 1e-10;
    const ConsensusResult res =
        run_consensus_round(sc.models, sc.graph, sc.x0, sc.u_nom, cs, opt);
    const QuadraticProgram p =
        assemble_centralized(sc.models, sc.graph, sc.x0, sc.u_nom);
    const QpSolution sol = solve_qp(p);
    double diff = 0.0;
    const auto off = input_offsets(sc.models);
    for (int i = 0; i < n; ++i)
      diff = std::max(diff, (res.u[i] - sol.z.segment(off[i], res.u[i].size()))
                                .cwiseAbs()
                                .maxCoeff());
    log.record("consensus-centralized-agreement", diff <= 1e-3,
               "input gap " + fmt(diff));
  }

  if (cfg.mode == SimMode::DistributedBase ||
      cfg.mode == SimMode::DistributedAltruistic) {
    // every inner round must satisfy the coupled conditions
    ConsensusState cs = ConsensusState::init(sc.graph, sc.k0, sc.inner_dt);
    ConsensusOptions opt;
    opt.rounds = 500;
    opt.exit_tol = 1e-10;
    opt.record_rounds = true;
    const auto coeffs = assemble_all(sc.models, sc.graph, sc.x0);
    opt.coeffs = &coeffs;
    std::vector<std::pair<RowVec, double>> extra;
    if (cfg.mode == SimMode::DistributedAltruistic) {
      const SafetyWeights w = compute_weights(sc.eta, sc.models, sc.x0, sc.h_floor);
      const Relatedness r(w.w);
      for (int i = 0; i < n; ++i)
        extra.push_back(altruism_row(i, coeffs, sc.graph, r));
      opt.extra_rows = &extra;
    }
    const ConsensusResult res =
        run_consensus_round(sc.models, sc.graph, sc.x0, sc.u_nom, cs, opt);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& rec : res.log)
      for (int i = 0; i < n; ++i)
        worst = std::min(worst, eval_psi(coeffs[i], rec.u));
    log.record("per-round-coupled-safety", worst >= -1e-6,
               "min psi over rounds " + fmt(worst));
  }
}

// --- repro-all -----------------------------------------------------------

struct ReproReport {
  std::string text;
  bool passed = true;
};

void check(ReproReport& r, const std::string& name, bool ok,
           const std::string& detail) {
  r.text += std::string(ok ? "PASS " : "FAIL ") + name + ": " + detail + "\n";
  r.passed = r.passed && ok;
}

ReproReport repro_fig1(const fs::path& dir, const fs::path& out) {
  ReproReport rep;
  rep.text = "[fig1] single enforcer vs no intervention\n";
  const std::string path = (dir / "fig1.scenario").string();
  const RunResult guarded = execute_run(path, {}, out, nullptr);
  const double min_h2 = guarded.report.agents[1].min_h;
  check(rep, "fig1-enforced-safety", min_h2 >= -1e-4,
        "min h_2 = " + fmt(min_h2));
  check(rep, "fig1-runtime", guarded.seconds < 5.0,
        fmt(guarded.seconds) + " s");

  RunOverrides ov;
  ov.mode = "no_intervention";
  const RunResult free_run = execute_run(path, ov, out, nullptr);
  const auto& viol = free_run.report.agents[1].first_violation;
  check(rep, "fig1-counterfactual-violation", viol.has_value(),
        viol ? "agent 2 crosses the boundary at t = " + fmt(*viol)
             : "no violation found");
  return rep;
}

ReproReport repro_fig2(const fs::path& dir, const fs::path& out) {
  ReproReport rep;
  rep.text = "[fig2] distributed filter, controller comparison\n";
  const std::string path = (dir / "fig2.scenario").string();
  const auto t0 = std::chrono::steady_clock::now();
  RunOverrides zero_ov;
  zero_ov.controller = "zero";
  const RunResult rz = execute_run(path, zero_ov, out, nullptr);
  RunOverrides hs_ov;
  hs_ov.controller = "half_sontag";
  const RunResult rh = execute_run(path, hs_ov, out, nullptr);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  bool safe = rz.report.all_safe(1e-4) && rh.report.all_safe(1e-4);
  check(rep, "fig2-safety-both-controllers", safe,
        "min h (zero) = " + fmt(std::min(rz.report.agents[0].min_h,
                                         rz.report.agents[1].min_h)) +
            ", min h (half-Sontag) = " +
            fmt(std::min(rh.report.agents[0].min_h, rh.report.agents[1].min_h)));

  // boundary gap r - |x(T)|, with r recovered from h = (r^2 - x^2) / 2
  auto final_gap = [](const RunResult& r, int i) {
    const double x = r.trace.x.back()[i](0);
    const double h = r.trace.h.back()[i];
    return std::sqrt(2.0 * h + x * x) - std::abs(x);
  };
  bool gap_ok = true;
  std::string gap_txt;
  for (int i = 0; i < 2; ++i) {
    const double gz = final_gap(rz, i);
    const double gh = final_gap(rh, i);
    gap_ok = gap_ok && (gz - gh >= 1e-3);
    gap_txt += "agent " + std::to_string(i + 1) + ": gap(zero) = " + fmt(gz) +
               ", gap(half-Sontag) = " + fmt(gh) + "  ";
  }
  check(rep, "fig2-conservatism-ordering", gap_ok, gap_txt);
  check(rep, "fig2-runtime", secs < 30.0, fmt(secs) + " s");
  return rep;
}

ReproReport repro_fig3(const fs::path& dir, const fs::path& out) {
  ReproReport rep;
  rep.text = "[fig3] altruistic vs baseline prioritization\n";
  const std::string path = (dir / "fig3.scenario").string();
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult alt = execute_run(path, {}, out, nullptr);
  RunOverrides base_ov;
  base_ov.mode = "distributed_base";
  const RunResult base = execute_run(path, base_ov, out, nullptr);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  bool safe = alt.report.all_safe(1e-4) && base.report.all_safe(1e-4);
  check(rep, "fig3-safety-both-runs", safe,
        "min h (altruistic) = " + fmt(std::min(alt.report.agents[0].min_h,
                                               alt.report.agents[1].min_h)) +
            ", min h (baseline) = " +
            fmt(std::min(base.report.agents[0].min_h,
                         base.report.agents[1].min_h)));

  // the bias toward agent 2 must buy it margin
  check(rep, "fig3-priority-margin",
        alt.report.agents[1].min_h >= base.report.agents[1].min_h - 1e-9,
        "agent 2 min h: altruistic = " + fmt(alt.report.agents[1].min_h) +
            ", baseline = " + fmt(base.report.agents[1].min_h));

  // behavior difference concentrated away from the endpoints
  const int steps = std::min(alt.trace.steps(), base.trace.steps());
  double mid_diff = 0.0;
  for (int s = steps / 3; s < 2 * steps / 3; ++s)
    mid_diff = std::max(mid_diff,
                        std::abs(alt.trace.u2_min[s] - base.trace.u2_min[s]));
  check(rep, "fig3-midrun-difference", mid_diff > 1e-3,
        "max |u2_min difference| in middle third = " + fmt(mid_diff));

  // difference series, the figure's companion data
  const fs::path diff_file = out / "fig3_u2min_diff.csv";
  std::ofstream os(diff_file);
  os << "t,diff\n";
  for (int s = 0; s < steps; ++s)
    os << alt.trace.t[s] << ',' << alt.trace.u2_min[s] - base.trace.u2_min[s]
       << '\n';
  rep.text += "     difference series: " + diff_file.string() + "\n";
  check(rep, "fig3-runtime", secs < 60.0, fmt(secs) + " s");
  return rep;
}

int env_threads() {
  const char* v = std::getenv("CCBF_SIM_THREADS");
  if (!v) return 3;
  const int t = std::atoi(v);
  return t >= 1 ? t : 1;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err) {
  CLI::App app{"collaborative safety filter simulator"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir = "out";
  RunOverrides overrides;
  auto* run = app.add_subcommand("run", "run one scenario and write its trace");
  run->add_option("scenario", scenario_path, "scenario file")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--mode", overrides.mode, "override the sim mode");
  run->add_option("--controller", overrides.controller,
                  "override every agent's virtual controller");

  std::string cmp_a, cmp_b, metric = "u2_min", cmp_out;
  auto* cmp = app.add_subcommand("compare",
                                 "difference of one metric between two traces");
  cmp->add_option("runA", cmp_a, "first trace csv")->required();
  cmp->add_option("runB", cmp_b, "second trace csv")->required();
  cmp->add_option("--metric", metric, "column to compare");
  cmp->add_option("--out", cmp_out, "difference csv path");

  std::string verify_path;
  auto* ver = app.add_subcommand("verify", "run the property suite on a scenario");
  ver->add_option("scenario", verify_path, "scenario file")->required();

  std::string scenario_dir = "scenarios";
  auto* repro = app.add_subcommand("repro-all",
                                   "run the bundled experiments and their checks");
  repro->add_option("--scenario-dir", scenario_dir, "bundled scenario directory");
  repro->add_option("--out", out_dir, "output directory");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg;
    const int code = app.exit(e, msg, msg);
    if (code == 0) {
      out << msg.str();
      return kExitOk;
    }
    err << "error: usage: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (run->parsed()) {
      execute_run(scenario_path, overrides, out_dir, &out);
      return kExitOk;
    }

    if (cmp->parsed()) {
      const CsvColumn a = read_csv_column(cmp_a, metric);
      const CsvColumn b = read_csv_column(cmp_b, metric);
      if (a.t.size() != b.t.size())
        throw std::runtime_error("traces have different lengths");
      for (size_t s = 0; s < a.t.size(); ++s)
        if (std::abs(a.t[s] - b.t[s]) > 1e-9)
          throw std::runtime_error("traces have different time grids");
      const std::string out_path =
          cmp_out.empty() ? "compare_" + metric + ".csv" : cmp_out;
      std::ofstream os(out_path);
      if (!os) throw std::runtime_error("cannot write '" + out_path + "'");
      os << "t,diff\n";
      double dmax = -std::numeric_limits<double>::infinity();
      double dmin = std::numeric_limits<double>::infinity();
      for (size_t s = 0; s < a.t.size(); ++s) {
        const double d = a.value[s] - b.value[s];
        dmax = std::max(dmax, d);
        dmin = std::min(dmin, d);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", a.t[s], d);
        os << buf;
      }
      out << "rows: " << a.t.size() << ", max diff: " << dmax
          << ", min diff: " << dmin << "\n"
          << "difference series: " << out_path << "\n";
      return kExitOk;
    }

    if (ver->parsed()) {
      PropertyLog log{out};
      verify_scenario(verify_path, log);
      return log.all_passed ? kExitOk : kExitProperty;
    }

    if (repro->parsed()) {
      const fs::path dir(scenario_dir), outp(out_dir);
      fs::create_directories(outp);
      const int threads = env_threads();
      std::vector<std::function<ReproReport()>> jobs = {
          [&] { return repro_fig1(dir, outp); },
          [&] { return repro_fig2(dir, outp); },
          [&] { return repro_fig3(dir, outp); },
      };
      std::vector<ReproReport> reports(jobs.size());
      if (threads > 1) {
        std::vector<std::future<ReproReport>> futs;
        for (auto& j : jobs)
          futs.push_back(std::async(std::launch::async, j));
        for (size_t i = 0; i < futs.size(); ++i) reports[i] = futs[i].get();
      } else {
        for (size_t i = 0; i < jobs.size(); ++i) reports[i] = jobs[i]();
      }
      bool all = true;
      for (const auto& r : reports) {
        out << r.text;
        all = all && r.passed;
      }
      out << (all ? "all experiments replicated\n"
                  : "some experiment checks failed\n");
      return all ? kExitOk : kExitProperty;
    }
  } catch (const ScenarioParseError& e) {
    err << "error: validation: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ScenarioValidationError& e) {
    err << "error: validation: " << e.what() << "\n";
    return kExitValidation;
  } catch (const RuntimeInfeasibleError& e) {
    err << "error: infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    err << "error: runtime: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace ccbf
