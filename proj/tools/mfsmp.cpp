// mfsmp command-line tool: solve, check, simulate, the production-consumption
// example, and the acceptance self-test.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mfsmp/config.hpp"
#include "mfsmp/io.hpp"
#include "mfsmp/optimizer.hpp"
#include "mfsmp/prodcons_replica.hpp"
#include "mfsmp/smp.hpp"
#include "mfsmp/testing/acceptance.hpp"
#include "mfsmp/testing/oracles.hpp"

namespace fs = std::filesystem;
using mfsmp::ojson;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

/// Bad input (usage, parse, validation, size) maps to 2; runtime failures to 1.
int exit_code(const mfsmp::Error& e) {
  if (dynamic_cast<const mfsmp::DomainError*>(&e) || dynamic_cast<const mfsmp::SimulationError*>(&e)) {
    return kExitCheckFailed;
  }
  return kExitUsage;
}

struct Loaded {
  std::string path;
  std::string hash;
  mfsmp::ParsedProblem parsed;
  mfsmp::ScenarioTree tree;
};

Loaded load(const std::string& path) {
  const std::string text = mfsmp::read_file(path);
  mfsmp::ParsedProblem parsed = mfsmp::parse_problem(text);
  mfsmp::ScenarioTree tree = mfsmp::build_tree(parsed.spec.grid, parsed.spec.noise);
  return {path, mfsmp::fnv1a_hex(mfsmp::serialize_problem(parsed)), std::move(parsed), std::move(tree)};
}

ojson history_json(const mfsmp::OptimizeResult& r) {
  ojson h = ojson::array();
  for (const auto& e : r.history) h.push_back({{"J", e.J}, {"pg_norm", e.pg_norm}});
  return h;
}

/// t, E u_1..E u_r, E x_1..E x_n on the control levels.
std::string plot_data_csv(const mfsmp::ProblemSpec& spec, const mfsmp::ScenarioTree& tree,
                          const mfsmp::StateTrajectory& traj, const mfsmp::ControlProcess& u) {
  std::string out = "t";
  for (int e = 1; e <= spec.r; ++e) out += ",mean_u_" + std::to_string(e);
  for (int i = 1; i <= spec.n; ++i) out += ",mean_x_" + std::to_string(i);
  out += "\n";
  for (int k = 0; k <= spec.grid.N; ++k) {
    const mfsmp::VectorXd mu = mfsmp::expect(tree, u, k);
    out += mfsmp::format_double(spec.grid.time(k));
    for (int e = 0; e < spec.r; ++e) out += "," + mfsmp::format_double(mu(e));
    for (int i = 0; i < spec.n; ++i) out += "," + mfsmp::format_double(traj.mean[static_cast<std::size_t>(k)](i));
    out += "\n";
  }
  return out;
}

/// Writes `content` under `dir` and records the file in the manifest.
void emit(mfsmp::RunManifest& manifest, const fs::path& dir, const std::string& name, const std::string& content) {
  mfsmp::write_file(dir / name, content);
  manifest.outputs.push_back(name);
}

// ---------------------------------------------------------------------------

struct SolveArgs {
  std::string config;
  std::string out = "mfsmp_out";
  double tol = 1e-6;
  int max_iters = 500;
};

int cmd_solve(const SolveArgs& a) {
  const Loaded in = load(a.config);
  const auto& spec = in.parsed.spec;
  mfsmp::OptimizerOptions opts;
  opts.max_iters = a.max_iters;
  const mfsmp::OptimizeResult res = mfsmp::optimize(spec, in.tree, opts);
  const mfsmp::Evaluation ev = mfsmp::evaluate(spec, in.tree, res.u);
  const auto nec = mfsmp::necessary_check(spec, in.tree, ev.traj, ev.adj, res.u, a.tol);
  const auto suf = mfsmp::sufficiency_check(spec, in.tree, ev.traj, ev.adj, res.u, a.tol);
  const auto val = mfsmp::validate_spec(spec);

  mfsmp::RunManifest manifest;
  manifest.command = "solve";
  manifest.config_path = a.config;
  manifest.config_hash = in.hash;
  manifest.options = {{"tol", a.tol}, {"max_iters", a.max_iters},     {"step_init", opts.step_init},
                      {"armijo_c", opts.armijo_c}, {"shrink", opts.shrink}, {"grad_tol", opts.grad_tol},
                      {"stall_tol", opts.stall_tol}};
  const fs::path dir = a.out;
  ojson report = {{"config", a.config},
                  {"config_hash", in.hash},
                  {"direction", mfsmp::to_string(spec.direction)},
                  {"options", manifest.options},
                  {"J", res.J},
                  {"objective", mfsmp::native_objective(spec, res.J)},
                  {"iterations", res.iterations},
                  {"termination", res.reason},
                  {"history", history_json(res)},
                  {"checks", ojson::array({nec, suf, val})}};
  emit(manifest, dir, "report.json", mfsmp::json_text(report));
  emit(manifest, dir, "control.csv", mfsmp::control_csv(spec, in.tree, res.u));
  emit(manifest, dir, "trajectory.csv", mfsmp::trajectory_csv(spec, in.tree, ev.traj, res.u));
  emit(manifest, dir, "adjoint.csv", mfsmp::adjoint_csv(spec, in.tree, ev.adj));
  emit(manifest, dir, "plot_data.csv", plot_data_csv(spec, in.tree, ev.traj, res.u));
  manifest.outputs.push_back("manifest.json");
  mfsmp::write_file(dir / "manifest.json", mfsmp::json_text(manifest.to_json()));

  std::cout << "J = " << mfsmp::format_double(res.J) << " (" << mfsmp::to_string(spec.direction)
            << " objective " << mfsmp::format_double(mfsmp::native_objective(spec, res.J)) << ")\n"
            << "termination: " << res.reason << " after " << res.iterations << " iterations\n"
            << "necessary condition: " << (nec.pass ? "pass" : "FAIL") << "\n"
            << "sufficiency evidence: " << (suf.pass ? "pass" : "not established") << "\n"
            << "outputs written to " << dir.string() << "\n";
  return nec.pass ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------

/// FD gradient consistency on at most `limit` control coordinates.
mfsmp::CheckReport gradient_consistency(const mfsmp::ProblemSpec& spec, const mfsmp::ScenarioTree& tree,
                                        const mfsmp::ControlProcess& u, const mfsmp::ControlProcess& g,
                                        std::size_t limit = 200) {
  struct Coord {
    int k;
    std::size_t i;
    int e;
  };
  std::vector<Coord> coords;
  for (int k = 0; k <= spec.grid.N; ++k) {
    for (std::size_t i = 0; i < tree.level_size(k); ++i) {
      for (int e = 0; e < spec.r; ++e) coords.push_back({k, i, e});
    }
  }
  if (coords.size() > limit) {
    std::mt19937_64 rng(11);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(limit);
  }
  double num = 0.0, den = 1.0;
  const double step = 1e-5;
  for (const auto& c : coords) {
    mfsmp::ControlProcess up = u, down = u;
    up.at(c.k, c.i)(c.e) += step;
    down.at(c.k, c.i)(c.e) -= step;
    const auto ta = mfsmp::testing::cost_terms(spec, tree, up);
    const auto tb = mfsmp::testing::cost_terms(spec, tree, down);
    double diff = 0.0;
    for (std::size_t t = 0; t < ta.size(); ++t) diff += ta[t] - tb[t];
    const double fd = diff / (2.0 * step * tree.node(c.k, c.i).prob);
    num = std::max(num, std::abs(g.at(c.k, c.i)(c.e) - fd));
    den = std::max(den, std::abs(fd));
  }
  mfsmp::CheckReport rep("gradient_consistency");
  rep.add("max |g - fd| / max(|fd|, 1)", num / den, 1e-6);
  rep.note("central differences with step 1e-5 on " + std::to_string(coords.size()) + " coordinates");
  return rep;
}

mfsmp::CheckReport duality_report(const mfsmp::ProblemSpec& spec, const mfsmp::ScenarioTree& tree,
                                  const mfsmp::Evaluation& ev, const mfsmp::ControlProcess& u) {
  mfsmp::CheckReport rep("duality");
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss;
  for (int theta = 0; theta <= spec.grid.N; ++theta) {
    mfsmp::VariationalRun run{theta, mfsmp::VectorProcess(tree, theta, theta, mfsmp::VectorXd::Zero(spec.r)), 1.0};
    for (auto& v : run.dv.level(theta)) {
      for (int e = 0; e < spec.r; ++e) v(e) = gauss(rng);
    }
    const auto terms = mfsmp::duality_residual(spec, tree, ev.traj, u, ev.data, ev.adj, run);
    const double scale = std::max({1.0, std::abs(terms.terminal), std::abs(terms.running), std::abs(terms.control)});
    rep.add("|terminal - running - control| / scale, theta = " + std::to_string(theta), terms.residual / scale, 1e-10,
            theta);
  }
  return rep;
}

struct CheckArgs {
  std::string config;
  std::string control;
  double tol = 1e-6;
  std::string out;
};

int cmd_check(const CheckArgs& a) {
  const Loaded in = load(a.config);
  const auto& spec = in.parsed.spec;
  const mfsmp::ControlProcess u = mfsmp::read_control_csv(spec, in.tree, mfsmp::read_file(a.control));
  const mfsmp::Evaluation ev = mfsmp::evaluate(spec, in.tree, u);
  std::vector<mfsmp::CheckReport> reports{
      mfsmp::necessary_check(spec, in.tree, ev.traj, ev.adj, u, a.tol),
      mfsmp::sufficiency_check(spec, in.tree, ev.traj, ev.adj, u, a.tol),
      duality_report(spec, in.tree, ev, u),
      gradient_consistency(spec, in.tree, u, ev.grad),
  };
  bool pass = true;
  ojson arr = ojson::array();
  for (const auto& r : reports) {
    pass = pass && r.pass;
    arr.push_back(r);
  }
  ojson out = {{"config", a.config},
               {"config_hash", in.hash},
               {"control", a.control},
               {"feasible", mfsmp::is_feasible(spec, u)},
               {"J", ev.J},
               {"objective", mfsmp::native_objective(spec, ev.J)},
               {"pass", pass},
               {"reports", arr}};
  const std::string text = mfsmp::json_text(out);
  if (!a.out.empty()) mfsmp::write_file(a.out, text);
  std::cout << text;
  return pass ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string control;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  const Loaded in = load(a.config);
  const auto& spec = in.parsed.spec;
  const mfsmp::ControlProcess u = mfsmp::read_control_csv(spec, in.tree, mfsmp::read_file(a.control));
  const auto traj = mfsmp::simulate(spec, in.tree, u);
  const double J = mfsmp::cost(spec, in.tree, u, traj);
  const std::string csv = mfsmp::trajectory_csv(spec, in.tree, traj, u);
  if (a.out.empty()) {
    std::cout << csv;
    std::cerr << "J = " << mfsmp::format_double(J) << "\n";
    return kExitOk;
  }
  mfsmp::RunManifest manifest;
  manifest.command = "simulate";
  manifest.config_path = a.config;
  manifest.config_hash = in.hash;
  manifest.options = {{"control", a.control}};
  const fs::path dir = a.out;
  emit(manifest, dir, "trajectory.csv", csv);
  emit(manifest, dir, "summary.json",
       mfsmp::json_text({{"J", J},
                         {"objective", mfsmp::native_objective(spec, J)},
                         {"feasible", mfsmp::is_feasible(spec, u)}}));
  manifest.outputs.push_back("manifest.json");
  mfsmp::write_file(dir / "manifest.json", mfsmp::json_text(manifest.to_json()));
  std::cout << "J = " << mfsmp::format_double(J) << "\noutputs written to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ExampleArgs {
  double delta = 0.5;
  double h = 0.5;
  int N = 5;
  std::optional<double> depreciation;
  double volatility = 0.5;
  std::string plot_data;
  std::string out;
};

int cmd_example_prodcons(const ExampleArgs& a) {
  const mfsmp::ProdconsReplica rep{a.delta, a.h, a.N, 0.0};
  rep.validate();
  const auto cmp = mfsmp::compare_prodcons(rep, a.depreciation, a.volatility);
  const auto p = rep.p();
  const auto v = rep.v();
  std::cout << "replica (closed forms), delta = " << mfsmp::format_double(a.delta)
            << ", h = " << mfsmp::format_double(a.h) << ", N = " << a.N << "\n";
  for (int k = a.N + 1; k >= 0; --k) {
    std::cout << "  p(" << k << "h) = " << mfsmp::format_double(p[static_cast<std::size_t>(k)]);
    if (k <= a.N) {
      std::cout << "   q(" << k << "h) = 0   v(" << k << "h) = " << mfsmp::format_double(v[static_cast<std::size_t>(k)]);
    }
    std::cout << "\n";
  }
  std::cout << "\ncomparison with the general solver (depreciation = " << mfsmp::format_double(cmp.params.depreciation)
            << "):\n"
            << cmp.table();
  for (const auto& n : cmp.notes) std::cout << "note: " << n << "\n";

  const std::string plot = mfsmp::replica_plot_csv(rep);
  if (!a.plot_data.empty()) {
    mfsmp::write_file(a.plot_data, plot);
    std::cout << "plot data written to " << a.plot_data << "\n";
  }
  if (!a.out.empty()) {
    mfsmp::RunManifest manifest;
    manifest.command = "example prodcons";
    manifest.options = {{"delta", a.delta}, {"h", a.h}, {"N", a.N}, {"depreciation", cmp.params.depreciation},
                        {"volatility", a.volatility}};
    const fs::path dir = a.out;
    ojson replica = {{"p", p}, {"q", rep.q()}, {"v", v}};
    ojson doc = {{"replica", replica}, {"comparison", cmp.to_json()}};
    emit(manifest, dir, "prodcons.json", mfsmp::json_text(doc));
    emit(manifest, dir, "plot_data.csv", plot);
    manifest.outputs.push_back("manifest.json");
    mfsmp::write_file(dir / "manifest.json", mfsmp::json_text(manifest.to_json()));
    std::cout << "outputs written to " << dir.string() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SelftestArgs {
  std::string suite = "all";
  std::optional<int> trials;
  std::string inject_fault;
  std::string out;
};

int cmd_selftest(const SelftestArgs& a) {
  mfsmp::testing::SuiteOptions o;
  o.suite = a.suite;
  o.trials = a.trials;
  o.inject_fault = a.inject_fault;
  const auto results = mfsmp::testing::run_suite(o);
  std::cout << mfsmp::testing::summary_lines(results);
  if (!a.out.empty()) {
    const fs::path dir = a.out;
    mfsmp::write_file(dir / "selftest_report.json", mfsmp::json_text(mfsmp::testing::report_json(results, o)));
  }
  const bool ok = mfsmp::testing::all_pass(results);
  if (!ok) {
    std::cout << "failed criteria:";
    for (const auto& r : results) {
      if (!r.pass) std::cout << " " << r.id << " (" << r.key << ")";
    }
    std::cout << "\n";
  }
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field stochastic maximum principle on scenario trees"};
  app.require_subcommand(1);
  app.set_version_flag("--version", mfsmp::kToolVersion);

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "optimize a configured problem and write reports");
  s->add_option("config", solve.config, "problem configuration (JSON)")->required();
  s->add_option("--out", solve.out, "output directory")->capture_default_str();
  s->add_option("--tol", solve.tol, "tolerance of the optimality checks")->capture_default_str();
  s->add_option("--max-iters", solve.max_iters, "iteration limit")->capture_default_str()->check(CLI::NonNegativeNumber);

  CheckArgs check;
  auto* c = app.add_subcommand("check", "verify optimality conditions for a given control");
  c->add_option("config", check.config, "problem configuration (JSON)")->required();
  c->add_option("control", check.control, "control CSV (time,node_id,u_1..u_r)")->required();
  c->add_option("--tol", check.tol, "tolerance of the optimality checks")->capture_default_str();
  c->add_option("--out", check.out, "also write the JSON report to this file");

  SimulateArgs sim;
  auto* m = app.add_subcommand("simulate", "run the forward system for a given control");
  m->add_option("config", sim.config, "problem configuration (JSON)")->required();
  m->add_option("control", sim.control, "control CSV (time,node_id,u_1..u_r)")->required();
  m->add_option("--out", sim.out, "output directory (default: trajectory CSV on stdout)");

  auto* ex = app.add_subcommand("example", "built-in worked examples");
  ex->require_subcommand(1);
  ExampleArgs pc;
  auto* exp = ex->add_subcommand("prodcons", "production-consumption model: closed forms vs general solver");
  exp->set_help_flag("--help", "print this help message and exit");
  exp->add_option("--delta", pc.delta, "utility exponent in (0, 1)")->capture_default_str();
  exp->add_option("--h", pc.h, "time step")->capture_default_str();
  exp->add_option("--N", pc.N, "last control step")->capture_default_str();
  exp->add_option("--depreciation", pc.depreciation, "depreciation rate (default: delta)");
  exp->add_option("--volatility", pc.volatility, "diffusion factor")->capture_default_str();
  exp->add_option("--plot-data", pc.plot_data, "write t,v of the closed-form consumption path");
  exp->add_option("--out", pc.out, "output directory for the comparison");

  SelftestArgs st;
  auto* t = app.add_subcommand("selftest", "run the acceptance suite");
  t->add_option("--suite", st.suite, "all|noise|duality|gradient|operator|rates|optimizer|prodcons|determinism")
      ->capture_default_str();
  t->add_option("--trials", st.trials, "instance count for the randomized suites");
  t->add_option("--inject-fault", st.inject_fault, "deliberately break a component (grad-sign)");
  t->add_option("--out", st.out, "directory for selftest_report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_solve(solve);
    if (c->parsed()) return cmd_check(check);
    if (m->parsed()) return cmd_simulate(sim);
    if (exp->parsed()) return cmd_example_prodcons(pc);
    if (t->parsed()) return cmd_selftest(st);
  } catch (const mfsmp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitUsage;
}
