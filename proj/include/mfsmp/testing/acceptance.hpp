#pragma once

// Acceptance suite shared by the test binary and `mfsmp selftest`.
// Every criterion is deterministic given the seed; runtimes are measured
// separately and kept out of the serialized report so that two runs produce
// identical bytes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfsmp/adjoint.hpp"
#include "mfsmp/io.hpp"
#include "mfsmp/optimizer.hpp"
#include "mfsmp/prodcons_replica.hpp"
#include "mfsmp/smp.hpp"
#include "mfsmp/testing/instances.hpp"
#include "mfsmp/testing/oracles.hpp"

namespace mfsmp::testing {

struct SuiteOptions {
  std::string suite = "all";  // all | noise | duality | gradient | operator | rates | optimizer | prodcons | determinism
  std::optional<int> trials;  // overrides the instance count of duality/gradient/rates/optimizer
  std::string inject_fault;   // "" or "grad-sign"
  std::uint64_t seed = 20240611;
};

struct CriterionResult {
  int id = 0;
  std::string key;
  std::string title;
  bool pass = true;
  double seconds = 0.0;
  double time_limit = 0.0;
  std::string summary;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures.push_back(what);
    }
  }
};

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ---------------------------------------------------------------------------

inline void criterion_noise(CriterionResult& res, const SuiteOptions&) {
  double worst = 0.0;
  int models = 0;
  for (int d = 1; d <= 3; ++d) {
    for (double h : {0.1, 0.25, 0.5, 1.0, 2.0}) {
      std::vector<NoiseModel> laws{NoiseModel::binary(d, h), NoiseModel::trinomial(d, h),
                                   NoiseModel::trinomial(d, h, 0.25)};
      for (const auto& law : laws) {
        const CheckReport rep = validate_noise(law, 1e-14);
        ++models;
        worst = std::max(worst, rep.max_value());
        res.require(rep.pass, law.kind + " d=" + std::to_string(d) + " h=" + sci(h) + ": " +
                                  (rep.worst() ? rep.worst()->label : std::string("?")));
      }
    }
  }
  res.metrics["models"] = models;
  res.metrics["max_residual"] = worst;
  res.summary = std::to_string(models) + " laws, max moment residual " + sci(worst) + " (tol 1e-14)";
}

inline VariationalRun random_run(Rng& rng, const Instance& in) {
  const int theta = uniform_int(rng, 0, in.spec.grid.N);
  VariationalRun run{theta, VectorProcess(in.tree, theta, theta, VectorXd::Zero(in.spec.r)), 1.0};
  for (auto& v : run.dv.level(theta)) v = random_vector(rng, in.spec.r, 1.0);
  return run;
}

inline void criterion_duality(CriterionResult& res, const SuiteOptions& o) {
  const int trials = o.trials.value_or(50);
  Rng rng(o.seed + 2);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Instance in = random_instance(rng, t);
    const VariationalRun run = random_run(rng, in);
    const DualityTerms terms = duality_residual(in.spec, in.tree, in.u, run);
    worst = std::max(worst, terms.residual);
    res.require(terms.residual <= 1e-10, "instance " + std::to_string(t) + " (" + in.family +
                                             "): residual " + sci(terms.residual));
  }
  res.metrics["instances"] = trials;
  res.metrics["max_residual"] = worst;
  res.summary = std::to_string(trials) + " instances, max |duality residual| " + sci(worst) + " (tol 1e-10)";
}

inline void criterion_gradient(CriterionResult& res, const SuiteOptions& o) {
  const int trials = o.trials.value_or(20);
  Rng rng(o.seed + 3);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Instance in = random_instance(rng, t);
    ControlProcess g = smp_gradient(in.spec, in.tree, in.u);
    if (o.inject_fault == "grad-sign") {
      for (int k = 0; k <= in.spec.grid.N; ++k) {
        for (auto& v : g.level(k)) v = -v;
      }
    }
    const ControlProcess fd = fd_gradient(in.spec, in.tree, in.u, 1e-5);
    const double err = relative_gap(g, fd);
    worst = std::max(worst, err);
    res.require(err <= 1e-6, "gradient-consistency failure on instance " + std::to_string(t) + " (" + in.family +
                                 "): relative error " + sci(err));
  }
  res.metrics["instances"] = trials;
  res.metrics["max_relative_error"] = worst;
  if (!o.inject_fault.empty()) res.metrics["injected_fault"] = o.inject_fault;
  res.summary = std::to_string(trials) + " instances, max relative error vs central differences " + sci(worst) +
                " (tol 1e-6)";
}

inline void criterion_operator(CriterionResult& res, const SuiteOptions& o) {
  Rng rng(o.seed + 4);
  double semigroup = 0.0, rep = 0.0, closed = 0.0;
  int cases = 0;
  for (int t = 0; t < 12; ++t) {
    const int d = uniform_int(rng, 1, 2);
    const int n = uniform_int(rng, 1, 3);
    const auto nc = random_noise(rng, d, uniform(rng, 0.2, 1.0), 4, 400);
    const ScenarioTree tree = build_tree({0.0, nc.noise.h, nc.N}, nc.noise);
    const bool mean_field = t % 2 == 0;
    const LinearBsdeData data = random_linear_data(rng, tree, n, mean_field);
    semigroup = std::max(semigroup, semigroup_residual(data, tree, rng));
    const VectorXd z0 = random_vector(rng, n, 1.0);
    rep = std::max(rep, max_abs_diff(forward_rep(data, tree, z0), direct_linear_forward(data, tree, z0)));
    if (!mean_field) {
      const AdjointSolution adj = solve_backward(data, tree);
      const ClosedFormP cf = closed_form_p(data, tree);
      closed = std::max(closed, max_abs_diff(cf.p, adj.p));
    }
    ++cases;
  }
  res.require(semigroup <= 1e-12, "semigroup residual " + sci(semigroup));
  res.require(rep <= 1e-12, "representation formula vs direct recursion " + sci(rep));
  res.require(closed <= 1e-10, "closed-form p vs backward solve " + sci(closed));
  res.metrics["cases"] = cases;
  res.metrics["semigroup_residual"] = semigroup;
  res.metrics["representation_residual"] = rep;
  res.metrics["closed_form_residual"] = closed;
  res.summary = "semigroup " + sci(semigroup) + ", representation " + sci(rep) + ", closed-form p " + sci(closed);
}

inline void criterion_rates(CriterionResult& res, const SuiteOptions& o) {
  const int trials = o.trials.value_or(5);
  Rng rng(o.seed + 5);
  double worst_decrease = 0.0, worst_lq = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Instance sm = random_smooth(rng, uniform_int(rng, 1, 3), uniform_int(rng, 1, 2), uniform_int(rng, 1, 2), 3);
    const RateResult r = rate_check(sm.spec, sm.tree, sm.u, random_run(rng, sm));
    const double decrease = r.ratio2.back() / r.ratio2.front();
    worst_decrease = std::max(worst_decrease, decrease);
    res.require(r.report.pass && r.ratio2.front() > kRatioFloor,
                "smooth instance " + std::to_string(t) + ": ratio2 " + sci(r.ratio2.front()) + " -> " +
                    sci(r.ratio2.back()) + ", ratio1 " + sci(r.ratio1.front()) + " -> " + sci(r.ratio1.back()));
    for (std::size_t i = 1; i < r.ratio2.size(); ++i) {
      res.require(r.ratio2[i] <= 0.1 * r.ratio2[i - 1],
                  "smooth instance " + std::to_string(t) + ": ratio2 fell less than 10x over one decade");
    }

    LqShape shape;
    shape.n = uniform_int(rng, 1, 3);
    shape.r = uniform_int(rng, 1, 2);
    shape.d = uniform_int(rng, 1, 2);
    shape.max_N = 3;
    const Instance lq = random_lq(rng, shape);
    const RateResult rl = rate_check(lq.spec, lq.tree, lq.u, random_run(rng, lq));
    const double r2 = *std::max_element(rl.ratio2.begin(), rl.ratio2.end());
    worst_lq = std::max(worst_lq, r2);
    res.require(rl.report.pass && r2 <= kRatioFloor, "LQ instance " + std::to_string(t) + ": ratio2 " + sci(r2));
  }
  res.metrics["instances"] = trials;
  res.metrics["worst_smooth_ratio2_shrink"] = worst_decrease;
  res.metrics["max_lq_ratio2"] = worst_lq;
  res.summary = "smooth: ratio2(1e-3)/ratio2(1e-1) <= " + sci(worst_decrease) + " (need <= 1e-2); LQ: max ratio2 " +
                sci(worst_lq) + " (need <= 1e-20)";
}

inline void criterion_optimizer(CriterionResult& res, const SuiteOptions& o) {
  const auto instances = convex_oracle_instances(o.seed + 6, o.trials.value_or(5));
  double worst_gap = 0.0, worst_nec = 0.0;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < instances.size(); ++t) {
    const ProblemSpec& spec = instances[t];
    const ScenarioTree tree = build_tree(spec.grid, spec.noise);
    const OptimizeResult opt = optimize(spec, tree);
    const BruteForceResult bf = brute_force(spec, tree, 101);
    const auto traj = simulate(spec, tree, opt.u);
    const auto adj = solve_adjoint(spec, tree, traj, opt.u);
    const CheckReport nec = necessary_check(spec, tree, traj, adj, opt.u, 1e-6);
    const double gap = std::abs(opt.J - bf.J);
    worst_gap = std::max(worst_gap, gap);
    worst_nec = std::max(worst_nec, nec.max_value());
    res.require(gap <= 1e-4, "instance " + std::to_string(t) + ": |J_opt - J_grid| = " + sci(gap));
    res.require(nec.pass, "instance " + std::to_string(t) + ": necessary condition residual " + sci(nec.max_value()));
    rows.push_back({{"J_optimize", opt.J}, {"J_brute_force", bf.J}, {"iterations", opt.iterations},
                    {"reason", opt.reason}, {"necessary_residual", nec.max_value()}});
  }
  res.metrics["instances"] = rows;
  res.metrics["max_gap"] = worst_gap;
  res.summary = std::to_string(instances.size()) + " convex instances, max |J_opt - J_grid| " + sci(worst_gap) +
                ", max necessary residual " + sci(worst_nec);
}

inline void criterion_prodcons(CriterionResult& res, const SuiteOptions&) {
  const ProdconsReplica rep{0.5, 0.5, 5, 0.0};
  const auto p = rep.p();
  const auto q = rep.q();
  const auto v = rep.v();
  res.require(p[6] == 1.0, "p(6h) = " + format_double(p[6]) + ", expected 1");
  res.require(p[5] == 0.75, "p(5h) = " + format_double(p[5]) + ", expected 0.75");
  res.require(p[4] == 0.5625, "p(4h) = " + format_double(p[4]) + ", expected 0.5625");
  res.require(q[5] == 0.0 && q[4] == 0.0, "q(5h), q(4h) not zero");
  // direct substitution into v(t) = (h p(t+h))^-delta
  const double v5 = std::pow(0.5 * 1.0, -0.5), v4 = std::pow(0.5 * 0.75, -0.5);
  res.require(std::abs(v[5] - v5) <= 1e-6 && std::abs(v[5] - 1.414214) <= 1e-6, "v(5h) = " + format_double(v[5]));
  res.require(std::abs(v[4] - v4) <= 1e-6 && std::abs(v[4] - 1.632993) <= 1e-6, "v(4h) = " + format_double(v[4]));
  const std::string csv = replica_plot_csv(rep);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  int rows = 0;
  double last_t = -INFINITY;
  bool increasing = true;
  while (std::getline(in, line)) {
    const double t = parse_double(line.substr(0, line.find(',')));
    increasing = increasing && t > last_t;
    last_t = t;
    ++rows;
  }
  res.require(rows == 6 && increasing, "plot data has " + std::to_string(rows) + " rows");
  res.metrics["p"] = p;
  res.metrics["v"] = v;
  res.metrics["plot_rows"] = rows;
  res.summary = "p(6h,5h,4h) = " + format_double(p[6]) + ", " + format_double(p[5]) + ", " + format_double(p[4]) +
                "; v(5h) = " + sci(v[5]) + ", v(4h) = " + sci(v[4]) + "; " + std::to_string(rows) + " plot rows";
}

// ---------------------------------------------------------------------------

struct CriterionDef {
  int id;
  const char* key;
  const char* title;
  double time_limit;
  void (*run)(CriterionResult&, const SuiteOptions&);
};

inline const std::vector<CriterionDef>& criteria() {
  static const std::vector<CriterionDef> defs{
      {1, "noise", "noise moments", 1.0, criterion_noise},
      {2, "duality", "duality identity", 10.0, criterion_duality},
      {3, "gradient", "gradient consistency", 30.0, criterion_gradient},
      {4, "operator", "fundamental operator", 10.0, criterion_operator},
      {5, "rates", "spike perturbation rates", 10.0, criterion_rates},
      {6, "optimizer", "optimizer vs exhaustive search", 60.0, criterion_optimizer},
      {7, "prodcons", "production-consumption reproduction", 1.0, criterion_prodcons},
  };
  return defs;
}

inline CriterionResult run_criterion(const CriterionDef& def, const SuiteOptions& o) {
  CriterionResult res;
  res.id = def.id;
  res.key = def.key;
  res.title = def.title;
  res.time_limit = def.time_limit;
  const auto start = std::chrono::steady_clock::now();
  try {
    def.run(res, o);
  } catch (const std::exception& e) {
    res.require(false, std::string("exception: ") + e.what());
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.require(res.seconds < res.time_limit, "runtime " + sci(res.seconds) + " s exceeds " + sci(res.time_limit) + " s");
  return res;
}

/// Serialized report: everything except wall-clock times.
inline nlohmann::ordered_json report_json(const std::vector<CriterionResult>& results, const SuiteOptions& o) {
  nlohmann::ordered_json crit = nlohmann::ordered_json::array();
  bool all = true;
  for (const auto& r : results) {
    all = all && r.pass;
    crit.push_back({{"id", r.id}, {"key", r.key}, {"title", r.title}, {"pass", r.pass}, {"time_limit_s", r.time_limit},
                    {"summary", r.summary}, {"metrics", r.metrics}, {"failures", r.failures}});
  }
  nlohmann::ordered_json j = {{"suite", o.suite}, {"seed", o.seed}};
  if (o.trials) j["trials"] = *o.trials;
  if (!o.inject_fault.empty()) j["inject_fault"] = o.inject_fault;
  j["pass"] = all;
  j["criteria"] = crit;
  return j;
}

inline std::vector<CriterionResult> run_suite(const SuiteOptions& o) {
  static const char* known[] = {"all", "noise", "duality", "gradient", "operator", "rates", "optimizer", "prodcons",
                                "determinism"};
  if (std::find(std::begin(known), std::end(known), o.suite) == std::end(known)) {
    throw UsageError("unknown suite '" + o.suite + "'");
  }
  if (!o.inject_fault.empty() && o.inject_fault != "grad-sign") {
    throw UsageError("unknown fault '" + o.inject_fault + "' (grad-sign)");
  }
  if (o.trials && *o.trials < 1) throw UsageError("--trials must be positive");
  std::vector<CriterionResult> results;
  for (const auto& def : criteria()) {
    if (o.suite == "all" || o.suite == def.key) results.push_back(run_criterion(def, o));
  }
  if (o.suite == "all" || o.suite == "determinism") {
    CriterionResult det;
    det.id = 8;
    det.key = "determinism";
    det.title = "determinism";
    det.time_limit = 600.0;
    const auto start = std::chrono::steady_clock::now();
    try {
      SuiteOptions inner = o;
      inner.suite = "all";
      std::vector<CriterionResult> a = results, b;
      if (o.suite != "all") {
        for (const auto& def : criteria()) a.push_back(run_criterion(def, inner));
      }
      for (const auto& def : criteria()) b.push_back(run_criterion(def, inner));
      const std::string sa = json_text(report_json(a, inner)), sb = json_text(report_json(b, inner));
      det.require(sa == sb, "two consecutive suite runs serialized differently");
      det.metrics["report_bytes"] = sa.size();
      det.metrics["report_hash"] = fnv1a_hex(sa);
      det.summary = "two runs, " + std::to_string(sa.size()) + " report bytes, identical: " + (sa == sb ? "yes" : "no");
    } catch (const std::exception& e) {
      det.require(false, std::string("exception: ") + e.what());
    }
    det.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    results.push_back(det);
  }
  return results;
}

/// "PASS  3 gradient consistency (0.12 s / 30 s): ..." lines.
inline std::string summary_lines(const std::vector<CriterionResult>& results) {
  std::string out;
  char buf[160];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%s  %d %-38s (%.2f s / %.0f s): ", r.pass ? "PASS" : "FAIL", r.id, r.title.c_str(),
                  r.seconds, r.time_limit);
    out += buf + r.summary + "\n";
    for (const auto& f : r.failures) out += "      - " + f + "\n";
  }
  return out;
}

inline bool all_pass(const std::vector<CriterionResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CriterionResult& r) { return r.pass; });
}

}  // namespace mfsmp::testing
