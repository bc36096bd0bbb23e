#pragma once

// Closed-form production-consumption example next to the general solver.
//
// The replica evaluates the closed forms p(t_{N+1-m}) = h^m (2 - delta)^m, q = 0
// and the consumption rule v(t) = h^-delta p(t+h)^-delta. The general solver
// linearizes the actual drift, whose state factor is 1 + h(1 - dep), and the
// control enters the dynamics without h, so its optimal rule is
// v = E{p(t+h)|F}^-delta. The adjoints coincide when h = 1 and dep = delta;
// otherwise they differ, hence the side-by-side table.

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfsmp/config.hpp"
#include "mfsmp/io.hpp"
#include "mfsmp/optimizer.hpp"

namespace mfsmp {

struct ProdconsReplica {
  double delta = 0.5;
  double h = 0.5;
  int N = 5;
  double t0 = 0.0;

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("prodcons: delta must lie in (0, 1)");
    if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("prodcons: h must be finite and > 0");
    if (N < 1) throw ValidationError("prodcons: N must be >= 1");
  }

  double time(int k) const { return t0 + k * h; }

  /// p(t_k), k = 0..N+1.
  std::vector<double> p() const {
    validate();
    std::vector<double> out(static_cast<std::size_t>(N + 2));
    for (int k = 0; k <= N + 1; ++k) {
      const int m = N + 1 - k;
      out[static_cast<std::size_t>(k)] = std::pow(h, m) * std::pow(2.0 - delta, m);
    }
    return out;
  }

  /// q(t_k), k = 0..N.
  std::vector<double> q() const { return std::vector<double>(static_cast<std::size_t>(N + 1), 0.0); }

  /// v(t_k) = h^-delta p(t_{k+1})^-delta, k = 0..N.
  std::vector<double> v() const {
    const auto pp = p();
    std::vector<double> out(static_cast<std::size_t>(N + 1));
    for (int k = 0; k <= N; ++k) {
      out[static_cast<std::size_t>(k)] = std::pow(h, -delta) * std::pow(pp[static_cast<std::size_t>(k + 1)], -delta);
    }
    return out;
  }
};

/// t,v rows of the replica consumption path.
inline std::string replica_plot_csv(const ProdconsReplica& rep) {
  std::string out = "t,v\n";
  const auto v = rep.v();
  for (int k = 0; k <= rep.N; ++k) {
    out += format_double(rep.time(k)) + "," + format_double(v[static_cast<std::size_t>(k)]) + "\n";
  }
  return out;
}

struct ProdconsComparisonRow {
  double t = 0.0;
  double p_replica = 0.0;
  double p_general = 0.0;
  double v_replica = NAN;   // undefined at t_{N+1}
  double v_rule = NAN;      // E{p(t+h)|F}^-delta from the general adjoint
  double v_optimized = NAN; // projected-gradient solution, node 0 of the level
  bool differs = false;
};

struct ProdconsComparison {
  ProdconsReplica replica;
  ProdconsParams params;
  std::vector<ProdconsComparisonRow> rows;
  OptimizeResult solve;
  double max_rule_gap = 0.0;  // max |v_optimized - v_rule| over all nodes
  std::vector<std::string> notes;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json rj = nlohmann::ordered_json::array();
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); };
    for (const auto& r : rows) {
      rj.push_back({{"t", r.t}, {"p_replica", r.p_replica}, {"p_general", r.p_general}, {"v_replica", num(r.v_replica)},
                    {"v_rule", num(r.v_rule)}, {"v_optimized", num(r.v_optimized)}, {"differs", r.differs}});
    }
    return {{"delta_util", replica.delta},
            {"depreciation", params.depreciation},
            {"volatility", params.volatility},
            {"h", replica.h},
            {"N", replica.N},
            {"rows", rj},
            {"optimizer", {{"J_native", -solve.J}, {"iterations", solve.iterations}, {"reason", solve.reason}}},
            {"max_rule_gap", max_rule_gap},
            {"notes", notes}};
  }

  /// Fixed-width text table for the terminal.
  std::string table() const {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%8s %14s %14s %14s %14s %14s %s\n", "t", "p_replica", "p_general", "v_replica",
                  "v_rule", "v_optimized", "differs");
    out += buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%8.4f %14.8g %14.8g %14.8g %14.8g %14.8g %s\n", r.t, r.p_replica, r.p_general,
                    r.v_replica, r.v_rule, r.v_optimized, r.differs ? "yes" : "no");
      out += buf;
    }
    return out;
  }
};

/// Runs the replica and the general solver on the same parameters.
inline ProdconsComparison compare_prodcons(const ProdconsReplica& rep, std::optional<double> depreciation = std::nullopt,
                                           double volatility = 0.5, const OptimizerOptions& opts = {}) {
  rep.validate();
  ProdconsComparison cmp;
  cmp.replica = rep;
  nlohmann::ordered_json params = {{"delta_util", rep.delta}, {"volatility", volatility}, {"h", rep.h}, {"N", rep.N},
                                   {"t0", rep.t0}};
  if (depreciation) params["depreciation"] = *depreciation;
  const ParsedProblem parsed = builtin("prodcons", params);
  const ProblemSpec& spec = parsed.spec;
  cmp.params = dynamic_cast<const Prodcons&>(*spec.native).params();
  const ScenarioTree tree = build_tree(spec.grid, spec.noise);

  cmp.solve = optimize(spec, tree, opts);
  const Evaluation ev = evaluate(spec, tree, cmp.solve.u);

  const auto rp = rep.p();
  const auto rv = rep.v();
  for (int k = 0; k <= rep.N + 1; ++k) {
    ProdconsComparisonRow row;
    row.t = rep.time(k);
    row.p_replica = rp[static_cast<std::size_t>(k)];
    row.p_general = ev.adj.p.at(k, 0)(0);
    if (k <= rep.N) {
      row.v_replica = rv[static_cast<std::size_t>(k)];
      row.v_rule = std::pow(cond_expect(tree, ev.adj.p, k, 0)(0), -rep.delta);
      row.v_optimized = cmp.solve.u.at(k, 0)(0);
      for (std::size_t i = 0; i < tree.level_size(k); ++i) {
        const double rule = std::pow(cond_expect(tree, ev.adj.p, k, i)(0), -rep.delta);
        cmp.max_rule_gap = std::max(cmp.max_rule_gap, std::abs(cmp.solve.u.at(k, i)(0) - rule));
      }
    }
    const double tol = 1e-12;
    row.differs = std::abs(row.p_replica - row.p_general) > tol * std::max(1.0, std::abs(row.p_replica)) ||
                  (k <= rep.N && std::abs(row.v_replica - row.v_rule) > tol * std::max(1.0, std::abs(row.v_replica)));
    cmp.rows.push_back(row);
  }
  cmp.notes.push_back("p_replica follows p(t_{N+1-m}) = h^m (2 - delta)^m; p_general solves the adjoint of the "
                      "actual linearized drift, state factor 1 + h(1 - depreciation)");
  cmp.notes.push_back("v_replica = h^-delta p(t+h)^-delta; v_rule = E{p(t+h)|F}^-delta because the control enters "
                      "the dynamics without the factor h");
  cmp.notes.push_back("utility maximization is solved as minimization of the negated objective; p_general is reported "
                      "in that internal orientation, where p(t_{N+1}) = 1");
  return cmp;
}

}  // namespace mfsmp
