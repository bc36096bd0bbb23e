#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mfsmp/parallel.hpp"
#include "mfsmp/smp.hpp"

namespace mfsmp {

struct OptimizerOptions {
  int max_iters = 500;
  double step_init = 1.0;
  double armijo_c = 1e-4;
  double shrink = 0.5;
  double grad_tol = 1e-8;
  double stall_tol = 1e-12;
  /// When set and no initial control is given, u0 is drawn inside the boxes.
  std::optional<std::uint64_t> seed;
  int max_backtracks = 60;
  /// Consecutive iterations with decrease <= stall_tol * max(1, |J|) before stopping.
  int stall_window = 3;
  /// Start each line search from the Barzilai-Borwein step instead of step_init.
  bool bb_step = true;

  void validate() const {
    if (!(shrink > 0.0 && shrink < 1.0)) throw UsageError("optimizer: shrink must lie in (0, 1)");
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw UsageError("optimizer: armijo_c must lie in (0, 1)");
    if (!(step_init > 0.0)) throw UsageError("optimizer: step_init must be positive");
    if (max_iters < 0 || max_backtracks < 1 || stall_window < 1) throw UsageError("optimizer: invalid iteration limits");
  }
};

struct HistoryEntry {
  double J = 0.0;
  double pg_norm = 0.0;  // ||project(u - g) - u||_inf
};

struct OptimizeResult {
  ControlProcess u;
  double J = 0.0;
  int iterations = 0;
  std::vector<HistoryEntry> history;
  std::string reason;
};

inline double projected_gradient_norm(const ProblemSpec& spec, const ControlProcess& u, const ControlProcess& g) {
  double m = 0.0;
  for (int k = 0; k <= spec.grid.N; ++k) {
    for (std::size_t i = 0; i < u.level(k).size(); ++i) {
      const VectorXd step = project(spec, k, u.at(k, i) - g.at(k, i)) - u.at(k, i);
      if (step.size() > 0) m = std::max(m, step.cwiseAbs().maxCoeff());
    }
  }
  return m;
}

/// Starting control: midpoint-ish point of each box, or a seeded random draw.
inline ControlProcess initial_control(const ProblemSpec& spec, const ScenarioTree& tree,
                                      std::optional<std::uint64_t> seed = std::nullopt) {
  ControlProcess u(tree, 0, spec.grid.N, VectorXd::Zero(spec.r));
  std::optional<std::mt19937_64> rng;
  if (seed) rng.emplace(*seed);
  for (int k = 0; k <= spec.grid.N; ++k) {
    const Box& box = spec.admissible.at(k);
    for (auto& v : u.level(k)) {
      if (rng) {
        v = detail::sample_control(box, *rng);
      } else {
        for (int e = 0; e < spec.r; ++e) {
          const double lo = box.lo(e), hi = box.hi(e);
          if (std::isfinite(lo) && std::isfinite(hi)) v(e) = 0.5 * (lo + hi);
          else if (std::isfinite(lo)) v(e) = lo + 1.0;
          else if (std::isfinite(hi)) v(e) = hi - 1.0;
          else v(e) = 0.0;
        }
      }
    }
  }
  return u;
}

/// Projected gradient descent on the internal cost with Armijo backtracking.
inline OptimizeResult optimize(const ProblemSpec& spec, const ScenarioTree& tree, const ControlProcess& u0,
                               const OptimizerOptions& opts = {}) {
  opts.validate();
  check_control_shape(spec, tree, u0);
  OptimizeResult res;
  res.u = project(spec, u0);
  Evaluation ev = evaluate(spec, tree, res.u);
  res.J = ev.J;
  double pg = projected_gradient_norm(spec, res.u, ev.grad);
  res.history.push_back({res.J, pg});
  res.reason = "max-iters";
  double next_alpha = opts.step_init;
  int stall_count = 0;
  while (true) {
    if (pg <= opts.grad_tol) {
      res.reason = "converged";
      break;
    }
    if (res.iterations >= opts.max_iters) break;
    double alpha = next_alpha;
    bool accepted = false;
    ControlProcess trial;
    Evaluation trial_ev;
    for (int b = 0; b < opts.max_backtracks; ++b, alpha *= opts.shrink) {
      trial = res.u;
      for (int k = 0; k <= spec.grid.N; ++k) {
        for (std::size_t i = 0; i < trial.level(k).size(); ++i) {
          trial.at(k, i) = project(spec, k, res.u.at(k, i) - alpha * ev.grad.at(k, i));
        }
      }
      ControlProcess diff = trial;
      for (int k = 0; k <= spec.grid.N; ++k) {
        for (std::size_t i = 0; i < diff.level(k).size(); ++i) diff.at(k, i) -= res.u.at(k, i);
      }
      const double slope = control_inner(tree, ev.grad, diff);
      try {
        trial_ev = evaluate(spec, tree, trial);
      } catch (const DomainError&) {
        continue;
      } catch (const SimulationError&) {
        continue;
      }
      if (std::isfinite(trial_ev.J) && trial_ev.J <= res.J + opts.armijo_c * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.reason = "line-search failure";
      break;
    }
    const double decrease = res.J - trial_ev.J;
    if (opts.bb_step) {
      // alpha = <s, s> / <s, y> with s = u_new - u, y = g_new - g
      ControlProcess s = trial, y = trial_ev.grad;
      for (int k = 0; k <= spec.grid.N; ++k) {
        for (std::size_t i = 0; i < s.level(k).size(); ++i) {
          s.at(k, i) -= res.u.at(k, i);
          y.at(k, i) -= ev.grad.at(k, i);
        }
      }
      const double ss = control_inner(tree, s, s), sy = control_inner(tree, s, y);
      next_alpha = (sy > 0.0 && std::isfinite(ss / sy)) ? std::clamp(ss / sy, 1e-12, 1e12) : opts.step_init;
    }
    res.u = std::move(trial);
    ev = std::move(trial_ev);
    res.J = ev.J;
    pg = projected_gradient_norm(spec, res.u, ev.grad);
    ++res.iterations;
    res.history.push_back({res.J, pg});
    if (pg <= opts.grad_tol) {
      res.reason = "converged";
      break;
    }
    stall_count = decrease <= opts.stall_tol * std::max(1.0, std::abs(res.J)) ? stall_count + 1 : 0;
    if (stall_count >= opts.stall_window) {
      res.reason = "stalled";
      break;
    }
  }
  return res;
}

inline OptimizeResult optimize(const ProblemSpec& spec, const ScenarioTree& tree, const OptimizerOptions& opts = {}) {
  return optimize(spec, tree, initial_control(spec, tree, opts.seed), opts);
}

struct BruteForceResult {
  ControlProcess u;
  double J = std::numeric_limits<double>::infinity();
  std::uint64_t evaluations = 0;
};

inline constexpr double kBruteForceCap = 1e7;

/// Exhaustive search over grid_per_axis equally spaced values per control
/// coordinate per node. Ties resolve to the lowest enumeration index.
inline BruteForceResult brute_force(const ProblemSpec& spec, const ScenarioTree& tree, int grid_per_axis) {
  if (grid_per_axis < 1) throw UsageError("brute_force: grid_per_axis must be positive");
  for (int k = 0; k <= spec.grid.N; ++k) {
    if (!spec.admissible.at(k).bounded()) throw UsageError("brute_force: every box must be bounded");
  }
  const std::size_t coords = tree.control_node_count() * static_cast<std::size_t>(spec.r);
  const double log_total = static_cast<double>(coords) * std::log10(static_cast<double>(grid_per_axis));
  if (log_total > std::log10(kBruteForceCap) + 1e-12) {
    throw TooLargeError("brute_force: " + std::to_string(grid_per_axis) + "^" + std::to_string(coords) +
                        " candidates (about 1e" + std::to_string(static_cast<int>(std::floor(log_total))) +
                        ") exceeds the cap of 1e7");
  }
  std::uint64_t total = 1;
  for (std::size_t c = 0; c < coords; ++c) total *= static_cast<std::uint64_t>(grid_per_axis);

  // coordinate c -> (level, node, component); the first coordinate varies slowest
  struct Slot {
    int k;
    std::size_t i;
    int e;
  };
  std::vector<Slot> slots;
  for (int k = 0; k <= spec.grid.N; ++k) {
    for (std::size_t i = 0; i < tree.level_size(k); ++i) {
      for (int e = 0; e < spec.r; ++e) slots.push_back({k, i, e});
    }
  }
  auto value = [&](const Slot& s, std::uint64_t idx) {
    const Box& box = spec.admissible.at(s.k);
    if (grid_per_axis == 1) return box.lo(s.e);
    const double t = static_cast<double>(idx) / static_cast<double>(grid_per_axis - 1);
    return idx + 1 == static_cast<std::uint64_t>(grid_per_axis) ? box.hi(s.e) : box.lo(s.e) + t * (box.hi(s.e) - box.lo(s.e));
  };
  auto decode = [&](std::uint64_t index, ControlProcess& u) {
    for (std::size_t c = coords; c-- > 0;) {
      const std::uint64_t digit = index % static_cast<std::uint64_t>(grid_per_axis);
      index /= static_cast<std::uint64_t>(grid_per_axis);
      const Slot& s = slots[c];
      u.at(s.k, s.i)(s.e) = value(s, digit);
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min<std::uint64_t>(thread_count(), total));
  struct Best {
    double J = std::numeric_limits<double>::infinity();
    std::uint64_t index = std::numeric_limits<std::uint64_t>::max();
  };
  std::vector<Best> best(workers);
  const std::uint64_t chunk = (total + workers - 1) / workers;
  parallel_for(workers, [&](std::size_t w) {
    ControlProcess u(tree, 0, spec.grid.N, VectorXd::Zero(spec.r));
    const std::uint64_t begin = w * chunk, end = std::min<std::uint64_t>(total, begin + chunk);
    for (std::uint64_t idx = begin; idx < end; ++idx) {
      decode(idx, u);
      double J;
      try {
        J = cost(spec, tree, u);
      } catch (const DomainError&) {
        continue;
      } catch (const SimulationError&) {
        continue;
      }
      if (J < best[w].J) best[w] = {J, idx};
    }
  });
  Best overall;
  for (const auto& b : best) {
    if (b.J < overall.J || (b.J == overall.J && b.index < overall.index)) overall = b;
  }
  if (overall.index == std::numeric_limits<std::uint64_t>::max()) {
    throw DomainError("brute_force: no grid point has a finite cost");
  }
  BruteForceResult res;
  res.u = ControlProcess(tree, 0, spec.grid.N, VectorXd::Zero(spec.r));
  decode(overall.index, res.u);
  res.J = overall.J;
  res.evaluations = total;
  return res;
}

}  // namespace mfsmp
