#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mfsmp/problem.hpp"
#include "mfsmp/scenario_tree.hpp"

namespace mfsmp {

/// Nodal control u(t_k, node) on levels 0..N.
using ControlProcess = VectorProcess;

/// State process on levels 0..N+1 plus the per-level means E x(t_k).
struct StateTrajectory {
  VectorProcess x;
  std::vector<VectorXd> mean;
};

inline ControlProcess constant_control(const ProblemSpec& spec, const ScenarioTree& tree, const VectorXd& value) {
  if (value.size() != spec.r) throw UsageError("constant_control: wrong control dimension");
  return ControlProcess(tree, 0, spec.grid.N, value);
}

inline void check_control_shape(const ProblemSpec& spec, const ScenarioTree& tree, const ControlProcess& u) {
  if (u.first_level() != 0 || u.last_level() != spec.grid.N || tree.last_level() != spec.grid.N + 1) {
    throw UsageError("control process must cover levels 0..N of the problem's tree");
  }
  for (int k = 0; k <= spec.grid.N; ++k) {
    if (u.level(k).size() != tree.level_size(k)) throw UsageError("control process does not match the tree");
    for (const auto& v : u.level(k)) {
      if (v.size() != spec.r) throw UsageError("control value has wrong dimension at level " + std::to_string(k));
    }
  }
}

inline bool is_feasible(const ProblemSpec& spec, const ControlProcess& u) {
  for (int k = 0; k <= spec.grid.N; ++k) {
    const auto& box = spec.admissible.at(k);
    for (const auto& v : u.level(k)) {
      if (!box.contains(v)) return false;
    }
  }
  return true;
}

/// Nodewise projection of a control onto the admissible boxes.
inline ControlProcess project(const ProblemSpec& spec, const ControlProcess& u) {
  ControlProcess out = u;
  for (int k = 0; k <= spec.grid.N; ++k) {
    for (auto& v : out.level(k)) v = project(spec, k, v);
  }
  return out;
}

/// Exact forward recursion of the controlled mean-field system. Levels are
/// processed breadth-first: the level mean is formed before any node steps.
/// Feasibility is not enforced here (finite-difference probes leave the box).
inline StateTrajectory simulate(const ProblemSpec& spec, const ScenarioTree& tree, const ControlProcess& u) {
  check_control_shape(spec, tree, u);
  const auto& m = spec.model();
  const double h = spec.grid.h;
  StateTrajectory traj{VectorProcess(tree, 0, spec.grid.N + 1, VectorXd::Zero(spec.n)), {}};
  traj.mean.reserve(static_cast<std::size_t>(spec.grid.N + 2));
  traj.x.at(0, 0) = spec.x0;
  for (int k = 0; k <= spec.grid.N; ++k) {
    traj.mean.push_back(expect(tree, traj.x, k));
    const VectorXd& y = traj.mean.back();
    const Step s = spec.step(k);
    const auto nodes = tree.level(k);
    const auto children = tree.level(k + 1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const VectorXd& x = traj.x.at(k, i);
      const VectorXd& v = u.at(k, i);
      const VectorXd base = x + h * m.drift(s, x, y, v);
      std::vector<VectorXd> sig;
      sig.reserve(static_cast<std::size_t>(spec.d));
      for (int j = 0; j < spec.d; ++j) sig.push_back(m.diffusion(j, s, x, y, v));
      for (std::size_t c = nodes[i].first_child; c < nodes[i].first_child + nodes[i].child_count; ++c) {
        VectorXd next = base;
        for (int j = 0; j < spec.d; ++j) next += sig[static_cast<std::size_t>(j)] * children[c].increment(j);
        if (!next.allFinite()) {
          throw SimulationError("simulate: non-finite state at level " + std::to_string(k + 1) + ", node " +
                                std::to_string(c));
        }
        traj.x.at(k + 1, c) = std::move(next);
      }
    }
  }
  traj.mean.push_back(expect(tree, traj.x, spec.grid.N + 1));
  return traj;
}

/// J = E phi(x(t_{N+1}), Ex(t_{N+1})) + E sum_k l(t_k, x, Ex, u), in the internal
/// (minimize) orientation.
inline double cost(const ProblemSpec& spec, const ScenarioTree& tree, const ControlProcess& u,
                   const StateTrajectory& traj) {
  const auto& m = spec.model();
  double J = 0.0;
  for (int k = 0; k <= spec.grid.N; ++k) {
    const Step s = spec.step(k);
    const auto nodes = tree.level(k);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      try {
        J += nodes[i].prob * m.running_cost(s, traj.x.at(k, i), traj.mean[static_cast<std::size_t>(k)], u.at(k, i));
      } catch (const DomainError& e) {
        throw DomainError(std::string(e.what()) + " [level " + std::to_string(k) + ", node " +
                          std::to_string(tree.global_id(k, i)) + "]");
      }
    }
  }
  const int T = spec.grid.N + 1;
  const auto leaves = tree.level(T);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    J += leaves[i].prob * m.terminal_cost(traj.x.at(T, i), traj.mean[static_cast<std::size_t>(T)]);
  }
  return J;
}

inline double cost(const ProblemSpec& spec, const ScenarioTree& tree, const ControlProcess& u) {
  return cost(spec, tree, u, simulate(spec, tree, u));
}

/// Objective in the user's orientation (e.g. the utility to maximize).
inline double native_objective(const ProblemSpec& spec, double internal_cost) {
  return spec.objective_sign() * internal_cost;
}

}  // namespace mfsmp
