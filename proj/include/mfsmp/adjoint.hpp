#pragma once

// Linear mean-field backward stochastic difference equations on a scenario tree:
//
//   p(t) = (I + A'(t)) E{p(t+h)|F_t} + E{A1'(t) p(t+h)}
//          + sum_j B^j'(t) q^j(t) + sum_j E{B1^j'(t) q^j(t)} - ell(t)
//   q^j(t) = E{p(t+h) w^j | F_t},     p(t_{N+1}) = -terminal
//
// together with the forward transition operator
//
//   Theta(t) z = (I + A) z + A1 E z + sum_j (B^j z + B1^j E z) w^j
//
// whose tree-inner-product adjoint is exactly the backward step above.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfsmp/check_report.hpp"
#include "mfsmp/forward.hpp"
#include "mfsmp/problem.hpp"
#include "mfsmp/scenario_tree.hpp"

namespace mfsmp {

/// Coefficients of the linear forward equation and its backward adjoint.
/// Matrix and forcing processes live on levels 0..N, `terminal` on N+1.
/// `forcing`/`forcing_noise` (phi, psi^j) are only needed by forward_rep.
struct LinearBsdeData {
  int n = 0;
  int d = 0;
  MatrixProcess A, A1;
  std::vector<MatrixProcess> B, B1;
  VectorProcess ell;
  VectorProcess terminal;
  std::optional<VectorProcess> forcing;
  std::optional<std::vector<VectorProcess>> forcing_noise;

  int N() const { return A.last_level(); }

  static LinearBsdeData zero(const ScenarioTree& tree, int n, int d) {
    const int N = tree.last_level() - 1;
    LinearBsdeData data;
    data.n = n;
    data.d = d;
    data.A = MatrixProcess(tree, 0, N, MatrixXd::Zero(n, n));
    data.A1 = data.A;
    data.B.assign(static_cast<std::size_t>(d), data.A);
    data.B1.assign(static_cast<std::size_t>(d), data.A);
    data.ell = VectorProcess(tree, 0, N, VectorXd::Zero(n));
    data.terminal = VectorProcess(tree, N + 1, N + 1, VectorXd::Zero(n));
    return data;
  }

  /// True when no mean-field operator terms are present.
  bool decoupled() const {
    for (int k = 0; k <= N(); ++k) {
      for (const auto& m : A1.level(k)) {
        if (!m.isZero(0.0)) return false;
      }
      for (const auto& b1 : B1) {
        for (const auto& m : b1.level(k)) {
          if (!m.isZero(0.0)) return false;
        }
      }
    }
    return true;
  }
};

struct AdjointSolution {
  VectorProcess p;               // levels 0..N+1
  std::vector<VectorProcess> q;  // per noise component, levels 0..N
};

struct LinearizeOptions {
  /// Use f_y without the factor h in A1 (literal form). Breaks the exact duality with the forward variational equation.
  bool bse_literal = false;
};

/// Coefficients along (traj, u): A = h f_x, A1 = h f_y, B^j = sigma^j_x,
/// B1^j = sigma^j_y, ell = l_x + E l_y, terminal = phi_x + E phi_y.
inline LinearBsdeData linearize(const ProblemSpec& spec, const ScenarioTree& tree, const StateTrajectory& traj,
                                const ControlProcess& u, const LinearizeOptions& opts = {}) {
  check_control_shape(spec, tree, u);
  const auto& m = spec.model();
  const int N = spec.grid.N;
  const double h = spec.grid.h;
  LinearBsdeData data = LinearBsdeData::zero(tree, spec.n, spec.d);
  for (int k = 0; k <= N; ++k) {
    const Step s = spec.step(k);
    const VectorXd& y = traj.mean[static_cast<std::size_t>(k)];
    const auto nodes = tree.level(k);
    std::vector<VectorXd> ly(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const VectorXd& x = traj.x.at(k, i);
      const VectorXd& v = u.at(k, i);
      try {
        data.A.at(k, i) = h * m.drift_x(s, x, y, v);
        data.A1.at(k, i) = (opts.bse_literal ? 1.0 : h) * m.drift_y(s, x, y, v);
        for (int j = 0; j < spec.d; ++j) {
          data.B[static_cast<std::size_t>(j)].at(k, i) = m.diffusion_x(j, s, x, y, v);
          data.B1[static_cast<std::size_t>(j)].at(k, i) = m.diffusion_y(j, s, x, y, v);
        }
        data.ell.at(k, i) = m.running_cost_x(s, x, y, v);
        ly[i] = m.running_cost_y(s, x, y, v);
      } catch (const DomainError& e) {
        throw DomainError(std::string(e.what()) + " [linearize level " + std::to_string(k) + ", node " +
                          std::to_string(tree.global_id(k, i)) + "]");
      }
    }
    const VectorXd mean_ly = expect_level(tree, k, [&](std::size_t i) -> const VectorXd& { return ly[i]; });
    for (auto& e : data.ell.level(k)) e += mean_ly;
  }
  const int T = N + 1;
  const VectorXd& yT = traj.mean[static_cast<std::size_t>(T)];
  const auto leaves = tree.level(T);
  std::vector<VectorXd> py(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    data.terminal.at(T, i) = m.terminal_cost_x(traj.x.at(T, i), yT);
    py[i] = m.terminal_cost_y(traj.x.at(T, i), yT);
  }
  const VectorXd mean_py = expect_level(tree, T, [&](std::size_t i) -> const VectorXd& { return py[i]; });
  for (auto& e : data.terminal.level(T)) e += mean_py;
  return data;
}

/// Backward recursion. The A1/B1 contributions are unconditional expectations,
/// computed once per level and shared by every node of that level.
inline AdjointSolution solve_backward(const LinearBsdeData& data, const ScenarioTree& tree) {
  const int N = data.N();
  if (tree.last_level() != N + 1 || tree.noise_dim() != data.d) {
    throw UsageError("solve_backward: coefficient data does not match the tree");
  }
  const int n = data.n;
  AdjointSolution sol{VectorProcess(tree, 0, N + 1, VectorXd::Zero(n)),
                      std::vector<VectorProcess>(static_cast<std::size_t>(data.d),
                                                 VectorProcess(tree, 0, N, VectorXd::Zero(n)))};
  for (std::size_t i = 0; i < tree.level_size(N + 1); ++i) sol.p.at(N + 1, i) = -data.terminal.at(N + 1, i);

  const MatrixXd I = MatrixXd::Identity(n, n);
  for (int k = N; k >= 0; --k) {
    const auto nodes = tree.level(k);
    const auto children = tree.level(k + 1);
    std::vector<VectorXd> cond_p(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      cond_p[i] = cond_expect(tree, sol.p, k, i);
      for (int j = 0; j < data.d; ++j) {
        sol.q[static_cast<std::size_t>(j)].at(k, i) =
            cond_expect(tree, k, i, [&](std::size_t c) -> VectorXd { return sol.p.at(k + 1, c) * children[c].increment(j); });
      }
    }
    // E{A1' p(t+h)} = E{A1' E{p(t+h)|F_t}} since A1 is F_t-measurable.
    VectorXd mean_field = expect_level(tree, k, [&](std::size_t i) -> VectorXd {
      VectorXd acc = data.A1.at(k, i).transpose() * cond_p[i];
      for (int j = 0; j < data.d; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        acc += data.B1[jj].at(k, i).transpose() * sol.q[jj].at(k, i);
      }
      return acc;
    });
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      VectorXd v = (I + data.A.at(k, i).transpose()) * cond_p[i] + mean_field - data.ell.at(k, i);
      for (int j = 0; j < data.d; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        v += data.B[jj].at(k, i).transpose() * sol.q[jj].at(k, i);
      }
      sol.p.at(k, i) = std::move(v);
    }
  }
  return sol;
}

inline AdjointSolution solve_adjoint(const ProblemSpec& spec, const ScenarioTree& tree, const StateTrajectory& traj,
                                     const ControlProcess& u, const LinearizeOptions& opts = {}) {
  return solve_backward(linearize(spec, tree, traj, u, opts), tree);
}

/// One forward transition: level-k process z to the level-(k+1) process Theta(t_k) z.
inline VectorProcess theta_apply(const LinearBsdeData& data, const ScenarioTree& tree, int k, const VectorProcess& z) {
  if (k < 0 || k > data.N()) throw UsageError("theta_apply: step " + std::to_string(k) + " out of range");
  if (!z.defined_at(k)) throw UsageError("theta_apply: input not defined on level " + std::to_string(k));
  const VectorXd mean = expect(tree, z, k);
  VectorProcess out(tree, k + 1, k + 1, VectorXd::Zero(data.n));
  const auto nodes = tree.level(k);
  const auto children = tree.level(k + 1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const VectorXd& zi = z.at(k, i);
    const VectorXd drift = zi + data.A.at(k, i) * zi + data.A1.at(k, i) * mean;
    std::vector<VectorXd> vol;
    vol.reserve(static_cast<std::size_t>(data.d));
    for (int j = 0; j < data.d; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      vol.push_back(data.B[jj].at(k, i) * zi + data.B1[jj].at(k, i) * mean);
    }
    for (std::size_t c = nodes[i].first_child; c < nodes[i].first_child + nodes[i].child_count; ++c) {
      VectorXd v = drift;
      for (int j = 0; j < data.d; ++j) v += vol[static_cast<std::size_t>(j)] * children[c].increment(j);
      out.at(k + 1, c) = std::move(v);
    }
  }
  return out;
}

/// Fundamental operator Phi(t_l, t_k) applied to a level-k process:
/// zero for l < k, identity for l = k, Theta(t_{l-1}) ... Theta(t_k) otherwise.
inline VectorProcess phi_apply(const LinearBsdeData& data, const ScenarioTree& tree, int l, int k,
                               const VectorProcess& z) {
  if (l < 0 || l > data.N() + 1) throw UsageError("phi_apply: target level out of range");
  if (l < k) return VectorProcess(tree, l, l, VectorXd::Zero(data.n));
  if (!z.defined_at(k)) throw UsageError("phi_apply: input not defined on level " + std::to_string(k));
  VectorProcess cur(tree, k, k, VectorXd::Zero(data.n));
  for (std::size_t i = 0; i < tree.level_size(k); ++i) cur.at(k, i) = z.at(k, i);
  for (int s = k; s < l; ++s) cur = theta_apply(data, tree, s, cur);
  return cur;
}

namespace detail {

/// phi(tau)(parent) + sum_j psi^j(tau)(parent) w^j as a level-(tau+1) process.
inline VectorProcess forcing_increment(const LinearBsdeData& data, const ScenarioTree& tree, int tau) {
  VectorProcess g(tree, tau + 1, tau + 1, VectorXd::Zero(data.n));
  const auto nodes = tree.level(tau);
  const auto children = tree.level(tau + 1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t c = nodes[i].first_child; c < nodes[i].first_child + nodes[i].child_count; ++c) {
      VectorXd v = data.forcing->at(tau, i);
      for (int j = 0; j < data.d; ++j) {
        v += (*data.forcing_noise)[static_cast<std::size_t>(j)].at(tau, i) * children[c].increment(j);
      }
      g.at(tau + 1, c) = std::move(v);
    }
  }
  return g;
}

}  // namespace detail

/// Representation-formula solution of the linear forward equation
///   z(t) = Phi(t, t0) xi0 + sum_{tau < t} Phi(t, tau+h) (phi(tau) + sum_j psi^j(tau) w^j(tau)).
inline VectorProcess forward_rep(const LinearBsdeData& data, const ScenarioTree& tree, const VectorXd& xi0) {
  if (!data.forcing || !data.forcing_noise || data.forcing_noise->size() != static_cast<std::size_t>(data.d)) {
    throw UsageError("forward_rep: forward forcing (phi, psi) missing from the coefficient data");
  }
  if (xi0.size() != data.n) throw UsageError("forward_rep: initial value has wrong dimension");
  const int N = data.N();
  VectorProcess z(tree, 0, N + 1, VectorXd::Zero(data.n));
  const VectorProcess start(tree, 0, 0, xi0);
  std::vector<VectorProcess> increments;
  increments.reserve(static_cast<std::size_t>(N + 1));
  for (int tau = 0; tau <= N; ++tau) increments.push_back(detail::forcing_increment(data, tree, tau));

  for (int t = 0; t <= N + 1; ++t) {
    VectorProcess acc = phi_apply(data, tree, t, 0, start);
    for (int tau = 0; tau < t; ++tau) {
      const VectorProcess term = phi_apply(data, tree, t, tau + 1, increments[static_cast<std::size_t>(tau)]);
      for (std::size_t i = 0; i < tree.level_size(t); ++i) acc.at(t, i) += term.at(t, i);
    }
    for (std::size_t i = 0; i < tree.level_size(t); ++i) z.at(t, i) = acc.at(t, i);
  }
  return z;
}

struct ClosedFormP {
  VectorProcess p;
  /// True on the pathwise route (no mean-field operator terms). False when the
  /// transpose of Phi was realized through the tree inner-product adjoint.
  bool exact = true;
};

/// Closed-form adjoint
///   p(t) = -E{ Phi'(t_{N+1}, t) terminal + sum_{s=t}^{t_N} Phi'(s, t) ell(s) | F_t }.
/// Without A1/B1 the transposed path products are accumulated along every
/// descendant path. With them, Phi' is taken as the adjoint under
/// <z, w> = E<z, w>, applied column by column; that route is a diagnostic.
inline ClosedFormP closed_form_p(const LinearBsdeData& data, const ScenarioTree& tree,
                                 std::size_t operator_node_cap = 5000) {
  const int N = data.N();
  const int n = data.n;
  ClosedFormP out{VectorProcess(tree, 0, N + 1, VectorXd::Zero(n)), data.decoupled()};
  for (std::size_t i = 0; i < tree.level_size(N + 1); ++i) out.p.at(N + 1, i) = -data.terminal.at(N + 1, i);

  if (out.exact) {
    const MatrixXd I = MatrixXd::Identity(n, n);
    for (int t = 0; t <= N; ++t) {
      for (std::size_t m = 0; m < tree.level_size(t); ++m) {
        VectorXd acc = VectorXd::Zero(n);
        // path product M = Phi(s, t) along the branch, weight = P(node | m)
        std::function<void(int, std::size_t, const MatrixXd&, double)> walk =
            [&](int s, std::size_t idx, const MatrixXd& M, double weight) {
              if (s == N + 1) {
                acc += weight * (M.transpose() * data.terminal.at(s, idx));
                return;
              }
              acc += weight * (M.transpose() * data.ell.at(s, idx));
              const auto& node = tree.node(s, idx);
              const auto children = tree.level(s + 1);
              for (std::size_t c = node.first_child; c < node.first_child + node.child_count; ++c) {
                MatrixXd step = I + data.A.at(s, idx);
                for (int j = 0; j < data.d; ++j) {
                  step += data.B[static_cast<std::size_t>(j)].at(s, idx) * children[c].increment(j);
                }
                walk(s + 1, c, step * M, weight * children[c].cond_prob);
              }
            };
        walk(t, m, I, 1.0);
        out.p.at(t, m) = -acc;
      }
    }
    return out;
  }

  if (tree.node_count() > operator_node_cap) {
    throw TooLargeError("closed_form_p: mean-field operator adjoint limited to " + std::to_string(operator_node_cap) +
                        " nodes");
  }
  // p(t)[m, e] = -(1 / P(m)) sum_s E< Phi(s, t) (unit at (m, e)), v_s >
  for (int t = 0; t <= N; ++t) {
    for (std::size_t m = 0; m < tree.level_size(t); ++m) {
      const double pm = tree.node(t, m).prob;
      for (int e = 0; e < n; ++e) {
        VectorProcess cur(tree, t, t, VectorXd::Zero(n));
        cur.at(t, m)(e) = 1.0;
        double total = 0.0;
        for (int s = t; s <= N + 1; ++s) {
          if (s > t) cur = theta_apply(data, tree, s - 1, cur);
          const VectorProcess& target = (s == N + 1) ? data.terminal : data.ell;
          total += expect_level(tree, s, [&](std::size_t i) { return cur.at(s, i).dot(target.at(s, i)); });
        }
        out.p.at(t, m)(e) = -total / pm;
      }
    }
  }
  return out;
}

/// Smallest singular value of the realized operator Phi(t_k, t_0) : R^n -> level-k
/// processes (stacked node values). Diagnostic for tiny instances.
inline double phi_min_singular_value(const LinearBsdeData& data, const ScenarioTree& tree, int k) {
  const int n = data.n;
  const auto rows = static_cast<Eigen::Index>(n * tree.level_size(k));
  MatrixXd M(rows, n);
  for (int e = 0; e < n; ++e) {
    const VectorProcess img = phi_apply(data, tree, k, 0, VectorProcess(tree, 0, 0, VectorXd::Unit(n, e)));
    for (std::size_t i = 0; i < tree.level_size(k); ++i) {
      M.block(static_cast<Eigen::Index>(i) * n, e, n, 1) = img.at(k, i);
    }
  }
  Eigen::JacobiSVD<MatrixXd> svd(M);
  return svd.singularValues().minCoeff();
}

/// Second moments E|p(t_k)|^2 and E|q^j(t_k)|^2 per level; pass iff all finite.
inline CheckReport integrability_report(const AdjointSolution& adj, const ScenarioTree& tree) {
  CheckReport report("integrability");
  constexpr double kFinite = std::numeric_limits<double>::max();
  for (int k = adj.p.first_level(); k <= adj.p.last_level(); ++k) {
    const double m2 = expect_level(tree, k, [&](std::size_t i) { return adj.p.at(k, i).squaredNorm(); });
    report.add("E|p|^2 level " + std::to_string(k), m2, kFinite, k);
  }
  for (std::size_t j = 0; j < adj.q.size(); ++j) {
    for (int k = adj.q[j].first_level(); k <= adj.q[j].last_level(); ++k) {
      const double m2 = expect_level(tree, k, [&](std::size_t i) { return adj.q[j].at(k, i).squaredNorm(); });
      report.add("E|q^" + std::to_string(j + 1) + "|^2 level " + std::to_string(k), m2, kFinite, k);
    }
  }
  return report;
}

}  // namespace mfsmp
