#pragma once

// Independent reference computations. None of these go through the adjoint
// machinery they are used to check.

#include <cmath>
#include <vector>

#include "mfsmp/adjoint.hpp"
#include "mfsmp/forward.hpp"
#include "mfsmp/parallel.hpp"
#include "mfsmp/testing/instances.hpp"

namespace mfsmp::testing {

/// Probability-weighted cost terms P(node) l(node) on levels 0..N followed by
/// P(leaf) phi(leaf), in a fixed order.
inline std::vector<double> cost_terms(const ProblemSpec& spec, const ScenarioTree& tree, const ControlProcess& u) {
  const auto traj = simulate(spec, tree, u);
  const auto& m = spec.model();
  std::vector<double> out;
  out.reserve(tree.node_count());
  for (int k = 0; k <= spec.grid.N; ++k) {
    for (std::size_t i = 0; i < tree.level_size(k); ++i) {
      out.push_back(tree.node(k, i).prob *
                    m.running_cost(spec.step(k), traj.x.at(k, i), traj.mean[static_cast<std::size_t>(k)], u.at(k, i)));
    }
  }
  const int T = spec.grid.N + 1;
  for (std::size_t i = 0; i < tree.level_size(T); ++i) {
    out.push_back(tree.node(T, i).prob * m.terminal_cost(traj.x.at(T, i), traj.mean[static_cast<std::size_t>(T)]));
  }
  return out;
}

/// Central finite-difference gradient of J, divided by the node probability so
/// that it is comparable with the probability-weighted gradient. Differences
/// are summed term by term, so unaffected terms cancel exactly.
inline ControlProcess fd_gradient(const ProblemSpec& spec, const ScenarioTree& tree, const ControlProcess& u,
                                  double step = 1e-5) {
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
  ControlProcess g(tree, 0, spec.grid.N, VectorXd::Zero(spec.r));
  parallel_for(coords.size(), [&](std::size_t c) {
    const Coord& co = coords[c];
    ControlProcess up = u, down = u;
    up.at(co.k, co.i)(co.e) += step;
    down.at(co.k, co.i)(co.e) -= step;
    const auto a = cost_terms(spec, tree, up);
    const auto b = cost_terms(spec, tree, down);
    double diff = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) diff += a[t] - b[t];
    g.at(co.k, co.i)(co.e) = diff / (2.0 * step * tree.node(co.k, co.i).prob);
  });
  return g;
}

/// max |a - b| / max(max |b|, 1) over all control coordinates.
inline double relative_gap(const ControlProcess& a, const ControlProcess& b) {
  double num = 0.0, den = 1.0;
  for (int k = a.first_level(); k <= a.last_level(); ++k) {
    for (std::size_t i = 0; i < a.level(k).size(); ++i) {
      num = std::max(num, (a.at(k, i) - b.at(k, i)).cwiseAbs().maxCoeff());
      den = std::max(den, b.at(k, i).cwiseAbs().maxCoeff());
    }
  }
  return num / den;
}

/// Random coefficients of the linear equation, including forward forcing.
inline LinearBsdeData random_linear_data(Rng& rng, const ScenarioTree& tree, int n, bool mean_field, double scale = 0.4) {
  const int d = tree.noise_dim();
  LinearBsdeData data = LinearBsdeData::zero(tree, n, d);
  const int N = data.N();
  std::vector<VectorProcess> psi(static_cast<std::size_t>(d), VectorProcess(tree, 0, N, VectorXd::Zero(n)));
  VectorProcess phi(tree, 0, N, VectorXd::Zero(n));
  for (int k = 0; k <= N; ++k) {
    for (std::size_t i = 0; i < tree.level_size(k); ++i) {
      data.A.at(k, i) = random_matrix(rng, n, n, scale);
      if (mean_field) data.A1.at(k, i) = random_matrix(rng, n, n, scale);
      for (int j = 0; j < d; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        data.B[jj].at(k, i) = random_matrix(rng, n, n, scale);
        if (mean_field) data.B1[jj].at(k, i) = random_matrix(rng, n, n, scale);
        psi[jj].at(k, i) = random_vector(rng, n, 1.0);
      }
      data.ell.at(k, i) = random_vector(rng, n, 1.0);
      phi.at(k, i) = random_vector(rng, n, 1.0);
    }
  }
  for (std::size_t i = 0; i < tree.level_size(N + 1); ++i) data.terminal.at(N + 1, i) = random_vector(rng, n, 1.0);
  data.forcing = std::move(phi);
  data.forcing_noise = std::move(psi);
  return data;
}

/// Step-by-step recursion of the linear forward equation
///   z(t+h) = z + A z + A1 E z + phi + sum_j (B^j z + B1^j E z + psi^j) w^j
inline VectorProcess direct_linear_forward(const LinearBsdeData& data, const ScenarioTree& tree, const VectorXd& z0) {
  const int N = data.N();
  VectorProcess z(tree, 0, N + 1, VectorXd::Zero(data.n));
  z.at(0, 0) = z0;
  for (int k = 0; k <= N; ++k) {
    VectorXd mean = VectorXd::Zero(data.n);
    for (std::size_t i = 0; i < tree.level_size(k); ++i) mean += tree.node(k, i).prob * z.at(k, i);
    for (std::size_t i = 0; i < tree.level_size(k); ++i) {
      const auto& node = tree.node(k, i);
      const VectorXd& zi = z.at(k, i);
      for (std::size_t c = node.first_child; c < node.first_child + node.child_count; ++c) {
        VectorXd next = zi + data.A.at(k, i) * zi + data.A1.at(k, i) * mean + data.forcing->at(k, i);
        for (int j = 0; j < data.d; ++j) {
          const auto jj = static_cast<std::size_t>(j);
          next += (data.B[jj].at(k, i) * zi + data.B1[jj].at(k, i) * mean + (*data.forcing_noise)[jj].at(k, i)) *
                  tree.node(k + 1, c).increment(j);
        }
        z.at(k + 1, c) = next;
      }
    }
  }
  return z;
}

inline VectorProcess random_level_process(Rng& rng, const ScenarioTree& tree, int k, int n) {
  VectorProcess z(tree, k, k, VectorXd::Zero(n));
  for (auto& v : z.level(k)) v = random_vector(rng, n, 1.0);
  return z;
}

/// max over k <= m <= l of |Phi(l, k) z - Phi(l, m) Phi(m, k) z|.
inline double semigroup_residual(const LinearBsdeData& data, const ScenarioTree& tree, Rng& rng) {
  const int N = data.N();
  double worst = 0.0;
  for (int k = 0; k <= N + 1; ++k) {
    const VectorProcess z = random_level_process(rng, tree, k, data.n);
    for (int l = k; l <= N + 1; ++l) {
      const VectorProcess direct = phi_apply(data, tree, l, k, z);
      for (int m = k; m <= l; ++m) {
        const VectorProcess composed = phi_apply(data, tree, l, m, phi_apply(data, tree, m, k, z));
        for (std::size_t i = 0; i < tree.level_size(l); ++i) {
          worst = std::max(worst, (direct.at(l, i) - composed.at(l, i)).cwiseAbs().maxCoeff());
        }
      }
    }
  }
  return worst;
}

inline double max_abs_diff(const VectorProcess& a, const VectorProcess& b) {
  double worst = 0.0;
  for (int k = a.first_level(); k <= a.last_level(); ++k) {
    for (std::size_t i = 0; i < a.level(k).size(); ++i) {
      worst = std::max(worst, (a.at(k, i) - b.at(k, i)).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace mfsmp::testing
