#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mfsmp/check_report.hpp"
#include "mfsmp/coefficients.hpp"
#include "mfsmp/error.hpp"
#include "mfsmp/scenario_tree.hpp"

namespace mfsmp {

/// Componentwise box lo <= v <= hi; entries may be infinite.
struct Box {
  VectorXd lo;
  VectorXd hi;

  static Box unbounded(int r) {
    return {VectorXd::Constant(r, -std::numeric_limits<double>::infinity()),
            VectorXd::Constant(r, std::numeric_limits<double>::infinity())};
  }
  static Box uniform(int r, double lo, double hi) { return {VectorXd::Constant(r, lo), VectorXd::Constant(r, hi)}; }

  bool contains(const VectorXd& v) const {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (!(v(i) >= lo(i) && v(i) <= hi(i))) return false;
    }
    return true;
  }
  bool bounded() const { return lo.allFinite() && hi.allFinite(); }
};

/// Admissible boxes U(t_k) for k = 0..N. Boxes are convex by construction.
class AdmissibleSet {
 public:
  AdmissibleSet() = default;
  explicit AdmissibleSet(std::vector<Box> per_step) : boxes_(std::move(per_step)) {}

  static AdmissibleSet uniform(const Box& box, int N) {
    return AdmissibleSet(std::vector<Box>(static_cast<std::size_t>(N + 1), box));
  }

  const Box& at(int k) const {
    if (k < 0 || k >= steps()) throw UsageError("admissible set: step " + std::to_string(k) + " out of range");
    return boxes_[static_cast<std::size_t>(k)];
  }
  int steps() const { return static_cast<int>(boxes_.size()); }

 private:
  std::vector<Box> boxes_;
};

enum class Direction { minimize, maximize };

inline const char* to_string(Direction d) { return d == Direction::minimize ? "minimize" : "maximize"; }

/// Fully validated problem instance. `model()` is the internal (minimize)
/// coefficient view; `native` keeps the user's orientation.
struct ProblemSpec {
  int n = 0;
  int r = 0;
  int d = 0;
  TimeGrid grid;
  NoiseModel noise;
  VectorXd x0;
  std::shared_ptr<const Coefficients> native;
  std::shared_ptr<const Coefficients> internal;
  AdmissibleSet admissible;
  Direction direction = Direction::minimize;

  const Coefficients& model() const { return *internal; }
  /// native objective = objective_sign() * internal cost
  double objective_sign() const { return direction == Direction::maximize ? -1.0 : 1.0; }
  Step step(int k) const { return {k, grid.time(k)}; }
};

inline ProblemSpec make_spec(const TimeGrid& grid, const NoiseModel& noise, const VectorXd& x0,
                             std::shared_ptr<const Coefficients> coeffs, AdmissibleSet admissible,
                             Direction direction = Direction::minimize) {
  grid.validate();
  if (!coeffs) throw ValidationError("problem: coefficients missing");
  ProblemSpec spec;
  spec.n = coeffs->state_dim();
  spec.r = coeffs->control_dim();
  spec.d = coeffs->noise_dim();
  if (spec.n < 1 || spec.r < 1 || spec.d < 1) throw ValidationError("problem: dimensions must be >= 1");
  if (noise.dim() != spec.d) {
    throw ValidationError("problem: noise dimension " + std::to_string(noise.dim()) +
                          " does not match coefficient noise dimension " + std::to_string(spec.d));
  }
  if (x0.size() != spec.n) {
    throw ValidationError("problem: x0 has length " + std::to_string(x0.size()) + ", expected n=" +
                          std::to_string(spec.n));
  }
  if (!x0.allFinite()) throw ValidationError("problem: x0 must be finite");
  if (admissible.steps() != grid.N + 1) {
    throw ValidationError("problem: admissible set covers " + std::to_string(admissible.steps()) +
                          " steps, expected N+1=" + std::to_string(grid.N + 1));
  }
  for (int k = 0; k <= grid.N; ++k) {
    const auto& b = admissible.at(k);
    if (b.lo.size() != spec.r || b.hi.size() != spec.r) {
      throw ValidationError("problem: admissible box at step " + std::to_string(k) + " has wrong dimension");
    }
    for (int i = 0; i < spec.r; ++i) {
      if (std::isnan(b.lo(i)) || std::isnan(b.hi(i)) || b.lo(i) > b.hi(i)) {
        throw ValidationError("problem: admissible box at step " + std::to_string(k) + " has lo > hi in component " +
                              std::to_string(i + 1));
      }
    }
  }
  spec.grid = grid;
  spec.noise = noise;
  spec.x0 = x0;
  spec.native = coeffs;
  spec.internal = direction == Direction::maximize
                      ? std::shared_ptr<const Coefficients>(std::make_shared<NegatedObjective>(coeffs))
                      : coeffs;
  spec.admissible = std::move(admissible);
  spec.direction = direction;
  return spec;
}

/// Componentwise clamp of v into U(t_k).
inline VectorXd project(const ProblemSpec& spec, int k, const VectorXd& v) {
  const auto& b = spec.admissible.at(k);
  if (v.size() != b.lo.size()) throw UsageError("project: control has wrong dimension");
  return v.cwiseMax(b.lo).cwiseMin(b.hi);
}

// ---------------------------------------------------------------------------
// Built-in families
// ---------------------------------------------------------------------------

struct ProdconsOptions {
  ProdconsParams params;
  double h = 0.5;
  int N = 5;
  double t0 = 0.0;
  double x0 = 1.0;
  /// Lower consumption bound keeping the utility finite.
  double v_min = 1e-6;
  double v_max = std::numeric_limits<double>::infinity();
};

inline ProblemSpec builtin_prodcons(const ProdconsOptions& o) {
  TimeGrid grid{o.t0, o.h, o.N};
  grid.validate();
  if (!(o.v_min >= 0.0) || !(o.v_min <= o.v_max)) throw ValidationError("prodcons: need 0 <= v_min <= v_max");
  auto coeffs = std::make_shared<Prodcons>(o.params, o.h);
  return make_spec(grid, NoiseModel::binary(1, o.h), VectorXd::Constant(1, o.x0), coeffs,
                   AdmissibleSet::uniform(Box::uniform(1, o.v_min, o.v_max), o.N), Direction::maximize);
}

struct LqOptions {
  TimeGrid grid;
  NoiseModel noise = NoiseModel::binary(1, 1.0);
  VectorXd x0;
  std::vector<LqStep> steps;  // one entry (time-invariant) or N+1 entries
  LqTerminal terminal;
  AdmissibleSet admissible;
  Direction direction = Direction::minimize;
};

inline ProblemSpec builtin_lq(const LqOptions& o) {
  if (o.steps.empty()) throw ValidationError("lq_meanfield: no step data");
  if (o.steps.size() != 1 && o.steps.size() != static_cast<std::size_t>(o.grid.N + 1)) {
    throw ValidationError("lq_meanfield: tables must provide 1 or N+1 steps");
  }
  const int n = static_cast<int>(o.steps.front().A.rows());
  const int r = static_cast<int>(o.steps.front().B.cols());
  const int d = static_cast<int>(o.steps.front().C.size());
  auto coeffs = std::make_shared<LqMeanField>(n, r, d, o.steps, o.terminal);
  return make_spec(o.grid, o.noise, o.x0, coeffs, o.admissible, o.direction);
}

// ---------------------------------------------------------------------------
// validate_spec: sampled derivative check
// ---------------------------------------------------------------------------

namespace detail {

/// Central-difference Jacobian of fn at z.
inline MatrixXd central_jacobian(const std::function<VectorXd(const VectorXd&)>& fn, const VectorXd& z, double step) {
  const VectorXd f0 = fn(z);
  MatrixXd J(f0.size(), z.size());
  VectorXd zp = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    zp(i) = z(i) + step;
    const VectorXd fp = fn(zp);
    zp(i) = z(i) - step;
    const VectorXd fm = fn(zp);
    zp(i) = z(i);
    J.col(i) = (fp - fm) / (2.0 * step);
  }
  return J;
}

inline double relative_error(const MatrixXd& analytic, const MatrixXd& fd) {
  if (analytic.rows() != fd.rows() || analytic.cols() != fd.cols()) return INFINITY;
  if (analytic.size() == 0) return 0.0;
  return (analytic - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff());
}

inline VectorXd sample_control(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  VectorXd u(box.lo.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double lo = box.lo(i), hi = box.hi(i);
    const double s = unit(rng);
    if (std::isfinite(lo) && std::isfinite(hi)) {
      // stay off the boundary where some utilities blow up
      u(i) = lo + (hi - lo) * (0.1 + 0.8 * s);
    } else if (std::isfinite(lo)) {
      u(i) = lo + 0.5 + 1.5 * s;
    } else if (std::isfinite(hi)) {
      u(i) = hi - 0.5 - 1.5 * s;
    } else {
      u(i) = -1.0 + 2.0 * s;
    }
  }
  return u;
}

}  // namespace detail

/// Checks dimension consistency, nonempty boxes and the analytic partials
/// against central finite differences (step 1e-6) at `points` random points.
/// Samples smoothness only; it does not certify global Lipschitz constants.
inline CheckReport validate_spec(const ProblemSpec& spec, double tol = 1e-6, int points = 20,
                                 std::uint64_t seed = 20240601) {
  CheckReport report("validate_spec");
  const auto& m = *spec.native;
  const int n = spec.n, r = spec.r, d = spec.d;
  const double dims_ok = (m.state_dim() == n && m.control_dim() == r && m.noise_dim() == d &&
                          spec.noise.dim() == d && spec.x0.size() == n)
                             ? 0.0
                             : 1.0;
  report.add("dimension mismatch", dims_ok, 0.0);
  double empty_box = 0.0;
  for (int k = 0; k <= spec.grid.N; ++k) {
    const auto& b = spec.admissible.at(k);
    for (int i = 0; i < r; ++i) {
      if (!(b.lo(i) <= b.hi(i))) empty_box = 1.0;
    }
  }
  report.add("empty admissible box", empty_box, 0.0);

  constexpr double kStep = 1e-6;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<int> step_pick(0, spec.grid.N);

  double e_fx = 0, e_fy = 0, e_fu = 0, e_sx = 0, e_sy = 0, e_su = 0;
  double e_lx = 0, e_ly = 0, e_lu = 0, e_px = 0, e_py = 0;
  for (int p = 0; p < points; ++p) {
    const int k = step_pick(rng);
    const Step s = spec.step(k);
    VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) x(i) = spec.x0(i) + unit(rng);
    for (int i = 0; i < n; ++i) y(i) = spec.x0(i) + unit(rng);
    const VectorXd u = detail::sample_control(spec.admissible.at(k), rng);

    using detail::central_jacobian;
    using detail::relative_error;
    e_fx = std::max(e_fx, relative_error(m.drift_x(s, x, y, u),
                                         central_jacobian([&](const VectorXd& z) { return m.drift(s, z, y, u); }, x, kStep)));
    e_fy = std::max(e_fy, relative_error(m.drift_y(s, x, y, u),
                                         central_jacobian([&](const VectorXd& z) { return m.drift(s, x, z, u); }, y, kStep)));
    e_fu = std::max(e_fu, relative_error(m.drift_u(s, x, y, u),
                                         central_jacobian([&](const VectorXd& z) { return m.drift(s, x, y, z); }, u, kStep)));
    for (int j = 0; j < d; ++j) {
      e_sx = std::max(e_sx, relative_error(m.diffusion_x(j, s, x, y, u),
                                           central_jacobian([&](const VectorXd& z) { return m.diffusion(j, s, z, y, u); }, x, kStep)));
      e_sy = std::max(e_sy, relative_error(m.diffusion_y(j, s, x, y, u),
                                           central_jacobian([&](const VectorXd& z) { return m.diffusion(j, s, x, z, u); }, y, kStep)));
      e_su = std::max(e_su, relative_error(m.diffusion_u(j, s, x, y, u),
                                           central_jacobian([&](const VectorXd& z) { return m.diffusion(j, s, x, y, z); }, u, kStep)));
    }
    auto scalar = [](double v) { return VectorXd::Constant(1, v); };
    e_lx = std::max(e_lx, relative_error(m.running_cost_x(s, x, y, u).transpose(),
                                         central_jacobian([&](const VectorXd& z) { return scalar(m.running_cost(s, z, y, u)); }, x, kStep)));
    e_ly = std::max(e_ly, relative_error(m.running_cost_y(s, x, y, u).transpose(),
                                         central_jacobian([&](const VectorXd& z) { return scalar(m.running_cost(s, x, z, u)); }, y, kStep)));
    e_lu = std::max(e_lu, relative_error(m.running_cost_u(s, x, y, u).transpose(),
                                         central_jacobian([&](const VectorXd& z) { return scalar(m.running_cost(s, x, y, z)); }, u, kStep)));
    e_px = std::max(e_px, relative_error(m.terminal_cost_x(x, y).transpose(),
                                         central_jacobian([&](const VectorXd& z) { return scalar(m.terminal_cost(z, y)); }, x, kStep)));
    e_py = std::max(e_py, relative_error(m.terminal_cost_y(x, y).transpose(),
                                         central_jacobian([&](const VectorXd& z) { return scalar(m.terminal_cost(x, z)); }, y, kStep)));
  }
  report.add("f_x", e_fx, tol);
  report.add("f_y", e_fy, tol);
  report.add("f_u", e_fu, tol);
  report.add("sigma_x", e_sx, tol);
  report.add("sigma_y", e_sy, tol);
  report.add("sigma_u", e_su, tol);
  report.add("l_x", e_lx, tol);
  report.add("l_y", e_ly, tol);
  report.add("l_u", e_lu, tol);
  report.add("phi_x", e_px, tol);
  report.add("phi_y", e_py, tol);
  report.note("sampled smoothness check; global Lipschitz constants are not certified");
  report.note("convexity of the coefficient image set is not verified");
  return report;
}

}  // namespace mfsmp
