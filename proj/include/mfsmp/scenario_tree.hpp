#pragma once

// Finite filtered probability space. Every expectation in the library is an
// exact finite sum over the nodes of a ScenarioTree.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "mfsmp/check_report.hpp"
#include "mfsmp/error.hpp"

namespace mfsmp {

/// Uniform time grid t_k = t0 + k h, k = 0..N+1. Controls live on k = 0..N.
struct TimeGrid {
  double t0 = 0.0;
  double h = 1.0;
  int N = 0;

  double time(int k) const { return t0 + k * h; }
  int num_levels() const { return N + 2; }

  void validate() const {
    if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("time grid: h must be finite and > 0");
    if (N < 0) throw ValidationError("time grid: N must be >= 0");
    if (!std::isfinite(t0)) throw ValidationError("time grid: t0 must be finite");
  }
};

struct SupportPoint {
  double value = 0.0;
  double prob = 0.0;
};

/// Product law of d independent scalar increments with finite support.
struct NoiseModel {
  std::string kind = "binary";  // binary | trinomial | custom
  double h = 1.0;
  double trinomial_p = 1.0 / 6.0;
  std::vector<std::vector<SupportPoint>> components;

  int dim() const { return static_cast<int>(components.size()); }

  /// Symmetric two-point law +-sqrt(h) with probability 1/2 per component.
  static NoiseModel binary(int d, double h) {
    if (d < 1) throw InvalidModelError("noise: dimension must be >= 1");
    NoiseModel m;
    m.kind = "binary";
    m.h = h;
    const double a = std::sqrt(h);
    m.components.assign(static_cast<std::size_t>(d), {{a, 0.5}, {-a, 0.5}});
    return m;
  }

  /// {-a, 0, +a} with probabilities {p, 1-2p, p} and 2 p a^2 = h.
  static NoiseModel trinomial(int d, double h, double p = 1.0 / 6.0) {
    if (d < 1) throw InvalidModelError("noise: dimension must be >= 1");
    if (!(p > 0.0 && p < 0.5)) throw InvalidModelError("noise: trinomial p must lie in (0, 1/2)");
    NoiseModel m;
    m.kind = "trinomial";
    m.h = h;
    m.trinomial_p = p;
    const double a = std::sqrt(h / (2.0 * p));
    m.components.assign(static_cast<std::size_t>(d), {{a, p}, {0.0, 1.0 - 2.0 * p}, {-a, p}});
    return m;
  }

  static NoiseModel custom(double h, std::vector<std::vector<SupportPoint>> comps) {
    NoiseModel m;
    m.kind = "custom";
    m.h = h;
    m.components = std::move(comps);
    return m;
  }

  /// Number of joint support points (product of component sizes).
  double joint_size() const {
    double s = 1.0;
    for (const auto& c : components) s *= static_cast<double>(c.size());
    return s;
  }

  struct JointPoint {
    Eigen::VectorXd w;
    double prob;
  };

  /// Joint support in lexicographic order, first component varying slowest.
  std::vector<JointPoint> joint_support() const {
    if (components.empty()) throw InvalidModelError("noise: no components");
    for (const auto& c : components) {
      if (c.empty()) throw InvalidModelError("noise: empty support");
    }
    const int d = dim();
    std::vector<JointPoint> out;
    std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
    while (true) {
      JointPoint jp{Eigen::VectorXd(d), 1.0};
      for (int j = 0; j < d; ++j) {
        const auto& sp = components[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]];
        jp.w(j) = sp.value;
        jp.prob *= sp.prob;
      }
      out.push_back(std::move(jp));
      int j = d - 1;
      while (j >= 0) {
        auto& i = idx[static_cast<std::size_t>(j)];
        if (++i < components[static_cast<std::size_t>(j)].size()) break;
        i = 0;
        --j;
      }
      if (j < 0) break;
    }
    return out;
  }
};

/// Moment residuals of the joint increment law. Throws on empty support or
/// nonpositive probabilities; everything else is reported.
inline CheckReport validate_noise(const NoiseModel& noise, double tol) {
  if (noise.components.empty()) throw InvalidModelError("noise: no components");
  for (const auto& c : noise.components) {
    if (c.empty()) throw InvalidModelError("noise: empty support");
    for (const auto& sp : c) {
      if (!(sp.prob > 0.0) || !std::isfinite(sp.prob)) {
        throw InvalidModelError("noise: probabilities must be positive");
      }
      if (!std::isfinite(sp.value)) throw InvalidModelError("noise: support values must be finite");
    }
  }
  CheckReport report("noise_moments");
  const int d = noise.dim();
  const auto joint = noise.joint_support();

  for (int j = 0; j < d; ++j) {
    double total = 0.0;
    for (const auto& sp : noise.components[static_cast<std::size_t>(j)]) total += sp.prob;
    report.add("|sum p - 1| comp " + std::to_string(j + 1), std::abs(total - 1.0), tol);
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd fourth = Eigen::VectorXd::Zero(d);
  for (const auto& jp : joint) {
    mean += jp.prob * jp.w;
    second += jp.prob * jp.w * jp.w.transpose();
    fourth += jp.prob * jp.w.array().pow(4).matrix();
  }
  for (int j = 0; j < d; ++j) {
    const std::string c = std::to_string(j + 1);
    report.add("|E w| comp " + c, std::abs(mean(j)), tol);
    report.add("|E w^2 - h| comp " + c, std::abs(second(j, j) - noise.h), tol);
    // Finite support: the fourth moment is finite whenever it is representable.
    report.add("E w^4 comp " + c + " (finite)", std::isfinite(fourth(j)) ? 0.0 : INFINITY, tol);
    report.note("E w^4 comp " + c + " = " + std::to_string(fourth(j)));
  }
  double cross = 0.0;
  for (int m = 0; m < d; ++m) {
    for (int l = 0; l < d; ++l) {
      if (m != l) cross = std::max(cross, std::abs(second(m, l)));
    }
  }
  report.add("max |E w^m w^l - h delta_ml|, m != l", cross, tol);
  return report;
}

struct TreeNode {
  std::size_t id = 0;       // global breadth-first id
  int level = 0;
  long parent = -1;         // local index in level-1, -1 at the root
  std::size_t first_child = 0;  // local index in level+1
  std::size_t child_count = 0;
  Eigen::VectorXd increment;  // w_h(t_{level-1}); empty at the root
  double cond_prob = 1.0;
  double prob = 1.0;
};

/// Immutable tree of levels 0..N+1. Node (k, i) is the i-th node of level k;
/// the edge into a level-(k+1) node carries the increment w_h(t_k).
class ScenarioTree {
 public:
  static constexpr double kDefaultNodeCap = 1e6;

  ScenarioTree() = default;

  ScenarioTree(const TimeGrid& grid, const NoiseModel& noise, double node_cap = kDefaultNodeCap)
      : grid_(grid), d_(noise.dim()) {
    grid.validate();
    if (std::abs(noise.h - grid.h) > 1e-12 * std::max(1.0, grid.h)) {
      throw UsageError("build_tree: noise law was built for h=" + std::to_string(noise.h) +
                       " but the grid has h=" + std::to_string(grid.h));
    }
    const auto report = validate_noise(noise, 1e-12 * std::max(1.0, grid.h));
    if (!report.pass) {
      const auto w = report.worst();
      throw InvalidModelError("build_tree: noise law fails moment conditions (" +
                              (w ? w->label : std::string("?")) + ")");
    }
    const auto joint = noise.joint_support();
    const double b = static_cast<double>(joint.size());
    double total = 0.0;
    double width = 1.0;
    for (int k = 0; k <= grid.N + 1; ++k) {
      total += width;
      width *= b;
    }
    if (total > node_cap) {
      throw TooLargeError("instance too large for exact enumeration: " + std::to_string(total) +
                          " nodes exceed the cap of " + std::to_string(node_cap));
    }
    levels_.resize(static_cast<std::size_t>(grid.N + 2));
    TreeNode root;
    levels_[0].push_back(root);
    std::size_t next_id = 1;
    for (int k = 0; k <= grid.N; ++k) {
      auto& parents = levels_[static_cast<std::size_t>(k)];
      auto& children = levels_[static_cast<std::size_t>(k + 1)];
      children.reserve(parents.size() * joint.size());
      for (std::size_t i = 0; i < parents.size(); ++i) {
        parents[i].first_child = children.size();
        parents[i].child_count = joint.size();
        for (const auto& jp : joint) {
          TreeNode c;
          c.id = next_id++;
          c.level = k + 1;
          c.parent = static_cast<long>(i);
          c.increment = jp.w;
          c.cond_prob = jp.prob;
          c.prob = parents[i].prob * jp.prob;
          children.push_back(std::move(c));
        }
      }
    }
    level_begin_.resize(levels_.size());
    std::size_t acc = 0;
    for (std::size_t k = 0; k < levels_.size(); ++k) {
      level_begin_[k] = acc;
      acc += levels_[k].size();
    }
  }

  const TimeGrid& grid() const { return grid_; }
  int noise_dim() const { return d_; }
  /// Index of the last level (N+1).
  int last_level() const { return static_cast<int>(levels_.size()) - 1; }
  int num_levels() const { return static_cast<int>(levels_.size()); }
  std::size_t level_size(int k) const { return levels_.at(static_cast<std::size_t>(check_level(k))).size(); }
  std::size_t node_count() const {
    std::size_t n = 0;
    for (const auto& l : levels_) n += l.size();
    return n;
  }
  /// Nodes on levels 0..N, i.e. the nodes carrying a control.
  std::size_t control_node_count() const { return node_count() - levels_.back().size(); }

  const TreeNode& node(int k, std::size_t i) const {
    return levels_[static_cast<std::size_t>(check_level(k))].at(i);
  }
  std::span<const TreeNode> level(int k) const { return levels_[static_cast<std::size_t>(check_level(k))]; }
  std::size_t global_id(int k, std::size_t i) const { return level_begin_[static_cast<std::size_t>(check_level(k))] + i; }

 private:
  int check_level(int k) const {
    if (k < 0 || k >= static_cast<int>(levels_.size())) {
      throw UsageError("scenario tree: level " + std::to_string(k) + " out of range");
    }
    return k;
  }

  TimeGrid grid_;
  int d_ = 0;
  std::vector<std::vector<TreeNode>> levels_;
  std::vector<std::size_t> level_begin_;
};

inline ScenarioTree build_tree(const TimeGrid& grid, const NoiseModel& noise,
                               double node_cap = ScenarioTree::kDefaultNodeCap) {
  return ScenarioTree(grid, noise, node_cap);
}

namespace detail {

inline double zero_like(double) { return 0.0; }

template <class Derived>
typename Derived::PlainObject zero_like(const Eigen::MatrixBase<Derived>& v) {
  return Derived::PlainObject::Zero(v.rows(), v.cols());
}

}  // namespace detail

/// Values attached to every node of levels [first, last]. Value type is a scalar
/// or an Eigen vector/matrix with a shape fixed by the initial value.
template <class T>
class AdaptedProcess {
 public:
  AdaptedProcess() = default;

  AdaptedProcess(const ScenarioTree& tree, int first_level, int last_level, const T& init)
      : first_(first_level) {
    if (first_level < 0 || last_level > tree.last_level() || first_level > last_level) {
      throw UsageError("adapted process: invalid level range [" + std::to_string(first_level) + ", " +
                       std::to_string(last_level) + "]");
    }
    values_.resize(static_cast<std::size_t>(last_level - first_level + 1));
    for (int k = first_level; k <= last_level; ++k) {
      values_[static_cast<std::size_t>(k - first_level)].assign(tree.level_size(k), init);
    }
  }

  int first_level() const { return first_; }
  int last_level() const { return first_ + static_cast<int>(values_.size()) - 1; }
  bool defined_at(int k) const { return !values_.empty() && k >= first_ && k <= last_level(); }

  T& at(int k, std::size_t i) { return values_[slot(k)].at(i); }
  const T& at(int k, std::size_t i) const { return values_[slot(k)].at(i); }

  std::span<T> level(int k) { return values_[slot(k)]; }
  std::span<const T> level(int k) const { return values_[slot(k)]; }

 private:
  std::size_t slot(int k) const {
    if (!defined_at(k)) {
      throw UsageError("adapted process: level " + std::to_string(k) + " outside [" + std::to_string(first_) +
                       ", " + std::to_string(last_level()) + "]");
    }
    return static_cast<std::size_t>(k - first_);
  }

  int first_ = 0;
  std::vector<std::vector<T>> values_;
};

using VectorProcess = AdaptedProcess<Eigen::VectorXd>;
using MatrixProcess = AdaptedProcess<Eigen::MatrixXd>;

/// E{ value(child) | node (k, i) } for an arbitrary child functional.
template <class Fn>
auto cond_expect(const ScenarioTree& tree, int k, std::size_t i, Fn&& value_of_child) {
  const auto& n = tree.node(k, i);
  if (n.child_count == 0) throw UsageError("cond_expect: node has no children (level " + std::to_string(k) + ")");
  const auto& children = tree.level(k + 1);
  using R = std::decay_t<decltype(value_of_child(n.first_child))>;
  using V = decltype(detail::zero_like(std::declval<R>()));
  V acc = detail::zero_like(value_of_child(n.first_child));
  for (std::size_t c = n.first_child; c < n.first_child + n.child_count; ++c) {
    acc += children[c].cond_prob * value_of_child(c);
  }
  return acc;
}

/// E{ proc(t_{k+1}) | F_k } at node (k, i).
template <class T>
T cond_expect(const ScenarioTree& tree, const AdaptedProcess<T>& proc, int k, std::size_t i) {
  if (!proc.defined_at(k + 1)) {
    throw UsageError("cond_expect: process not defined on level " + std::to_string(k + 1));
  }
  return cond_expect(tree, k, i, [&](std::size_t c) -> const T& { return proc.at(k + 1, c); });
}

/// E{ value(node) } over level k.
template <class Fn>
auto expect_level(const ScenarioTree& tree, int k, Fn&& value_of_node) {
  const auto nodes = tree.level(k);
  using R = std::decay_t<decltype(value_of_node(std::size_t{0}))>;
  using V = decltype(detail::zero_like(std::declval<R>()));
  V acc = detail::zero_like(value_of_node(std::size_t{0}));
  for (std::size_t i = 0; i < nodes.size(); ++i) acc += nodes[i].prob * value_of_node(i);
  return acc;
}

/// Unconditional expectation of proc at level k.
template <class T>
T expect(const ScenarioTree& tree, const AdaptedProcess<T>& proc, int k) {
  if (!proc.defined_at(k)) throw UsageError("expect: process not defined on level " + std::to_string(k));
  return expect_level(tree, k, [&](std::size_t i) -> const T& { return proc.at(k, i); });
}

}  // namespace mfsmp
