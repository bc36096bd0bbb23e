#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mfsmp/error.hpp"

namespace mfsmp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Where a coefficient is evaluated: step index k (0..N) and time t_k.
struct Step {
  int k = 0;
  double t = 0.0;
};

/// Coefficients f, sigma^j, l, phi of the controlled mean-field system together
/// with their analytic partials. The argument `y` is always the mean E x(t).
/// Implementations must be pure so nodes can be evaluated concurrently.
class Coefficients {
 public:
  virtual ~Coefficients() = default;

  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;
  virtual int noise_dim() const = 0;

  virtual VectorXd drift(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const = 0;
  virtual MatrixXd drift_x(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const = 0;
  virtual MatrixXd drift_y(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const = 0;
  virtual MatrixXd drift_u(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const = 0;

  virtual VectorXd diffusion(int j, const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const = 0;
  virtual MatrixXd diffusion_x(int j, const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const = 0;
  virtual MatrixXd diffusion_y(int j, const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const = 0;
  virtual MatrixXd diffusion_u(int j, const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const = 0;

  virtual double running_cost(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const = 0;
  virtual VectorXd running_cost_x(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const = 0;
  virtual VectorXd running_cost_y(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const = 0;
  virtual VectorXd running_cost_u(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const = 0;

  virtual double terminal_cost(const VectorXd& x, const VectorXd& y) const = 0;
  virtual VectorXd terminal_cost_x(const VectorXd& x, const VectorXd& y) const = 0;
  virtual VectorXd terminal_cost_y(const VectorXd& x, const VectorXd& y) const = 0;
};

/// Forwards everything to an inner set; subclasses override what they change.
class ForwardingCoefficients : public Coefficients {
 public:
  explicit ForwardingCoefficients(std::shared_ptr<const Coefficients> inner) : inner_(std::move(inner)) {}

  int state_dim() const override { return inner_->state_dim(); }
  int control_dim() const override { return inner_->control_dim(); }
  int noise_dim() const override { return inner_->noise_dim(); }

  VectorXd drift(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return inner_->drift(s, x, y, u);
  }
  MatrixXd drift_x(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return inner_->drift_x(s, x, y, u);
  }
  MatrixXd drift_y(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return inner_->drift_y(s, x, y, u);
  }
  MatrixXd drift_u(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return inner_->drift_u(s, x, y, u);
  }
  VectorXd diffusion(int j, const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return inner_->diffusion(j, s, x, y, u);
  }
  MatrixXd diffusion_x(int j, const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return inner_->diffusion_x(j, s, x, y, u);
  }
  MatrixXd diffusion_y(int j, const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return inner_->diffusion_y(j, s, x, y, u);
  }
  MatrixXd diffusion_u(int j, const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return inner_->diffusion_u(j, s, x, y, u);
  }
  double running_cost(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return inner_->running_cost(s, x, y, u);
  }
  VectorXd running_cost_x(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return inner_->running_cost_x(s, x, y, u);
  }
  VectorXd running_cost_y(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return inner_->running_cost_y(s, x, y, u);
  }
  VectorXd running_cost_u(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return inner_->running_cost_u(s, x, y, u);
  }
  double terminal_cost(const VectorXd& x, const VectorXd& y) const override { return inner_->terminal_cost(x, y); }
  VectorXd terminal_cost_x(const VectorXd& x, const VectorXd& y) const override {
    return inner_->terminal_cost_x(x, y);
  }
  VectorXd terminal_cost_y(const VectorXd& x, const VectorXd& y) const override {
    return inner_->terminal_cost_y(x, y);
  }

 protected:
  const Coefficients& inner() const { return *inner_; }

 private:
  std::shared_ptr<const Coefficients> inner_;
};

/// Negates l and phi. Turns a maximization objective into the internal
/// minimization convention.
class NegatedObjective final : public ForwardingCoefficients {
 public:
  using ForwardingCoefficients::ForwardingCoefficients;

  double running_cost(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return -inner().running_cost(s, x, y, u);
  }
  VectorXd running_cost_x(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return -inner().running_cost_x(s, x, y, u);
  }
  VectorXd running_cost_y(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return -inner().running_cost_y(s, x, y, u);
  }
  VectorXd running_cost_u(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    return -inner().running_cost_u(s, x, y, u);
  }
  double terminal_cost(const VectorXd& x, const VectorXd& y) const override { return -inner().terminal_cost(x, y); }
  VectorXd terminal_cost_x(const VectorXd& x, const VectorXd& y) const override {
    return -inner().terminal_cost_x(x, y);
  }
  VectorXd terminal_cost_y(const VectorXd& x, const VectorXd& y) const override {
    return -inner().terminal_cost_y(x, y);
  }
};

// ---------------------------------------------------------------------------
// lq_meanfield
// ---------------------------------------------------------------------------

/// Per-step data of the affine/quadratic family
///   f   = A x + Abar y + B u + c
///   s^j = C^j x + Cbar^j y + D^j u + e^j
///   l   = x'Qx + y'Qbar y + u'Ru + qx'x + qy'y + ru'u
struct LqStep {
  MatrixXd A, Abar, B;
  VectorXd c;
  std::vector<MatrixXd> C, Cbar, D;
  std::vector<VectorXd> e;
  MatrixXd Q, Qbar, R;
  VectorXd qx, qy, ru;

  static LqStep zero(int n, int r, int d) {
    LqStep s;
    s.A = MatrixXd::Zero(n, n);
    s.Abar = MatrixXd::Zero(n, n);
    s.B = MatrixXd::Zero(n, r);
    s.c = VectorXd::Zero(n);
    s.C.assign(static_cast<std::size_t>(d), MatrixXd::Zero(n, n));
    s.Cbar.assign(static_cast<std::size_t>(d), MatrixXd::Zero(n, n));
    s.D.assign(static_cast<std::size_t>(d), MatrixXd::Zero(n, r));
    s.e.assign(static_cast<std::size_t>(d), VectorXd::Zero(n));
    s.Q = MatrixXd::Zero(n, n);
    s.Qbar = MatrixXd::Zero(n, n);
    s.R = MatrixXd::Zero(r, r);
    s.qx = VectorXd::Zero(n);
    s.qy = VectorXd::Zero(n);
    s.ru = VectorXd::Zero(r);
    return s;
  }
};

/// phi = x'Gx + y'Gbar y + gx'x + gy'y
struct LqTerminal {
  MatrixXd G, Gbar;
  VectorXd gx, gy;

  static LqTerminal zero(int n) {
    return {MatrixXd::Zero(n, n), MatrixXd::Zero(n, n), VectorXd::Zero(n), VectorXd::Zero(n)};
  }
};

class LqMeanField final : public Coefficients {
 public:
  LqMeanField(int n, int r, int d, std::vector<LqStep> steps, LqTerminal terminal)
      : n_(n), r_(r), d_(d), steps_(std::move(steps)), terminal_(std::move(terminal)) {
    if (steps_.empty()) throw ValidationError("lq_meanfield: at least one step required");
    for (std::size_t k = 0; k < steps_.size(); ++k) check_step(steps_[k], k);
    check(terminal_.G, n, n, "G", -1);
    check(terminal_.Gbar, n, n, "Gbar", -1);
    check(terminal_.gx, n, 1, "gx", -1);
    check(terminal_.gy, n, 1, "gy", -1);
  }

  int state_dim() const override { return n_; }
  int control_dim() const override { return r_; }
  int noise_dim() const override { return d_; }
  std::size_t step_count() const { return steps_.size(); }
  const LqStep& step(int k) const { return steps_[std::min<std::size_t>(static_cast<std::size_t>(k), steps_.size() - 1)]; }
  const LqTerminal& terminal() const { return terminal_; }

  VectorXd drift(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    const auto& p = step(s.k);
    return p.A * x + p.Abar * y + p.B * u + p.c;
  }
  MatrixXd drift_x(const Step& s, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return step(s.k).A;
  }
  MatrixXd drift_y(const Step& s, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return step(s.k).Abar;
  }
  MatrixXd drift_u(const Step& s, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return step(s.k).B;
  }
  VectorXd diffusion(int j, const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    const auto& p = step(s.k);
    const auto jj = static_cast<std::size_t>(j);
    return p.C[jj] * x + p.Cbar[jj] * y + p.D[jj] * u + p.e[jj];
  }
  MatrixXd diffusion_x(int j, const Step& s, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return step(s.k).C[static_cast<std::size_t>(j)];
  }
  MatrixXd diffusion_y(int j, const Step& s, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return step(s.k).Cbar[static_cast<std::size_t>(j)];
  }
  MatrixXd diffusion_u(int j, const Step& s, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return step(s.k).D[static_cast<std::size_t>(j)];
  }
  double running_cost(const Step& s, const VectorXd& x, const VectorXd& y, const VectorXd& u) const override {
    const auto& p = step(s.k);
    return x.dot(p.Q * x) + y.dot(p.Qbar * y) + u.dot(p.R * u) + p.qx.dot(x) + p.qy.dot(y) + p.ru.dot(u);
  }
  VectorXd running_cost_x(const Step& s, const VectorXd& x, const VectorXd&, const VectorXd&) const override {
    const auto& p = step(s.k);
    return (p.Q + p.Q.transpose()) * x + p.qx;
  }
  VectorXd running_cost_y(const Step& s, const VectorXd&, const VectorXd& y, const VectorXd&) const override {
    const auto& p = step(s.k);
    return (p.Qbar + p.Qbar.transpose()) * y + p.qy;
  }
  VectorXd running_cost_u(const Step& s, const VectorXd&, const VectorXd&, const VectorXd& u) const override {
    const auto& p = step(s.k);
    return (p.R + p.R.transpose()) * u + p.ru;
  }
  double terminal_cost(const VectorXd& x, const VectorXd& y) const override {
    const auto& g = terminal_;
    return x.dot(g.G * x) + y.dot(g.Gbar * y) + g.gx.dot(x) + g.gy.dot(y);
  }
  VectorXd terminal_cost_x(const VectorXd& x, const VectorXd&) const override {
    return (terminal_.G + terminal_.G.transpose()) * x + terminal_.gx;
  }
  VectorXd terminal_cost_y(const VectorXd&, const VectorXd& y) const override {
    return (terminal_.Gbar + terminal_.Gbar.transpose()) * y + terminal_.gy;
  }

 private:
  static void check(const MatrixXd& m, long rows, long cols, const std::string& name, long k) {
    if (m.rows() != rows || m.cols() != cols) {
      throw ValidationError("lq_meanfield: " + name + (k >= 0 ? " at step " + std::to_string(k) : std::string()) +
                            " has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (!m.allFinite()) throw ValidationError("lq_meanfield: " + name + " has non-finite entries");
  }

  void check_step(const LqStep& p, std::size_t k) const {
    const long kk = static_cast<long>(k);
    check(p.A, n_, n_, "A", kk);
    check(p.Abar, n_, n_, "Abar", kk);
    check(p.B, n_, r_, "B", kk);
    check(p.c, n_, 1, "c", kk);
    for (const auto* list : {&p.C, &p.Cbar, &p.D}) {
      if (list->size() != static_cast<std::size_t>(d_)) {
        throw ValidationError("lq_meanfield: diffusion blocks must have d=" + std::to_string(d_) + " entries");
      }
    }
    if (p.e.size() != static_cast<std::size_t>(d_)) {
      throw ValidationError("lq_meanfield: e must have d=" + std::to_string(d_) + " entries");
    }
    for (int j = 0; j < d_; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      check(p.C[jj], n_, n_, "C", kk);
      check(p.Cbar[jj], n_, n_, "Cbar", kk);
      check(p.D[jj], n_, r_, "D", kk);
      check(p.e[jj], n_, 1, "e", kk);
    }
    check(p.Q, n_, n_, "Q", kk);
    check(p.Qbar, n_, n_, "Qbar", kk);
    check(p.R, r_, r_, "R", kk);
    check(p.qx, n_, 1, "qx", kk);
    check(p.qy, n_, 1, "qy", kk);
    check(p.ru, r_, 1, "ru", kk);
  }

  int n_, r_, d_;
  std::vector<LqStep> steps_;
  LqTerminal terminal_;
};

// ---------------------------------------------------------------------------
// prodcons
// ---------------------------------------------------------------------------

/// Production/consumption model with capital x and consumption rate v:
///   x(t+h) = x + h (x - depreciation x) - v + (x/2) w
///   objective  E x(t_{N+1}) + E sum l(v),  l(v) = delta/(delta-1) v^(1 - 1/delta)
/// Stated in the native (maximize) orientation. The control enters without the
/// factor h, so the drift coefficient carries -v/h.
struct ProdconsParams {
  double delta_util = 0.5;
  double depreciation = 0.5;
  double volatility = 0.5;
};

class Prodcons final : public Coefficients {
 public:
  Prodcons(ProdconsParams params, double h) : p_(params), h_(h) {
    if (!(p_.delta_util > 0.0 && p_.delta_util < 1.0)) {
      throw ValidationError("prodcons: delta_util must lie in (0, 1)");
    }
    if (!std::isfinite(p_.depreciation) || !std::isfinite(p_.volatility)) {
      throw ValidationError("prodcons: parameters must be finite");
    }
    if (!(h > 0.0)) throw ValidationError("prodcons: h must be > 0");
  }

  const ProdconsParams& params() const { return p_; }

  int state_dim() const override { return 1; }
  int control_dim() const override { return 1; }
  int noise_dim() const override { return 1; }

  VectorXd drift(const Step&, const VectorXd& x, const VectorXd&, const VectorXd& u) const override {
    return VectorXd::Constant(1, (1.0 - p_.depreciation) * x(0) - u(0) / h_);
  }
  MatrixXd drift_x(const Step&, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return MatrixXd::Constant(1, 1, 1.0 - p_.depreciation);
  }
  MatrixXd drift_y(const Step&, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return MatrixXd::Zero(1, 1);
  }
  MatrixXd drift_u(const Step&, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return MatrixXd::Constant(1, 1, -1.0 / h_);
  }
  VectorXd diffusion(int, const Step&, const VectorXd& x, const VectorXd&, const VectorXd&) const override {
    return VectorXd::Constant(1, p_.volatility * x(0));
  }
  MatrixXd diffusion_x(int, const Step&, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return MatrixXd::Constant(1, 1, p_.volatility);
  }
  MatrixXd diffusion_y(int, const Step&, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return MatrixXd::Zero(1, 1);
  }
  MatrixXd diffusion_u(int, const Step&, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return MatrixXd::Zero(1, 1);
  }
  double running_cost(const Step&, const VectorXd&, const VectorXd&, const VectorXd& u) const override {
    return utility(u(0));
  }
  VectorXd running_cost_x(const Step&, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return VectorXd::Zero(1);
  }
  VectorXd running_cost_y(const Step&, const VectorXd&, const VectorXd&, const VectorXd&) const override {
    return VectorXd::Zero(1);
  }
  VectorXd running_cost_u(const Step&, const VectorXd&, const VectorXd&, const VectorXd& u) const override {
    return VectorXd::Constant(1, utility_prime(u(0)));
  }
  double terminal_cost(const VectorXd& x, const VectorXd&) const override { return x(0); }
  VectorXd terminal_cost_x(const VectorXd&, const VectorXd&) const override { return VectorXd::Ones(1); }
  VectorXd terminal_cost_y(const VectorXd&, const VectorXd&) const override { return VectorXd::Zero(1); }

  double utility(double v) const {
    if (!(v > 0.0)) throw DomainError("prodcons: utility undefined for v <= 0 (v=" + std::to_string(v) + ")");
    const double d = p_.delta_util;
    return d / (d - 1.0) * std::pow(v, 1.0 - 1.0 / d);
  }
  /// l'(v) = v^(-1/delta)
  double utility_prime(double v) const {
    if (!(v > 0.0)) throw DomainError("prodcons: utility undefined for v <= 0 (v=" + std::to_string(v) + ")");
    return std::pow(v, -1.0 / p_.delta_util);
  }

 private:
  ProdconsParams p_;
  double h_;
};

}  // namespace mfsmp
