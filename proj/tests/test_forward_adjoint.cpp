#include <gtest/gtest.h>

#include <cmath>

#include "mfsmp/adjoint.hpp"
#include "mfsmp/config.hpp"
#include "mfsmp/forward.hpp"
#include "mfsmp/testing/instances.hpp"
#include "mfsmp/testing/oracles.hpp"

using namespace mfsmp;
namespace mt = mfsmp::testing;

namespace {

struct E1 {
  ProblemSpec spec = mt::example_e1();
  ScenarioTree tree = build_tree(spec.grid, spec.noise);

  ControlProcess control(double u) const { return constant_control(spec, tree, VectorXd::Constant(1, u)); }
};

}  // namespace

TEST(Forward, E1LeavesAtZeroControl) {
  const E1 e;
  const auto traj = simulate(e.spec, e.tree, e.control(0.0));
  EXPECT_DOUBLE_EQ(traj.x.at(1, 0)(0), 1.0);
  EXPECT_DOUBLE_EQ(traj.x.at(1, 1)(0), -1.0);
  EXPECT_DOUBLE_EQ(traj.mean[1](0), 0.0);
}

TEST(Forward, E1CostMatchesClosedForm) {
  const E1 e;
  EXPECT_DOUBLE_EQ(cost(e.spec, e.tree, e.control(0.0)), 1.0);
  EXPECT_DOUBLE_EQ(cost(e.spec, e.tree, e.control(1.0)), 3.0);
}

TEST(Forward, MeanFieldSquareCostIsUSquared) {
  const ProblemSpec spec = mt::example_mean_field_square();
  const ScenarioTree tree = build_tree(spec.grid, spec.noise);
  for (const double u : {-1.5, 0.0, 0.7}) {
    EXPECT_NEAR(cost(spec, tree, constant_control(spec, tree, VectorXd::Constant(1, u))), u * u, 1e-15);
  }
}

TEST(Forward, MaximizeProblemsAreNegatedInternally) {
  const auto p = builtin("prodcons", {{"N", 1}});
  const ScenarioTree tree = build_tree(p.spec.grid, p.spec.noise);
  const auto u = constant_control(p.spec, tree, VectorXd::Ones(1));
  const double J = cost(p.spec, tree, u);
  EXPECT_DOUBLE_EQ(native_objective(p.spec, J), -J);
}

// The mean follows Ex(t+h) = Ex + h E f on affine dynamics.
TEST(Forward, MeanMatchesMeanRecursionForLq) {
  mt::Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    mt::LqShape shape;
    shape.n = 2;
    shape.r = 2;
    shape.d = 2;
    const auto in = mt::random_lq(rng, shape);
    const auto traj = simulate(in.spec, in.tree, in.u);
    const auto& m = in.spec.model();
    for (int k = 0; k <= in.spec.grid.N; ++k) {
      const VectorXd& y = traj.mean[static_cast<std::size_t>(k)];
      const VectorXd ef = expect_level(in.tree, k, [&](std::size_t i) {
        return VectorXd(m.drift(in.spec.step(k), traj.x.at(k, i), y, in.u.at(k, i)));
      });
      const VectorXd next = y + in.spec.grid.h * ef;
      EXPECT_LE((next - traj.mean[static_cast<std::size_t>(k + 1)]).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Linearize, E1Data) {
  const E1 e;
  const auto traj = simulate(e.spec, e.tree, e.control(0.0));
  const auto data = linearize(e.spec, e.tree, traj, e.control(0.0));
  EXPECT_DOUBLE_EQ(data.A.at(0, 0)(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(data.B[0].at(0, 0)(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(data.ell.at(0, 0)(0), 0.0);
  EXPECT_DOUBLE_EQ(data.terminal.at(1, 0)(0), 2.0);
  EXPECT_DOUBLE_EQ(data.terminal.at(1, 1)(0), -2.0);
}

TEST(Linearize, MeanFieldTerminalIsConstantAcrossNodes) {
  const ProblemSpec spec = mt::example_mean_field_square();
  const ScenarioTree tree = build_tree(spec.grid, spec.noise);
  const auto u = constant_control(spec, tree, VectorXd::Constant(1, 0.8));
  const auto data = linearize(spec, tree, simulate(spec, tree, u), u);
  EXPECT_DOUBLE_EQ(data.terminal.at(1, 0)(0), 1.6);
  EXPECT_DOUBLE_EQ(data.terminal.at(1, 1)(0), 1.6);
}

TEST(SolveBackward, E1AtZero) {
  const E1 e;
  const auto u = e.control(0.0);
  const auto adj = solve_adjoint(e.spec, e.tree, simulate(e.spec, e.tree, u), u);
  EXPECT_DOUBLE_EQ(adj.p.at(1, 0)(0), -2.0);
  EXPECT_DOUBLE_EQ(adj.p.at(1, 1)(0), 2.0);
  EXPECT_DOUBLE_EQ(adj.q[0].at(0, 0)(0), -2.0);
  EXPECT_DOUBLE_EQ(adj.p.at(0, 0)(0), 0.0);
}

TEST(SolveBackward, ZeroDataGivesZeroSolution) {
  const ScenarioTree tree = build_tree({0.0, 0.5, 2}, NoiseModel::binary(2, 0.5));
  const auto data = LinearBsdeData::zero(tree, 2, 2);
  const auto adj = solve_backward(data, tree);
  EXPECT_EQ(mt::max_abs_diff(adj.p, VectorProcess(tree, 0, 3, VectorXd::Zero(2))), 0.0);
  for (const auto& q : adj.q) EXPECT_EQ(mt::max_abs_diff(q, VectorProcess(tree, 0, 2, VectorXd::Zero(2))), 0.0);
}

TEST(SolveBackward, QIsCovarianceOfNextP) {
  mt::Rng rng(8);
  const ScenarioTree tree = build_tree({0.0, 0.5, 3}, NoiseModel::trinomial(1, 0.5, 0.2));
  const auto data = mt::random_linear_data(rng, tree, 2, true);
  const auto adj = solve_backward(data, tree);
  for (int k = 0; k <= data.N(); ++k) {
    for (std::size_t i = 0; i < tree.level_size(k); ++i) {
      const VectorXd pw = cond_expect(tree, k, i, [&](std::size_t c) {
        return VectorXd(adj.p.at(k + 1, c) * tree.node(k + 1, c).increment(0));
      });
      EXPECT_LE((adj.q[0].at(k, i) - pw).cwiseAbs().maxCoeff(), 1e-14);
    }
  }
}

TEST(Operators, ThetaOfIdentityCopiesToChildren) {
  const ScenarioTree tree = build_tree({0.0, 1.0, 1}, NoiseModel::binary(1, 1.0));
  LinearBsdeData data = LinearBsdeData::zero(tree, 1, 1);
  VectorProcess z(tree, 0, 0, VectorXd::Constant(1, 3.0));
  const auto copied = theta_apply(data, tree, 0, z);
  for (const auto& v : copied.level(1)) EXPECT_DOUBLE_EQ(v(0), 3.0);
  data.A.at(0, 0)(0, 0) = 1.0;
  const auto doubled = theta_apply(data, tree, 0, z);
  for (const auto& v : doubled.level(1)) EXPECT_DOUBLE_EQ(v(0), 6.0);
}

TEST(Operators, MeanFieldThetaAddsLevelMean) {
  const ScenarioTree tree = build_tree({0.0, 1.0, 1}, NoiseModel::binary(1, 1.0));
  LinearBsdeData data = LinearBsdeData::zero(tree, 1, 1);
  for (std::size_t i = 0; i < 2; ++i) data.A1.at(1, i)(0, 0) = 1.0;
  VectorProcess z(tree, 1, 1, VectorXd::Zero(1));
  z.at(1, 0)(0) = 4.0;
  z.at(1, 1)(0) = 2.0;
  const auto out = theta_apply(data, tree, 1, z);
  for (std::size_t c = 0; c < 4; ++c) {
    const double parent = tree.node(2, c).parent == 0 ? 4.0 : 2.0;
    EXPECT_DOUBLE_EQ(out.at(2, c)(0), parent + 3.0);
  }
}

TEST(Operators, PhiIdentityAndComposition) {
  mt::Rng rng(31);
  const ScenarioTree tree = build_tree({0.0, 0.5, 3}, NoiseModel::binary(2, 0.5));
  const auto data = mt::random_linear_data(rng, tree, 2, true);
  const auto z = mt::random_level_process(rng, tree, 1, 2);
  EXPECT_EQ(mt::max_abs_diff(phi_apply(data, tree, 1, 1, z), z), 0.0);
  const auto twice = theta_apply(data, tree, 2, theta_apply(data, tree, 1, z));
  EXPECT_LE(mt::max_abs_diff(phi_apply(data, tree, 3, 1, z), twice), 1e-13);
  EXPECT_LE(mt::semigroup_residual(data, tree, rng), 1e-12);
}

TEST(Operators, PhiBackwardInTimeIsZero) {
  mt::Rng rng(32);
  const ScenarioTree tree = build_tree({0.0, 0.5, 2}, NoiseModel::binary(1, 0.5));
  const auto data = mt::random_linear_data(rng, tree, 1, false);
  const auto z = mt::random_level_process(rng, tree, 2, 1);
  const auto back = phi_apply(data, tree, 1, 2, z);
  for (const auto& v : back.level(1)) EXPECT_EQ(v(0), 0.0);
}

TEST(ForwardRep, TelescopesConstantForcing) {
  const ScenarioTree tree = build_tree({0.0, 1.0, 2}, NoiseModel::binary(1, 1.0));
  LinearBsdeData data = LinearBsdeData::zero(tree, 1, 1);
  data.forcing = VectorProcess(tree, 0, 2, VectorXd::Constant(1, 0.5));
  data.forcing_noise = std::vector<VectorProcess>{VectorProcess(tree, 0, 2, VectorXd::Zero(1))};
  const auto z = forward_rep(data, tree, VectorXd::Constant(1, 1.0));
  for (int k = 0; k <= 3; ++k) {
    for (const auto& v : z.level(k)) EXPECT_DOUBLE_EQ(v(0), 1.0 + 0.5 * k);
  }
}

TEST(ForwardRep, MatchesDirectRecursion) {
  mt::Rng rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    const ScenarioTree tree = build_tree({0.0, 0.5, 3}, NoiseModel::binary(2, 0.5));
    const auto data = mt::random_linear_data(rng, tree, 3, trial % 2 == 0);
    const VectorXd z0 = mt::random_vector(rng, 3, 1.0);
    EXPECT_LE(mt::max_abs_diff(forward_rep(data, tree, z0), mt::direct_linear_forward(data, tree, z0)), 1e-12);
  }
}

TEST(ForwardRep, MissingForcingIsUsageError) {
  const ScenarioTree tree = build_tree({0.0, 1.0, 0}, NoiseModel::binary(1, 1.0));
  EXPECT_THROW(forward_rep(LinearBsdeData::zero(tree, 1, 1), tree, VectorXd::Zero(1)), UsageError);
}

TEST(ClosedFormP, ZeroCoefficientsGiveMinusTerminal) {
  const ScenarioTree tree = build_tree({0.0, 1.0, 2}, NoiseModel::binary(1, 1.0));
  LinearBsdeData data = LinearBsdeData::zero(tree, 1, 1);
  for (auto& v : data.terminal.level(3)) v(0) = 2.5;
  const auto cf = closed_form_p(data, tree);
  EXPECT_TRUE(cf.exact);
  for (int k = 0; k <= 3; ++k) {
    for (const auto& v : cf.p.level(k)) EXPECT_DOUBLE_EQ(v(0), -2.5);
  }
}

TEST(ClosedFormP, AgreesWithBackwardSolverWithoutMeanField) {
  mt::Rng rng(51);
  for (int trial = 0; trial < 5; ++trial) {
    const ScenarioTree tree = build_tree({0.0, 0.5, 3}, NoiseModel::trinomial(1, 0.5, 0.25));
    const auto data = mt::random_linear_data(rng, tree, 2, false);
    const auto cf = closed_form_p(data, tree);
    EXPECT_TRUE(cf.exact);
    EXPECT_LE(mt::max_abs_diff(cf.p, solve_backward(data, tree).p), 1e-10);
  }
}

TEST(ClosedFormP, SingleStepFormula) {
  mt::Rng rng(52);
  const ScenarioTree tree = build_tree({0.0, 1.0, 0}, NoiseModel::binary(1, 1.0));
  const auto data = mt::random_linear_data(rng, tree, 2, false);
  const auto cf = closed_form_p(data, tree);
  VectorXd expected = -data.ell.at(0, 0);
  for (std::size_t c = 0; c < 2; ++c) {
    const MatrixXd step = MatrixXd::Identity(2, 2) + data.A.at(0, 0) + data.B[0].at(0, 0) * tree.node(1, c).increment(0);
    expected -= tree.node(1, c).cond_prob * step.transpose() * data.terminal.at(1, c);
  }
  EXPECT_LE((cf.p.at(0, 0) - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Integrability, E1SecondMoment) {
  const E1 e;
  const auto u = e.control(0.0);
  const auto adj = solve_adjoint(e.spec, e.tree, simulate(e.spec, e.tree, u), u);
  const auto rep = integrability_report(adj, e.tree);
  EXPECT_TRUE(rep.pass);
  bool found = false;
  for (const auto& r : rep.residuals) {
    if (r.label == "E|p|^2 level 1") {
      EXPECT_DOUBLE_EQ(r.value, 4.0);
      found = true;
    }
  }
  EXPECT_TRUE(found);
}
