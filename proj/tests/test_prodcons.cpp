#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "mfsmp/prodcons_replica.hpp"

using namespace mfsmp;

TEST(ProdconsReplica, AdjointValuesAtFigureParameters) {
  const ProdconsReplica rep{0.5, 0.5, 5, 0.0};
  const auto p = rep.p();
  ASSERT_EQ(p.size(), 7u);
  EXPECT_EQ(p[6], 1.0);
  EXPECT_EQ(p[5], 0.75);
  EXPECT_EQ(p[4], 0.5625);
  for (const double q : rep.q()) EXPECT_EQ(q, 0.0);
}

TEST(ProdconsReplica, ConsumptionRule) {
  const ProdconsReplica rep{0.5, 0.5, 5, 0.0};
  const auto v = rep.v();
  ASSERT_EQ(v.size(), 6u);
  EXPECT_NEAR(v[5], 1.414214, 1e-6);
  EXPECT_NEAR(v[4], 1.632993, 1e-6);
  EXPECT_NEAR(v[5], std::pow(0.5 * 1.0, -0.5), 1e-15);
  EXPECT_NEAR(v[4], std::pow(0.5 * 0.75, -0.5), 1e-15);
  for (const double x : v) EXPECT_GT(x, 0.0);
}

TEST(ProdconsReplica, PlotDataHasOneIncreasingRowPerControlStep) {
  const ProdconsReplica rep{0.5, 0.5, 5, 0.0};
  std::istringstream in(replica_plot_csv(rep));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,v");
  int rows = 0;
  double last = -INFINITY;
  while (std::getline(in, line)) {
    const double t = std::stod(line.substr(0, line.find(',')));
    EXPECT_GT(t, last);
    last = t;
    ++rows;
  }
  EXPECT_EQ(rows, 6);
}

TEST(ProdconsReplica, RejectsOutOfRangeParameters) {
  EXPECT_THROW((ProdconsReplica{1.5, 0.5, 5, 0.0}.validate()), ValidationError);
  EXPECT_THROW((ProdconsReplica{0.5, 0.5, 0, 0.0}.validate()), ValidationError);
}

TEST(ProdconsComparison, GeneralSolverFollowsItsOwnAdjoint) {
  const auto cmp = compare_prodcons({0.5, 0.5, 5, 0.0});
  ASSERT_EQ(cmp.rows.size(), 7u);
  // actual linearized drift: p(t_k) = (1 + h(1 - dep))^(N+1-k)
  for (std::size_t k = 0; k < cmp.rows.size(); ++k) {
    EXPECT_NEAR(cmp.rows[k].p_general, std::pow(1.25, 6 - static_cast<int>(k)), 1e-12);
  }
  EXPECT_LE(cmp.max_rule_gap, 1e-6);
  EXPECT_TRUE(cmp.rows[5].differs);
  EXPECT_FALSE(cmp.rows[6].differs);
}

TEST(ProdconsComparison, AgreesWithReplicaWhenStepIsOne) {
  // with h = 1 the replica factor 2 - delta equals 1 + h(1 - dep) for dep = delta
  const auto cmp = compare_prodcons({0.5, 1.0, 2, 0.0});
  for (const auto& r : cmp.rows) EXPECT_NEAR(r.p_general, r.p_replica, 1e-12);
}
