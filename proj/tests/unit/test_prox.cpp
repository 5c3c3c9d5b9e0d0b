#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gdp/error.hpp"
#include "gdp/prox.hpp"
#include "oracles.hpp"
#include "toy_graphs.hpp"

namespace gdp {
namespace {

// Minimizer of 1/2 (x - a)^2 + beta |x| found numerically.
double scalar_prox_oracle(double a, double beta) {
  const auto left = [=](double x) { return (x - a) + (x > 0 ? beta : -beta); };
  const auto right = [=](double x) { return (x - a) + (x >= 0 ? beta : -beta); };
  return testing::convex_min_bisect(left, right, -std::abs(a) - beta - 1, std::abs(a) + beta + 1);
}

TEST(SoftThreshold, Branches) {
  EXPECT_NEAR(soft_threshold(0.5, 0.2), 0.3, 1e-16);
  EXPECT_EQ(soft_threshold(-0.1, 0.2), 0);
  EXPECT_NEAR(soft_threshold(-0.5, 0.2), -0.3, 1e-16);
  EXPECT_EQ(soft_threshold(0.2, 0.2), 0);
  EXPECT_EQ(soft_threshold(0.7, 0), 0.7);
}

TEST(SoftThreshold, NegativeBetaIsAnError) {
  EXPECT_THROW(soft_threshold(0.5, -1e-12), Error);
  EXPECT_THROW(soft_threshold(0.5, std::nan("")), Error);
}

TEST(SoftThreshold, PreservesSignAndMatchesScalarMinimizer) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ah(-3, 3), bd(0, 2);
  for (int i = 0; i < 500; ++i) {
    const double a = ah(rng), beta = bd(rng);
    const double s = soft_threshold(a, beta);
    EXPECT_TRUE(s == 0 || std::signbit(s) == std::signbit(a));
    EXPECT_LE(std::abs(s), std::abs(a));
    EXPECT_NEAR(s, scalar_prox_oracle(a, beta), 1e-10);
  }
}

GateVector vec(std::vector<Scalar> alpha) {
  GateVector gv;
  gv.alpha = Tensor::vector(std::move(alpha));
  return gv;
}

ResourceModel two_group_model(std::uint64_t a01, std::uint64_t b0, std::uint64_t b1) {
  ResourceModel m;
  m.group_channels = {2, 3};
  if (a01) m.a[{0, 1}] = a01;
  m.b = {b0, b1};
  return m;
}

TEST(ProxStep, ZeroLambdaLeavesGates) {
  std::vector<GateVector> gates{vec({0.3, -0.2}), vec({1, 0, -4})};
  const auto before = gates;
  prox_step(gates, two_group_model(5, 7, 9), ProxConfig{0.1, 0, 3, true});
  for (std::size_t l = 0; l < gates.size(); ++l)
    for (std::size_t i = 0; i < gates[l].size(); ++i) EXPECT_EQ(gates[l].alpha[i], before[l].alpha[i]);
}

TEST(ProxStep, DecoupledGroupsThresholdIndependently) {
  std::vector<GateVector> gates{vec({0.3, -0.2}), vec({1, 0.05, -4})};
  const ProxConfig cfg{0.01, 2, 1, true};
  prox_step(gates, two_group_model(0, 10, 3), cfg);
  EXPECT_NEAR(gates[0].alpha[0], 0.1, 1e-15);
  EXPECT_EQ(gates[0].alpha[1], 0);
  EXPECT_NEAR(gates[1].alpha[0], 0.94, 1e-15);
  EXPECT_EQ(gates[1].alpha[1], 0);
  EXPECT_NEAR(gates[1].alpha[2], -3.94, 1e-15);
}

TEST(ProxStep, SweepUsesUpdatedCountsOfEarlierGroups) {
  // Group 0 fully zeroed first, so group 1 sees no coupling in the same sweep.
  std::vector<GateVector> gates{vec({0.01, 0.01}), vec({0.5, 0.5, 0.5})};
  prox_step(gates, two_group_model(10, 0, 0), ProxConfig{0.01, 1, 1, true});
  EXPECT_EQ(gates[0].alpha[0], 0);
  EXPECT_EQ(gates[1].alpha[0], 0.5);
}

TEST(ProxStep, EveryEntryMinimizesItsScalarProblem) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> d(-1, 1);
  const auto m = two_group_model(4, 3, 6);
  const ProxConfig cfg{0.02, 1.5, 1, true};
  for (int t = 0; t < 50; ++t) {
    std::vector<GateVector> gates{vec({d(rng), d(rng)}), vec({d(rng), d(rng), d(rng)})};
    const auto hat = gates;
    const auto counts0 = l0_counts(hat);
    prox_step(gates, m, cfg);
    // group 0 sees the initial counts, group 1 sees group 0's new count
    const double beta0 = 0.02 * 1.5 * (4.0 * static_cast<double>(counts0[1]) + 3);
    const double beta1 = 0.02 * 1.5 * (4.0 * static_cast<double>(l0_counts(gates)[0]) + 6);
    const double betas[2]{beta0, beta1};
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t i = 0; i < gates[l].size(); ++i) {
        const double a = hat[l].alpha[i];
        EXPECT_NEAR(gates[l].alpha[i], scalar_prox_oracle(a, betas[l]), 1e-10);
      }
  }
}

TEST(ProxStep, ThresholdGrowsWithLambda) {
  const auto m = two_group_model(4, 3, 6);
  std::vector<std::int64_t> counts{2, 3};
  double prev = -1;
  for (double lambda : {0.0, 0.5, 1.0, 4.0}) {
    const double beta = prox_threshold(m, counts, 0, ProxConfig{0.1, lambda, 1, true});
    EXPECT_GT(beta, prev);
    prev = beta;
  }
  std::vector<GateVector> lo{vec({0.4, 0.9}), vec({0.2, 0.6, 1.0})};
  auto hi = lo;
  prox_step(lo, m, ProxConfig{0.01, 1, 1, true});
  prox_step(hi, m, ProxConfig{0.01, 4, 1, true});
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t i = 0; i < lo[l].size(); ++i) EXPECT_LE(std::abs(hi[l].alpha[i]), std::abs(lo[l].alpha[i]));
}

TEST(ProxStep, ZeroIsAbsorbing) {
  std::vector<GateVector> gates{vec({0, 0.4}), vec({0, 0, 2})};
  prox_step(gates, two_group_model(4, 3, 6), ProxConfig{0.01, 1, 2, true});
  EXPECT_EQ(gates[0].alpha[0], 0);
  EXPECT_EQ(gates[1].alpha[0], 0);
  EXPECT_EQ(gates[1].alpha[1], 0);
}

TEST(ProxStep, UnscaledLinearTerm) {
  const auto m = two_group_model(4, 3, 6);
  std::vector<std::int64_t> counts{2, 3};
  EXPECT_NEAR(prox_threshold(m, counts, 0, ProxConfig{0.1, 2, 1, false}), 0.1 * 2 * 12 + 3, 1e-14);
  EXPECT_NEAR(prox_threshold(m, counts, 0, ProxConfig{0.1, 2, 1, true}), 0.1 * 2 * 15, 1e-14);
}

TEST(ProxStep, Misalignment) {
  std::vector<GateVector> gates{vec({1, 1})};
  EXPECT_THROW(prox_step(gates, two_group_model(1, 1, 1), ProxConfig{}), Error);
  EXPECT_THROW(ProxConfig({0, 1, 1, true}).validate(), Error);
  EXPECT_THROW(ProxConfig({0.1, -1, 1, true}).validate(), Error);
  EXPECT_THROW(ProxConfig({0.1, 1, 0, true}).validate(), Error);
}

TEST(ProxStep, RegularizerOnlyGraphIsUntouched) {
  auto g = attach_gates(testing::with_random_weights(testing::plain_chain(), 3),
                        GateInit{GateMode::RegularizerOnly, 1, 0.1});
  const auto before = g.layers[2].weight;
  const auto m = derive_coefficients(g);
  prox_step(g, m, ProxConfig{1, 1e6, 1, true});
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(g.layers[2].weight[i], before[i]);
}

TEST(ProxStep, WeightNormRescalesKernelSlices) {
  auto g = attach_gates(testing::with_random_weights(testing::skip_block(), 4), GateInit{GateMode::WeightNorm, 1, 0.1});
  const auto m = derive_coefficients(g);
  const auto norms_before = g.gates[0].alpha;
  ProxConfig cfg{1, 0, 1, true};
  // threshold inside the spread of group-0 norms
  double lo = 1e9, hi = 0;
  for (auto n : norms_before.data()) lo = std::min(lo, n), hi = std::max(hi, n);
  cfg.lambda = (lo + hi) / 2 / static_cast<double>(m.marginal(0, l0_counts(g.gates)));
  prox_step(g, m, cfg);
  const auto after = g.gates[0].alpha;
  refresh_norm_gates(g);
  std::size_t zeroed = 0;
  for (std::size_t i = 0; i < after.size(); ++i) {
    EXPECT_NEAR(g.gates[0].alpha[i], after[i], 1e-12);
    zeroed += after[i] == 0;
  }
  EXPECT_GT(zeroed, 0u);
  EXPECT_LT(zeroed, after.size());
}

testing::ToyBilinear toy() {
  return {{{0.1, 0.2}, {-0.3, 0.5, 0.6}}, {{0, 0.01}, {0.01, 0}}, {0, 0}};
}

BilinearInstance instance(std::vector<std::vector<Scalar>> init) {
  return {{{0.1, 0.2}, {-0.3, 0.5, 0.6}}, std::move(init), {{0, 0.01}, {0.01, 0}}, {0, 0}};
}

TEST(Bilinear, ToyInstanceReachesFixedPointQuickly) {
  const ProxConfig cfg{1, 1, 10, true};
  const auto exhaustive = testing::exhaustive_support_optimum(toy());
  EXPECT_NEAR(exhaustive.value, 0.025, 1e-15);
  for (auto init : {std::vector<std::vector<Scalar>>{{0.1, 0.8}, {0.7, 0.3, 0.8}},
                    std::vector<std::vector<Scalar>>{{0.4, 0.1}, {0.7, 0.5, 0.0}}}) {
    const auto sol = solve_bilinear_l0(instance(init), cfg);
    ASSERT_GE(sol.fixed_point_sweep, 1);
    EXPECT_LE(sol.fixed_point_sweep, 5);
    EXPECT_NEAR(sol.x[0][0], 0.07, 1e-15);
    EXPECT_NEAR(sol.x[0][1], 0.17, 1e-15);
    EXPECT_NEAR(sol.x[1][0], -0.28, 1e-15);
    EXPECT_NEAR(sol.x[1][2], 0.58, 1e-15);
    EXPECT_NEAR(sol.objective.back(), testing::toy_objective(toy(), sol.x), 1e-12);
    EXPECT_NEAR(sol.objective.back(), 0.0615, 1e-12);
    EXPECT_GT(sol.objective.back(), exhaustive.value);
  }
}

TEST(Bilinear, ObjectiveNeverRisesAfterFirstSweep) {
  const auto sol = solve_bilinear_l0(instance({{0.1, 0.8}, {0.7, 0.3, 0.8}}), ProxConfig{1, 1, 6, true});
  ASSERT_EQ(sol.objective.size(), 7u);
  for (std::size_t t = 2; t < sol.objective.size(); ++t) EXPECT_LE(sol.objective[t], sol.objective[t - 1]);
}

TEST(Bilinear, InstanceValidation) {
  auto bad = instance({{0.1, 0.8}, {0.7, 0.3, 0.8}});
  bad.a[0][0] = 1;
  EXPECT_THROW(solve_bilinear_l0(bad, ProxConfig{1, 1, 1, true}), Error);
  bad = instance({{0.1, 0.8}, {0.7, 0.3, 0.8}});
  bad.a[0][1] = 0.5;
  EXPECT_THROW(solve_bilinear_l0(bad, ProxConfig{1, 1, 1, true}), Error);
  bad = instance({{0.1}, {0.7, 0.3, 0.8}});
  EXPECT_THROW(solve_bilinear_l0(bad, ProxConfig{1, 1, 1, true}), Error);
}

TEST(Comparator, HardThresholdDependsOnStartWhileSoftDoesNot) {
  const auto p = toy();
  const std::vector<std::vector<double>> init1{{0.1, 0.8}, {0.7, 0.3, 0.8}}, init2{{0.4, 0.1}, {0.7, 0.5, 0.0}};
  const auto l0a = testing::support_of(testing::alternating_prox_gradient(p, init1, 0.1, testing::Penalty::L0));
  const auto l0b = testing::support_of(testing::alternating_prox_gradient(p, init2, 0.1, testing::Penalty::L0));
  const auto l1a = testing::support_of(testing::alternating_prox_gradient(p, init1, 0.1, testing::Penalty::L1));
  const auto l1b = testing::support_of(testing::alternating_prox_gradient(p, init2, 0.1, testing::Penalty::L1));
  EXPECT_NE(l0a, l0b);
  EXPECT_EQ(l1a, l1b);
}

}  // namespace
}  // namespace gdp
