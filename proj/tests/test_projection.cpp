#include <gtest/gtest.h>

#include <numeric>

#include "cwmp/projection.hpp"
#include "support.hpp"

using namespace cwmp;

namespace {

KnapsackInstance random_instance(Rng& rng, std::size_t max_d) {
  KnapsackInstance inst;
  const std::size_t d = test::uniform_index(rng, 1, max_d);
  inst.magnitudes = test::normal_vector(d, rng);
  for (auto& g : inst.magnitudes) g = std::fabs(g);
  inst.costs = test::uniform_vector(d, rng, 0.1, 5.0);
  const double total = std::accumulate(inst.costs.begin(), inst.costs.end(), 0.0);
  inst.e_budget = total * (0.05 + 0.9 * rng.uniform());
  return inst;
}

std::size_t fractional_count(const FractionalSolution& s) {
  std::size_t n = 0;
  for (double m : s.m) n += (m > 0.0 && m < 1.0) ? 1 : 0;
  return n;
}

}  // namespace

TEST(Greedy, ThreeItemExample) {
  const KnapsackInstance inst{{6, 4, 3}, {3, 4, 1}, 4.0, {}};
  const auto [sol, cert] = greedy_fractional(inst);
  EXPECT_EQ(sol.m, (std::vector<double>{1, 0, 1}));
  EXPECT_DOUBLE_EQ(sol.objective, 9.0);
  EXPECT_DOUBLE_EQ(cert.lambda, 2.0);
  EXPECT_TRUE(verify_kkt(inst, sol, cert));
}

TEST(Greedy, SlackBudgetTakesEverything) {
  const KnapsackInstance inst{{6, 4, 3}, {3, 4, 1}, 100.0, {}};
  const auto [sol, cert] = greedy_fractional(inst);
  EXPECT_EQ(sol.m, (std::vector<double>{1, 1, 1}));
  EXPECT_DOUBLE_EQ(sol.objective, 13.0);
  EXPECT_EQ(cert.lambda, 0.0);
  EXPECT_TRUE(verify_kkt(inst, sol, cert));
}

TEST(Greedy, TwoEqualItemsOneAndAHalf) {
  const KnapsackInstance inst{{4, 4}, {2, 2}, 3.0, {}};
  const auto [sol, cert] = greedy_fractional(inst);
  EXPECT_EQ(sol.m, (std::vector<double>{1, 0.5}));
  EXPECT_DOUBLE_EQ(sol.objective, 6.0);
  EXPECT_DOUBLE_EQ(cert.lambda, 2.0);
  EXPECT_DOUBLE_EQ(inst.score(1), cert.lambda);
  EXPECT_TRUE(verify_kkt(inst, sol, cert));
}

TEST(Greedy, RejectsInvalidInstances) {
  EXPECT_THROW(greedy_fractional({{1, 2}, {1}, 1.0, {}}), ConfigError);
  EXPECT_THROW(greedy_fractional({{1}, {0}, 1.0, {}}), ConfigError);
  EXPECT_THROW(greedy_fractional({{1}, {1}, 0.0, {}}), ConfigError);
  EXPECT_THROW(greedy_fractional({{-1}, {1}, 1.0, {}}), ConfigError);
}

TEST(Greedy, CertificatesVerifyOnRandomInstances) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = random_instance(rng, 30);
    const auto [sol, cert] = greedy_fractional(inst);
    const auto verdict = verify_kkt(inst, sol, cert);
    ASSERT_TRUE(verdict.ok) << (verdict.reasons.empty() ? "" : verdict.reasons.front());
    EXPECT_LE(fractional_count(sol), 1u);
    EXPECT_LE(sol.energy_used, inst.e_budget + kFeasibilitySlack);
  }
}

TEST(Greedy, SandwichedByExactOptimum) {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const auto inst = random_instance(rng, 12);
    const auto [sol, cert] = greedy_fractional(inst);
    const auto exact = exact_01(inst);
    const double gmax = *std::max_element(inst.magnitudes.begin(), inst.magnitudes.end());
    EXPECT_LE(exact.objective, sol.objective + 1e-9);
    EXPECT_LE(sol.objective, exact.objective + gmax + 1e-9);
  }
}

TEST(Greedy, DominatesRandomFeasibleFractionalPoints) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = random_instance(rng, 15);
    const auto [sol, cert] = greedy_fractional(inst);
    const std::size_t d = inst.size();
    for (int probe = 0; probe < 500; ++probe) {
      std::vector<double> m = test::uniform_vector(d, rng, 0.0, 1.0);
      double energy = 0.0;
      for (std::size_t j = 0; j < d; ++j) energy += m[j] * inst.costs[j];
      const double shrink = energy > inst.e_budget ? inst.e_budget / energy : 1.0;
      double value = 0.0;
      for (std::size_t j = 0; j < d; ++j) value += shrink * m[j] * inst.magnitudes[j];
      EXPECT_LE(value, sol.objective + 1e-9);
    }
  }
}

TEST(VerifyKkt, PerturbedLambdaFails) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng, 20);
    auto [sol, cert] = greedy_fractional(inst);
    cert.lambda += 0.1;
    const auto verdict = verify_kkt(inst, sol, cert);
    EXPECT_FALSE(verdict.ok);
    bool stationarity = false;
    for (const auto& r : verdict.reasons) stationarity = stationarity || r.rfind("stationarity", 0) == 0;
    EXPECT_TRUE(stationarity);
  }
}

TEST(VerifyKkt, SingleItemByHand) {
  const KnapsackInstance inst{{3.0}, {2.0}, 5.0, {}};
  FractionalSolution sol{{1.0}, 3.0, 2.0};
  KktCertificate cert{0.0, {0.0}, {3.0}};
  EXPECT_TRUE(verify_kkt(inst, sol, cert));
  cert.beta[0] = 2.0;
  EXPECT_FALSE(verify_kkt(inst, sol, cert));
}

TEST(VerifyKkt, DetectsInfeasiblePrimal) {
  const KnapsackInstance inst{{3.0, 1.0}, {2.0, 2.0}, 2.0, {}};
  FractionalSolution sol{{1.0, 1.0}, 4.0, 4.0};
  KktCertificate cert{0.0, {0.0, 0.0}, {3.0, 1.0}};
  EXPECT_FALSE(verify_kkt(inst, sol, cert));
  EXPECT_FALSE(verify_kkt(inst, FractionalSolution{{1.0}, 0, 0}, cert));
}

TEST(Exact, ThreeItemExample) {
  const auto e = exact_01({{6, 4, 3}, {3, 4, 1}, 4.0, {}});
  EXPECT_EQ(e.m, (std::vector<double>{1, 0, 1}));
  EXPECT_DOUBLE_EQ(e.objective, 9.0);
}

TEST(Exact, BudgetBelowCheapestItem) {
  const auto e = exact_01({{6, 4, 3}, {3, 4, 1}, 0.5, {}});
  EXPECT_EQ(e.m, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(e.objective, 0.0);
}

TEST(Exact, CardinalityOneIsTopOne) {
  const auto e = exact_01({{2, 7, 3}, {1, 1, 1}, 100.0, std::size_t{1}});
  EXPECT_EQ(e.m, (std::vector<double>{0, 1, 0}));
}

TEST(Exact, RefusesLargeDimension) {
  KnapsackInstance inst{std::vector<double>(21, 1.0), std::vector<double>(21, 1.0), 3.0, {}};
  EXPECT_THROW(exact_01(inst), ConfigError);
}

TEST(BudgetedCwmp, InfiniteBudgetIsCwmp) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = test::uniform_index(rng, 1, 40);
    const std::size_t k = test::uniform_index(rng, 1, d);
    const GradientVector g(test::normal_vector(d, rng));
    const CostVector c(test::uniform_vector(d, rng, 0.5, 5.0));
    EXPECT_EQ(budgeted_cwmp(g, c, k, INFINITY), cwmp_mask(g, c, k));
  }
}

TEST(BudgetedCwmp, FullKMatchesIntegralPartOfGreedy) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = random_instance(rng, 30);
    const auto [sol, cert] = greedy_fractional(inst);
    std::vector<std::size_t> whole;
    for (std::size_t j = 0; j < inst.size(); ++j)
      if (sol.m[j] == 1.0) whole.push_back(j);
    const auto mask = budgeted_cwmp(GradientVector(inst.magnitudes), CostVector(inst.costs), inst.size(), inst.e_budget);
    EXPECT_EQ(mask.indices(), whole);
  }
}

TEST(BudgetedCwmp, HandExample) {
  const auto mask = budgeted_cwmp(GradientVector({6, 4, 3}), CostVector({3, 4, 1}), 2, 4.0);
  EXPECT_EQ(mask.indices(), (std::vector<std::size_t>{0, 2}));
}

TEST(BudgetedCwmp, MayReturnFewerThanK) {
  const auto mask = budgeted_cwmp(GradientVector({6, 4, 3}), CostVector({3, 4, 1}), 3, 1.5);
  EXPECT_EQ(mask.indices(), (std::vector<std::size_t>{2}));
}
