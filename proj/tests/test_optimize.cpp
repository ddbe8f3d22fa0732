#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "jmest/optimize.hpp"
#include "oracles.hpp"

using namespace jmest;

namespace {

Hamiltonian make(int n, std::initializer_list<std::pair<const char*, double>> terms) {
  Hamiltonian h(n);
  for (const auto& [w, c] : terms) h.add(w, c);
  return h;
}

OptimizeConfig quick(std::size_t evals = 6000) {
  OptimizeConfig c;
  c.max_evals = evals;
  c.seed = 7;
  return c;
}

}  // namespace

TEST(OptimizeHelpers, ProjectionLandsInFeasibleSet) {
  std::mt19937_64 gen(500);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> x(6);
    for (double& e : x) e = u(gen);
    detail::project(x);
    for (double e : x) {
      EXPECT_GE(e, 0.0);
      EXPECT_LE(e, 1.0);
    }
    EXPECT_TRUE(detail::VisibilityCost::unflatten(x).jointly_measurable(1e-12));
  }
  std::vector<double> inside{0.2, 0.3, 0.4};
  detail::project(inside);
  EXPECT_EQ(inside, (std::vector<double>{0.2, 0.3, 0.4}));
}

TEST(OptimizeHelpers, FlatCostMatchesLibraryCost) {
  std::mt19937_64 gen(501);
  for (int trial = 0; trial < 20; ++trial) {
    auto h = oracle::random_hamiltonian(3, 8, gen);
    auto v = oracle::random_visibilities(3, gen);
    const detail::VisibilityCost diag(h, CostKind::Diag), ks(h, CostKind::KappaSum);
    EXPECT_NEAR(diag(detail::flatten(v)), cost_diag(h, v), 1e-10 * cost_diag(h, v));
    EXPECT_NEAR(ks(detail::flatten(v)), cost_kappa_sum(h, v), 1e-10 * cost_kappa_sum(h, v));
  }
  const auto h = make(1, {{"X", 1.0}});
  EXPECT_TRUE(std::isinf(detail::VisibilityCost(h, CostKind::Diag)({0.0, 0.5, 0.5})));
  EXPECT_EQ(cost_kind_from_string("kappa_sum"), CostKind::KappaSum);
  EXPECT_THROW(cost_kind_from_string("other"), DomainError);
}

TEST(OptimizeVisibilities, SingleZConcentratesOnZ) {
  const auto h = make(1, {{"Z", 1.0}});
  const auto r = optimize_visibilities(h, ReadoutNoise::identity(1), quick());
  EXPECT_GT(r.v_opt[0][2], 0.999);
  EXPECT_LT(r.v_opt[0][0], 0.05);
  EXPECT_LT(r.v_opt[0][1], 0.05);
  EXPECT_LT(r.cost_after, 1.002);
  EXPECT_NEAR(r.cost_before, 3.0, 1e-4);
}

TEST(OptimizeVisibilities, XTermsGiveOneThirdCost) {
  const auto h = make(3, {{"XII", 0.7}, {"IXI", -1.1}, {"IIX", 0.4}});
  const auto r = optimize_visibilities(h, ReadoutNoise::identity(3), quick());
  EXPECT_NEAR(r.cost_search / r.cost_unbiased, 1.0 / 3.0, 1e-3);
  EXPECT_NEAR(r.cost_after / r.cost_before, 1.0 / 3.0, 2e-3);
}

TEST(OptimizeVisibilities, NoEvaluationsKeepsUnbiased) {
  const auto h = make(2, {{"XZ", 0.5}, {"YI", 0.3}});
  auto cfg = quick();
  cfg.max_evals = 0;
  const auto r = optimize_visibilities(h, ReadoutNoise::identity(2), cfg);
  EXPECT_EQ(r.v_search, Visibilities::unbiased(2));
  EXPECT_NEAR(r.cost_after, r.cost_unbiased, 1e-4 * r.cost_unbiased);
  for (int i = 0; i < 2; ++i)
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(r.v_opt[i][static_cast<std::size_t>(a)], 1.0 / std::sqrt(3.0), 1e-6);
}

TEST(OptimizeVisibilities, DeterministicAndFeasibleUnderNoise) {
  std::mt19937_64 gen(502);
  auto h = oracle::random_hamiltonian(3, 8, gen);
  ReadoutNoise noise({StochasticMatrix2{0.95, 0.9}, StochasticMatrix2{0.85, 0.85}, StochasticMatrix2{0.99, 0.97}});
  auto cfg = quick(3000);
  const auto a = optimize_visibilities(h, noise, cfg);
  cfg.threads = 2;
  const auto b = optimize_visibilities(h, noise, cfg);
  EXPECT_EQ(a.v_opt, b.v_opt);
  EXPECT_EQ(a.cost_after, b.cost_after);
  EXPECT_EQ(a.r_star, b.r_star);
  EXPECT_LE(a.cost_search, a.cost_unbiased);
  EXPECT_LE(a.cost_after, a.cost_before);
  EXPECT_EQ(a.indeterminate_solves, 0);
  for (int i = 0; i < 3; ++i) {
    const auto f = jm_feasibility(a.v_opt[i], noise[i]);
    EXPECT_EQ(f.program.status, Feasibility::Feasible) << i;
    EXPECT_LT(a.structure_deviation[static_cast<std::size_t>(i)], 1e-5);
    EXPECT_LE(a.r_star[static_cast<std::size_t>(i)], 1.0);
  }
  EXPECT_DOUBLE_EQ(a.structure_factor, 1.0);
}

TEST(OptimizeVisibilities, KappaSumSelector) {
  const auto h = make(2, {{"ZZ", 1.0}, {"ZI", 0.5}, {"XX", 0.2}});
  auto cfg = quick(3000);
  cfg.cost = CostKind::KappaSum;
  const auto r = optimize_visibilities(h, ReadoutNoise::identity(2), cfg);
  EXPECT_EQ(r.cost_kind, CostKind::KappaSum);
  EXPECT_LT(r.cost_after, r.cost_before);
  EXPECT_NEAR(r.cost_after, cost_kappa_sum(h, r.v_opt), 1e-9 * r.cost_after);
}

TEST(CompareStrategies, IdentityNoiseRowsCoincide) {
  const auto h = make(2, {{"XZ", 0.5}, {"YI", 0.3}, {"ZZ", -0.8}});
  const auto t = compare_strategies(h, ReadoutNoise::identity(2), quick(2000));
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0].name, "unbiased-CS-noisy");
  EXPECT_NEAR(t.rows[1].value / t.rows[0].value, 1.0, 1e-4);
  EXPECT_LE(t.rows[2].value, t.rows[1].value * (1.0 + 1e-9));
  EXPECT_NE(to_text(t).find("row.JM-optimized="), std::string::npos);
}

TEST(CompareStrategies, NoisyFourQubitsOrdered) {
  std::mt19937_64 gen(503);
  auto h = oracle::random_hamiltonian(4, 10, gen);
  ReadoutNoise noise({StochasticMatrix2{0.97, 0.93}, StochasticMatrix2{0.9, 0.9}, StochasticMatrix2{0.97, 0.93}, StochasticMatrix2{0.85, 0.95}});
  const auto t = compare_strategies(h, noise, quick(2000));
  EXPECT_NEAR(t.rows[1].value / t.rows[0].value, 1.0, 1e-3);
  EXPECT_LE(t.rows[2].value, t.rows[1].value * (1.0 + 1e-9));
  EXPECT_EQ(t.sdp.size(), 4u);
}
