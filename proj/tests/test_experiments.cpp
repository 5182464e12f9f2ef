#include <gtest/gtest.h>

#include <cmath>

#include "geoconc/experiments.hpp"

using namespace geoconc;

namespace {

TransitionKernel P2() { return two_state_kernel(0.2, 0.4); }

TransitionKernel iid_chain() {
  Matrix P(2, 2);
  P << 0.5, 0.5, 0.5, 0.5;
  return TransitionKernel(P);
}

// Independent closed form: smallest n + N with 2^-(n+N) > 2 exp(-g^2 n / (M0 L^2)).
std::pair<std::size_t, std::size_t> brute_force_NN(double M0, double L) {
  std::size_t bN = 0, bn = 0;
  for (std::size_t N = 2; N <= 60; ++N) {
    const double v = std::pow(2.0, N / 2.0);
    const double g = std::min(std::sqrt(std::log(std::max(v, std::exp(1.0)))), v);
    for (std::size_t n = 1; n + N <= 200; ++n) {
      const double lhs = std::pow(2.0, -double(n + N));
      const double rhs = 2 * std::exp(-g * g * n / (M0 * L * L));
      if (lhs > rhs * (1 + 1e-9)) {
        if (bN == 0 || n + N < bn + bN) bN = N, bn = n;
        break;
      }
    }
  }
  return {bN, bn};
}

}  // namespace

TEST(Ladder, DriftReport) {
  const auto lc = ladder_chain(30);
  const auto& d = lc.drift;
  EXPECT_TRUE(d.shift_exact);
  EXPECT_LT(d.max_ratio_error, 4e-16);
  EXPECT_EQ(d.ratio.size(), 28u);
  EXPECT_NEAR(d.PV1_limit, 1.0 + std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(d.PV1_limit - d.PV1_truncated, d.PV1_truncation_deficit, 1e-12);
  EXPECT_NEAR(d.PV1_untruncated, d.PV1_limit, 1e-9);
  EXPECT_LT(d.stationary_max_error, 1e-13);
  EXPECT_THROW(ladder_chain(2), InvalidArgument);
}

TEST(Counterexample, FrozenCertificateForSqrtLog) {
  const auto c = counterexample_certificate(sqrt_log, "sqrt_log", 1.0, 1.0, 30);
  EXPECT_EQ(c.N, 2u);
  EXPECT_EQ(c.n, 7u);
  EXPECT_TRUE(c.valid());
  EXPECT_EQ(c.g_N, 1.0);
  EXPECT_EQ(c.lhs, std::ldexp(1.0, -9));
  EXPECT_NEAR(c.rhs, 2 * std::exp(-7.0), 1e-16);
  EXPECT_TRUE(c.descent.deterministic);
  EXPECT_TRUE(c.descent.holds);
  EXPECT_EQ(c.descent.path.front(), 9u);
  EXPECT_EQ(c.descent.path.back(), 3u);
  EXPECT_GE(c.descent.K, 7.0);
  const auto [N, n] = brute_force_NN(1.0, 1.0);
  EXPECT_EQ(c.N, N);
  EXPECT_EQ(c.n, n);
}

TEST(Counterexample, BitIdenticalRecompute) {
  const auto a = counterexample_certificate(sqrt_log, "sqrt_log", 2.0, 1.0, 60, 5);
  const auto b = counterexample_certificate(sqrt_log, "sqrt_log", 2.0, 1.0, 60, 5);
  EXPECT_EQ(a.N, b.N);
  EXPECT_EQ(a.n, b.n);
  EXPECT_EQ(a.rhs, b.rhs);
  EXPECT_EQ(a.descent.K, b.descent.K);
  EXPECT_EQ(a.descent.path, b.descent.path);
}

TEST(Counterexample, AgreesWithBruteForce) {
  for (double M0 : {0.5, 1.0, 2.0, 3.0})
    for (double L : {0.5, 1.0}) {
      const auto [N, n] = brute_force_NN(M0, L);
      ASSERT_GT(N, 0u);
      const auto c = counterexample_certificate(sqrt_log, "sqrt_log", M0, L, 200);
      EXPECT_EQ(c.n + c.N, n + N) << "M0=" << M0 << " L=" << L;
      EXPECT_TRUE(c.valid());
      EXPECT_TRUE(c.descent.holds);
    }
}

TEST(Counterexample, TruncationReported) {
  EXPECT_THROW(counterexample_certificate(sqrt_log, "sqrt_log", 50.0, 1.0, 30), TruncationError);
}

TEST(Counterexample, LargerLNeedsLargerN) {
  std::size_t prev = 0;
  for (double L = 0.5; L <= 4.0; L *= 2) {
    const auto c = counterexample_certificate(sqrt_log, "sqrt_log", 1.0, L, 400);
    EXPECT_GE(c.N, prev);
    prev = c.N;
  }
}

TEST(Concentration, IidMcDiarmidConstantPasses) {
  const auto K = iid_chain();
  const auto cert = make_certificate(K, {0, 1});
  const auto spec = visit_count({0}, 2, 50);
  ConcentrationOptions opt;
  opt.M0 = 0.5;
  const std::vector<double> ts = {2, 4, 6, 8, 10};
  const auto r = concentration_experiment(K, cert, spec, InitSpec::point(0), 20000, ts, 3, opt);
  EXPECT_TRUE(r.pass);
  EXPECT_TRUE(r.mean_exact);
  EXPECT_DOUBLE_EQ(r.mean, 25.5);  // x_0 = 0 is a sure visit
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) EXPECT_GE(r.empirical[k], r.empirical[k + 1]);
  for (std::size_t k = 0; k < ts.size(); ++k) EXPECT_DOUBLE_EQ(r.bound[k], r.mcdiarmid[k]);
}

TEST(Concentration, ExactBinomialUnderMcDiarmid) {
  for (std::size_t n : {10, 50, 100})
    for (double t = 0.5; t <= double(n) / 2; t += 0.5)
      EXPECT_LE(binomial_tail_exact(n, 0.5, t), 2 * std::exp(-2 * t * t / n) + 1e-15);
  EXPECT_NEAR(binomial_tail_exact(2, 0.5, 1.0), 0.5, 1e-15);
}

TEST(Concentration, AssembledBoundAndJobsInvariance) {
  const auto K = P2();
  const auto cert = make_certificate(K, {0, 1});
  const auto spec = visit_count({0}, 2, 100);
  const std::vector<double> ts = {5, 10, 20};
  ConcentrationOptions one, three;
  three.jobs = 3;
  const auto a = concentration_experiment(K, cert, spec, InitSpec::stationary(), 4000, ts, 11, one);
  const auto b = concentration_experiment(K, cert, spec, InitSpec::stationary(), 4000, ts, 11, three);
  EXPECT_TRUE(a.pass);
  EXPECT_EQ(a.M0_source, b.M0_source);
  EXPECT_EQ(a.empirical, b.empirical);
  EXPECT_EQ(a.fitted_M0, b.fitted_M0);
  EXPECT_GT(a.M0_used, 0.5);
}

TEST(Concentration, RejectsBadInput) {
  const auto K = P2();
  const auto cert = make_certificate(K, {0, 1});
  const auto spec = visit_count({0}, 2, 10);
  EXPECT_THROW(concentration_experiment(K, cert, spec, InitSpec::point(0), 1, {1.0}, 1), InvalidArgument);
  EXPECT_THROW(concentration_experiment(K, cert, spec, InitSpec::point(0), 10, {}, 1), InvalidArgument);
}

TEST(Characterization, HoldsWithGeometricDecay) {
  const auto K = P2();
  const auto cert = make_certificate(K, {0});
  const auto r = characterization_experiment(K, cert, 40, 2000, 5);
  EXPECT_TRUE(r.all_hold);
  EXPECT_GT(r.fitted_kappa, 1.0);
  EXPECT_NEAR(r.fitted_kappa, r.kappa_star, 1e-6 * r.kappa_star);
  EXPECT_GT(r.atom_kappa_star, 1.0);
  EXPECT_TRUE(std::isfinite(r.atom_moment));
  for (const auto& row : r.rows) {
    EXPECT_LE(row.lhs_exact, row.rhs + 1e-15);
    EXPECT_NEAR(row.lhs_mc, row.lhs_exact, 5 * row.lhs_mc_se + 2e-3);
  }
}

TEST(Characterization, FullMinorizationHasNoGeometricTerm) {
  Matrix P(2, 2);
  P << 0.3, 0.7, 0.3, 0.7;
  const TransitionKernel K(P);
  const auto cert = make_certificate(K, {0, 1}, 1, 1.0);
  const auto r = characterization_experiment(K, cert, 10, 0, 1);
  EXPECT_TRUE(r.all_hold);
  for (const auto& row : r.rows)
    if (row.n >= 1 / r.epsilon) EXPECT_EQ(row.geometric, 0.0);
}

TEST(Ladder, DeterministicDescent) {
  const auto P = ladder_kernel(10);
  const auto mu = n_step_distribution(P, Distribution::point(10, 4), 4);
  EXPECT_EQ(mu[0], 1.0);
  for (std::uint64_t s = 0; s < 20; ++s)
    EXPECT_EQ(simulate_from(P, 4, 5, s).states, (std::vector<std::size_t>{4, 3, 2, 1, 0}));
}
