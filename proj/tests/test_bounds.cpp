#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "geoconc/bounds.hpp"
#include "geoconc/experiments.hpp"
#include "geoconc/martingale.hpp"

using namespace geoconc;

namespace {

TransitionKernel P2() { return two_state_kernel(0.2, 0.4); }
MinorizationCertificate test_cert() {
  return make_certificate(P2(), {0, 1}, 1, 1.0 / 3.0, Distribution({0.4, 0.6}));
}

TransitionKernel iid_chain() {
  Matrix P(2, 2);
  P << 0.5, 0.5, 0.5, 0.5;
  return TransitionKernel(P);
}

}  // namespace

TEST(ExpectationGap, GeometricSum) {
  const std::vector<double> L = {1, 1, 1};
  EXPECT_DOUBLE_EQ(expectation_gap_bound(2.0, 0.5, L), 3.5);
  EXPECT_THROW(expectation_gap_bound(2.0, 1.0, L), InvalidArgument);
  EXPECT_THROW(expectation_gap_bound(2.0, 0.0, L), InvalidArgument);
}

TEST(TailBound, ValuesAndScaling) {
  const std::vector<double> L = {1, 2};
  EXPECT_DOUBLE_EQ(tail_bound(1.0, L, std::sqrt(5.0)), 2.0 * std::exp(-1.0));
  EXPECT_EQ(tail_bound(1.0, L, 0.0), 2.0);
  // Scaling L and t together leaves the bound unchanged.
  const std::vector<double> L3 = {3, 6};
  for (double t : {0.5, 1.0, 4.0}) EXPECT_NEAR(tail_bound(2.0, L3, 3 * t), tail_bound(2.0, L, t), 1e-15);
  for (double t = 0; t < 10; t += 0.5) EXPECT_GE(tail_bound(2.0, L, t), tail_bound(2.0, L, t + 0.5));
}

TEST(TailBound, DegenerateFunctional) {
  const std::vector<double> Z = {0, 0};
  EXPECT_THROW(tail_bound(1.0, Z, 1.0), DegenerateFunctional);
  EXPECT_EQ(tail_bound(1.0, Z, 0.0), 2.0);
  EXPECT_THROW(tail_bound(0.0, std::vector<double>{1}, 1.0), InvalidArgument);
}

TEST(FitM0, SinglePoint) {
  const std::vector<double> L = {1};
  const std::vector<TailPoint> pts = {{1.0, 2.0 / std::exp(1.0)}};
  EXPECT_NEAR(fit_M0(pts, L), 1.0, 1e-15);
  const std::vector<TailPoint> none = {{0.0, 1.0}, {3.0, 0.0}};
  EXPECT_EQ(fit_M0(none, L), 0.0);
  EXPECT_THROW(fit_M0(std::vector<TailPoint>{{1.0, 1.5}}, L), InvalidArgument);
}

TEST(FitM0, BinomialBelowMcDiarmid) {
  const std::size_t n = 200;
  const std::vector<double> L(n, 1.0);
  std::vector<TailPoint> pts;
  for (double t = 1; t <= 40; t += 1) pts.push_back({t, binomial_tail_exact(n, 0.5, t)});
  const double M0 = fit_M0(pts, L);
  EXPECT_LE(M0, 0.5 + 1e-12);
  EXPECT_GT(M0, 0.3);
}

TEST(Assemble, AdmissibleAndConsistent) {
  for (double kappa : {1.1, 1.5, 3.0})
    for (double rho : {0.2, 0.6, 0.95}) {
      const auto L = assemble_M0(kappa, 1.7, 2.3, rho);
      EXPECT_TRUE(L.admissible());
      EXPECT_GE(L.sigma, rho);
      EXPECT_GT(L.sigma * L.sigma * kappa, 1.0);
      EXPECT_LT(L.sigma, 1.0);
      EXPECT_GT(L.epsilon0, 0.0);
      EXPECT_DOUBLE_EQ(L.M4, 2.3 + 2.3);
      EXPECT_DOUBLE_EQ(L.M5, L.M4 * (1 + 1 / (1 - rho)));
      EXPECT_DOUBLE_EQ(L.M0, 4 * L.M2);
      EXPECT_DOUBLE_EQ(L.M2, L.M3 / (1 - L.sigma) + 2 / L.epsilon0);
      EXPECT_DOUBLE_EQ(L.M3, L.M4 * L.M4 / (1 - L.sigma) * 1.7);
      EXPECT_FALSE(L.provenance.empty());
    }
}

TEST(Assemble, SigmaNearOptimal) {
  const auto L = assemble_M0(1.5, 2.0, 1.5, 0.5);
  const auto t = detail::sigma_free_terms(1.5, 0.5);
  for (double s = L.sigma - 1e-3; s <= L.sigma + 1e-3; s += 1e-4)
    if (s >= 0.5 && s < 1) {
      EXPECT_GE(detail::m0_of_sigma(s, 1.5, 2.0, t), L.M0 * (1 - 1e-9));
    }
}

TEST(Assemble, BitIdenticalAndMonotone) {
  const auto a = assemble_M0(1.3, 1.9, 1.4, 0.7);
  const auto b = assemble_M0(1.3, 1.9, 1.4, 0.7);
  EXPECT_EQ(a.M0, b.M0);
  EXPECT_EQ(a.sigma, b.sigma);
  double prev = 0;
  for (double R = 1.0; R < 20; R *= 1.5) {
    const double m = assemble_M0(1.3, R, 1.4, 0.7).M0;
    EXPECT_GE(m, prev);
    prev = m;
  }
}

TEST(Assemble, RejectsBadInputs) {
  EXPECT_THROW(assemble_M0(1.0, 2, 2, 0.5), InvalidArgument);
  EXPECT_THROW(assemble_M0(2.0, 0.5, 2, 0.5), InvalidArgument);
  EXPECT_THROW(assemble_M0(2.0, 2, 0.5, 0.5), InvalidArgument);
  EXPECT_THROW(assemble_M0(2.0, 2, 2, 1.0), InvalidArgument);
}

TEST(Chernoff, OptimalLambda) {
  const double M2 = 3.0, s = 5.0, t = 7.0;
  const double lam = chernoff_lambda(M2, s, t);
  EXPECT_NEAR(2 * std::exp(lam * lam * M2 * s - lam * t), chernoff_tail(M2, s, t), 1e-15);
  EXPECT_NEAR(chernoff_tail(M2, s, t), tail_bound(4 * M2, std::vector<double>{std::sqrt(s)}, t),
              1e-15);
}

TEST(Ledger, TestChainValues) {
  const auto est = estimate_ledger(P2(), test_cert());
  EXPECT_NEAR(est.kappa_coupling_star, 1.125, 1e-12);
  EXPECT_TRUE(std::isinf(est.kappa_return_star));
  EXPECT_TRUE(est.ledger.admissible());
  EXPECT_TRUE(std::isfinite(est.ledger.M0));
  EXPECT_FALSE(est.skeleton);
  EXPECT_EQ(est.ledger.M0, estimate_ledger(P2(), test_cert()).ledger.M0);
}

TEST(Ledger, IidBoundDominatesMcDiarmid) {
  const auto K = iid_chain();
  const auto cert = make_certificate(K, {0, 1});
  const auto est = estimate_ledger(K, cert);
  EXPECT_GE(est.ledger.M0, 0.5);
  const std::vector<double> L(50, 1.0);
  for (double t = 0; t <= 30; t += 2)
    EXPECT_GE(tail_bound(est.ledger.M0, L, t), 2 * std::exp(-2 * t * t / 50));
}

TEST(Ledger, ExactTailsBelowBound) {
  const auto K = P2();
  const auto est = estimate_ledger(K, test_cert());
  for (std::size_t n = 1; n <= 6; ++n) {
    const auto spec = visit_count({0}, 2, n);
    for (std::size_t x = 0; x < 2; ++x) {
      const auto law = enumerate_paths(K, Distribution::point(2, x), n);
      std::vector<double> ts;
      for (double t = 0.25; t <= double(n); t += 0.25) ts.push_back(t);
      const auto tail = exact_tail(spec, law, ts);
      for (std::size_t k = 0; k < ts.size(); ++k)
        EXPECT_LE(tail[k], tail_bound(est.ledger.M0, spec.L_declared, ts[k]));
    }
  }
}

TEST(Ledger, LogMgfBelowQuadratic) {
  const auto K = P2();
  const auto est = estimate_ledger(K, test_cert());
  const auto& led = est.ledger;
  for (std::size_t n = 2; n <= 8; ++n) {
    const auto spec = additive({0.0, 1.0}, n);
    const auto law = enumerate_paths(K, Distribution::point(2, 0), n);
    for (int j = 1; j <= 10; ++j) {
      const double lam = led.epsilon0 * j / 10.0;
      for (double sgn : {1.0, -1.0})
        EXPECT_LE(exact_log_mgf(spec, law, sgn * lam), lam * lam * led.M2 * spec.sum_L_sq());
    }
  }
}
