#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "geoconc/martingale.hpp"

using namespace geoconc;

namespace {

TransitionKernel P2() { return two_state_kernel(0.2, 0.4); }
MinorizationCertificate test_cert() {
  return make_certificate(P2(), {0, 1}, 1, 1.0 / 3.0, Distribution({0.4, 0.6}));
}

Matrix random_kernel(std::mt19937_64& g, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  Matrix P(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < n; ++c) s += (P(r, c) = e(g));
    P.row(r) /= s;
  }
  return P;
}

}  // namespace

TEST(Enumerate, ProbabilitiesSumToOne) {
  const auto law = enumerate_paths(P2(), Distribution({0.3, 0.7}), 8);
  double s = 0;
  for (double p : law.prob) s += p;
  EXPECT_NEAR(s, 1.0, 1e-14);
  EXPECT_EQ(law.size(), 256u);
  EXPECT_EQ(law.path(1), (std::vector<std::size_t>{0, 0, 0, 0, 0, 0, 0, 1}));
  EXPECT_NEAR(law.prob[1], 0.3 * std::pow(0.8, 6) * 0.2, 1e-16);
}

TEST(Enumerate, LimitEnforced) {
  EXPECT_THROW(enumerate_paths(P2(), Distribution::point(2, 0), 30), EnumerationLimit);
  EXPECT_THROW(martingale_increments_exact(P2(), test_cert(), 0, visit_count({0}, 2, 12), 1000),
               EnumerationLimit);
}

TEST(Decomposition, DefectsVanishOnRandomChains) {
  std::mt19937_64 g(21);
  for (int rep = 0; rep < 12; ++rep) {
    const std::size_t S = 2 + rep % 3;
    const TransitionKernel K(random_kernel(g, S));
    std::vector<std::size_t> C = {0};
    if (rep % 2) C.push_back(S - 1);
    const auto cert = make_certificate(K, C);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> w(S);
    for (auto& v : w) v = u(g);
    const auto spec = additive(w, 5);
    const auto dec = martingale_increments_exact(K, cert, 0, spec);
    const auto est = estimate_ledger(K, cert);
    const auto r = verify_increment_inequalities(dec, est.ledger);
    EXPECT_LT(r.martingale_defect, 1e-12);
    EXPECT_LT(r.telescoping_defect, 1e-12);
    EXPECT_LT(r.off_return_defect, 1e-12);
  }
}

TEST(Decomposition, IidWholeSpaceReturnsImmediately) {
  Matrix P(3, 3);
  P.rowwise() = RowVector::Map(std::vector<double>{0.2, 0.5, 0.3}.data(), 3);
  const TransitionKernel K(P);
  const auto cert = make_certificate(K, {0, 1, 2});
  const auto dec = martingale_increments_exact(K, cert, 1, additive({0, 1, 3}, 4));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t p = 0; p < dec.law.size(); ++p)
      if (dec.law.prob[p] > 0) ASSERT_EQ(dec.tau[i][p], i);
  // Increments are the centered coordinates.
  for (std::size_t p = 0; p < dec.law.size(); ++p) {
    if (dec.law.prob[p] == 0) continue;
    const auto path = dec.law.path(p);
    const double g[3] = {0, 1, 3};
    for (std::size_t i = 1; i < 4; ++i) EXPECT_NEAR(dec.D[i - 1][p], g[path[i]] - 1.4, 1e-13);
    EXPECT_EQ(dec.D[3][p], 0.0);
  }
}

TEST(Decomposition, StartOutsideCRejected) {
  Matrix P(3, 3);
  P << 0.1, 0.6, 0.3, 0.5, 0.2, 0.3, 0.3, 0.3, 0.4;
  const TransitionKernel K(P);
  EXPECT_THROW(martingale_increments_exact(K, make_certificate(K, {0, 2}), 1, visit_count({0}, 3, 3)),
               InvalidArgument);
}

TEST(Inequalities, HoldOnTestChain) {
  const auto est = estimate_ledger(P2(), test_cert());
  for (std::size_t n = 2; n <= 8; ++n)
    for (std::size_t x = 0; x < 2; ++x) {
      const auto dec = martingale_increments_exact(P2(), test_cert(), x, visit_count({0}, 2, n));
      const auto r = verify_increment_inequalities(dec, est.ledger);
      EXPECT_TRUE(r.M4_holds) << r.M4_min << " > " << est.ledger.M4;
      EXPECT_TRUE(r.M5_holds) << r.M5_min << " > " << est.ledger.M5;
      EXPECT_TRUE(r.M6_holds) << r.M6_min << " > " << est.ledger.M6;
      EXPECT_TRUE(r.cond_mgf_scaled_holds);
      EXPECT_TRUE(r.coupling_gap_holds) << r.coupling_gap_ratio;
    }
}

TEST(Inequalities, HoldOnThreeStateChain) {
  Matrix P(3, 3);
  P << 0.1, 0.6, 0.3, 0.5, 0.2, 0.3, 0.3, 0.3, 0.4;
  const TransitionKernel K(P);
  const auto cert = make_certificate(K, {0, 2});
  const auto est = estimate_ledger(K, cert);
  const auto spec = additive({0.0, 1.0, -0.5}, 6);
  for (std::size_t x : {0, 2}) {
    const auto r = verify_increment_inequalities(martingale_increments_exact(K, cert, x, spec), est.ledger);
    EXPECT_TRUE(r.M4_holds && r.M5_holds && r.M6_holds);
    EXPECT_TRUE(r.cond_mgf_holds && r.cond_mgf_scaled_holds);
    EXPECT_TRUE(r.coupling_gap_holds);
  }
}
