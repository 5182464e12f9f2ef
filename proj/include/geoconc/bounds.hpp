#pragma once

// Concentration constants: the expectation-gap bound, assembly of M0 from
// coupling and return-time moments, tail evaluation and empirical fitting.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geoconc/absorbing.hpp"
#include "geoconc/coupling.hpp"
#include "geoconc/splitting.hpp"

namespace geoconc {

/// M1 * sum_i L_i rho^i.
inline double expectation_gap_bound(double M1, double rho, std::span<const double> L) {
  if (!(rho > 0.0 && rho < 1.0)) throw InvalidArgument("expectation gap: rho must lie in (0,1)");
  double acc = 0.0, w = 1.0;
  for (double l : L) {
    acc += l * w;
    w *= rho;
  }
  return M1 * acc;
}

struct ConstantLedger {
  double M1 = 0.0;       // sup_{x in C} E[kappa_c^tau] for the coupling time
  double rho = 0.0;      // 1 / kappa_c
  double kappa = 0.0;    // return-time moment base
  double R_C = 0.0;      // sup_{x in C} E_x[kappa^tau_C]
  double epsilon0 = 0.0;
  double sigma = 0.0;
  double M2 = 0.0, M3 = 0.0, M4 = 0.0, M5 = 0.0, M6 = 0.0, M7 = 0.0;
  double M0 = 0.0;
  std::map<std::string, std::string> provenance;

  // e^{M5 eps0} sigma^-2 <= kappa
  bool admissible() const {
    return std::exp(M5 * epsilon0) / (sigma * sigma) <= kappa * (1.0 + 1e-12);
  }
};

namespace detail {

struct SigmaTerms {
  double M4, M5;
};

inline SigmaTerms sigma_free_terms(double M1, double rho) {
  const double M4 = M1 + std::max(1.0, M1);
  const double M5 = M4 * (1.0 + 1.0 / (1.0 - rho));
  return {M4, M5};
}

inline double m0_of_sigma(double sigma, double kappa, double R_C, const SigmaTerms& t) {
  const double log_arg = std::log(kappa * sigma * sigma);
  if (!(log_arg > 0.0) || !(sigma < 1.0)) return std::numeric_limits<double>::infinity();
  const double eps0 = log_arg / t.M5;
  const double M6 = t.M4 * t.M4 / (1.0 - sigma);
  const double M3 = M6 * R_C;
  return 4.0 * (M3 / (1.0 - sigma) + 2.0 / eps0);
}

}  // namespace detail

/// Assembles the concentration constant:
///   M4 = M1 + max(1, M1), M5 = M4 (1 + 1/(1-rho)),
///   sigma in [max(rho, kappa^-1/2), 1) minimizing M0 (golden section),
///   eps0 = log(kappa sigma^2) / M5, M6 = M4^2 / (1-sigma),
///   M7 = M6 R_C, M3 = M7, M2 = M3/(1-sigma) + 2/eps0, M0 = 4 M2.
inline ConstantLedger assemble_M0(double kappa, double R_C, double M1, double rho) {
  if (!(kappa > 1.0)) throw InvalidArgument("assemble_M0: kappa must exceed 1");
  if (!(R_C >= 1.0) || !std::isfinite(R_C)) throw InvalidArgument("assemble_M0: R_C must be >= 1");
  if (!(M1 >= 1.0) || !std::isfinite(M1)) throw InvalidArgument("assemble_M0: M1 must be >= 1");
  if (!(rho > 0.0 && rho < 1.0)) throw InvalidArgument("assemble_M0: rho must lie in (0,1)");

  const auto terms = detail::sigma_free_terms(M1, rho);
  const double floor_kappa = 1.0 / std::sqrt(kappa);
  double a = std::max(rho, floor_kappa);
  if (a == floor_kappa) a = std::nextafter(a, 1.0);
  double b = std::nextafter(1.0, 0.0);
  if (!(a < b)) throw NumericError("assemble_M0: no admissible (sigma, eps0)");

  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  auto f = [&](double s) { return detail::m0_of_sigma(s, kappa, R_C, terms); };
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && (b - a) > 1e-15; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  double sigma = fc < fd ? c : d;
  const double lower = std::max(rho, std::nextafter(floor_kappa, 1.0));
  if (sigma < lower) sigma = lower;

  ConstantLedger L;
  L.M1 = M1;
  L.rho = rho;
  L.kappa = kappa;
  L.R_C = R_C;
  L.sigma = sigma;
  L.M4 = terms.M4;
  L.M5 = terms.M5;
  L.epsilon0 = std::log(kappa * sigma * sigma) / L.M5;
  L.M6 = L.M4 * L.M4 / (1.0 - sigma);
  L.M7 = L.M6 * R_C;
  L.M3 = L.M7;
  L.M2 = L.M3 / (1.0 - sigma) + 2.0 / L.epsilon0;
  L.M0 = 4.0 * L.M2;
  if (!(L.epsilon0 > 0.0) || !std::isfinite(L.M0))
    throw NumericError("assemble_M0: no admissible (sigma, eps0)");
  L.provenance = {
      {"M4", "M1 + max(1, M1)"},
      {"M5", "M4 * (1 + 1/(1 - rho))"},
      {"sigma", "golden-section minimizer of M0 over [max(rho, kappa^-1/2), 1)"},
      {"epsilon0", "log(kappa * sigma^2) / M5"},
      {"M6", "M4^2 / (1 - sigma)"},
      {"M7", "M6 * R_C"},
      {"M3", "M7"},
      {"M2", "M3 / (1 - sigma) + 2 / epsilon0"},
      {"M0", "4 * M2"},
  };
  return L;
}

/// 2 exp(-t^2 / (M0 sum L_i^2)).
inline double tail_bound(double M0, std::span<const double> L, double t) {
  if (!(M0 > 0.0)) throw InvalidArgument("tail_bound: M0 must be positive");
  if (t < 0.0) throw InvalidArgument("tail_bound: t must be nonnegative");
  double s = 0.0;
  for (double l : L) s += l * l;
  if (s == 0.0) {
    if (t > 0.0) throw DegenerateFunctional();
    return 2.0;
  }
  return 2.0 * std::exp(-t * t / (M0 * s));
}

struct TailPoint {
  double t;
  double probability;
};

/// Smallest M0 whose tail curve lies on or above every empirical point.
inline double fit_M0(std::span<const TailPoint> points, std::span<const double> L) {
  double s = 0.0;
  for (double l : L) s += l * l;
  if (s == 0.0) throw DegenerateFunctional();
  double M0 = 0.0;
  for (const auto& p : points) {
    if (p.t < 0.0) throw InvalidArgument("fit_M0: negative t");
    if (p.probability > 1.0 || p.probability < 0.0)
      throw InvalidArgument("fit_M0: probability outside [0,1]");
    if (p.probability == 0.0 || p.t == 0.0) continue;
    M0 = std::max(M0, p.t * p.t / (s * std::log(2.0 / p.probability)));
  }
  return M0;
}

// Chernoff step: the optimal lambda and the resulting two-sided tail.
inline double chernoff_lambda(double M2, double sum_L_sq, double t) {
  return t / (2.0 * M2 * sum_L_sq);
}
inline double chernoff_tail(double M2, double sum_L_sq, double t) {
  return 2.0 * std::exp(-t * t / (4.0 * M2 * sum_L_sq));
}

struct LedgerEstimate {
  ConstantLedger ledger;
  double kappa_coupling = 0.0;       // 1 / rho
  double kappa_coupling_star = 0.0;  // critical coupling base (min over C)
  double kappa_return_star = 0.0;    // critical return-time base
  bool skeleton = false;             // constants refer to the m-skeleton
  int m = 1;
};

/// Chooses the coupling base kappa_c and the return-time base kappa on
/// log-spaced grids inside their convergence regions, computes M1 and R_C
/// exactly, and keeps the pair with the smallest assembled M0.
inline LedgerEstimate estimate_ledger(const TransitionKernel& kernel,
                                      const MinorizationCertificate& cert, int grid = 24) {
  LedgerEstimate out;
  out.m = cert.m;
  out.skeleton = cert.m > 1;
  const TransitionKernel skel = cert.m > 1 ? skeleton_kernel(kernel, cert.m) : kernel;
  const MinorizationCertificate c1 = skeleton_certificate(cert);
  const SplitChain chain(skel, c1);
  const Distribution pi = stationary(skel);

  std::vector<CouplingOracle> oracles;
  double kc_star = std::numeric_limits<double>::infinity();
  for (auto x : c1.C) {
    oracles.emplace_back(chain, pi, x);
    kc_star = std::min(kc_star, oracles.back().kappa_star());
  }
  double kr_star = std::numeric_limits<double>::infinity();
  for (auto x : c1.C)
    kr_star = std::min(
        kr_star, return_time_oracle(skel, c1.C, Distribution::point(skel.size(), x)).kappa_star());
  out.kappa_coupling_star = kc_star;
  out.kappa_return_star = kr_star;
  if (!(kc_star > 1.0) || !(kr_star > 1.0))
    throw NumericError("chain does not exhibit exponential coupling/return moments (kappa* <= 1)");

  const double kc_top = std::log(std::min(kc_star, 16.0));
  const double kr_top = std::log(std::min(kr_star, 64.0));
  std::vector<std::pair<double, double>> coupling;  // (kappa_c, M1)
  std::vector<std::pair<double, double>> returns;   // (kappa, R_C)
  for (int j = 1; j <= grid; ++j) {
    const double frac = static_cast<double>(j) / (grid + 1);
    const double kc = std::exp(frac * kc_top);
    double M1 = 0.0;
    for (const auto& o : oracles) M1 = std::max(M1, o.moment(kc));
    coupling.emplace_back(kc, M1);
    const double kr = std::exp(frac * kr_top);
    returns.emplace_back(kr, return_moment_sup(skel, c1.C, kr).value);
  }
  bool found = false;
  for (const auto& [kc, M1] : coupling)
    for (const auto& [kr, RC] : returns) {
      ConstantLedger L = assemble_M0(kr, std::max(RC, 1.0), std::max(M1, 1.0), 1.0 / kc);
      if (!found || L.M0 < out.ledger.M0) {
        out.ledger = L;
        out.kappa_coupling = kc;
        found = true;
      }
    }
  return out;
}

}  // namespace geoconc
