#pragma once

// Exhaustive path enumeration and the return-time martingale decomposition
// K - E K = sum_i D_i with D_i = E(K | F_i) - E(K | F_{i-1}), where F_i is
// the stopped sigma-field of tau_i = inf{k >= i : X_k in C}.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "geoconc/bounds.hpp"
#include "geoconc/chain.hpp"
#include "geoconc/functionals.hpp"
#include "geoconc/splitting.hpp"

namespace geoconc {

/// All S^n paths of length n, index with x_0 most significant.
struct PathLaw {
  std::size_t n = 0;
  std::size_t n_states = 0;
  std::vector<double> prob;

  std::size_t size() const noexcept { return prob.size(); }
  std::vector<std::size_t> path(std::size_t idx) const {
    std::vector<std::size_t> out(n);
    for (std::size_t i = n; i-- > 0;) {
      out[i] = idx % n_states;
      idx /= n_states;
    }
    return out;
  }
};

inline PathLaw enumerate_paths(const TransitionKernel& kernel, const Distribution& init,
                               std::size_t n, double limit = 1e7) {
  if (n == 0) throw InvalidArgument("path enumeration needs n >= 1");
  const std::size_t S = kernel.size();
  const double count = std::pow(static_cast<double>(S), static_cast<double>(n));
  if (count > limit) throw EnumerationLimit(count, limit);
  const Matrix& P = kernel.matrix();
  PathLaw law;
  law.n = n;
  law.n_states = S;
  law.prob.assign(init.weights().begin(), init.weights().end());
  for (std::size_t k = 1; k < n; ++k) {
    std::vector<double> next(law.prob.size() * S);
    for (std::size_t q = 0; q < law.prob.size(); ++q)
      for (std::size_t s = 0; s < S; ++s) next[q * S + s] = law.prob[q] * P(q % S, s);
    law.prob = std::move(next);
  }
  return law;
}

/// Exact P(|K - E K| >= t) for each t, by enumeration.
inline std::vector<double> exact_tail(const FunctionalSpec& spec, const PathLaw& law,
                                      std::span<const double> t_grid, double* mean_out = nullptr) {
  std::vector<double> values(law.size());
  double mean = 0.0;
  for (std::size_t p = 0; p < law.size(); ++p) {
    if (law.prob[p] == 0.0) continue;
    values[p] = spec(law.path(p));
    mean += law.prob[p] * values[p];
  }
  std::vector<double> tail(t_grid.size(), 0.0);
  for (std::size_t p = 0; p < law.size(); ++p) {
    if (law.prob[p] == 0.0) continue;
    const double dev = std::abs(values[p] - mean);
    for (std::size_t k = 0; k < t_grid.size(); ++k)
      if (dev >= t_grid[k]) tail[k] += law.prob[p];
  }
  if (mean_out) *mean_out = mean;
  return tail;
}

// log E exp(lambda (K - E K)) by enumeration.
inline double exact_log_mgf(const FunctionalSpec& spec, const PathLaw& law, double lambda) {
  std::vector<double> values(law.size());
  double mean = 0.0;
  for (std::size_t p = 0; p < law.size(); ++p) {
    if (law.prob[p] == 0.0) continue;
    values[p] = spec(law.path(p));
    mean += law.prob[p] * values[p];
  }
  double acc = 0.0;
  for (std::size_t p = 0; p < law.size(); ++p)
    if (law.prob[p] > 0.0) acc += law.prob[p] * std::exp(lambda * (values[p] - mean));
  return std::log(acc);
}

struct MartingaleDecomposition {
  std::size_t n = 0;
  std::size_t n_states = 0;
  std::size_t x0 = 0;
  std::vector<bool> in_C;
  std::vector<double> L;
  PathLaw law;
  std::vector<double> K;                       // K per path
  double mean = 0.0;                           // E_{x0} K
  std::vector<std::vector<double>> g;          // g[j][prefix of length j+1]
  std::vector<std::vector<double>> g_pi;       // same, last free coordinates under pi
  std::vector<std::vector<std::size_t>> tau;   // tau[i][p], i = 0..n; n means "no return before n"
  std::vector<std::vector<double>> D;          // D[i-1][p], i = 1..n

  std::size_t prefix(std::size_t j, std::size_t p) const {
    std::size_t div = 1;
    for (std::size_t k = j + 1; k < n; ++k) div *= n_states;
    return p / div;
  }
  // E(K | F_i) on path p.
  double conditional(std::size_t i, std::size_t p) const {
    const std::size_t j = std::min(tau[i][p], n - 1);
    return g[j][prefix(j, p)];
  }
  // Atom of F_i containing path p: (stopping index, prefix up to it).
  std::pair<std::size_t, std::size_t> atom(std::size_t i, std::size_t p) const {
    const std::size_t j = std::min(tau[i][p], n - 1);
    return {j, prefix(j, p)};
  }
};

inline MartingaleDecomposition martingale_increments_exact(const TransitionKernel& kernel,
                                                           const MinorizationCertificate& cert,
                                                           std::size_t x0,
                                                           const FunctionalSpec& spec,
                                                           double limit = 1e7) {
  if (!cert.contains(x0)) throw InvalidArgument("decomposition must start inside the small set");
  if (spec.n == 0) throw InvalidArgument("functional horizon must be positive");
  const std::size_t S = kernel.size();
  const std::size_t n = spec.n;
  const Matrix& P = kernel.matrix();
  const Distribution pi = stationary(kernel);

  MartingaleDecomposition dec;
  dec.n = n;
  dec.n_states = S;
  dec.x0 = x0;
  dec.in_C.assign(S, false);
  for (auto c : cert.C) dec.in_C[c] = true;
  dec.L = spec.L_declared;
  dec.L.resize(n, 0.0);
  dec.law = enumerate_paths(kernel, Distribution::point(S, x0), n, limit);

  const std::size_t total = dec.law.size();
  dec.K.assign(total, 0.0);
  for (std::size_t p = 0; p < total; ++p) dec.K[p] = spec(dec.law.path(p));

  dec.g.resize(n);
  dec.g_pi.resize(n);
  dec.g[n - 1] = dec.K;
  dec.g_pi[n - 1] = dec.K;
  for (std::size_t j = n - 1; j-- > 0;) {
    const std::size_t width = dec.g[j + 1].size() / S;
    dec.g[j].assign(width, 0.0);
    dec.g_pi[j].assign(width, 0.0);
    for (std::size_t q = 0; q < width; ++q) {
      const std::size_t xj = q % S;
      double a = 0.0, b = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        a += P(xj, s) * dec.g[j + 1][q * S + s];
        // First free coordinate drawn from pi, later ones follow P from it.
        b += pi.weights()[s] * dec.g[j + 1][q * S + s];
      }
      dec.g[j][q] = a;
      dec.g_pi[j][q] = b;
    }
  }
  dec.mean = dec.g[0][x0];

  dec.tau.assign(n + 1, std::vector<std::size_t>(total, n));
  for (std::size_t p = 0; p < total; ++p) {
    const auto path = dec.law.path(p);
    std::size_t next = n;
    for (std::size_t i = n; i-- > 0;) {
      if (dec.in_C[path[i]]) next = i;
      dec.tau[i][p] = next;
    }
  }
  dec.D.assign(n, std::vector<double>(total, 0.0));
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t p = 0; p < total; ++p)
      dec.D[i - 1][p] = dec.conditional(i, p) - dec.conditional(i - 1, p);
  return dec;
}

struct IncrementReport {
  double martingale_defect = 0.0;   // max |E[D_i | F_{i-1}]|
  double telescoping_defect = 0.0;  // max |sum D_i - (K - E K)|
  double off_return_defect = 0.0;   // max |D_i| on {tau_{i-1} > i-1}
  double coupling_gap_ratio = 0.0;  // max |g_j - g_{j,pi}| / (M1 sum_{k>j} L_k rho^{k-j})
  // Smallest constants making each pathwise bound hold on this instance.
  double M4_min = 0.0;
  double M5_min = 0.0;
  double M6_min = 0.0;
  double M3_min = 0.0;         // lambda = 1
  double M3_min_scaled = 0.0;  // lambda = eps0 / max L, so every L_k <= eps0
  double scale = 1.0;
  bool M4_holds = false, M5_holds = false, M6_holds = false;
  bool cond_mgf_holds = false;         // lambda = 1
  bool cond_mgf_scaled_holds = false;  // lambda = eps0 / max L
  bool coupling_gap_holds = false;
};

namespace detail {
inline void ratio_max(double& acc, double num, double den) {
  if (num <= 1e-12) return;
  acc = std::max(acc, den > 0.0 ? num / den : std::numeric_limits<double>::infinity());
}
}  // namespace detail

/// Checks the pathwise increment bounds and the conditional exponential bound
/// against the ledger, and reports the empirical minimal constants.
inline IncrementReport verify_increment_inequalities(const MartingaleDecomposition& dec,
                                                     const ConstantLedger& ledger) {
  IncrementReport r;
  const std::size_t n = dec.n;
  const std::size_t total = dec.law.size();
  const auto& L = dec.L;
  const double rho = ledger.rho, sigma = ledger.sigma;
  const double Lmax = *std::max_element(L.begin(), L.end());
  r.scale = Lmax > 0.0 ? std::min(1.0, ledger.epsilon0 / Lmax) : 1.0;

  auto weighted_sq = [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t k = i; k < n; ++k) s += L[k] * L[k] * std::pow(sigma, double(k - i));
    return s;
  };

  for (std::size_t p = 0; p < total; ++p) {
    if (dec.law.prob[p] == 0.0) continue;
    double sum = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      const double Di = dec.D[i - 1][p];
      sum += Di;
      if (dec.tau[i - 1][p] > i - 1) {
        r.off_return_defect = std::max(r.off_return_defect, std::abs(Di));
        continue;
      }
      // tau = tau_i - (i-1); a missing return is cut at the horizon, which
      // only shrinks tau and so makes every ratio below conservative.
      const std::size_t tau = std::min(dec.tau[i][p], n) - (i - 1);
      double A = 0.0, B = 0.0, CS = 0.0;
      for (std::size_t k = i; k < n; ++k) {
        if (k <= i + tau - 1)
          A += L[k];
        else
          B += L[k] * std::pow(rho, double(k - i - tau));
      }
      CS = std::pow(sigma, -2.0 * double(tau)) * weighted_sq(i);
      detail::ratio_max(r.M4_min, std::abs(Di), A + B);
      detail::ratio_max(r.M5_min, std::abs(Di), Lmax * double(tau));
      detail::ratio_max(r.M6_min, Di * Di, CS);
    }
    r.telescoping_defect = std::max(r.telescoping_defect, std::abs(sum - (dec.K[p] - dec.mean)));
  }

  // Conditional statements, one F_{i-1} atom at a time.
  double cond_mgf_excess = -std::numeric_limits<double>::infinity();
  double cond_mgf_scaled_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i <= n; ++i) {
    struct Acc {
      double mass = 0.0, d = 0.0, e1 = 0.0, es = 0.0;
    };
    std::map<std::pair<std::size_t, std::size_t>, Acc> atoms;
    for (std::size_t p = 0; p < total; ++p) {
      const double w = dec.law.prob[p];
      if (w == 0.0) continue;
      auto& a = atoms[dec.atom(i - 1, p)];
      const double Di = dec.D[i - 1][p];
      a.mass += w;
      a.d += w * Di;
      a.e1 += w * std::exp(Di);
      a.es += w * std::exp(r.scale * Di);
    }
    const double wsq = weighted_sq(i);
    for (const auto& [key, a] : atoms) {
      r.martingale_defect = std::max(r.martingale_defect, std::abs(a.d / a.mass));
      const double l1 = std::log(a.e1 / a.mass);
      const double ls = std::log(a.es / a.mass);
      detail::ratio_max(r.M3_min, l1, wsq);
      detail::ratio_max(r.M3_min_scaled, ls, r.scale * r.scale * wsq);
      cond_mgf_excess = std::max(cond_mgf_excess, l1 - ledger.M3 * wsq);
      cond_mgf_scaled_excess = std::max(cond_mgf_scaled_excess, ls - ledger.M3 * r.scale * r.scale * wsq);
    }
  }

  // |g_j - g_{j,pi}| <= M1 sum_{k>j} L_k rho^{k-j} whenever x_j in C.
  for (std::size_t j = 0; j + 1 < n; ++j) {
    double bound = 0.0;
    for (std::size_t k = j + 1; k < n; ++k) bound += L[k] * std::pow(rho, double(k - j));
    bound *= ledger.M1;
    for (std::size_t q = 0; q < dec.g[j].size(); ++q) {
      if (!dec.in_C[q % dec.n_states]) continue;
      detail::ratio_max(r.coupling_gap_ratio, std::abs(dec.g[j][q] - dec.g_pi[j][q]), bound);
    }
  }

  constexpr double slack = 1e-12;
  r.M4_holds = r.M4_min <= ledger.M4 * (1.0 + slack);
  r.M5_holds = r.M5_min <= ledger.M5 * (1.0 + slack);
  r.M6_holds = r.M6_min <= ledger.M6 * (1.0 + slack);
  r.cond_mgf_holds = cond_mgf_excess <= slack;
  r.cond_mgf_scaled_holds = cond_mgf_scaled_excess <= slack;
  r.coupling_gap_holds = r.coupling_gap_ratio <= 1.0 + slack;
  return r;
}

}  // namespace geoconc
