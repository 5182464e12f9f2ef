#pragma once

// End-to-end experiments: Monte Carlo concentration against the tail bound,
// the ladder chain and its violation certificate, and the atom-return
// characterization.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "geoconc/absorbing.hpp"
#include "geoconc/bounds.hpp"
#include "geoconc/chain.hpp"
#include "geoconc/functionals.hpp"
#include "geoconc/parallel.hpp"
#include "geoconc/rng.hpp"
#include "geoconc/splitting.hpp"

namespace geoconc {

// --- Concentration ----------------------------------------------------------

struct InitSpec {
  enum class Kind { point, stationary } kind = Kind::stationary;
  std::size_t x = 0;

  static InitSpec point(std::size_t x) { return {Kind::point, x}; }
  static InitSpec stationary() { return {Kind::stationary, 0}; }
  std::string describe() const {
    return kind == Kind::point ? "point:" + std::to_string(x) : "stationary";
  }
};

struct ConcentrationOptions {
  std::optional<double> M0;  // empty: assemble from the chain
  unsigned jobs = 1;
};

struct ConcentrationReport {
  std::vector<double> t_grid;
  std::vector<double> t_effective;  // t after the mean-error widening
  std::vector<double> empirical;
  std::vector<double> std_error;
  std::vector<double> bound;
  std::vector<double> mcdiarmid;  // 2 exp(-2 t^2 / sum L^2), for reference
  double M0_used = 0.0;
  std::string M0_source;
  double mean = 0.0;
  bool mean_exact = false;
  double mean_std_error = 0.0;
  std::size_t n_samples = 0;
  std::size_t n = 0;
  std::string init;
  bool pass = false;
  bool resolution_warning = false;
  double fitted_M0 = 0.0;
};

inline ConcentrationReport concentration_experiment(const TransitionKernel& kernel,
                                                    const MinorizationCertificate& cert,
                                                    const FunctionalSpec& spec, InitSpec init,
                                                    std::size_t n_samples,
                                                    std::vector<double> t_grid,
                                                    std::uint64_t seed,
                                                    const ConcentrationOptions& opt = {}) {
  if (n_samples < 2) throw InvalidArgument("concentration experiment needs at least 2 samples");
  if (t_grid.empty()) throw InvalidArgument("empty t grid");
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    if (t_grid[k] < 0.0) throw InvalidArgument("t grid must be nonnegative");
    if (k > 0 && !(t_grid[k] > t_grid[k - 1])) throw InvalidArgument("t grid must be increasing");
  }
  const std::size_t S = kernel.size();
  Distribution mu = init.kind == InitSpec::Kind::point ? Distribution::point(S, init.x)
                                                       : stationary(kernel);
  if (init.kind == InitSpec::Kind::point && !cert.contains(init.x))
    throw InvalidArgument("point start must lie in the small set");

  ConcentrationReport r;
  r.n = spec.n;
  r.n_samples = n_samples;
  r.init = init.describe();
  r.t_grid = t_grid;
  if (opt.M0) {
    if (!(*opt.M0 > 0.0)) throw InvalidArgument("M0 must be positive");
    r.M0_used = *opt.M0;
    r.M0_source = "supplied";
  } else {
    r.M0_used = estimate_ledger(kernel, cert).ledger.M0;
    r.M0_source = "assembled";
  }

  std::vector<double> values(n_samples);
  parallel_for(n_samples, opt.jobs, [&](std::size_t i) {
    const auto tr = simulate(kernel, mu, spec.n, derive_seed(seed, i));
    values[i] = spec(tr.states);
  });

  double sample_mean = 0.0;
  for (double v : values) sample_mean += v;
  sample_mean /= static_cast<double>(n_samples);
  double var = 0.0;
  for (double v : values) var += (v - sample_mean) * (v - sample_mean);
  var /= static_cast<double>(n_samples - 1);
  r.mean_std_error = std::sqrt(var / static_cast<double>(n_samples));

  double widen = 0.0;
  if (auto exact = exact_mean(spec, kernel, mu)) {
    r.mean = *exact;
    r.mean_exact = true;
  } else {
    r.mean = sample_mean;
    widen = 2.0 * r.mean_std_error;
  }

  std::vector<double> dev(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) dev[i] = std::abs(values[i] - r.mean);
  std::sort(dev.begin(), dev.end());

  const double N = static_cast<double>(n_samples);
  const double sumL2 = spec.sum_L_sq();
  r.pass = true;
  std::vector<TailPoint> points;
  for (double t : t_grid) {
    const double te = std::max(0.0, t - widen);
    const auto first = std::lower_bound(dev.begin(), dev.end(), te);
    const double p = static_cast<double>(dev.end() - first) / N;
    const double se = std::sqrt(p * (1.0 - p) / N);
    const double b = tail_bound(r.M0_used, spec.L_declared, t);
    r.t_effective.push_back(te);
    r.empirical.push_back(p);
    r.std_error.push_back(se);
    r.bound.push_back(b);
    r.mcdiarmid.push_back(sumL2 > 0.0 ? 2.0 * std::exp(-2.0 * t * t / sumL2) : 2.0);
    if (p > b + 3.0 * se) r.pass = false;
    points.push_back({t, p});
  }
  r.resolution_warning = N * r.bound.back() < 10.0;
  if (sumL2 > 0.0) r.fitted_M0 = fit_M0(points, spec.L_declared);
  return r;
}

/// P(|S - n p| >= t) for S ~ Binomial(n, p).
inline double binomial_tail_exact(std::size_t n, double p, double t) {
  double acc = 0.0;
  const double np = static_cast<double>(n) * p;
  for (std::size_t k = 0; k <= n; ++k) {
    if (std::abs(static_cast<double>(k) - np) < t) continue;
    const double lg = std::lgamma(double(n) + 1) - std::lgamma(double(k) + 1) -
                      std::lgamma(double(n - k) + 1);
    const double lp = (k ? double(k) * std::log(p) : 0.0) +
                      (n - k ? double(n - k) * std::log1p(-p) : 0.0);
    acc += std::exp(lg + lp);
  }
  return std::min(acc, 1.0);
}

// --- Ladder chain -----------------------------------------------------------

struct DriftReport {
  std::vector<double> ratio;  // PV(s)/V(s) for 1 < s < s_max
  double max_ratio_error = 0.0;
  bool shift_exact = false;   // PV(s) == V(s-1) bit for bit
  double PV1_truncated = 0.0;
  double PV1_limit = 0.0;     // 2^-1/2 / (1 - 2^-1/2)
  double PV1_untruncated = 0.0;
  double PV1_truncation_deficit = 0.0;  // closed form of limit - truncated
  double stationary_max_error = 0.0;
};

struct LadderChain {
  std::size_t s_max = 0;
  TransitionKernel kernel;
  std::vector<double> pi;  // closed form 2^-s / (1 - 2^-s_max)
  std::vector<double> V;
  DriftReport drift;
};

inline LadderChain ladder_chain(std::size_t s_max) {
  if (s_max < 3) throw InvalidArgument("ladder chain needs s_max >= 3");
  LadderChain out{s_max, ladder_kernel(s_max), {}, {}, {}};
  const Matrix& P = out.kernel.matrix();
  const double norm = 1.0 - std::ldexp(1.0, -static_cast<int>(s_max));
  for (std::size_t s = 1; s <= s_max; ++s) {
    out.pi.push_back(std::ldexp(1.0, -static_cast<int>(s)) / norm);
    out.V.push_back(ladder_V(s));
  }
  const Eigen::Map<const Eigen::VectorXd> V(out.V.data(), out.V.size());
  const Eigen::VectorXd PV = P * V;

  auto& d = out.drift;
  d.shift_exact = true;
  for (std::size_t s = 2; s < s_max; ++s) {
    const double ratio = PV(s - 1) / V(s - 1);
    d.ratio.push_back(ratio);
    d.max_ratio_error = std::max(d.max_ratio_error, std::abs(ratio - M_SQRT1_2));
    if (PV(s - 1) != out.V[s - 2]) d.shift_exact = false;
  }
  d.PV1_truncated = PV(0);
  d.PV1_limit = M_SQRT1_2 / (1.0 - M_SQRT1_2);
  d.PV1_truncation_deficit =
      std::pow(2.0, -0.5 * double(s_max)) * (1.0 / (1.0 - M_SQRT1_2) - 2.0);
  // Untruncated law: sum_s 2^-s V(s) = sum_s 2^-s/2.
  double series = 0.0;
  for (std::size_t s = 200; s >= 1; --s) series += std::ldexp(1.0, -static_cast<int>(s)) * ladder_V(s);
  d.PV1_untruncated = series;

  const Distribution solved = stationary(out.kernel);
  for (std::size_t s = 0; s < s_max; ++s)
    d.stationary_max_error = std::max(d.stationary_max_error, std::abs(solved[s] - out.pi[s]));
  return out;
}

// --- Violation certificate --------------------------------------------------

struct DescentCheck {
  std::vector<std::size_t> path;  // ladder labels visited
  double K = 0.0;
  double n_gN = 0.0;
  bool deterministic = false;     // path is the forced descent
  bool holds = false;             // K >= n g(N)
};

struct ViolationCertificate {
  std::string f_description;
  double M0 = 0.0;
  double L = 0.0;
  std::size_t N = 0;
  std::size_t n = 0;
  double g_N = 0.0;
  double threshold = 0.0;  // M0 L^2 ln 2
  double lhs = 0.0;        // 2^-(n+N), the descent-event probability
  double rhs = 0.0;        // 2 exp(-g(N)^2 n / (M0 L^2))
  double pi_truncated = 0.0;
  std::size_t s_max = 0;
  DescentCheck descent;
  bool valid() const { return lhs > rhs; }
};

namespace detail {
inline double violation_rhs(double g, std::size_t n, double M0, double L) {
  return 2.0 * std::exp(-g * g * static_cast<double>(n) / (M0 * L * L));
}
inline double violation_lhs(std::size_t n, std::size_t N) {
  return std::ldexp(1.0, -static_cast<int>(n + N));
}
// Strict inequality with a relative margin so that rounding cannot manufacture
// a certificate from an exact tie.
inline bool violates(double lhs, double rhs) { return lhs > rhs * (1.0 + 1e-9); }
}  // namespace detail

inline ViolationCertificate counterexample_certificate(const RealFn& f, std::string f_description,
                                                       double M0, double L, std::size_t s_max,
                                                       std::uint64_t seed = 0) {
  if (!(M0 > 0.0) || !(L > 0.0)) throw InvalidArgument("M0 and L must be positive");
  if (s_max < 3) throw InvalidArgument("ladder chain needs s_max >= 3");
  const RealFn ftilde = default_minorant(f);
  const double threshold = M0 * L * L * std::log(2.0);

  // Search N well past s_max so that a failure can report the size needed.
  constexpr std::size_t kSearch = 1000;
  std::size_t best_N = 0, best_n = 0;
  for (std::size_t N = 2; N <= kSearch; ++N) {
    const double g = ftilde(ladder_V(N));
    if (!(g * g > threshold)) continue;
    const double rate = g * g / (M0 * L * L) - std::log(2.0);
    const double guess = std::floor(double(N + 1) * std::log(2.0) / rate);
    std::size_t n = std::max<std::size_t>(1, guess > 2.0 ? std::size_t(guess) - 1 : 1);
    while (n + N < 1070 &&
           !detail::violates(detail::violation_lhs(n, N), detail::violation_rhs(g, n, M0, L)))
      ++n;
    if (n + N >= 1070) continue;
    if (best_N == 0 || n + N < best_n + best_N) {
      best_N = N;
      best_n = n;
    }
  }
  if (best_N == 0) throw TruncationError(0, s_max);
  if (best_n + best_N > s_max) throw TruncationError(best_n + best_N, s_max);

  ViolationCertificate c;
  c.f_description = std::move(f_description);
  c.M0 = M0;
  c.L = L;
  c.N = best_N;
  c.n = best_n;
  c.s_max = s_max;
  c.threshold = threshold;
  c.g_N = ftilde(ladder_V(best_N));
  c.lhs = detail::violation_lhs(c.n, c.N);
  c.rhs = detail::violation_rhs(c.g_N, c.n, M0, L);
  c.pi_truncated = c.lhs / (1.0 - std::ldexp(1.0, -static_cast<int>(s_max)));

  // Start at n+N and run n steps of the chain itself.
  const auto kernel = ladder_kernel(s_max);
  const auto spec = ladder_functional(s_max, c.n, ftilde);
  const auto tr = simulate_from(kernel, c.n + c.N - 1, c.n, seed);
  auto& d = c.descent;
  d.deterministic = true;
  for (std::size_t i = 0; i < tr.states.size(); ++i) {
    d.path.push_back(tr.states[i] + 1);
    if (tr.states[i] + 1 != c.n + c.N - i) d.deterministic = false;
  }
  d.K = spec(tr.states);
  d.n_gN = static_cast<double>(c.n) * c.g_N;
  d.holds = d.K >= d.n_gN;
  return c;
}

// --- Characterization -------------------------------------------------------

struct CharacterizationRow {
  std::size_t n = 0;
  double lhs_exact = 0.0;         // P_pibar(tau_Cbar > n)
  double visit_tail_exact = 0.0;  // P_pi(K < eps n)
  double geometric = 0.0;         // (1 - delta)^(eps n)
  double rhs = 0.0;
  bool holds = false;
  double lhs_mc = 0.0;
  double lhs_mc_se = 0.0;
  double visit_tail_mc = 0.0;
};

struct CharacterizationReport {
  double pi_C = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  bool skeleton = false;
  std::vector<CharacterizationRow> rows;  // n = 1..n_max
  bool all_hold = false;
  double fitted_kappa = 0.0;     // exp(-slope) of log P(tau > n) on [n/2, n]
  double kappa_star = 0.0;       // exact critical base from the pibar start
  double atom_kappa_star = 0.0;  // exact critical base from the atom
  double atom_test_kappa = 0.0;
  double atom_moment = 0.0;      // E_atom[kappa^tau] at atom_test_kappa
  std::size_t n_samples = 0;
};

inline CharacterizationReport characterization_experiment(const TransitionKernel& kernel,
                                                          const MinorizationCertificate& cert,
                                                          std::size_t n_max,
                                                          std::size_t n_samples,
                                                          std::uint64_t seed, unsigned jobs = 1) {
  if (n_max < 2) throw InvalidArgument("characterization needs n >= 2");
  CharacterizationReport r;
  r.skeleton = cert.m > 1;
  const TransitionKernel P = cert.m > 1 ? skeleton_kernel(kernel, cert.m) : kernel;
  const MinorizationCertificate c1 = skeleton_certificate(cert);
  const SplitChain chain(P, c1);
  const Distribution pi = stationary(P);
  const std::size_t S = P.size();
  std::vector<bool> in_C(S, false);
  for (auto c : c1.C) in_C[c] = true;

  r.pi_C = pi.mass(c1.C);
  if (!(r.pi_C > 0.0)) throw InvalidArgument("degenerate certificate: small set has zero stationary mass");
  r.epsilon = r.pi_C / 2.0;
  r.delta = c1.delta;
  r.n_samples = n_samples;

  // Left side: survival of the atom hitting time from pibar.
  const SparseMatrix Q = to_sparse(chain.compact_matrix());
  std::vector<bool> atom(chain.compact_size());
  for (std::size_t c = 0; c < atom.size(); ++c) atom[c] = chain.compact_is_atom(c);
  const HittingTimeOracle oracle(Q, atom, chain.lift_compact(pi));
  const auto surv = oracle.survival(n_max);
  r.kappa_star = oracle.kappa_star();

  // Right side: law of K_n = sum_{i=1..n} 1_C(X_i) under pi, by DP over
  // (state, count).
  const Matrix& M = P.matrix();
  std::vector<std::vector<double>> dp(S, std::vector<double>(1, 0.0));
  for (std::size_t x = 0; x < S; ++x) dp[x][0] = pi[x];
  r.rows.resize(n_max);
  for (std::size_t n = 1; n <= n_max; ++n) {
    std::vector<std::vector<double>> next(S, std::vector<double>(n + 1, 0.0));
    for (std::size_t x = 0; x < S; ++x)
      for (std::size_t k = 0; k < dp[x].size(); ++k) {
        if (dp[x][k] == 0.0) continue;
        for (std::size_t y = 0; y < S; ++y) {
          const double w = M(x, y);
          if (w != 0.0) next[y][k + (in_C[y] ? 1 : 0)] += dp[x][k] * w;
        }
      }
    dp = std::move(next);
    const double en = r.epsilon * static_cast<double>(n);
    double below = 0.0;
    for (std::size_t x = 0; x < S; ++x)
      for (std::size_t k = 0; k <= n && static_cast<double>(k) < en; ++k) below += dp[x][k];
    auto& row = r.rows[n - 1];
    row.n = n;
    row.lhs_exact = surv[n];
    row.visit_tail_exact = std::min(below, 1.0);
    row.geometric = std::pow(1.0 - r.delta, en);
    row.rhs = row.visit_tail_exact + row.geometric;
    row.holds = row.lhs_exact <= row.rhs * (1.0 + 1e-12) + 1e-300;
  }
  r.all_hold = std::all_of(r.rows.begin(), r.rows.end(), [](const auto& w) { return w.holds; });

  // Log-linear fit of the exact tail over [n_max/2, n_max].
  {
    double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
    for (std::size_t n = n_max / 2; n <= n_max; ++n) {
      if (!(surv[n] > 0.0)) continue;
      const double x = double(n), y = std::log(surv[n]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      m += 1;
    }
    if (m >= 2) {
      const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
      r.fitted_kappa = std::exp(-slope);
    } else {
      r.fitted_kappa = std::numeric_limits<double>::infinity();
    }
  }

  // Atom-started moment.
  RowVector from_atom = RowVector::Zero(chain.compact_size());
  from_atom(chain.compact_index(c1.C.front(), Level::low)) = 1.0;
  const HittingTimeOracle atom_oracle(Q, atom, from_atom);
  r.atom_kappa_star = atom_oracle.kappa_star();
  const double cap = std::min(r.atom_kappa_star, std::isfinite(r.fitted_kappa) ? r.fitted_kappa : 4.0);
  r.atom_test_kappa = 1.0 + 0.5 * (std::min(cap, 4.0) - 1.0);
  if (r.atom_test_kappa > 1.0) r.atom_moment = atom_oracle.moment(r.atom_test_kappa);

  // Monte Carlo: split trajectories from pibar.
  if (n_samples > 0) {
    std::vector<std::size_t> hit(n_samples);
    std::vector<std::vector<std::uint32_t>> visits(n_samples);
    parallel_for(n_samples, jobs, [&](std::size_t i) {
      const auto path = simulate_split(chain, pi, n_max + 1, derive_seed(seed, i));
      std::size_t h = n_max + 1;
      for (std::size_t k = 1; k <= n_max; ++k)
        if (chain.is_atom(path[k])) {
          h = k;
          break;
        }
      hit[i] = h;
      auto& v = visits[i];
      v.resize(n_max + 1, 0);
      for (std::size_t k = 1; k <= n_max; ++k)
        v[k] = static_cast<std::uint32_t>(v[k - 1] + (in_C[path[k].base] ? 1 : 0));
    });
    const double N = static_cast<double>(n_samples);
    for (std::size_t n = 1; n <= n_max; ++n) {
      double survive = 0, below = 0;
      const double en = r.epsilon * static_cast<double>(n);
      for (std::size_t i = 0; i < n_samples; ++i) {
        if (hit[i] > n) survive += 1;
        if (static_cast<double>(visits[i][n]) < en) below += 1;
      }
      auto& row = r.rows[n - 1];
      row.lhs_mc = survive / N;
      row.lhs_mc_se = std::sqrt(row.lhs_mc * (1.0 - row.lhs_mc) / N);
      row.visit_tail_mc = below / N;
    }
  }
  return r;
}

}  // namespace geoconc
