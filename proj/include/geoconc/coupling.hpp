#pragma once

// Renewal coupling of the chain started at x in C with the stationary chain.
//
// Two split chains run on independent streams, one from delta_x (x) lambda
// and one from pi (x) lambda. tau is one plus the first time n >= 1 at which
// both sit in the atom C x LOW; the output trajectory follows the first
// chain before tau and the stationary one from tau on.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "geoconc/absorbing.hpp"
#include "geoconc/parallel.hpp"
#include "geoconc/splitting.hpp"

namespace geoconc {

struct CoupledRun {
  Trajectory xi;   // spliced process X*
  Trajectory chi;  // stationary copy X'
  std::optional<std::size_t> tau;  // empty: horizon exceeded
  std::uint64_t seed = 0;

  bool horizon_exceeded() const noexcept { return !tau.has_value(); }
};

struct CoupleOptions {
  std::size_t horizon = 1'000'000;  // maximal simulated time
  std::size_t record = 0;           // minimal recorded length (tau + 1 at least)
};

namespace detail {

inline constexpr std::uint64_t kStreamFromPoint = 1;
inline constexpr std::uint64_t kStreamFromPi = 2;
inline constexpr std::uint64_t kStreamBridgePoint = 3;
inline constexpr std::uint64_t kStreamBridgePi = 4;

// Skeleton-time split paths of both copies plus the coupling index.
struct SplitPair {
  std::vector<SplitState> y;       // from the point, up to the coupling index
  std::vector<SplitState> y_pi;    // from pi, up to the recorded length
  std::optional<std::size_t> tau;  // in steps of the split chain
};

inline SplitPair run_split_pair(const SplitChain& chain, const Distribution& pi, std::size_t x,
                                std::uint64_t seed, const CoupleOptions& opt) {
  Rng rng_x(derive_seed(seed, kStreamFromPoint));
  Rng rng_pi(derive_seed(seed, kStreamFromPi));
  SplitPair out;
  out.y.push_back(chain.draw_level(x, rng_x));
  out.y_pi.push_back(chain.draw_level(sample(pi, rng_pi), rng_pi));
  for (std::size_t n = 1; n <= opt.horizon; ++n) {
    out.y.push_back(chain.step(out.y.back(), rng_x));
    out.y_pi.push_back(chain.step(out.y_pi.back(), rng_pi));
    if (chain.is_atom(out.y.back()) && chain.is_atom(out.y_pi.back())) {
      out.tau = n + 1;
      break;
    }
  }
  const std::size_t want = std::max(opt.record, out.tau ? *out.tau + 1 : out.y_pi.size());
  while (out.y_pi.size() < want) out.y_pi.push_back(chain.step(out.y_pi.back(), rng_pi));
  return out;
}

}  // namespace detail

/// Coupling for an m = 1 certificate. `pi` is the stationary law of the base chain.
inline CoupledRun couple(const SplitChain& chain, const Distribution& pi, std::size_t x,
                         std::uint64_t seed, const CoupleOptions& opt = {}) {
  if (!chain.in_c(x)) throw InvalidArgument("coupling start state must lie in C");
  auto pair = detail::run_split_pair(chain, pi, x, seed, opt);
  CoupledRun run;
  run.seed = seed;
  run.tau = pair.tau;
  run.chi = Trajectory{{}, seed, "stationary"};
  for (const auto& y : pair.y_pi) run.chi.states.push_back(y.base);
  run.xi = Trajectory{{}, seed, "point:" + std::to_string(x)};
  if (!pair.tau) {
    for (const auto& y : pair.y) run.xi.states.push_back(y.base);
    return run;
  }
  run.xi.states = run.chi.states;
  for (std::size_t k = 0; k < *pair.tau; ++k) run.xi.states[k] = pair.y[k].base;
  return run;
}

/// Coupling for an m > 1 certificate through the m-skeleton. The skeletons
/// are coupled as split chains of P^m; intermediate states are Markov
/// bridges between consecutive skeleton states, drawn along the spliced
/// skeleton for the point copy and along its own skeleton for the stationary
/// copy. tau is a multiple of m.
class SkeletonCoupler {
 public:
  SkeletonCoupler(const TransitionKernel& kernel, const MinorizationCertificate& cert)
      : m_(cert.m),
        base_(kernel.matrix()),
        skeleton_(skeleton_kernel(kernel, cert.m)),
        chain_(skeleton_, skeleton_certificate(cert)),
        pi_(stationary(kernel)) {
    if (m_ < 2) throw InvalidArgument("skeleton lift needs m > 1");
    powers_.push_back(Matrix::Identity(base_.rows(), base_.cols()));
    for (int j = 1; j <= m_; ++j) powers_.push_back(powers_.back() * base_);
  }

  int lag() const noexcept { return m_; }
  const SplitChain& skeleton_chain() const noexcept { return chain_; }
  const TransitionKernel& skeleton_kernel_ref() const noexcept { return skeleton_; }
  const Distribution& stationary_law() const noexcept { return pi_; }

  CoupledRun couple(std::size_t x, std::uint64_t seed, CoupleOptions opt = {}) const {
    if (!chain_.in_c(x)) throw InvalidArgument("coupling start state must lie in C");
    const std::size_t m = static_cast<std::size_t>(m_);
    CoupleOptions skel = opt;
    skel.horizon = std::max<std::size_t>(1, opt.horizon / m);
    skel.record = (opt.record + m - 1) / m + 1;
    auto pair = detail::run_split_pair(chain_, pi_, x, seed, skel);

    CoupledRun run;
    run.seed = seed;
    if (pair.tau) run.tau = *pair.tau * m;
    const std::size_t segments = pair.y_pi.size() - 1;
    const std::size_t len = segments * m + 1;

    Rng rng_bridge(derive_seed(seed, detail::kStreamBridgePoint));
    Rng rng_bridge_pi(derive_seed(seed, detail::kStreamBridgePi));
    std::vector<std::size_t> stationary_path = bridge_path(pair.y_pi, segments, rng_bridge_pi);

    run.chi = Trajectory{std::move(stationary_path), seed, "stationary"};
    run.xi = Trajectory{{}, seed, "point:" + std::to_string(x)};
    if (!pair.tau) {
      run.xi.states = bridge_path(pair.y, pair.y.size() - 1, rng_bridge);
      return run;
    }
    // Point copy follows the spliced skeleton up to the coupling index.
    std::vector<SplitState> spliced(pair.y.begin(), pair.y.begin() + *pair.tau);
    spliced.push_back(pair.y_pi[*pair.tau]);
    const std::vector<std::size_t> point_path = bridge_path(spliced, *pair.tau, rng_bridge);
    run.xi.states = run.chi.states;
    for (std::size_t i = 0; i < *run.tau && i < len; ++i) run.xi.states[i] = point_path[i];
    return run;
  }

 private:
  // Fills a path of length segments*m + 1 through the given skeleton states.
  std::vector<std::size_t> bridge_path(const std::vector<SplitState>& skel, std::size_t segments,
                                       Rng& rng) const {
    const std::size_t m = static_cast<std::size_t>(m_);
    std::vector<std::size_t> path;
    path.reserve(segments * m + 1);
    path.push_back(skel[0].base);
    std::vector<double> w(static_cast<std::size_t>(base_.rows()));
    for (std::size_t k = 0; k < segments; ++k) {
      const std::size_t target = skel[k + 1].base;
      std::size_t cur = skel[k].base;
      for (std::size_t j = 1; j < m; ++j) {
        for (std::size_t s = 0; s < w.size(); ++s)
          w[s] = base_(cur, s) * powers_[m - j](s, target);
        double total = 0.0;
        for (double v : w) total += v;
        for (double& v : w) v /= total;
        cur = sample(std::span<const double>(w), rng);
        path.push_back(cur);
      }
      path.push_back(target);
    }
    return path;
  }

  int m_;
  Matrix base_;
  TransitionKernel skeleton_;
  SplitChain chain_;
  Distribution pi_;
  std::vector<Matrix> powers_;
};

/// Entry point covering both lags; m > 1 goes through the skeleton lift.
inline CoupledRun couple(const TransitionKernel& kernel, const MinorizationCertificate& cert,
                         std::size_t x, std::uint64_t seed, const CoupleOptions& opt = {}) {
  if (cert.m > 1) return SkeletonCoupler(kernel, cert).couple(x, seed, opt);
  return couple(SplitChain(kernel, cert), stationary(kernel), x, seed, opt);
}

struct CouplingLaw {
  std::vector<double> pmf;    // pmf[k] = P(tau = k), k <= cutoff
  double tail = 0.0;          // P(tau > cutoff)
  double kappa_star = 0.0;    // E[kappa^tau] < inf iff kappa < kappa_star
};

/// Exact law of tau on the product of two compact split chains, started from
/// (delta_x (x) lambda) x (pi (x) lambda). The coupling event is "both in
/// the atom at some time n >= 1" and tau = n + 1.
class CouplingOracle {
 public:
  CouplingOracle(const TransitionKernel& kernel, const MinorizationCertificate& cert,
                 std::size_t x)
      : CouplingOracle(SplitChain(kernel, cert), stationary(kernel), x) {}

  CouplingOracle(SplitChain chain, Distribution pi, std::size_t x)
      : chain_(std::move(chain)), pi_(std::move(pi)), x_(x), Qc_(chain_.compact_matrix()),
        hitting_(build(chain_, Qc_, pi_, x)) {
    if (!chain_.in_c(x)) throw InvalidArgument("coupling start state must lie in C");
  }

  std::size_t product_size() const { return chain_.compact_size() * chain_.compact_size(); }
  double kappa_star() const { return hitting_.kappa_star(); }

  double moment(double kappa) const { return kappa * hitting_.moment(kappa); }

  CouplingLaw law(std::size_t cutoff) const {
    CouplingLaw out;
    double tail = 0.0;
    const auto h = hitting_.pmf(cutoff == 0 ? 0 : cutoff - 1, &tail);
    out.pmf.assign(cutoff + 1, 0.0);
    for (std::size_t k = 1; k < h.size(); ++k) out.pmf[k + 1] = h[k];
    out.tail = cutoff >= 2 ? tail : 1.0;
    out.kappa_star = kappa_star();
    return out;
  }

  // P(tau > n) for n = 0..cutoff.
  std::vector<double> survival(std::size_t cutoff) const {
    const auto h = hitting_.survival(cutoff);
    std::vector<double> out(cutoff + 1, 1.0);
    for (std::size_t n = 1; n <= cutoff; ++n) out[n] = h[n - 1];
    return out;
  }

  /// First-marginal laws of the spliced process X* at times 0..n_max,
  /// computed on the product space with a coupled flag.
  std::vector<RowVector> spliced_marginals(std::size_t n_max) const {
    const std::size_t k = chain_.compact_size();
    const RowVector a = chain_.lift_compact(Distribution::point(chain_.base_size(), x_));
    const RowVector b = chain_.lift_compact(pi_);
    Matrix U = a.transpose() * b;  // pre-coupling pair law
    RowVector post = RowVector::Zero(k);
    std::vector<bool> atom(k);
    for (std::size_t c = 0; c < k; ++c) atom[c] = chain_.compact_is_atom(c);

    std::vector<RowVector> out;
    for (std::size_t n = 0; n <= n_max; ++n) {
      RowVector marg = RowVector::Zero(chain_.base_size());
      for (std::size_t c = 0; c < k; ++c) {
        marg(chain_.compact_base(c)) += U.row(c).sum() + post(c);
      }
      out.push_back(marg);
      if (n == n_max) break;
      // The coupling trigger only fires for times n >= 1.
      RowVector trigger = RowVector::Zero(k);
      if (n >= 1) {
        for (std::size_t c = 0; c < k; ++c) {
          if (!atom[c]) continue;
          for (std::size_t d = 0; d < k; ++d)
            if (atom[d]) {
              trigger(d) += U(c, d);
              U(c, d) = 0.0;
            }
        }
      }
      U = Qc_.transpose() * U * Qc_;
      post = (post + trigger) * Qc_;
    }
    return out;
  }

 private:
  static HittingTimeOracle build(const SplitChain& chain, const Matrix& Qc, const Distribution& pi,
                                 std::size_t x) {
    const std::size_t k = chain.compact_size();
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        for (std::size_t c = 0; c < k; ++c) {
          const double pa = Qc(a, c);
          if (pa == 0.0) continue;
          for (std::size_t d = 0; d < k; ++d) {
            const double pb = Qc(b, d);
            if (pb != 0.0) trip.emplace_back(a * k + b, c * k + d, pa * pb);
          }
        }
    SparseMatrix full(k * k, k * k);
    full.setFromTriplets(trip.begin(), trip.end());
    std::vector<bool> target(k * k, false);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        target[a * k + b] = chain.compact_is_atom(a) && chain.compact_is_atom(b);
    const RowVector la = chain.lift_compact(Distribution::point(chain.base_size(), x));
    const RowVector lb = chain.lift_compact(pi);
    RowVector init(k * k);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) init(a * k + b) = la(a) * lb(b);
    return HittingTimeOracle(full, target, init);
  }

  SplitChain chain_;
  Distribution pi_;
  std::size_t x_;
  Matrix Qc_;
  HittingTimeOracle hitting_;
};

inline CouplingLaw coupling_law_exact(const TransitionKernel& kernel,
                                      const MinorizationCertificate& cert, std::size_t x,
                                      std::size_t cutoff = 2000) {
  if (cert.m > 1) throw SkeletonRequired(cert.m);
  return CouplingOracle(kernel, cert, x).law(cutoff);
}

struct CouplingMomentReport {
  double kappa = 0.0;
  std::size_t x = 0;
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_exceeded = 0;
  bool unreliable = false;        // more than 0.1% of runs hit the horizon
  std::optional<double> exact;
  std::optional<double> kappa_star;
  std::optional<bool> pass;       // |estimate - exact| <= 3 std_error
  std::vector<std::optional<std::size_t>> taus;
};

struct MomentOptions {
  unsigned jobs = 1;
  std::size_t horizon = 1'000'000;
  bool with_exact = true;
  bool keep_taus = true;
};

/// Monte Carlo estimate of E[kappa^tau] for the start state x. Sample i uses
/// seed derive_seed(seed, i).
inline CouplingMomentReport coupling_moment_mc(const TransitionKernel& kernel,
                                               const MinorizationCertificate& cert, std::size_t x,
                                               double kappa, std::size_t n_samples,
                                               std::uint64_t seed, const MomentOptions& opt = {}) {
  if (!(kappa > 1.0)) throw InvalidArgument("coupling moment base kappa must exceed 1");
  if (n_samples < 2) throw InvalidArgument("need at least two coupling samples");
  CouplingMomentReport rep;
  rep.kappa = kappa;
  rep.x = x;
  rep.n_samples = n_samples;
  std::vector<std::optional<std::size_t>> taus(n_samples);
  CoupleOptions copt;
  copt.horizon = opt.horizon;

  if (cert.m > 1) {
    SkeletonCoupler coupler(kernel, cert);
    parallel_for(n_samples, opt.jobs, [&](std::size_t i) {
      taus[i] = coupler.couple(x, derive_seed(seed, i), copt).tau;
    });
  } else {
    const SplitChain chain(kernel, cert);
    const Distribution pi = stationary(kernel);
    if (!chain.in_c(x)) throw InvalidArgument("coupling start state must lie in C");
    parallel_for(n_samples, opt.jobs, [&](std::size_t i) {
      taus[i] = detail::run_split_pair(chain, pi, x, derive_seed(seed, i), copt).tau;
    });
  }

  double sum = 0.0, sum_sq = 0.0;
  std::size_t used = 0;
  for (const auto& t : taus) {
    if (!t) {
      ++rep.n_exceeded;
      continue;
    }
    const double v = std::pow(kappa, static_cast<double>(*t));
    sum += v;
    sum_sq += v * v;
    ++used;
  }
  if (used < 2) throw NumericError("fewer than two coupling runs finished within the horizon");
  rep.estimate = sum / static_cast<double>(used);
  const double var =
      std::max(0.0, (sum_sq - static_cast<double>(used) * rep.estimate * rep.estimate) /
                        static_cast<double>(used - 1));
  rep.std_error = std::sqrt(var / static_cast<double>(used));
  rep.unreliable = static_cast<double>(rep.n_exceeded) > 0.001 * static_cast<double>(n_samples);

  if (opt.with_exact) {
    if (cert.m > 1) {
      SkeletonCoupler coupler(kernel, cert);
      CouplingOracle skel(coupler.skeleton_chain(), coupler.stationary_law(), x);
      // tau = m * tau_skeleton, so E[kappa^tau] = E[(kappa^m)^tau_skeleton].
      const double km = std::pow(kappa, cert.m);
      rep.kappa_star = std::pow(skel.kappa_star(), 1.0 / cert.m);
      if (km < skel.kappa_star()) rep.exact = skel.moment(km);
    } else {
      const CouplingOracle oracle(kernel, cert, x);
      rep.kappa_star = oracle.kappa_star();
      if (kappa < *rep.kappa_star) rep.exact = oracle.moment(kappa);
    }
    if (rep.exact) rep.pass = std::abs(rep.estimate - *rep.exact) <= 3.0 * rep.std_error;
  }
  if (opt.keep_taus) rep.taus = std::move(taus);
  return rep;
}

/// Runs coupling_moment_mc for every x in C; the max estimate is the M1 candidate.
inline std::vector<CouplingMomentReport> coupling_moment_mc_all(
    const TransitionKernel& kernel, const MinorizationCertificate& cert, double kappa,
    std::size_t n_samples, std::uint64_t seed, const MomentOptions& opt = {}) {
  std::vector<CouplingMomentReport> out;
  for (std::size_t j = 0; j < cert.C.size(); ++j)
    out.push_back(coupling_moment_mc(kernel, cert, cert.C[j], kappa, n_samples,
                                     derive_seed(seed, 1000 + j), opt));
  return out;
}

}  // namespace geoconc
