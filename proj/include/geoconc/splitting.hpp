#pragma once

// Minorization certificates and the split chain on base x {LOW, HIGH}.
//
// The split chain's auxiliary coordinate is uniform on [0,1] and the
// dynamics only see whether it is <= delta, so it is carried as a two-level
// indicator. From (x, LOW) with x in C the next base state is drawn from nu,
// from (x, HIGH) with x in C from the residual (P(x,.) - delta nu)/(1-delta),
// and from x outside C from P(x,.). The next level is LOW with probability
// delta, independently of everything else.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "geoconc/chain.hpp"

namespace geoconc {

enum class Level : std::uint8_t { low = 0, high = 1 };

struct SplitState {
  std::size_t base = 0;
  Level level = Level::high;
  bool operator==(const SplitState&) const = default;
};

struct MinorizationCertificate {
  std::vector<std::size_t> C;
  int m = 1;
  double delta = 0.0;
  Distribution nu;

  bool contains(std::size_t s) const { return std::find(C.begin(), C.end(), s) != C.end(); }
};

namespace detail {

inline void check_set(const std::vector<std::size_t>& C, std::size_t n) {
  if (C.empty()) throw InvalidArgument("small set C is empty");
  for (auto s : C)
    if (s >= n) throw InvalidArgument("small set contains state " + std::to_string(s) +
                                      " outside the state space");
}

inline const Matrix& lagged(const TransitionKernel& kernel, int m, Matrix& storage) {
  if (m < 1) throw InvalidArgument("minorization lag m must be >= 1");
  if (m == 1) return kernel.matrix();
  storage = matrix_power(kernel.matrix(), m);
  return storage;
}

}  // namespace detail

/// Largest delta with P^m(x,.) >= delta nu on C, capped at 1 (0 if none).
inline double minorization_delta(const TransitionKernel& kernel, const std::vector<std::size_t>& C,
                                 int m, const Distribution& nu) {
  const std::size_t n = kernel.size();
  detail::check_set(C, n);
  if (nu.size() != n) throw InvalidArgument("nu has the wrong dimension");
  Matrix storage;
  const Matrix& Pm = detail::lagged(kernel, m, storage);
  double best = 1.0;
  for (auto x : C)
    for (std::size_t s = 0; s < n; ++s)
      if (nu[s] > 0.0) best = std::min(best, Pm(x, s) / nu[s]);
  return std::max(best, 0.0);
}

// nu(s) proportional to min_{x in C} P^m(x,s).
inline Distribution row_minimum_measure(const TransitionKernel& kernel,
                                        const std::vector<std::size_t>& C, int m) {
  const std::size_t n = kernel.size();
  detail::check_set(C, n);
  Matrix storage;
  const Matrix& Pm = detail::lagged(kernel, m, storage);
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    double lo = 1.0;
    for (auto x : C) lo = std::min(lo, Pm(x, s));
    w[s] = lo;
    total += lo;
  }
  if (total <= 0.0)
    throw InvalidArgument("rows of P^m over C have disjoint supports: no product-form minorization");
  for (auto& v : w) v /= total;
  return Distribution(std::move(w), Distribution::unchecked);
}

inline void validate_certificate(const TransitionKernel& kernel,
                                 const MinorizationCertificate& cert) {
  const std::size_t n = kernel.size();
  detail::check_set(cert.C, n);
  if (!(cert.delta > 0.0 && cert.delta <= 1.0))
    throw InvalidArgument("certificate delta must lie in (0, 1]");
  if (cert.nu.size() != n) throw InvalidArgument("nu has the wrong dimension");
  Matrix storage;
  const Matrix& Pm = detail::lagged(kernel, cert.m, storage);
  std::vector<Violation> bad;
  for (auto x : cert.C)
    for (std::size_t s = 0; s < n; ++s) {
      const double deficit = cert.delta * cert.nu[s] - Pm(x, s);
      if (deficit > kStochasticTol) bad.push_back({x, s, deficit});
    }
  if (!bad.empty()) throw CertificateViolation(std::move(bad));
}

/// Builds a certificate, filling in defaults: nu is the normalized row
/// minimum of P^m over C, and delta is min(delta_max, 0.999).
inline MinorizationCertificate make_certificate(const TransitionKernel& kernel,
                                                std::vector<std::size_t> C, int m = 1,
                                                std::optional<double> delta = std::nullopt,
                                                std::optional<Distribution> nu = std::nullopt) {
  Distribution measure = nu ? *nu : row_minimum_measure(kernel, C, m);
  const double d = delta ? *delta : std::min(minorization_delta(kernel, C, m, measure), 0.999);
  MinorizationCertificate cert{std::move(C), m, d, std::move(measure)};
  validate_certificate(kernel, cert);
  return cert;
}

struct ResidualKernel {
  Matrix rows;  // row x: residual on C, P^m(x,.) off C
};

inline ResidualKernel residual_kernel(const TransitionKernel& kernel,
                                      const MinorizationCertificate& cert) {
  validate_certificate(kernel, cert);
  if (cert.delta >= 1.0) throw AtomDegenerate();
  Matrix storage;
  ResidualKernel out{detail::lagged(kernel, cert.m, storage)};
  const std::size_t n = kernel.size();
  const double scale = 1.0 / (1.0 - cert.delta);
  for (auto x : cert.C) {
    for (std::size_t s = 0; s < n; ++s) {
      double r = (out.rows(x, s) - cert.delta * cert.nu[s]) * scale;
      if (r < 0.0) r = 0.0;  // |r| <= tolerance here, certificate already validated
      out.rows(x, s) = r;
    }
    const double total = out.rows.row(x).sum();
    if (std::abs(total - 1.0) > kStochasticTol)
      throw NumericError("residual row " + std::to_string(x) + " sums to " +
                         std::to_string(total));
  }
  return out;
}

inline MinorizationCertificate skeleton_certificate(const MinorizationCertificate& cert) {
  MinorizationCertificate out = cert;
  out.m = 1;
  return out;
}

inline TransitionKernel skeleton_kernel(const TransitionKernel& kernel, int m) {
  return TransitionKernel(matrix_power(kernel.matrix(), m), kernel.space().labels);
}

/// Split chain of a kernel with an m = 1 certificate. Exposes the full
/// base x {LOW,HIGH} matrix (index 2*s + level) and a compact lumping where
/// states outside C carry no level (their level never affects the future).
class SplitChain {
 public:
  SplitChain(const TransitionKernel& kernel, MinorizationCertificate cert)
      : cert_(std::move(cert)), n_(kernel.size()) {
    if (cert_.m != 1) throw SkeletonRequired(cert_.m);
    validate_certificate(kernel, cert_);
    in_c_.assign(n_, false);
    for (auto x : cert_.C) in_c_[x] = true;

    const Matrix& P = kernel.matrix();
    next_base_ = Matrix(2 * n_, n_);
    const RowVector nu = cert_.nu.row();
    for (std::size_t x = 0; x < n_; ++x) {
      RowVector low = P.row(x), high = P.row(x);
      if (in_c_[x]) {
        low = nu;
        if (cert_.delta < 1.0) {
          high = (P.row(x) - cert_.delta * nu) / (1.0 - cert_.delta);
          for (Eigen::Index s = 0; s < high.size(); ++s) high(s) = std::max(high(s), 0.0);
          high /= high.sum();
        }
      }
      next_base_.row(2 * x) = low;
      next_base_.row(2 * x + 1) = high;
    }
    cdf_ = Matrix(n_, 2 * n_);
    for (std::size_t r = 0; r < 2 * n_; ++r) {
      double acc = 0.0;
      for (std::size_t s = 0; s < n_; ++s) {
        acc += next_base_(r, s);
        cdf_(s, r) = acc;
      }
    }

    compact_of_.assign(2 * n_, 0);
    for (std::size_t x = 0; x < n_; ++x) {
      compact_of_[2 * x] = compact_base_.size();
      compact_base_.push_back(x);
      compact_level_.push_back(Level::low);
      if (in_c_[x]) {
        compact_of_[2 * x + 1] = compact_base_.size();
        compact_base_.push_back(x);
        compact_level_.push_back(Level::high);
      } else {
        compact_of_[2 * x + 1] = compact_of_[2 * x];
      }
    }
  }

  const MinorizationCertificate& certificate() const noexcept { return cert_; }
  std::size_t base_size() const noexcept { return n_; }
  double delta() const noexcept { return cert_.delta; }
  bool in_c(std::size_t x) const { return in_c_.at(x); }

  static std::size_t index(std::size_t base, Level level) {
    return 2 * base + static_cast<std::size_t>(level);
  }
  bool is_atom(const SplitState& y) const { return in_c_[y.base] && y.level == Level::low; }

  // Law of the next base state from split state (base, level).
  RowVector base_row(std::size_t base, Level level) const {
    return next_base_.row(index(base, level));
  }

  Matrix full_matrix() const {
    Matrix Q = Matrix::Zero(2 * n_, 2 * n_);
    for (std::size_t r = 0; r < 2 * n_; ++r)
      for (std::size_t y = 0; y < n_; ++y) {
        Q(r, 2 * y) = next_base_(r, y) * cert_.delta;
        Q(r, 2 * y + 1) = next_base_(r, y) * (1.0 - cert_.delta);
      }
    return Q;
  }

  // delta_x (x) lambda, or mu (x) lambda, on the full split space.
  RowVector lift(const Distribution& mu) const {
    RowVector out = RowVector::Zero(2 * n_);
    for (std::size_t x = 0; x < n_; ++x) {
      out(2 * x) = mu[x] * cert_.delta;
      out(2 * x + 1) = mu[x] * (1.0 - cert_.delta);
    }
    return out;
  }

  RowVector first_marginal(const RowVector& split_law) const {
    RowVector out = RowVector::Zero(n_);
    for (std::size_t x = 0; x < n_; ++x) out(x) = split_law(2 * x) + split_law(2 * x + 1);
    return out;
  }

  // Compact lumping.
  std::size_t compact_size() const noexcept { return compact_base_.size(); }
  std::size_t compact_index(std::size_t base, Level level) const {
    return compact_of_[index(base, level)];
  }
  std::size_t compact_base(std::size_t c) const { return compact_base_[c]; }
  bool compact_is_atom(std::size_t c) const {
    return in_c_[compact_base_[c]] && compact_level_[c] == Level::low;
  }

  Matrix compact_matrix() const {
    const std::size_t k = compact_size();
    Matrix Q = Matrix::Zero(k, k);
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t r = index(compact_base_[c], compact_level_[c]);
      for (std::size_t y = 0; y < n_; ++y) {
        const double p = next_base_(r, y);
        if (p == 0.0) continue;
        if (in_c_[y]) {
          Q(c, compact_index(y, Level::low)) += p * cert_.delta;
          Q(c, compact_index(y, Level::high)) += p * (1.0 - cert_.delta);
        } else {
          Q(c, compact_index(y, Level::low)) += p;
        }
      }
    }
    return Q;
  }

  RowVector lift_compact(const Distribution& mu) const {
    RowVector out = RowVector::Zero(compact_size());
    for (std::size_t x = 0; x < n_; ++x) {
      if (in_c_[x]) {
        out(compact_index(x, Level::low)) += mu[x] * cert_.delta;
        out(compact_index(x, Level::high)) += mu[x] * (1.0 - cert_.delta);
      } else {
        out(compact_index(x, Level::low)) += mu[x];
      }
    }
    return out;
  }

  SplitState draw_level(std::size_t base, Rng& rng) const {
    return {base, rng.bernoulli(cert_.delta) ? Level::low : Level::high};
  }

  SplitState step(const SplitState& y, Rng& rng) const {
    const std::size_t r = index(y.base, y.level);
    const std::size_t next =
        sample_from_cdf(std::span<const double>(cdf_.data() + r * n_, n_), rng.uniform());
    return draw_level(next, rng);
  }

 private:
  MinorizationCertificate cert_;
  std::size_t n_;
  std::vector<bool> in_c_;
  Matrix next_base_;
  Matrix cdf_;
  std::vector<std::size_t> compact_of_;
  std::vector<std::size_t> compact_base_;
  std::vector<Level> compact_level_;
};

inline std::vector<SplitState> simulate_split(const SplitChain& chain, const Distribution& init,
                                              std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("split trajectory length must be at least 1");
  if (init.size() != chain.base_size()) throw InvalidArgument("initial law has the wrong dimension");
  Rng rng(seed);
  std::vector<SplitState> out;
  out.reserve(n);
  SplitState y = chain.draw_level(sample(init, rng), rng);
  out.push_back(y);
  for (std::size_t k = 1; k < n; ++k) {
    y = chain.step(y, rng);
    out.push_back(y);
  }
  return out;
}

inline std::vector<SplitState> simulate_split(const TransitionKernel& kernel,
                                              const MinorizationCertificate& cert,
                                              const Distribution& init, std::size_t n,
                                              std::uint64_t seed) {
  if (cert.m != 1) throw SkeletonRequired(cert.m);
  return simulate_split(SplitChain(kernel, cert), init, n, seed);
}

struct AtomReturns {
  bool found = false;
  std::vector<std::size_t> gaps;  // gaps[0] = T0, then T1, T2, ...
};

// T0 = inf{n > 0 : Y_n in atom}; subsequent entries are gaps between visits.
inline AtomReturns atom_return_gaps(std::span<const SplitState> path,
                                    const MinorizationCertificate& cert) {
  AtomReturns out;
  std::size_t last = 0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    if (path[k].level == Level::low && cert.contains(path[k].base)) {
      out.gaps.push_back(k - last);
      last = k;
    }
  }
  out.found = !out.gaps.empty();
  return out;
}

}  // namespace geoconc
