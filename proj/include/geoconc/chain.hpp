#pragma once

// Finite Markov chain substrate: kernels, distributions, simulation,
// stationary laws and total-variation computations.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geoconc/error.hpp"
#include "geoconc/rng.hpp"

namespace geoconc {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr double kStochasticTol = 1e-12;

struct StateSpace {
  std::optional<std::size_t> size;  // empty: sampler-only
  std::vector<std::string> labels;

  bool is_finite() const noexcept { return size.has_value(); }

  static StateSpace finite(std::size_t n, std::vector<std::string> labels = {}) {
    if (n == 0) throw InvalidArgument("state space must have at least one state");
    if (!labels.empty() && labels.size() != n)
      throw InvalidArgument("state labels do not match the state count");
    return StateSpace{n, std::move(labels)};
  }
  static StateSpace sampler_only() { return StateSpace{std::nullopt, {}}; }

  std::string label(std::size_t s) const {
    return labels.empty() ? std::to_string(s) : labels.at(s);
  }
};

class Distribution {
 public:
  struct unchecked_t {};
  static constexpr unchecked_t unchecked{};

  explicit Distribution(std::vector<double> weights) : w_(std::move(weights)) {
    if (w_.empty()) throw InvalidArgument("distribution over an empty state space");
    double total = 0.0;
    for (double x : w_) {
      if (!std::isfinite(x) || x < 0.0)
        throw InvalidArgument("distribution weights must be finite and nonnegative");
      total += x;
    }
    if (std::abs(total - 1.0) > kStochasticTol)
      throw InvalidArgument("distribution weights sum to " + std::to_string(total) + ", not 1");
  }
  // For results of exact computations whose normalization is inherited.
  Distribution(std::vector<double> weights, unchecked_t) : w_(std::move(weights)) {}

  static Distribution point(std::size_t n, std::size_t state) {
    if (state >= n) throw InvalidArgument("point mass at a state outside the space");
    std::vector<double> w(n, 0.0);
    w[state] = 1.0;
    return Distribution(std::move(w), unchecked);
  }
  static Distribution uniform(std::size_t n) {
    return Distribution(std::vector<double>(n, 1.0 / static_cast<double>(n)), unchecked);
  }
  static Distribution from_row(const RowVector& row) {
    return Distribution(std::vector<double>(row.data(), row.data() + row.size()), unchecked);
  }

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t s) const { return w_[s]; }
  std::span<const double> weights() const noexcept { return w_; }
  RowVector row() const { return Eigen::Map<const RowVector>(w_.data(), w_.size()); }

  double mass(std::span<const std::size_t> set) const {
    double m = 0.0;
    for (auto s : set) m += w_.at(s);
    return m;
  }

 private:
  std::vector<double> w_;
};

// Inverse-CDF draw. Guards against u landing past a rounded-down last entry.
inline std::size_t sample_from_cdf(std::span<const double> cdf, double u) {
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  std::size_t k = static_cast<std::size_t>(it - cdf.begin());
  if (k >= cdf.size()) {
    k = cdf.size() - 1;
    while (k > 0 && cdf[k] == cdf[k - 1]) --k;
  }
  return k;
}

inline std::size_t sample(std::span<const double> weights, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    acc += weights[k];
    last_positive = k;
    if (u < acc) return k;
  }
  return last_positive;
}

inline std::size_t sample(const Distribution& d, Rng& rng) { return sample(d.weights(), rng); }

class TransitionKernel {
 public:
  using Sampler = std::function<std::size_t(std::size_t, Rng&)>;

  explicit TransitionKernel(Matrix P, std::vector<std::string> labels = {})
      : space_(StateSpace::finite(static_cast<std::size_t>(P.rows()), std::move(labels))),
        P_(std::move(P)) {
    if (P_.rows() != P_.cols()) throw InvalidArgument("transition matrix must be square");
    for (Eigen::Index x = 0; x < P_.rows(); ++x) {
      double total = 0.0;
      for (Eigen::Index s = 0; s < P_.cols(); ++s) {
        const double p = P_(x, s);
        if (!std::isfinite(p) || p < 0.0)
          throw InvalidArgument("transition matrix row " + std::to_string(x) +
                                " has a negative or non-finite entry");
        total += p;
      }
      if (std::abs(total - 1.0) > kStochasticTol)
        throw InvalidArgument("transition matrix row " + std::to_string(x) + " sums to " +
                              std::to_string(total));
    }
    cdf_.resize(P_.rows(), P_.cols());
    for (Eigen::Index x = 0; x < P_.rows(); ++x) {
      double acc = 0.0;
      for (Eigen::Index s = 0; s < P_.cols(); ++s) {
        acc += P_(x, s);
        cdf_(s, x) = acc;  // column-major: each row's CDF is contiguous
      }
    }
  }

  TransitionKernel(Sampler step, std::string name)
      : space_(StateSpace::sampler_only()), sampler_(std::move(step)), name_(std::move(name)) {
    if (!sampler_) throw InvalidArgument("sampler kernel needs a step function");
  }

  bool is_dense() const noexcept { return space_.is_finite(); }
  const StateSpace& space() const noexcept { return space_; }

  std::size_t size() const {
    if (!is_dense()) throw UnsupportedRepresentation("state count");
    return *space_.size;
  }

  const Matrix& matrix() const {
    if (!is_dense()) throw UnsupportedRepresentation("matrix access");
    return P_;
  }

  double operator()(std::size_t x, std::size_t s) const { return matrix()(x, s); }

  std::size_t step(std::size_t x, Rng& rng) const {
    if (!is_dense()) return sampler_(x, rng);
    const auto n = static_cast<std::size_t>(P_.rows());
    return sample_from_cdf(std::span<const double>(cdf_.data() + x * n, n), rng.uniform());
  }

 private:
  StateSpace space_;
  Matrix P_;
  Matrix cdf_;
  Sampler sampler_;
  std::string name_;
};

struct Trajectory {
  std::vector<std::size_t> states;
  std::uint64_t seed = 0;
  std::string init;
};

inline Matrix matrix_power(const Matrix& P, int m) {
  if (m < 0) throw InvalidArgument("negative matrix power");
  Matrix R = Matrix::Identity(P.rows(), P.cols());
  for (int k = 0; k < m; ++k) R = R * P;
  return R;
}

inline Distribution n_step_distribution(const TransitionKernel& kernel, const Distribution& init,
                                        std::size_t n) {
  const Matrix& P = kernel.matrix();
  if (init.size() != kernel.size()) throw InvalidArgument("initial law has the wrong dimension");
  RowVector mu = init.row();
  for (std::size_t k = 0; k < n; ++k) mu = mu * P;
  return Distribution::from_row(mu);
}

inline Trajectory simulate(const TransitionKernel& kernel, const Distribution& init,
                           std::size_t n, std::uint64_t seed, std::string init_label = "law") {
  if (n < 1) throw InvalidArgument("trajectory length must be at least 1");
  if (kernel.is_dense() && init.size() != kernel.size())
    throw InvalidArgument("initial law has the wrong dimension");
  Rng rng(seed);
  Trajectory tr{{}, seed, std::move(init_label)};
  tr.states.reserve(n);
  std::size_t x = sample(init, rng);
  tr.states.push_back(x);
  for (std::size_t k = 1; k < n; ++k) {
    x = kernel.step(x, rng);
    tr.states.push_back(x);
  }
  return tr;
}

inline Trajectory simulate_from(const TransitionKernel& kernel, std::size_t x0, std::size_t n,
                                std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("trajectory length must be at least 1");
  if (kernel.is_dense() && x0 >= kernel.size())
    throw InvalidArgument("start state outside the state space");
  Rng rng(seed);
  Trajectory tr{{}, seed, "point:" + std::to_string(x0)};
  tr.states.reserve(n);
  std::size_t x = x0;
  tr.states.push_back(x);
  for (std::size_t k = 1; k < n; ++k) {
    x = kernel.step(x, rng);
    tr.states.push_back(x);
  }
  return tr;
}

inline double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidArgument("tv_distance: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

inline double tv_distance(const Distribution& p, const Distribution& q) {
  return tv_distance(p.weights(), q.weights());
}

namespace detail {

inline Distribution stationary_power(const Matrix& P) {
  const auto n = P.rows();
  // Lazy chain (I+P)/2 has the same invariant law and no periodicity.
  RowVector mu = RowVector::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < 200000; ++it) {
    RowVector next = 0.5 * (mu + mu * P);
    const double change = (next - mu).lpNorm<1>();
    mu = next / next.sum();
    if (change < 1e-15) break;
  }
  return Distribution::from_row(mu);
}

}  // namespace detail

/// Invariant law of a finite irreducible kernel. Solves pi (P - I) = 0 with one
/// equation replaced by the normalization; kernels above 10^4 states fall
/// back to power iteration on the lazy chain.
inline Distribution stationary(const TransitionKernel& kernel) {
  const Matrix& P = kernel.matrix();
  const auto n = P.rows();
  if (n > 10000) return detail::stationary_power(P);

  Matrix A = P.transpose() - Matrix::Identity(n, n);
  A.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(n - 1) = 1.0;
  Eigen::FullPivLU<Matrix> lu(A);
  lu.setThreshold(1e-13);
  if (lu.rank() < n)
    throw SingularSystem("stationary solve is singular (rank " + std::to_string(lu.rank()) +
                         " < " + std::to_string(n) +
                         "): kernel is reducible with several closed classes");
  Eigen::VectorXd pi = lu.solve(b);
  for (Eigen::Index s = 0; s < n; ++s) {
    if (pi(s) < -1e-12)
      throw SingularSystem("stationary solve produced a negative weight at state " +
                           std::to_string(s));
    if (pi(s) < 0.0) pi(s) = 0.0;
  }
  pi /= pi.sum();
  return Distribution(std::vector<double>(pi.data(), pi.data() + n), Distribution::unchecked);
}

// Largest modulus among eigenvalues other than the Perron root 1.
inline double second_eigenvalue_modulus(const TransitionKernel& kernel) {
  const Matrix& P = kernel.matrix();
  if (P.rows() == 1) return 0.0;
  Eigen::EigenSolver<Matrix> es(P, false);
  std::vector<double> mods;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    mods.push_back(std::abs(es.eigenvalues()(i)));
  std::sort(mods.begin(), mods.end(), std::greater<>());
  return std::min(1.0, mods[1]);
}

struct GeometricDecayFit {
  double rho = 0.0;           // second eigenvalue modulus + slack
  std::vector<double> V;      // V(x) = max_n rho^-n tv(P^n(x,.), pi)
  std::size_t horizon = 0;
  double noise_floor = 0.0;   // tv values below this are rounding noise
};

// tv(P^n(x,.), pi) for n = 0..horizon, one row per start state.
inline std::vector<std::vector<double>> tv_profile(const TransitionKernel& kernel,
                                                   const Distribution& pi,
                                                   std::size_t horizon) {
  const Matrix& P = kernel.matrix();
  const auto n = P.rows();
  std::vector<std::vector<double>> out(n, std::vector<double>(horizon + 1));
  Matrix Pn = Matrix::Identity(n, n);
  const RowVector pirow = pi.row();
  for (std::size_t k = 0; k <= horizon; ++k) {
    for (Eigen::Index x = 0; x < n; ++x)
      out[x][k] = 0.5 * (Pn.row(x) - pirow).lpNorm<1>();
    Pn = Pn * P;
  }
  return out;
}

/// Fits the geometric-ergodicity envelope tv(P^n(x,.), pi) <= V(x) rho^n.
/// Only n with tv above `noise_floor` enter the sup; smaller values are at
/// the level of floating-point cancellation.
inline GeometricDecayFit fit_geometric_decay(const TransitionKernel& kernel,
                                             const Distribution& pi, std::size_t horizon = 200,
                                             double slack = 1e-9, double noise_floor = 1e-12) {
  GeometricDecayFit fit;
  fit.rho = std::min(1.0, second_eigenvalue_modulus(kernel) + slack);
  fit.horizon = horizon;
  fit.noise_floor = noise_floor;
  const auto profile = tv_profile(kernel, pi, horizon);
  fit.V.assign(profile.size(), 0.0);
  for (std::size_t x = 0; x < profile.size(); ++x) {
    for (std::size_t k = 0; k <= horizon; ++k) {
      if (k > 0 && profile[x][k] < noise_floor) break;
      fit.V[x] = std::max(fit.V[x], profile[x][k] * std::pow(fit.rho, -static_cast<double>(k)));
    }
  }
  return fit;
}

inline TransitionKernel two_state_kernel(double a, double b) {
  if (!(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0))
    throw InvalidArgument("two-state flip probabilities must lie in [0,1]");
  Matrix P(2, 2);
  P << 1.0 - a, a, b, 1.0 - b;
  return TransitionKernel(std::move(P));
}

// Drift function V(s) = 2^(s/2) of the ladder chain, s the 1-based label.
// Built from ldexp so that even labels are exact powers of two.
inline double ladder_V(std::size_t s) {
  const double mantissa = (s % 2 == 1) ? M_SQRT2 : 1.0;
  return std::ldexp(mantissa, static_cast<int>(s / 2));
}

/// Ladder chain on {1, ..., s_max} (index s-1): from 1 jump to s with
/// probability 2^-s, elsewhere step down by one. The jump mass beyond s_max
/// is put on s_max.
inline TransitionKernel ladder_kernel(std::size_t s_max) {
  if (s_max < 2) throw InvalidArgument("ladder chain needs s_max >= 2");
  const auto n = static_cast<Eigen::Index>(s_max);
  Matrix P = Matrix::Zero(n, n);
  for (Eigen::Index s = 1; s < n; ++s) P(0, s - 1) = std::ldexp(1.0, -static_cast<int>(s));
  P(0, n - 1) = std::ldexp(1.0, -static_cast<int>(s_max - 1));
  for (Eigen::Index s = 1; s < n; ++s) P(s, s - 1) = 1.0;
  std::vector<std::string> labels;
  for (std::size_t s = 1; s <= s_max; ++s) labels.push_back(std::to_string(s));
  return TransitionKernel(std::move(P), std::move(labels));
}

}  // namespace geoconc
