#pragma once

// Hitting times of a target set by absorbing-chain linear algebra.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <vector>

#include "geoconc/chain.hpp"

namespace geoconc {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline SparseMatrix to_sparse(const Matrix& M) { return M.sparseView(); }

/// Spectral radius of a nonnegative matrix. Dense eigensolve for small
/// matrices, power iteration on the lazy matrix (I+Q)/2 otherwise.
inline double spectral_radius(const SparseMatrix& Q) {
  const auto n = Q.rows();
  if (n == 0) return 0.0;
  if (n <= 1500) {
    Eigen::EigenSolver<Matrix> es(Matrix(Q), false);
    double r = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) r = std::max(r, std::abs(es.eigenvalues()(i)));
    return r;
  }
  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  double lambda = 0.0;
  for (int it = 0; it < 200000; ++it) {
    Eigen::VectorXd w = 0.5 * (v + Q * v);
    const double norm = w.lpNorm<1>();
    if (norm == 0.0) return 0.0;
    w /= norm;
    const double next = 2.0 * norm - 1.0;
    const bool done = std::abs(next - lambda) < 1e-14 && (w - v).lpNorm<1>() < 1e-13;
    v = w;
    lambda = next;
    if (done) break;
  }
  return std::max(lambda, 0.0);
}

/// Law of H = inf{n >= 1 : Z_n in target} for a chain Z with transition
/// matrix `full` and time-0 law `initial`. Time 0 never counts, even when
/// the initial law charges the target.
class HittingTimeOracle {
 public:
  HittingTimeOracle(const SparseMatrix& full, const std::vector<bool>& target,
                    const RowVector& initial) {
    const auto n = full.rows();
    if (full.cols() != n || static_cast<Eigen::Index>(target.size()) != n ||
        initial.size() != n)
      throw InvalidArgument("hitting-time oracle: dimension mismatch");

    // First step from the time-0 law, then restrict to states reachable
    // without touching the target.
    const RowVector mu1 = initial * full;
    std::vector<bool> reach(n, false);
    std::deque<Eigen::Index> queue;
    for (Eigen::Index z = 0; z < n; ++z)
      if (!target[z] && mu1(z) > 0.0) {
        reach[z] = true;
        queue.push_back(z);
      }
    while (!queue.empty()) {
      const auto z = queue.front();
      queue.pop_front();
      for (SparseMatrix::InnerIterator it(full, z); it; ++it)
        if (it.value() > 0.0 && !target[it.col()] && !reach[it.col()]) {
          reach[it.col()] = true;
          queue.push_back(it.col());
        }
    }
    index_.assign(n, -1);
    Eigen::Index m = 0;
    for (Eigen::Index z = 0; z < n; ++z)
      if (reach[z]) index_[z] = m++;

    absorb_ = Eigen::VectorXd::Zero(m);
    start_ = RowVector::Zero(m);
    first_hit_ = 0.0;
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index z = 0; z < n; ++z) {
      if (target[z]) first_hit_ += mu1(z);
      if (index_[z] < 0) continue;
      start_(index_[z]) = mu1(z);
      for (SparseMatrix::InnerIterator it(full, z); it; ++it) {
        if (target[it.col()])
          absorb_(index_[z]) += it.value();
        else if (index_[it.col()] >= 0)
          trip.emplace_back(index_[z], index_[it.col()], it.value());
      }
    }
    Q_.resize(m, m);
    Q_.setFromTriplets(trip.begin(), trip.end());
  }

  std::size_t transient_size() const noexcept { return static_cast<std::size_t>(Q_.rows()); }

  // 1 / spectral radius of the pre-hitting block; +inf when it is nilpotent.
  double kappa_star() const {
    if (!kappa_star_) {
      const double r = spectral_radius(Q_);
      kappa_star_ = r <= 1e-300 ? std::numeric_limits<double>::infinity() : 1.0 / r;
    }
    return *kappa_star_;
  }

  /// E[kappa^H] via (I - kappa Q) h = kappa * absorb.
  double moment(double kappa) const {
    if (!(kappa > 0.0)) throw InvalidArgument("moment base must be positive");
    if (kappa >= kappa_star()) throw MomentDiverges(kappa, kappa_star());
    if (Q_.rows() == 0) return kappa * first_hit_;
    SparseMatrix A(Q_.rows(), Q_.cols());
    A.setIdentity();
    A -= kappa * Q_;
    Eigen::SparseMatrix<double> Ac(A);
    Ac.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(Ac);
    if (lu.info() != Eigen::Success) throw MomentDiverges(kappa, kappa_star());
    const Eigen::VectorXd h = lu.solve(kappa * absorb_);
    const double value = kappa * (first_hit_ + start_.dot(h));
    if (!std::isfinite(value) || value <= 0.0) throw MomentDiverges(kappa, kappa_star());
    return value;
  }

  /// pmf[k] = P(H = k) for k <= cutoff (pmf[0] = 0); `tail` receives P(H > cutoff).
  std::vector<double> pmf(std::size_t cutoff, double* tail = nullptr) const {
    std::vector<double> out(cutoff + 1, 0.0);
    if (cutoff >= 1) out[1] = first_hit_;
    RowVector u = start_;
    for (std::size_t k = 2; k <= cutoff; ++k) {
      out[k] = u.dot(absorb_);
      u = u * Q_;
    }
    if (tail) *tail = cutoff >= 1 ? u.sum() : 1.0;
    return out;
  }

  // P(H > k) for k = 0..cutoff.
  std::vector<double> survival(std::size_t cutoff) const {
    std::vector<double> out(cutoff + 1, 1.0);
    RowVector u = start_;
    for (std::size_t k = 1; k <= cutoff; ++k) {
      out[k] = u.sum();
      u = u * Q_;
    }
    return out;
  }

 private:
  SparseMatrix Q_;
  Eigen::VectorXd absorb_;
  RowVector start_;
  double first_hit_ = 0.0;
  std::vector<Eigen::Index> index_;
  mutable std::optional<double> kappa_star_;
};

/// Return time tau_C = inf{n >= 1 : X_n in C} of the base chain.
inline HittingTimeOracle return_time_oracle(const TransitionKernel& kernel,
                                            const std::vector<std::size_t>& C,
                                            const Distribution& start) {
  std::vector<bool> target(kernel.size(), false);
  for (auto c : C) target.at(c) = true;
  return HittingTimeOracle(to_sparse(kernel.matrix()), target, start.row());
}

struct ReturnMomentBound {
  double value = 0.0;       // sup_{x in C} E_x[kappa^tau_C]
  double kappa_star = 0.0;  // min over x of the critical base
};

inline ReturnMomentBound return_moment_sup(const TransitionKernel& kernel,
                                           const std::vector<std::size_t>& C, double kappa) {
  ReturnMomentBound out{0.0, std::numeric_limits<double>::infinity()};
  for (auto x : C) {
    auto oracle = return_time_oracle(kernel, C, Distribution::point(kernel.size(), x));
    out.kappa_star = std::min(out.kappa_star, oracle.kappa_star());
    out.value = std::max(out.value, oracle.moment(kappa));
  }
  return out;
}

}  // namespace geoconc
