#pragma once

// Separately bounded functionals K(x_0, ..., x_{n-1}) with oscillation
// constants L_i, their exact (brute-force) oscillations, and built-ins.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoconc/chain.hpp"

namespace geoconc {

enum class FunctionalKind { additive, visit_count, ladder, custom };

inline std::string to_string(FunctionalKind k) {
  switch (k) {
    case FunctionalKind::additive: return "additive";
    case FunctionalKind::visit_count: return "visit_count";
    case FunctionalKind::ladder: return "remark1";
    case FunctionalKind::custom: return "custom";
  }
  return "custom";
}

struct FunctionalSpec {
  using Evaluator = std::function<double(std::span<const std::size_t>)>;

  std::size_t n = 0;
  Evaluator evaluator;
  std::vector<double> L_declared;
  FunctionalKind kind = FunctionalKind::custom;
  std::vector<double> weights;  // per-state g for additive kinds, empty for custom

  double operator()(std::span<const std::size_t> path) const { return evaluator(path.first(n)); }
  bool is_additive() const noexcept { return !weights.empty(); }
  double sum_L_sq() const {
    double s = 0.0;
    for (double l : L_declared) s += l * l;
    return s;
  }
};

inline double evaluate(const FunctionalSpec& spec, std::span<const std::size_t> path) {
  if (path.size() < spec.n)
    throw InvalidArgument("trajectory of length " + std::to_string(path.size()) +
                          " is shorter than the functional horizon " + std::to_string(spec.n));
  return spec(path);
}

inline FunctionalSpec additive(std::vector<double> g, std::size_t n) {
  if (n == 0) throw InvalidArgument("functional horizon must be positive");
  if (g.empty()) throw InvalidArgument("additive functional needs per-state weights");
  const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
  FunctionalSpec spec;
  spec.n = n;
  spec.kind = FunctionalKind::additive;
  spec.L_declared.assign(n, *hi - *lo);
  spec.weights = g;
  spec.evaluator = [g = std::move(g)](std::span<const std::size_t> path) {
    double acc = 0.0;
    for (auto s : path) acc += g.at(s);
    return acc;
  };
  return spec;
}

/// Number of visits to C among the n coordinates; unit oscillation when C is
/// a proper nonempty subset.
inline FunctionalSpec visit_count(const std::vector<std::size_t>& C, std::size_t n_states,
                                  std::size_t n) {
  std::vector<double> g(n_states, 0.0);
  for (auto c : C) {
    if (c >= n_states) throw InvalidArgument("visit set contains a state outside the space");
    g[c] = 1.0;
  }
  FunctionalSpec spec = additive(std::move(g), n);
  spec.kind = FunctionalKind::visit_count;
  return spec;
}

// Table indexed by the base-S number x_0 x_1 ... x_{n-1} (x_0 most significant).
inline FunctionalSpec custom_table(std::vector<double> table, std::size_t n_states, std::size_t n,
                                   std::vector<double> L_declared) {
  if (L_declared.size() != n) throw InvalidArgument("need one declared L_i per coordinate");
  double expected = std::pow(static_cast<double>(n_states), static_cast<double>(n));
  if (static_cast<double>(table.size()) != expected)
    throw InvalidArgument("custom table must have S^n entries");
  FunctionalSpec spec;
  spec.n = n;
  spec.kind = FunctionalKind::custom;
  spec.L_declared = std::move(L_declared);
  spec.evaluator = [table = std::move(table), n_states](std::span<const std::size_t> path) {
    std::size_t idx = 0;
    for (auto s : path) idx = idx * n_states + s;
    return table.at(idx);
  };
  return spec;
}

inline FunctionalSpec custom(FunctionalSpec::Evaluator fn, std::size_t n,
                             std::vector<double> L_declared) {
  if (L_declared.size() != n) throw InvalidArgument("need one declared L_i per coordinate");
  FunctionalSpec spec;
  spec.n = n;
  spec.kind = FunctionalKind::custom;
  spec.evaluator = std::move(fn);
  spec.L_declared = std::move(L_declared);
  return spec;
}

/// Minimal valid L_i by brute force over all S^n tuples.
inline std::vector<double> oscillation_constants_exact(const FunctionalSpec& spec,
                                                       std::size_t n_states,
                                                       double limit = 1e7) {
  const double paths = std::pow(static_cast<double>(n_states), static_cast<double>(spec.n));
  if (paths > limit) throw EnumerationLimit(paths, limit);
  const std::size_t n = spec.n;
  const std::size_t total = static_cast<std::size_t>(paths);
  std::vector<double> values(total);
  std::vector<std::size_t> path(n, 0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (std::size_t i = n; i-- > 0;) {
      path[i] = rem % n_states;
      rem /= n_states;
    }
    values[idx] = spec(path);
  }
  std::vector<double> L(n, 0.0);
  std::size_t stride = 1;
  for (std::size_t i = n; i-- > 0;) {
    // Coordinate i has weight `stride`; scan tuples with x_i = 0 as anchors.
    for (std::size_t idx = 0; idx < total; ++idx) {
      if ((idx / stride) % n_states != 0) continue;
      double lo = values[idx], hi = values[idx];
      for (std::size_t v = 1; v < n_states; ++v) {
        lo = std::min(lo, values[idx + v * stride]);
        hi = std::max(hi, values[idx + v * stride]);
      }
      L[i] = std::max(L[i], hi - lo);
    }
    stride *= n_states;
  }
  return L;
}

/// K_N(x_0, ..., x_{N+n-1}) = K(x_N, ..., x_{N+n-1}).
inline FunctionalSpec shifted(const FunctionalSpec& spec, std::size_t N) {
  FunctionalSpec out;
  out.n = spec.n + N;
  out.kind = FunctionalKind::custom;
  out.L_declared.assign(N, 0.0);
  out.L_declared.insert(out.L_declared.end(), spec.L_declared.begin(), spec.L_declared.end());
  out.evaluator = [inner = spec.evaluator, N](std::span<const std::size_t> path) {
    return inner(path.subspan(N));
  };
  return out;
}

/// Freezes every coordinate with L_i > eps0 at x_star.
inline FunctionalSpec truncated(const FunctionalSpec& spec, double eps0, std::size_t x_star) {
  FunctionalSpec out;
  out.n = spec.n;
  out.kind = FunctionalKind::custom;
  std::vector<bool> frozen(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    frozen[i] = spec.L_declared[i] > eps0;
    out.L_declared.push_back(frozen[i] ? 0.0 : spec.L_declared[i]);
  }
  out.evaluator = [inner = spec.evaluator, frozen, x_star](std::span<const std::size_t> path) {
    std::vector<std::size_t> y(path.begin(), path.end());
    for (std::size_t i = 0; i < y.size(); ++i)
      if (frozen[i]) y[i] = x_star;
    return inner(y);
  };
  return out;
}

/// Exact E K for additive kinds: sum over i of (mu P^i) . g.
inline std::optional<double> exact_mean(const FunctionalSpec& spec, const TransitionKernel& kernel,
                                        const Distribution& init) {
  if (!spec.is_additive() || !kernel.is_dense()) return std::nullopt;
  const Matrix& P = kernel.matrix();
  const Eigen::Map<const Eigen::VectorXd> g(spec.weights.data(), spec.weights.size());
  RowVector mu = init.row();
  double acc = 0.0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    acc += mu.dot(g.transpose());
    mu = mu * P;
  }
  return acc;
}

// --- Unbounded additive family on the ladder chain -------------------------

using RealFn = std::function<double(double)>;

// f(t) = sqrt(ln(t v e)).
inline double sqrt_log(double t) { return std::sqrt(std::log(std::max(t, std::numbers::e))); }

inline RealFn named_growth_function(const std::string& name) {
  if (name == "sqrt_log") return sqrt_log;
  if (name == "log1p") return [](double t) { return std::log1p(t); };
  throw InvalidArgument("unknown growth function '" + name + "' (expected sqrt_log or log1p)");
}

// Default f~(x) = min(f(x), x).
inline RealFn default_minorant(RealFn f) {
  return [f = std::move(f)](double x) { return std::min(f(x), x); };
}

struct LadderWeights {
  std::vector<double> g;        // indexed by ladder index s-1
  double g1_truncated = 0.0;    // g(1) centering the truncated pi
  double g1_untruncated = 0.0;  // g(1) centering pi(s) = 2^-s on all of N
  double centering_discrepancy = 0.0;
};

/// g(s) = f~(V(s)) for s > 1 and g(1) chosen so that the truncated
/// stationary law integrates g to zero.
inline LadderWeights ladder_weights(std::size_t s_max, const RealFn& ftilde) {
  if (s_max < 3) throw InvalidArgument("ladder functional needs s_max >= 3");
  LadderWeights out;
  out.g.assign(s_max, 0.0);
  const double norm = 1.0 - std::ldexp(1.0, -static_cast<int>(s_max));
  double acc = 0.0;
  for (std::size_t s = 2; s <= s_max; ++s) {
    out.g[s - 1] = ftilde(ladder_V(s));
    acc += std::ldexp(1.0, -static_cast<int>(s)) / norm * out.g[s - 1];
  }
  const double pi1 = 0.5 / norm;
  out.g1_truncated = -acc / pi1;
  out.g[0] = out.g1_truncated;

  double tail = 0.0;
  for (std::size_t s = 2; s < 1100; ++s) {
    const double term = std::ldexp(1.0, -static_cast<int>(s)) * ftilde(ladder_V(s));
    if (!std::isfinite(term)) break;
    tail += term;
  }
  out.g1_untruncated = -tail / 0.5;
  out.centering_discrepancy = out.g1_truncated - out.g1_untruncated;
  return out;
}

inline FunctionalSpec ladder_functional(std::size_t s_max, std::size_t n, const RealFn& ftilde) {
  FunctionalSpec spec = additive(ladder_weights(s_max, ftilde).g, n);
  spec.kind = FunctionalKind::ladder;
  return spec;
}

}  // namespace geoconc
