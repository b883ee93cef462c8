#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "kmix/errors.hpp"
#include "kmix/rng.hpp"

namespace kmix {

/// Dirichlet concentration vector; K >= 2, every entry strictly positive.
class DirichletParams {
public:
  explicit DirichletParams(std::vector<double> alpha) : alpha_(std::move(alpha)) {
    if (alpha_.size() < 2) throw ParameterError("Dirichlet needs at least 2 components");
    for (double a : alpha_) {
      if (!(a > 0.0) || !std::isfinite(a)) {
        throw ParameterError("Dirichlet concentration must be positive and finite, got " +
                             std::to_string(a));
      }
    }
  }

  static DirichletParams symmetric(std::size_t k, double alpha) {
    return DirichletParams(std::vector<double>(k, alpha));
  }

  std::size_t size() const { return alpha_.size(); }
  double operator[](std::size_t i) const { return alpha_[i]; }
  std::span<const double> values() const { return alpha_; }
  double total() const { return std::accumulate(alpha_.begin(), alpha_.end(), 0.0); }

  /// Marginal mean and variance of component i.
  double mean(std::size_t i) const { return alpha_[i] / total(); }
  double variance(std::size_t i) const {
    const double a0 = total();
    return alpha_[i] * (a0 - alpha_[i]) / (a0 * a0 * (a0 + 1.0));
  }

  /// Parameters with component i removed.
  DirichletParams without(std::size_t i) const {
    std::vector<double> rest;
    rest.reserve(alpha_.size() - 1);
    for (std::size_t j = 0; j < alpha_.size(); ++j) {
      if (j != i) rest.push_back(alpha_[j]);
    }
    return DirichletParams(std::move(rest));
  }

private:
  std::vector<double> alpha_;
};

inline constexpr double kSimplexTolerance = 1e-9;

/// Nonnegative weights summing to one.
class Simplex {
public:
  Simplex() = default;
  explicit Simplex(std::vector<double> phi) : phi_(std::move(phi)) {
    if (phi_.empty()) throw ParameterError("empty simplex");
    double sum = 0.0;
    for (double p : phi_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw ParameterError("simplex entry out of range");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
      throw ParameterError("simplex entries sum to " + std::to_string(sum));
    }
  }

  std::size_t size() const { return phi_.size(); }
  double operator[](std::size_t i) const { return phi_[i]; }
  std::span<const double> values() const { return phi_; }
  const std::vector<double>& vec() const { return phi_; }

  friend bool operator==(const Simplex&, const Simplex&) = default;

private:
  std::vector<double> phi_;
};

/// Stick-break fractions v_1..v_{K-1}, each in [0, 1].
class StickWeights {
public:
  StickWeights() = default;
  explicit StickWeights(std::vector<double> v) : v_(std::move(v)) {
    for (double x : v_) {
      if (!(x >= 0.0 && x <= 1.0)) throw ParameterError("stick fraction outside [0,1]");
    }
  }

  std::size_t size() const { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }
  std::span<const double> values() const { return v_; }

private:
  std::vector<double> v_;
};

/// log of a Gamma(shape, 1) draw. Working in log space keeps tiny shapes
/// (alpha << 1) from underflowing to an all-zero Dirichlet vector.
inline double sample_log_gamma(double shape, RngStream& rng) {
  if (!(shape > 0.0)) throw ParameterError("Gamma shape must be positive");
  if (shape < 1.0) {
    // G(a) = G(a + 1) * U^(1/a)
    const double boosted = sample_log_gamma(shape + 1.0, rng);
    return boosted + std::log(rng.uniform_pos()) / shape;
  }
  // Marsaglia & Tsang (2000).
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = rng.normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double log_u = std::log(rng.uniform_pos());
    if (log_u < 0.5 * x * x + d - d * v + d * std::log(v)) return std::log(d) + std::log(v);
  }
}

inline double sample_beta(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw ParameterError("Beta parameters must be positive");
  }
  const double la = sample_log_gamma(a, rng);
  const double lb = sample_log_gamma(b, rng);
  // g_a / (g_a + g_b) evaluated as a logistic of the log ratio.
  return 1.0 / (1.0 + std::exp(lb - la));
}

namespace detail {

inline std::vector<double> normalize_log_weights(std::vector<double> logw) {
  const double top = *std::max_element(logw.begin(), logw.end());
  double sum = 0.0;
  for (double& w : logw) {
    w = std::exp(w - top);
    sum += w;
  }
  for (double& w : logw) w /= sum;
  return logw;
}

}  // namespace detail

/// Gamma-ratio Dirichlet draw.
inline Simplex sample_dirichlet(const DirichletParams& params, RngStream& rng) {
  std::vector<double> logw(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) logw[k] = sample_log_gamma(params[k], rng);
  return Simplex(detail::normalize_log_weights(std::move(logw)));
}

/// Simplex whose anchor entry is fixed at `anchor_share`; the other K-1
/// entries are a Dir(alpha without anchor) draw scaled by (1 - anchor_share).
inline Simplex sample_conditional_dirichlet(const DirichletParams& params, std::size_t anchor_index,
                                            double anchor_share, RngStream& rng) {
  if (anchor_index >= params.size()) throw ParameterError("anchor index out of range");
  if (!(anchor_share > 0.0 && anchor_share < 1.0)) {
    throw ParameterError("anchor share must lie in (0, 1)");
  }
  const std::size_t k = params.size();
  std::vector<double> logw;
  logw.reserve(k - 1);
  for (std::size_t j = 0; j < k; ++j) {
    if (j != anchor_index) logw.push_back(sample_log_gamma(params[j], rng));
  }
  const auto rest = detail::normalize_log_weights(std::move(logw));
  const double scale = 1.0 - anchor_share;
  std::vector<double> phi(k);
  for (std::size_t j = 0, r = 0; j < k; ++j) {
    phi[j] = (j == anchor_index) ? anchor_share : rest[r++] * scale;
  }
  return Simplex(std::move(phi));
}

inline constexpr double kStickDenominatorFloor = 1e-12;

/// v_1 = phi_1, v_k = phi_k / prod_{j<k}(1 - v_j).
inline StickWeights sticks_from_simplex(const Simplex& phi) {
  if (phi.size() < 2) throw ParameterError("need at least 2 components");
  std::vector<double> v(phi.size() - 1);
  double remaining = 1.0;
  for (std::size_t k = 0; k + 1 < phi.size(); ++k) {
    if (remaining < kStickDenominatorFloor) {
      throw DegenerateSimplexError("stick-breaking denominator underflow at component " +
                                   std::to_string(k));
    }
    v[k] = std::clamp(phi[k] / remaining, 0.0, 1.0);
    remaining *= 1.0 - v[k];
  }
  return StickWeights(std::move(v));
}

inline Simplex simplex_from_sticks(const StickWeights& v) {
  std::vector<double> phi(v.size() + 1);
  double remaining = 1.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    phi[k] = v[k] * remaining;
    remaining *= 1.0 - v[k];
  }
  phi.back() = remaining;
  return Simplex(std::move(phi));
}

/// How stick fractions are drawn when sampling a simplex.
///   exact: phi ~ Dir(alpha) via Gamma ratios.
///   gem:   v_k ~ Beta(1, alpha_k) independently, the literal "Beta(1, alpha)"
///          reading of stick-breaking. Not Dir(alpha) for finite K; kept for
///          comparison runs only.
enum class StickLaw { exact, gem };

inline Simplex sample_simplex(const DirichletParams& params, StickLaw law, RngStream& rng) {
  if (law == StickLaw::exact) return sample_dirichlet(params, rng);
  std::vector<double> v(params.size() - 1);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = sample_beta(1.0, params[k], rng);
  return simplex_from_sticks(StickWeights(std::move(v)));
}

}  // namespace kmix
