#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "kmix/errors.hpp"
#include "kmix/image.hpp"

namespace kmix {

inline constexpr double kProbabilityFloor = 1e-12;

/// -sum_c target_c * ln(max(probs_c, 1e-12)), in nats.
inline double cross_entropy(const SoftLabel& target, std::span<const double> probs) {
  if (probs.size() != target.size()) throw ShapeError("class count mismatch in cross-entropy");
  double loss = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (target[c] > 0.0) loss -= target[c] * std::log(std::max(probs[c], kProbabilityFloor));
  }
  // Clamp -0.0 and tiny negatives from slightly over-unit oracle outputs,
  // but let NaN through so callers can detect it.
  if (std::isnan(loss)) return loss;
  return loss > 0.0 ? loss : 0.0;
}

inline double entropy(const SoftLabel& p) { return cross_entropy(p, p.values()); }

}  // namespace kmix
