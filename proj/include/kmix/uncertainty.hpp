#pragma once

// Monte-Carlo estimates over random mixings: the predictive mean of a
// classifier on composites, and per-sample loss distributions where one
// anchor keeps a fixed share of the canvas while its partners and their
// shares are redrawn.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "kmix/dataset.hpp"
#include "kmix/errors.hpp"
#include "kmix/image.hpp"
#include "kmix/loss.hpp"
#include "kmix/mixing.hpp"
#include "kmix/rng.hpp"
#include "kmix/sampling.hpp"

namespace kmix {

/// Maps an image to class probabilities. Must be pure: the same image always
/// yields the same output, and concurrent calls must be safe.
using ClassifierOracle = std::function<std::vector<double>(const ImageTensor&)>;

inline constexpr double kOracleTolerance = 1e-6;

inline std::vector<double> evaluate_oracle(const ClassifierOracle& oracle, const ImageTensor& img,
                                           std::size_t class_count) {
  auto probs = oracle(img);
  if (probs.size() != class_count) {
    throw OracleContractError("oracle returned " + std::to_string(probs.size()) +
                              " classes, expected " + std::to_string(class_count));
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= -kOracleTolerance) || !std::isfinite(p)) {
      throw OracleContractError("oracle returned a negative or non-finite probability");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kOracleTolerance) {
    throw OracleContractError("oracle output sums to " + std::to_string(sum));
  }
  return probs;
}

struct PredictiveEstimate {
  std::vector<double> posterior;    // mean oracle output over the draws
  std::vector<double> mixed_label;  // mean of the matching mixed labels
};

inline PredictiveEstimate predictive_mean(const ClassifierOracle& oracle,
                                          std::span<const ImageTensor> images,
                                          std::span<const SoftLabel> labels, MixMethod method,
                                          const DirichletParams& params, std::size_t n_samples,
                                          std::uint64_t seed,
                                          std::span<const SaliencyMap> maps = {}) {
  if (n_samples < 1) throw ParameterError("n_samples must be at least 1");
  if (labels.empty()) throw ShapeError("no labels");
  const std::size_t classes = labels.front().size();
  PredictiveEstimate est{std::vector<double>(classes, 0.0), std::vector<double>(classes, 0.0)};
  const RngStream root(seed, 0);
  for (std::size_t j = 0; j < n_samples; ++j) {
    RngStream rng = root.substream(j);
    const auto draw = draw_composite(images, labels, method, params, rng, maps);
    const auto probs = evaluate_oracle(oracle, draw.image, classes);
    for (std::size_t c = 0; c < classes; ++c) {
      est.posterior[c] += probs[c];
      est.mixed_label[c] += draw.label[c];
    }
  }
  const auto n = static_cast<double>(n_samples);
  for (std::size_t c = 0; c < classes; ++c) {
    est.posterior[c] /= n;
    est.mixed_label[c] /= n;
  }
  return est;
}

enum class PoolScope { global, intra_class };

struct UncertaintyConfig {
  std::size_t m_samples = 10;
  std::size_t non_anchor_count = 2;
  std::vector<double> non_anchor_alpha{2.0 / 9.0, 2.0 / 9.0};
  double anchor_share = 0.5;
  std::uint64_t seed = 0;
  PoolScope pool_scope = PoolScope::global;

  void validate() const {
    if (m_samples < 2) throw ParameterError("M must be at least 2");
    if (non_anchor_count < 1) throw ParameterError("need at least one non-anchor image");
    if (non_anchor_alpha.size() != non_anchor_count) {
      throw ParameterError("non-anchor alpha has " + std::to_string(non_anchor_alpha.size()) +
                           " entries for " + std::to_string(non_anchor_count) + " non-anchors");
    }
    if (!(anchor_share > 0.0 && anchor_share < 1.0)) {
      throw ParameterError("anchor share must lie in (0, 1)");
    }
    for (double a : non_anchor_alpha) {
      if (!(a > 0.0) || !std::isfinite(a)) throw ParameterError("non-anchor alpha must be positive");
    }
  }
};

struct LossStats {
  double mean = 0.0;
  double std = 0.0;
  double cv = 0.0;
  bool degenerate = false;  // mean too small for cv to be meaningful; cv reported as 0
};

inline constexpr double kCvMeanFloor = 1e-12;

/// Mean, population standard deviation and coefficient of variation. Entries
/// are summed in sorted order so the result does not depend on their order.
inline LossStats summarize_losses(std::span<const double> losses) {
  if (losses.empty()) throw ParameterError("empty loss vector");
  std::vector<double> sorted(losses.begin(), losses.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  std::vector<double> sq(sorted.size());
  std::transform(sorted.begin(), sorted.end(), sq.begin(),
                 [mean](double x) { return (x - mean) * (x - mean); });
  std::sort(sq.begin(), sq.end());
  const double var = std::accumulate(sq.begin(), sq.end(), 0.0) / n;
  LossStats s;
  s.mean = mean;
  s.std = std::sqrt(var);
  if (mean > kCvMeanFloor) {
    s.cv = s.std / mean;
  } else {
    s.degenerate = true;
  }
  return s;
}

inline double mean_score(std::span<const double> losses) { return summarize_losses(losses).mean; }
inline double std_score(std::span<const double> losses) { return summarize_losses(losses).std; }
inline double cv_score(std::span<const double> losses) { return summarize_losses(losses).cv; }

namespace detail {

/// Shared body of loss_distribution: `pool` holds indices into `items`.
inline std::vector<double> anchor_losses(const Sample& anchor, std::span<const Sample> items,
                                         std::vector<std::size_t> pool,
                                         const UncertaintyConfig& cfg,
                                         const ClassifierOracle& oracle, const RngStream& root) {
  cfg.validate();
  if (pool.empty()) throw PoolError("no non-anchor partners available");
  if (pool.size() < cfg.non_anchor_count) {
    throw PoolError("pool of " + std::to_string(pool.size()) + " cannot supply " +
                    std::to_string(cfg.non_anchor_count) + " partners");
  }
  std::vector<double> alpha{1.0};  // anchor entry is fixed, its alpha never used
  alpha.insert(alpha.end(), cfg.non_anchor_alpha.begin(), cfg.non_anchor_alpha.end());
  const DirichletParams params(alpha);
  const std::size_t k = params.size();
  const std::size_t classes = anchor.label.size();

  std::vector<ImageTensor> images(k);
  std::vector<SoftLabel> labels(k);
  images[0] = anchor.image;
  labels[0] = anchor.label;

  std::vector<double> losses;
  losses.reserve(cfg.m_samples);
  for (std::size_t m = 0; m < cfg.m_samples; ++m) {
    RngStream rng = root.substream(m);
    // Partial Fisher-Yates: the first non_anchor_count slots become a uniform
    // draw without replacement.
    for (std::size_t s = 0; s < cfg.non_anchor_count; ++s) {
      const auto j = s + static_cast<std::size_t>(rng.below(pool.size() - s));
      std::swap(pool[s], pool[j]);
      images[s + 1] = items[pool[s]].image;
      labels[s + 1] = items[pool[s]].label;
    }
    for (int attempt = 0;; ++attempt) {
      const Simplex phi = sample_conditional_dirichlet(params, 0, cfg.anchor_share, rng);
      try {
        const CompositePlan plan =
            plan_dcutmix(anchor.image.width(), anchor.image.height(), phi, rng);
        const MixResult mixed = compose_dcutmix(images, labels, plan);
        const auto probs = evaluate_oracle(oracle, mixed.image, classes);
        losses.push_back(cross_entropy(mixed.label, probs));
        break;
      } catch (const DegenerateSimplexError&) {
        if (attempt + 1 >= kMaxSimplexRedraws) throw;
      }
    }
  }
  return losses;
}

}  // namespace detail

/// M cross-entropy losses of `anchor` mixed (as the base canvas, fixed share)
/// with partners drawn from `pool`.
inline std::vector<double> loss_distribution(const Sample& anchor, std::span<const Sample> pool,
                                             const UncertaintyConfig& cfg,
                                             const ClassifierOracle& oracle) {
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return detail::anchor_losses(anchor, pool, std::move(idx), cfg, oracle, RngStream(cfg.seed, 0));
}

struct ScoreRow {
  std::size_t index = 0;
  int cls = 0;
  std::vector<double> losses;
  double mean = 0.0;
  double std = 0.0;
  double cv = 0.0;
  bool degenerate = false;

  friend bool operator==(const ScoreRow&, const ScoreRow&) = default;
};

using ScoreTable = std::vector<ScoreRow>;

inline ScoreRow make_score_row(std::size_t index, int cls, std::vector<double> losses) {
  const LossStats s = summarize_losses(losses);
  return {index, cls, std::move(losses), s.mean, s.std, s.cv, s.degenerate};
}

/// One row per dataset index. Each anchor's partners come from the rest of
/// the dataset (or the rest of its class), with a stream derived from
/// (cfg.seed, index).
inline ScoreTable score_dataset(const Dataset& data, const UncertaintyConfig& cfg,
                                const ClassifierOracle& oracle) {
  cfg.validate();
  if (data.empty()) throw PoolError("empty dataset");
  const auto items = data.samples();
  const RngStream root(cfg.seed, 1);
  ScoreTable table;
  table.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<std::size_t> pool;
    for (std::size_t j = 0; j < data.size(); ++j) {
      if (j == i) continue;
      if (cfg.pool_scope == PoolScope::intra_class && data.classes[j] != data.classes[i]) continue;
      pool.push_back(j);
    }
    try {
      auto losses = detail::anchor_losses(items[i], items, std::move(pool), cfg, oracle,
                                          root.substream(i));
      table.push_back(make_score_row(i, data.classes[i], std::move(losses)));
    } catch (const OracleContractError& e) {
      throw OracleContractError("index " + std::to_string(i) + ": " + e.what());
    } catch (const PoolError& e) {
      throw PoolError("index " + std::to_string(i) + ": " + e.what());
    }
  }
  return table;
}

}  // namespace kmix
