#pragma once

// Selection functions over a ScoreTable: rank each group by a measure and
// keep round(t * N) of it, either as a contiguous top block or by striding
// through the ranking at a fixed interval.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kmix/errors.hpp"
#include "kmix/rng.hpp"
#include "kmix/uncertainty.hpp"

namespace kmix {

enum class Measure { cv, mean_desc, mean_asc, std, random };
enum class Strategy { deterministic, interval };

inline std::string_view measure_name(Measure m) {
  switch (m) {
    case Measure::cv: return "cv";
    case Measure::mean_desc: return "mean_desc";
    case Measure::mean_asc: return "mean_asc";
    case Measure::std: return "std";
    case Measure::random: return "random";
  }
  return "?";
}

inline Measure parse_measure(std::string_view s) {
  if (s == "cv") return Measure::cv;
  if (s == "mean_desc") return Measure::mean_desc;
  if (s == "mean_asc") return Measure::mean_asc;
  if (s == "std") return Measure::std;
  if (s == "random") return Measure::random;
  throw ConfigError("unknown measure '" + std::string(s) + "'");
}

inline std::string_view strategy_name(Strategy s) {
  return s == Strategy::deterministic ? "deterministic" : "interval";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "deterministic") return Strategy::deterministic;
  if (s == "interval") return Strategy::interval;
  throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

struct SubsampleConfig {
  double ratio = 1.0;
  Measure measure = Measure::cv;
  Strategy strategy = Strategy::deterministic;
  std::size_t interval = 1;
  bool per_class = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("ratio must lie in (0, 1]");
    if (interval < 1) throw ConfigError("interval must be at least 1");
  }

  friend bool operator==(const SubsampleConfig&, const SubsampleConfig&) = default;
};

/// Sorted, duplicate-free dataset indices.
using IndexSet = std::vector<std::size_t>;

namespace detail {

/// class -> row positions in the table, each list ordered by dataset index.
inline std::map<int, std::vector<std::size_t>> class_rows(const ScoreTable& table) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < table.size(); ++r) groups[table[r].cls].push_back(r);
  for (auto& [cls, rows] : groups) {
    std::sort(rows.begin(), rows.end(),
              [&](std::size_t a, std::size_t b) { return table[a].index < table[b].index; });
  }
  return groups;
}

}  // namespace detail

/// class -> dataset indices, ascending.
inline std::map<int, std::vector<std::size_t>> group_by_class(const ScoreTable& table) {
  auto groups = detail::class_rows(table);
  for (auto& [cls, rows] : groups) {
    for (auto& r : rows) r = table[r].index;
  }
  return groups;
}

/// max(1, round(t * n)), half away from zero.
inline std::size_t target_count(double ratio, std::size_t n) {
  const auto want = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  return std::clamp<std::size_t>(want, 1, n);
}

namespace detail {

/// Orders `rows` best-first under the measure. Ties fall back to ascending
/// dataset index, so the ranking never depends on input row order.
inline void rank_rows(const ScoreTable& table, std::vector<std::size_t>& rows, Measure measure,
                      RngStream& rng) {
  auto by_index = [&](std::size_t a, std::size_t b) { return table[a].index < table[b].index; };
  std::sort(rows.begin(), rows.end(), by_index);
  if (measure == Measure::random) {
    rng.shuffle(std::span(rows));
    return;
  }
  auto key = [&](std::size_t r) {
    const ScoreRow& row = table[r];
    switch (measure) {
      case Measure::cv: return row.cv;
      case Measure::mean_desc: return row.mean;
      case Measure::mean_asc: return -row.mean;
      case Measure::std: return row.std;
      case Measure::random: break;
    }
    return 0.0;
  };
  std::stable_sort(rows.begin(), rows.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
}

/// Ranks 0, s, 2s, ... then, if the stride runs off the end first, the
/// highest-ranked items not yet taken.
inline std::vector<std::size_t> pick_ranks(std::size_t n_items, std::size_t want,
                                           Strategy strategy, std::size_t interval) {
  std::vector<std::size_t> ranks;
  if (strategy == Strategy::deterministic) interval = 1;
  std::vector<bool> taken(n_items, false);
  for (std::size_t r = 0; r < n_items && ranks.size() < want; r += interval) {
    ranks.push_back(r);
    taken[r] = true;
  }
  for (std::size_t r = 0; r < n_items && ranks.size() < want; ++r) {
    if (!taken[r]) ranks.push_back(r);
  }
  return ranks;
}

}  // namespace detail

inline IndexSet select(const ScoreTable& table, const SubsampleConfig& cfg) {
  cfg.validate();
  if (table.empty()) throw ConfigError("empty score table");

  std::map<int, std::vector<std::size_t>> groups;
  if (cfg.per_class) {
    groups = detail::class_rows(table);
  } else {
    std::vector<std::size_t> all(table.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    groups.emplace(0, std::move(all));
  }

  const RngStream root(cfg.seed, 0);
  IndexSet out;
  for (auto& [cls, rows] : groups) {
    // Streams are keyed by class id, not group position, so adding a class
    // does not reshuffle the others.
    RngStream rng = root.substream(static_cast<std::uint64_t>(static_cast<std::int64_t>(cls)));
    detail::rank_rows(table, rows, cfg.measure, rng);
    const std::size_t want = target_count(cfg.ratio, rows.size());
    for (std::size_t r : detail::pick_ranks(rows.size(), want, cfg.strategy, cfg.interval)) {
      out.push_back(table[rows[r]].index);
    }
  }
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
    throw ConfigError("score table contains duplicate dataset indices");
  }
  return out;
}

}  // namespace kmix
