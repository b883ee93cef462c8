#pragma once

// K-image mixing: nested-box DCutMix, weighted-sum DMixup and the
// saliency-centred DCutMix variant, with soft labels taken from the exact
// pixel areas each source contributes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kmix/errors.hpp"
#include "kmix/image.hpp"
#include "kmix/rng.hpp"
#include "kmix/sampling.hpp"

namespace kmix {

enum class MixMethod { dcutmix, dmixup, saliency_dcutmix };

inline std::string_view method_name(MixMethod m) {
  switch (m) {
    case MixMethod::dcutmix: return "dcutmix";
    case MixMethod::dmixup: return "dmixup";
    case MixMethod::saliency_dcutmix: return "saliency-dcutmix";
  }
  return "?";
}

inline MixMethod parse_method(std::string_view name) {
  if (name == "dcutmix") return MixMethod::dcutmix;
  if (name == "dmixup") return MixMethod::dmixup;
  if (name == "saliency-dcutmix") return MixMethod::saliency_dcutmix;
  throw ConfigError("unknown mixing method '" + std::string(name) + "'");
}

/// One DCutMix draw. boxes[k] is the region image k+1 is pasted into; each box
/// is contained in the previous one (the full canvas for boxes[0]). Source
/// slot 0 is the base canvas and the last slot fills the innermost box.
struct CompositePlan {
  int width = 0;
  int height = 0;
  std::vector<BoxRegion> boxes;
  std::vector<int> source_order;
  Simplex sampled_phi;
  // Saliency variant only: where each box's pixels are read from in its
  // source image. Same length as boxes, or empty for plain DCutMix.
  std::vector<BoxRegion> source_windows;

  std::size_t k() const { return source_order.size(); }
  BoxRegion canvas() const { return {0, 0, width, height}; }
};

inline int scaled_side(int parent, double keep_fraction) {
  const auto side = static_cast<long>(std::lround(parent * std::sqrt(keep_fraction)));
  return static_cast<int>(std::clamp<long>(side, 1, parent));
}

inline CompositePlan plan_dcutmix(int width, int height, const Simplex& phi, RngStream& rng) {
  if (width < 2 || height < 2) throw ShapeError("DCutMix canvas must be at least 2x2");
  if (phi.size() < 2) throw ParameterError("DCutMix needs K >= 2");
  const StickWeights v = sticks_from_simplex(phi);

  CompositePlan plan;
  plan.width = width;
  plan.height = height;
  plan.sampled_phi = phi;
  plan.source_order.resize(phi.size());
  std::iota(plan.source_order.begin(), plan.source_order.end(), 0);

  BoxRegion parent = plan.canvas();
  for (std::size_t k = 0; k < v.size(); ++k) {
    // Side lengths shrink by sqrt(1 - v_k) so the box keeps (1 - v_k) of its
    // parent's area; the ring left behind carries v_k of it.
    BoxRegion box;
    box.w = scaled_side(parent.w, 1.0 - v[k]);
    box.h = scaled_side(parent.h, 1.0 - v[k]);
    box.x = static_cast<int>(rng.uniform_int(parent.x, parent.x + parent.w - box.w));
    box.y = static_cast<int>(rng.uniform_int(parent.y, parent.y + parent.h - box.h));
    plan.boxes.push_back(box);
    parent = box;
  }
  return plan;
}

inline void validate_plan(const CompositePlan& plan) {
  if (plan.k() < 2 || plan.boxes.size() + 1 != plan.k()) {
    throw ShapeError("plan must have K-1 boxes for K sources");
  }
  BoxRegion parent = plan.canvas();
  for (const auto& box : plan.boxes) {
    if (box.w < 1 || box.h < 1 || !box.inside(parent)) throw ShapeError("plan boxes not nested");
    parent = box;
  }
  if (!plan.source_windows.empty() && plan.source_windows.size() != plan.boxes.size()) {
    throw ShapeError("source window count mismatch");
  }
}

/// Pixel count of every region r_1..r_K. Boxes are nested, so the ring for
/// slot k is area(B_{k-1}) - area(B_k).
inline std::vector<long long> region_pixel_counts(const CompositePlan& plan) {
  validate_plan(plan);
  std::vector<long long> counts(plan.k());
  long long outer = plan.canvas().area();
  for (std::size_t k = 0; k < plan.boxes.size(); ++k) {
    counts[k] = outer - plan.boxes[k].area();
    outer = plan.boxes[k].area();
  }
  counts.back() = outer;
  return counts;
}

inline Simplex realized_fractions(const CompositePlan& plan) {
  const auto counts = region_pixel_counts(plan);
  const auto total = static_cast<double>(plan.canvas().area());
  std::vector<double> phi(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) phi[k] = static_cast<double>(counts[k]) / total;
  return Simplex(std::move(phi));
}

struct MixResult {
  ImageTensor image;
  SoftLabel label;
};

namespace detail {

inline void check_sources(std::span<const ImageTensor> images, std::span<const SoftLabel> labels,
                          std::size_t k) {
  if (images.size() != k || labels.size() != k) {
    throw ShapeError("expected " + std::to_string(k) + " images and labels");
  }
  for (const auto& img : images) {
    if (!img.same_shape(images.front())) {
      throw ShapeError("source images differ in shape: " + img.shape_string() + " vs " +
                       images.front().shape_string());
    }
  }
}

}  // namespace detail

inline MixResult compose_dcutmix(std::span<const ImageTensor> images,
                                 std::span<const SoftLabel> labels, const CompositePlan& plan) {
  validate_plan(plan);
  detail::check_sources(images, labels, plan.k());
  const ImageTensor& base = images.front();
  if (base.width() != plan.width || base.height() != plan.height) {
    throw ShapeError("plan canvas " + std::to_string(plan.width) + "x" +
                     std::to_string(plan.height) + " does not match images " +
                     base.shape_string());
  }
  ImageTensor out = base;
  const int channels = base.channels();
  for (std::size_t k = 0; k < plan.boxes.size(); ++k) {
    const BoxRegion& box = plan.boxes[k];
    const ImageTensor& src = images[k + 1];
    int sx = box.x;
    int sy = box.y;
    if (!plan.source_windows.empty()) {
      const BoxRegion& win = plan.source_windows[k];
      if (win.w != box.w || win.h != box.h ||
          !win.inside(BoxRegion{0, 0, src.width(), src.height()})) {
        throw ShapeError("source window does not fit its box");
      }
      sx = win.x;
      sy = win.y;
    }
    for (int dy = 0; dy < box.h; ++dy) {
      for (int dx = 0; dx < box.w; ++dx) {
        for (int c = 0; c < channels; ++c) {
          out.at(box.x + dx, box.y + dy, c) = src.at(sx + dx, sy + dy, c);
        }
      }
    }
  }
  const Simplex area = realized_fractions(plan);
  return {std::move(out), mix_labels(area.values(), labels)};
}

/// Real-valued weighted sum of the sources, before 8-bit rounding.
inline std::vector<double> blend_dmixup(std::span<const ImageTensor> images, const Simplex& phi) {
  if (images.size() != phi.size() || images.empty()) throw ShapeError("phi/image count mismatch");
  for (const auto& img : images) {
    if (!img.same_shape(images.front())) throw ShapeError("source images differ in shape");
  }
  std::vector<double> acc(images.front().size(), 0.0);
  for (std::size_t k = 0; k < images.size(); ++k) {
    const auto px = images[k].pixels();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += phi[k] * px[i];
  }
  return acc;
}

inline MixResult compose_dmixup(std::span<const ImageTensor> images,
                                std::span<const SoftLabel> labels, const Simplex& phi) {
  detail::check_sources(images, labels, phi.size());
  const auto blended = blend_dmixup(images, phi);
  const ImageTensor& base = images.front();
  std::vector<std::uint8_t> px(blended.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_u8(blended[i]);
  return {ImageTensor(base.width(), base.height(), base.channels(), std::move(px)),
          mix_labels(phi.values(), labels)};
}

/// Window of size (w, h) centred on the map's most salient pixel, shifted
/// the minimum amount needed to stay inside the image.
inline BoxRegion salient_window(const SaliencyMap& map, int w, int h) {
  const auto [cx, cy] = map.argmax();
  BoxRegion win{cx - w / 2, cy - h / 2, w, h};
  win.x = std::clamp(win.x, 0, map.width() - w);
  win.y = std::clamp(win.y, 0, map.height() - h);
  return win;
}

/// Destination boxes are laid out exactly as plan_dcutmix; only the source
/// window of each pasted image moves to its salient region.
inline CompositePlan plan_saliency_dcutmix(std::span<const ImageTensor> images,
                                           std::span<const SaliencyMap> maps, const Simplex& phi,
                                           RngStream& rng) {
  if (images.size() != phi.size() || maps.size() != images.size()) {
    throw ShapeError("saliency maps must pair 1:1 with images");
  }
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (!images[k].same_shape(images.front())) throw ShapeError("source images differ in shape");
    if (maps[k].width() != images[k].width() || maps[k].height() != images[k].height()) {
      throw ShapeError("saliency map " + std::to_string(k) + " does not match its image");
    }
  }
  CompositePlan plan = plan_dcutmix(images.front().width(), images.front().height(), phi, rng);
  for (std::size_t k = 0; k < plan.boxes.size(); ++k) {
    plan.source_windows.push_back(salient_window(maps[k + 1], plan.boxes[k].w, plan.boxes[k].h));
  }
  return plan;
}

/// One augmented sample plus the draw that produced it.
struct AugmentedSample {
  ImageTensor image;
  SoftLabel label;
  Simplex sampled_phi;
  Simplex realized;  // area fractions for the cut methods, phi for dmixup
  std::vector<std::size_t> sources;
};

inline constexpr int kMaxSimplexRedraws = 64;

/// Draws phi (redrawing stick-degenerate simplices for the cut methods),
/// builds the composite and its label. `maps` is required for the saliency
/// method and ignored otherwise.
inline AugmentedSample draw_composite(std::span<const ImageTensor> images,
                                      std::span<const SoftLabel> labels, MixMethod method,
                                      const DirichletParams& params, RngStream& rng,
                                      std::span<const SaliencyMap> maps = {},
                                      StickLaw law = StickLaw::exact) {
  if (params.size() != images.size()) {
    throw ParameterError("alpha has " + std::to_string(params.size()) + " entries for " +
                         std::to_string(images.size()) + " images");
  }
  if (method == MixMethod::dmixup) {
    Simplex phi = sample_simplex(params, law, rng);
    auto mixed = compose_dmixup(images, labels, phi);
    return {std::move(mixed.image), std::move(mixed.label), phi, phi, {}};
  }
  if (method == MixMethod::saliency_dcutmix && maps.size() != images.size()) {
    throw ShapeError("saliency-dcutmix requires one saliency map per source");
  }
  for (int attempt = 0;; ++attempt) {
    Simplex phi = sample_simplex(params, law, rng);
    try {
      CompositePlan plan = method == MixMethod::dcutmix
                               ? plan_dcutmix(images.front().width(), images.front().height(), phi, rng)
                               : plan_saliency_dcutmix(images, maps, phi, rng);
      auto mixed = compose_dcutmix(images, labels, plan);
      return {std::move(mixed.image), std::move(mixed.label), phi, realized_fractions(plan), {}};
    } catch (const DegenerateSimplexError&) {
      if (attempt + 1 >= kMaxSimplexRedraws) throw;
    }
  }
}

struct Sample {
  ImageTensor image;
  SoftLabel label;
};

/// Mixes every item of a batch with K-1 partners. Round r shuffles the batch
/// with its own seeded permutation; item n is mixed with the items sitting at
/// position n of each shuffled copy. Per-item draws use independent streams,
/// so the output depends only on (batch, method, params, seed).
inline std::vector<AugmentedSample> augment_batch(std::span<const Sample> batch, MixMethod method,
                                                  const DirichletParams& params, std::uint64_t seed,
                                                  std::span<const SaliencyMap> maps = {},
                                                  StickLaw law = StickLaw::exact) {
  const std::size_t k = params.size();
  const std::size_t n = batch.size();
  if (n < k) {
    throw BatchTooSmallError("batch of " + std::to_string(n) + " cannot supply " +
                             std::to_string(k) + " sources");
  }
  if (method == MixMethod::saliency_dcutmix && maps.size() != n) {
    throw ShapeError("saliency-dcutmix needs one map per batch item");
  }
  for (const auto& s : batch) {
    if (!s.image.same_shape(batch.front().image)) throw ShapeError("batch images differ in shape");
  }

  const RngStream perm_root(seed, 0);
  const RngStream item_root(seed, 1);
  std::vector<std::vector<std::size_t>> perms(k - 1, std::vector<std::size_t>(n));
  for (std::size_t r = 0; r + 1 < k; ++r) {
    std::iota(perms[r].begin(), perms[r].end(), std::size_t{0});
    RngStream rng = perm_root.substream(r);
    rng.shuffle(std::span(perms[r]));
  }

  std::vector<AugmentedSample> out;
  out.reserve(n);
  std::vector<ImageTensor> images(k);
  std::vector<SoftLabel> labels(k);
  std::vector<SaliencyMap> item_maps;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> sources{i};
    for (const auto& p : perms) sources.push_back(p[i]);
    item_maps.clear();
    for (std::size_t s = 0; s < k; ++s) {
      images[s] = batch[sources[s]].image;
      labels[s] = batch[sources[s]].label;
      if (!maps.empty()) item_maps.push_back(maps[sources[s]]);
    }
    RngStream rng = item_root.substream(i);
    auto sample = draw_composite(images, labels, method, params, rng, item_maps, law);
    sample.sources = std::move(sources);
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace kmix
