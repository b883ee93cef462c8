#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kmix/errors.hpp"

namespace kmix {

/// 8-bit image, row-major (y, x, c) with channels interleaved.
class ImageTensor {
public:
  ImageTensor() = default;
  ImageTensor(int width, int height, int channels, std::uint8_t fill = 0)
      : width_(width), height_(height), channels_(channels) {
    check_dims();
    pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }
  ImageTensor(int width, int height, int channels, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
    check_dims();
    if (pixels_.size() != static_cast<std::size_t>(width) * height * channels) {
      throw ShapeError("pixel buffer length does not match " + shape_string());
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t size() const { return pixels_.size(); }

  std::uint8_t& at(int x, int y, int c) { return pixels_[offset(x, y, c)]; }
  std::uint8_t at(int x, int y, int c) const { return pixels_[offset(x, y, c)]; }

  std::span<std::uint8_t> pixels() { return pixels_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }

  bool same_shape(const ImageTensor& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  std::string shape_string() const {
    return std::to_string(width_) + "x" + std::to_string(height_) + "x" + std::to_string(channels_);
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

private:
  std::size_t offset(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  void check_dims() const {
    if (width_ < 1 || height_ < 1 || channels_ < 1) {
      throw ShapeError("image dimensions must be positive, got " + shape_string());
    }
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Round half away from zero and saturate to [0, 255].
inline std::uint8_t to_u8(double v) {
  const double r = std::round(v);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

struct BoxRegion {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  long long area() const { return static_cast<long long>(w) * h; }
  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  bool inside(const BoxRegion& parent) const {
    return x >= parent.x && y >= parent.y && x + w <= parent.x + parent.w &&
           y + h <= parent.y + parent.h;
  }

  friend bool operator==(const BoxRegion&, const BoxRegion&) = default;
};

class SoftLabel {
public:
  SoftLabel() = default;
  explicit SoftLabel(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw ParameterError("empty label");
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw ParameterError("label entry out of range");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("label does not sum to 1");
  }

  static SoftLabel one_hot(int cls, int class_count) {
    if (cls < 0 || cls >= class_count) {
      throw ParameterError("class " + std::to_string(cls) + " outside [0, " +
                           std::to_string(class_count) + ")");
    }
    std::vector<double> p(static_cast<std::size_t>(class_count), 0.0);
    p[static_cast<std::size_t>(cls)] = 1.0;
    return SoftLabel(std::move(p));
  }

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> values() const { return probs_; }
  const std::vector<double>& vec() const { return probs_; }

  /// Most probable class; ties go to the lowest index.
  int argmax() const {
    return static_cast<int>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
  }

  friend bool operator==(const SoftLabel&, const SoftLabel&) = default;

private:
  std::vector<double> probs_;
};

/// sum_k weights[k] * labels[k]
inline SoftLabel mix_labels(std::span<const double> weights, std::span<const SoftLabel> labels) {
  if (weights.size() != labels.size() || labels.empty()) {
    throw ShapeError("label/weight count mismatch");
  }
  std::vector<double> out(labels.front().size(), 0.0);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k].size() != out.size()) throw ShapeError("labels have differing class counts");
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += weights[k] * labels[k][c];
  }
  return SoftLabel(std::move(out));
}

/// One finite scalar per pixel, row-major.
class SaliencyMap {
public:
  SaliencyMap() = default;
  SaliencyMap(int width, int height, std::vector<double> values)
      : width_(width), height_(height), values_(std::move(values)) {
    if (width < 1 || height < 1) throw ShapeError("saliency map dimensions must be positive");
    if (values_.size() != static_cast<std::size_t>(width) * height) {
      throw ShapeError("saliency buffer length mismatch");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw ParameterError("saliency values must be finite");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const double> values() const { return values_; }

  /// Position of the maximum; the first in row-major order wins ties.
  std::pair<int, int> argmax() const {
    const auto it = std::max_element(values_.begin(), values_.end());
    const auto idx = static_cast<int>(it - values_.begin());
    return {idx % width_, idx / width_};
  }

  friend bool operator==(const SaliencyMap&, const SaliencyMap&) = default;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

}  // namespace kmix
