#pragma once

// Small softmax classifier (linear, or one ReLU hidden layer) trained with
// plain SGD on soft labels. It is the built-in ClassifierOracle for running
// the mixing, predictive-mean and uncertainty machinery end to end.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <type_traits>
#include <span>
#include <string>
#include <vector>

#include "kmix/dataset.hpp"
#include "kmix/errors.hpp"
#include "kmix/image.hpp"
#include "kmix/loss.hpp"
#include "kmix/mixing.hpp"
#include "kmix/rng.hpp"
#include "kmix/uncertainty.hpp"

namespace kmix {

/// Parameters live in one flat vector:
///   linear:  W[C x D], b[C]
///   hidden:  W1[H x D], b1[H], W2[C x H], b2[C]
/// with D = width * height * channels. Pixels are scaled to [0, 1] on input.
struct ToyModel {
  int width = 0;
  int height = 0;
  int channels = 0;
  int hidden = 0;  // 0 = linear
  int classes = 0;
  std::vector<double> params;

  std::size_t input_dim() const {
    return static_cast<std::size_t>(width) * height * channels;
  }

  static std::size_t param_count(std::size_t d, std::size_t h, std::size_t c) {
    return h == 0 ? c * d + c : h * d + h + c * h + c;
  }

  /// Linear models start at zero; hidden layers get He-scaled normal weights.
  static ToyModel init(int width, int height, int channels, int hidden, int classes,
                       std::uint64_t seed) {
    if (width < 1 || height < 1 || channels < 1 || classes < 2 || hidden < 0) {
      throw ParameterError("invalid toy model dimensions");
    }
    ToyModel m{width, height, channels, hidden, classes, {}};
    const std::size_t d = m.input_dim();
    const auto h = static_cast<std::size_t>(hidden);
    const auto c = static_cast<std::size_t>(classes);
    m.params.assign(param_count(d, h, c), 0.0);
    if (hidden > 0) {
      RngStream rng(seed, 0);
      const double s1 = std::sqrt(2.0 / static_cast<double>(d));
      const double s2 = std::sqrt(2.0 / static_cast<double>(h));
      for (std::size_t i = 0; i < h * d; ++i) m.params[i] = s1 * rng.normal();
      const std::size_t w2 = h * d + h;
      for (std::size_t i = 0; i < c * h; ++i) m.params[w2 + i] = s2 * rng.normal();
    }
    return m;
  }

  friend bool operator==(const ToyModel&, const ToyModel&) = default;
};

inline std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

namespace detail {

inline std::vector<double> normalized_input(const ToyModel& m, const ImageTensor& img) {
  if (img.width() != m.width || img.height() != m.height || img.channels() != m.channels) {
    throw ShapeError("image " + img.shape_string() + " does not match model input " +
                     std::to_string(m.width) + "x" + std::to_string(m.height) + "x" +
                     std::to_string(m.channels));
  }
  std::vector<double> x(img.size());
  const auto px = img.pixels();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = px[i] / 255.0;
  return x;
}

// out[r] = bias[r] + sum_j w[r * cols + j] * in[j]
inline void affine(const double* w, const double* bias, std::span<const double> in,
                   std::span<double> out) {
  const std::size_t cols = in.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    double acc = bias[r];
    const double* row = w + r * cols;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * in[j];
    out[r] = acc;
  }
}

struct Activations {
  std::vector<double> input;
  std::vector<double> hidden;  // post-ReLU; empty for linear
  std::vector<double> probs;
};

inline Activations run_forward(const ToyModel& m, const ImageTensor& img) {
  Activations a;
  a.input = normalized_input(m, img);
  const std::size_t d = m.input_dim();
  const auto h = static_cast<std::size_t>(m.hidden);
  const auto c = static_cast<std::size_t>(m.classes);
  std::vector<double> logits(c);
  if (h == 0) {
    affine(m.params.data(), m.params.data() + c * d, a.input, logits);
  } else {
    a.hidden.resize(h);
    affine(m.params.data(), m.params.data() + h * d, a.input, a.hidden);
    for (double& v : a.hidden) v = std::max(v, 0.0);
    const double* w2 = m.params.data() + h * d + h;
    affine(w2, w2 + c * h, a.hidden, logits);
  }
  a.probs = softmax(logits);
  return a;
}

}  // namespace detail

inline std::vector<double> forward(const ToyModel& model, const ImageTensor& image) {
  return detail::run_forward(model, image).probs;
}

/// Wraps a model as a ClassifierOracle. The model is shared read-only.
inline ClassifierOracle toy_oracle(ToyModel model) {
  auto shared = std::make_shared<const ToyModel>(std::move(model));
  return [shared](const ImageTensor& img) { return forward(*shared, img); };
}

struct GradientResult {
  std::vector<double> grad;
  double loss = 0.0;  // mean cross-entropy over the batch
};

/// Exact gradient of the mean soft-label cross-entropy.
inline GradientResult grad(const ToyModel& m, std::span<const Sample> batch) {
  if (batch.empty()) throw ParameterError("empty batch");
  const std::size_t d = m.input_dim();
  const auto h = static_cast<std::size_t>(m.hidden);
  const auto c = static_cast<std::size_t>(m.classes);
  GradientResult out{std::vector<double>(m.params.size(), 0.0), 0.0};
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> dlogits(c);
  std::vector<double> dhidden(h);
  for (const auto& s : batch) {
    if (s.label.size() != c) throw ShapeError("label class count does not match model");
    const auto a = detail::run_forward(m, s.image);
    out.loss += cross_entropy(s.label, a.probs) * scale;
    // Labels sum to one, so d(loss)/d(logit_k) = p_k - t_k.
    for (std::size_t k = 0; k < c; ++k) dlogits[k] = (a.probs[k] - s.label[k]) * scale;

    if (h == 0) {
      double* gw = out.grad.data();
      double* gb = gw + c * d;
      for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t j = 0; j < d; ++j) gw[k * d + j] += dlogits[k] * a.input[j];
        gb[k] += dlogits[k];
      }
      continue;
    }
    const double* w2 = m.params.data() + h * d + h;
    double* gw1 = out.grad.data();
    double* gb1 = gw1 + h * d;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + c * h;
    std::fill(dhidden.begin(), dhidden.end(), 0.0);
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t j = 0; j < h; ++j) {
        gw2[k * h + j] += dlogits[k] * a.hidden[j];
        dhidden[j] += dlogits[k] * w2[k * h + j];
      }
      gb2[k] += dlogits[k];
    }
    for (std::size_t j = 0; j < h; ++j) {
      if (a.hidden[j] <= 0.0) continue;
      for (std::size_t i = 0; i < d; ++i) gw1[j * d + i] += dhidden[j] * a.input[i];
      gb1[j] += dhidden[j];
    }
  }
  return out;
}

/// Mean cross-entropy only; the finite-difference oracle uses this.
inline double batch_loss(const ToyModel& m, std::span<const Sample> batch) {
  double loss = 0.0;
  for (const auto& s : batch) loss += cross_entropy(s.label, forward(m, s.image));
  return loss / static_cast<double>(batch.size());
}

inline ToyModel sgd_step(ToyModel model, std::span<const double> gradient, double lr) {
  if (gradient.size() != model.params.size()) throw ShapeError("gradient size mismatch");
  for (std::size_t i = 0; i < gradient.size(); ++i) model.params[i] -= lr * gradient[i];
  return model;
}

struct AugmentationSpec {
  MixMethod method = MixMethod::dcutmix;
  std::vector<double> alpha;
};

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::optional<AugmentationSpec> augmentation;
};

struct TrainResult {
  ToyModel model;
  std::vector<double> loss_history;  // mean training loss per epoch
};

/// Minibatch SGD. Batch order is reshuffled every epoch; when augmentation is
/// configured each minibatch of at least K items is replaced by its mixed
/// version before the gradient step.
inline TrainResult train(ToyModel model, std::span<const Sample> data, const TrainConfig& cfg) {
  if (data.empty()) throw ParameterError("empty training set");
  if (!(cfg.learning_rate >= 0.0)) throw ParameterError("learning rate must be nonnegative");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw ParameterError("invalid batch size or epochs");
  std::optional<DirichletParams> mix_params;
  if (cfg.augmentation) {
    if (cfg.augmentation->method == MixMethod::saliency_dcutmix) {
      throw ConfigError("training does not support saliency-dcutmix");
    }
    mix_params.emplace(cfg.augmentation->alpha);
    if (cfg.batch_size < mix_params->size()) {
      throw ParameterError("batch size must be at least K when mixing");
    }
  }

  const RngStream order_root(cfg.seed, 0);
  const RngStream mix_root(cfg.seed, 1);
  std::vector<std::size_t> order(data.size());
  std::vector<Sample> batch;
  std::uint64_t step = 0;
  TrainResult result{std::move(model), {}};
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream rng = order_root.substream(static_cast<std::uint64_t>(epoch));
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      if (mix_params && batch.size() >= mix_params->size()) {
        const std::uint64_t mix_seed = mix_root.substream(step).next_u64();
        auto mixed = augment_batch(batch, cfg.augmentation->method, *mix_params, mix_seed);
        for (std::size_t i = 0; i < batch.size(); ++i) {
          batch[i] = {std::move(mixed[i].image), std::move(mixed[i].label)};
        }
      }
      auto g = grad(result.model, batch);
      if (!std::isfinite(g.loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step));
      }
      epoch_loss += g.loss * static_cast<double>(batch.size());
      result.model = sgd_step(std::move(result.model), g.grad, cfg.learning_rate);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return result;
}

/// Class-conditional Gaussian blobs on a dark, noisy background. Class c's
/// blob sits at angle 2*pi*c/C on a ring around the image centre; samples are
/// interleaved by class so any prefix stays balanced.
inline Dataset make_synthetic_dataset(int class_count, int per_class, int width, int height,
                                      std::uint64_t seed, int channels = 1) {
  if (class_count < 1 || per_class < 1 || width < 1 || height < 1 || channels < 1) {
    throw ParameterError("synthetic dataset counts must be positive");
  }
  const double side = std::min(width, height);
  const double radius = 0.3 * side;
  const double sigma = std::max(0.12 * side, 0.5);
  const double cx0 = (width - 1) / 2.0;
  const double cy0 = (height - 1) / 2.0;

  Dataset data;
  data.class_count = class_count;
  const RngStream root(seed, 0);
  for (int n = 0; n < per_class; ++n) {
    for (int c = 0; c < class_count; ++c) {
      const auto idx = static_cast<std::uint64_t>(n) * class_count + c;
      RngStream rng = root.substream(idx);
      const double angle = 2.0 * std::numbers::pi * c / class_count;
      const double bx = cx0 + radius * std::cos(angle) + static_cast<double>(rng.uniform_int(-1, 1));
      const double by = cy0 + radius * std::sin(angle) + static_cast<double>(rng.uniform_int(-1, 1));
      ImageTensor img(width, height, channels);
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
          const double blob = 180.0 * std::exp(-d2 / (2.0 * sigma * sigma));
          for (int ch = 0; ch < channels; ++ch) {
            img.at(x, y, ch) = to_u8(30.0 + blob + 8.0 * rng.normal());
          }
        }
      }
      data.push_back(std::move(img), c);
    }
  }
  return data;
}

// Checkpoint layout, all little-endian:
//   8 bytes  magic "KMIXTOY\0"
//   u32      format version (1)
//   u32 x5   width, height, channels, hidden, classes
//   u64      parameter count
//   f32 x N  parameters in the flat layout above
inline constexpr std::array<char, 8> kCheckpointMagic{'K', 'M', 'I', 'X', 'T', 'O', 'Y', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T> void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
  }
}

template <typename T> T get_le(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) {
    throw FormatError("checkpoint truncated at byte " + std::to_string(pos));
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += sizeof(T);
  return static_cast<T>(v);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const ToyModel& m) {
  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  for (int v : {m.width, m.height, m.channels, m.hidden, m.classes}) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  detail::put_le<std::uint64_t>(out, m.params.size());
  for (double p : m.params) {
    detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(p)));
  }
  return out;
}

inline ToyModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCheckpointMagic.size() ||
      std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    throw FormatError("not a toy-model checkpoint (bad magic)");
  }
  std::size_t pos = kCheckpointMagic.size();
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  ToyModel m;
  m.width = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
  m.height = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
  m.channels = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
  m.hidden = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
  m.classes = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
  const auto count = detail::get_le<std::uint64_t>(bytes, pos);
  if (m.width < 1 || m.height < 1 || m.channels < 1 || m.classes < 2 || m.hidden < 0 ||
      count != ToyModel::param_count(m.input_dim(), static_cast<std::size_t>(m.hidden),
                                     static_cast<std::size_t>(m.classes))) {
    throw FormatError("checkpoint header is inconsistent");
  }
  if (bytes.size() - pos != count * 4) {
    throw FormatError("checkpoint payload is " + std::to_string(bytes.size() - pos) +
                      " bytes, expected " + std::to_string(count * 4));
  }
  m.params.resize(count);
  for (auto& p : m.params) {
    p = static_cast<double>(std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, pos)));
  }
  return m;
}

}  // namespace kmix
