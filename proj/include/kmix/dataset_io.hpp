#pragma once

// Readers and writers for the on-disk formats:
//   CIFAR-10 binary    1 label byte + 3072 pixel bytes (R, G, B planes of 32x32)
//   PGM (P5/P2)        8- or 16-bit grayscale saliency maps
//   score NDJSON       one ScoreRow per line
//   index JSON         selected indices plus the selection config
// PNG directories live in png_io.hpp since they need libpng.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmix/dataset.hpp"
#include "kmix/errors.hpp"
#include "kmix/image.hpp"
#include "kmix/subsampling.hpp"
#include "kmix/uncertainty.hpp"

namespace kmix {

namespace fs = std::filesystem;

inline std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to a sibling temp file and renames it into place.
inline void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".kmix-tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_file_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// Zero-padded record number used for per-record files ("000042").
inline std::string record_stem(std::size_t i) {
  std::string s = std::to_string(i);
  return s.size() >= 6 ? s : std::string(6 - s.size(), '0') + s;
}

// ---------------------------------------------------------------- CIFAR-10

inline constexpr int kCifarSide = 32;
inline constexpr int kCifarChannels = 3;
inline constexpr std::size_t kCifarPixels = 32 * 32 * 3;
inline constexpr std::size_t kCifarRecord = kCifarPixels + 1;
inline constexpr int kCifarClasses = 10;

inline Dataset parse_cifar10_bin(std::span<const std::uint8_t> bytes) {
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    throw FormatError("CIFAR-10 binary length " + std::to_string(bytes.size()) +
                      " is not a positive multiple of 3073 (truncated at byte " +
                      std::to_string(bytes.size() - bytes.size() % kCifarRecord) + ")");
  }
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  Dataset data;
  data.class_count = kCifarClasses;
  for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
    const int label = bytes[off];
    if (label >= kCifarClasses) {
      throw FormatError("CIFAR-10 label " + std::to_string(label) + " at byte " +
                        std::to_string(off) + " exceeds 9");
    }
    std::vector<std::uint8_t> px(kCifarPixels);
    const std::uint8_t* planes = bytes.data() + off + 1;
    for (std::size_t i = 0; i < plane; ++i) {
      for (std::size_t c = 0; c < kCifarChannels; ++c) px[i * kCifarChannels + c] = planes[c * plane + i];
    }
    data.push_back(ImageTensor(kCifarSide, kCifarSide, kCifarChannels, std::move(px)), label);
  }
  return data;
}

inline std::vector<std::uint8_t> encode_cifar10_bin(const Dataset& data) {
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  std::vector<std::uint8_t> out;
  out.reserve(data.size() * kCifarRecord);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const ImageTensor& img = data.images[r];
    if (img.width() != kCifarSide || img.height() != kCifarSide || img.channels() != kCifarChannels) {
      throw ShapeError("CIFAR-10 records must be 32x32x3, record " + std::to_string(r) + " is " +
                       img.shape_string());
    }
    if (data.classes[r] < 0 || data.classes[r] >= kCifarClasses) {
      throw FormatError("class " + std::to_string(data.classes[r]) + " does not fit a CIFAR-10 label");
    }
    out.push_back(static_cast<std::uint8_t>(data.classes[r]));
    const auto px = img.pixels();
    for (std::size_t c = 0; c < kCifarChannels; ++c) {
      for (std::size_t i = 0; i < plane; ++i) out.push_back(px[i * kCifarChannels + c]);
    }
  }
  return out;
}

inline Dataset read_cifar10_bin(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_cifar10_bin(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_cifar10_bin(const fs::path& path, const Dataset& data) {
  write_file_atomic(path, encode_cifar10_bin(data));
}

// ---------------------------------------------------------------- PGM

/// Raw grayscale levels as stored in the file.
struct PgmImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint16_t> levels;

  friend bool operator==(const PgmImage&, const PgmImage&) = default;
};

namespace detail {

class PgmHeaderReader {
public:
  explicit PgmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  long next_int() {
    skip_space_and_comments();
    long v = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) throw FormatError("PGM header number too long");
    }
    if (digits == 0) throw FormatError("malformed PGM header at byte " + std::to_string(pos_));
    return v;
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline PgmImage parse_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
    throw FormatError("not a PGM file (expected P5 or P2 magic)");
  }
  const bool binary = bytes[1] == '5';
  detail::PgmHeaderReader rd(bytes);
  rd.advance(2);
  PgmImage img;
  img.width = static_cast<int>(rd.next_int());
  img.height = static_cast<int>(rd.next_int());
  img.maxval = static_cast<int>(rd.next_int());
  if (img.width < 1 || img.height < 1 || img.maxval < 1 || img.maxval > 65535) {
    throw FormatError("PGM header has invalid dimensions or maxval");
  }
  const auto count = static_cast<std::size_t>(img.width) * img.height;
  img.levels.resize(count);
  if (binary) {
    // Exactly one whitespace byte separates the header from the raster.
    if (rd.pos() >= bytes.size() || !std::isspace(bytes[rd.pos()])) {
      throw FormatError("malformed PGM header: missing raster separator");
    }
    rd.advance(1);
    const std::size_t bps = img.maxval > 255 ? 2 : 1;
    if (bytes.size() - rd.pos() < count * bps) throw FormatError("PGM raster truncated");
    const std::uint8_t* p = bytes.data() + rd.pos();
    for (std::size_t i = 0; i < count; ++i) {
      // Netpbm stores 16-bit samples most significant byte first.
      img.levels[i] = bps == 2 ? static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]) : p[i];
    }
  } else {
    for (auto& level : img.levels) level = static_cast<std::uint16_t>(rd.next_int());
  }
  for (auto level : img.levels) {
    if (level > img.maxval) throw FormatError("PGM sample exceeds maxval");
  }
  return img;
}

/// Binary (P5) encoding.
inline std::vector<std::uint8_t> encode_pgm(const PgmImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                             "\n" + std::to_string(img.maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (auto level : img.levels) {
    if (img.maxval > 255) out.push_back(static_cast<std::uint8_t>(level >> 8));
    out.push_back(static_cast<std::uint8_t>(level & 0xFF));
  }
  return out;
}

/// Levels scaled to [0, 1] by maxval.
inline SaliencyMap to_saliency(const PgmImage& img) {
  std::vector<double> values(img.levels.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = img.levels[i] / static_cast<double>(img.maxval);
  return SaliencyMap(img.width, img.height, std::move(values));
}

/// Quantizes a [0, 1] map to maxval levels (values outside are clamped).
inline PgmImage from_saliency(const SaliencyMap& map, int maxval = 255) {
  PgmImage img{map.width(), map.height(), maxval, {}};
  img.levels.reserve(map.values().size());
  for (double v : map.values()) {
    img.levels.push_back(static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * maxval)));
  }
  return img;
}

inline SaliencyMap read_saliency(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return to_saliency(parse_pgm(bytes));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_saliency(const fs::path& path, const SaliencyMap& map, int maxval = 255) {
  write_file_atomic(path, encode_pgm(from_saliency(map, maxval)));
}

// ---------------------------------------------------------------- score NDJSON

inline nlohmann::json score_row_json(const ScoreRow& row) {
  return {{"index", row.index}, {"class", row.cls},   {"losses", row.losses},
          {"mean", row.mean},   {"std", row.std},     {"cv", row.cv},
          {"degenerate", row.degenerate}};
}

inline std::string encode_scores(const ScoreTable& table) {
  std::string out;
  for (const auto& row : table) {
    out += score_row_json(row).dump();
    out += '\n';
  }
  return out;
}

/// Rows need "index", "class" and "losses"; mean/std/cv are recomputed when
/// absent. All rows must carry the same number of losses.
inline ScoreTable parse_scores(std::istream& in) {
  ScoreTable table;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> m;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char ch) { return std::isspace(ch); })) continue;
    const auto where = "score line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + "invalid JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw FormatError(where + "expected a JSON object");
    for (const char* key : {"index", "class", "losses"}) {
      if (!j.contains(key)) throw FormatError(where + "missing \"" + key + "\"");
    }
    try {
      auto losses = j.at("losses").get<std::vector<double>>();
      if (losses.empty()) throw FormatError(where + "empty \"losses\"");
      for (double l : losses) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw FormatError(where + "losses must be finite and >= 0");
      }
      if (m && *m != losses.size()) {
        throw FormatError(where + "has " + std::to_string(losses.size()) + " losses, expected " +
                          std::to_string(*m));
      }
      m = losses.size();
      const auto index = j.at("index").get<std::int64_t>();
      if (index < 0) throw FormatError(where + "negative index");
      ScoreRow row = make_score_row(static_cast<std::size_t>(index), j.at("class").get<int>(), std::move(losses));
      if (j.contains("mean")) row.mean = j.at("mean").get<double>();
      if (j.contains("std")) row.std = j.at("std").get<double>();
      if (j.contains("cv")) row.cv = j.at("cv").get<double>();
      if (j.contains("degenerate")) row.degenerate = j.at("degenerate").get<bool>();
      table.push_back(std::move(row));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + "schema error (" + e.what() + ")");
    }
  }
  return table;
}

inline ScoreTable read_scores(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return parse_scores(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_scores(const fs::path& path, const ScoreTable& table) {
  write_file_atomic(path, encode_scores(table));
}

// ---------------------------------------------------------------- index JSON

struct IndexFile {
  IndexSet indices;
  SubsampleConfig config;

  friend bool operator==(const IndexFile&, const IndexFile&) = default;
};

inline std::string encode_index_file(const IndexFile& f) {
  nlohmann::json cfg = {{"ratio", f.config.ratio},
                        {"measure", measure_name(f.config.measure)},
                        {"strategy", strategy_name(f.config.strategy)},
                        {"interval", f.config.interval},
                        {"per_class", f.config.per_class},
                        {"seed", f.config.seed}};
  nlohmann::json j = {{"count", f.indices.size()}, {"indices", f.indices}, {"config", cfg}};
  return j.dump(2) + "\n";
}

inline IndexFile parse_index_file(const std::string& text) {
  IndexFile f;
  try {
    const auto j = nlohmann::json::parse(text);
    f.indices = j.at("indices").get<IndexSet>();
    const auto& cfg = j.at("config");
    f.config.ratio = cfg.at("ratio").get<double>();
    f.config.measure = parse_measure(cfg.at("measure").get<std::string>());
    f.config.strategy = parse_strategy(cfg.at("strategy").get<std::string>());
    f.config.interval = cfg.at("interval").get<std::size_t>();
    f.config.per_class = cfg.at("per_class").get<bool>();
    f.config.seed = cfg.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("index file: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("index file: ") + e.what());
  }
  if (!std::is_sorted(f.indices.begin(), f.indices.end()) ||
      std::adjacent_find(f.indices.begin(), f.indices.end()) != f.indices.end()) {
    throw FormatError("index file: indices must be sorted and distinct");
  }
  return f;
}

inline IndexFile read_index_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_index_file(std::string(bytes.begin(), bytes.end()));
}

inline void write_index_file(const fs::path& path, const IndexFile& f) {
  write_file_atomic(path, encode_index_file(f));
}

}  // namespace kmix
