#pragma once

// PNG-directory datasets: a folder of 8-bit PNGs plus a CSV of
// (filename, class) rows. Records come back in CSV row order. Link libpng.

#include <png.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "kmix/dataset.hpp"
#include "kmix/dataset_io.hpp"
#include "kmix/errors.hpp"
#include "kmix/image.hpp"

namespace kmix {

namespace detail {

inline png_uint_32 png_format_for(int channels) {
  switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 2: return PNG_FORMAT_GA;
    case 3: return PNG_FORMAT_RGB;
    case 4: return PNG_FORMAT_RGBA;
    default: throw ShapeError("PNG supports 1-4 channels, got " + std::to_string(channels));
  }
}

struct PngImageGuard {
  png_image img{};
  PngImageGuard() { img.version = PNG_IMAGE_VERSION; }
  ~PngImageGuard() { png_image_free(&img); }
  PngImageGuard(const PngImageGuard&) = delete;
  PngImageGuard& operator=(const PngImageGuard&) = delete;
};

}  // namespace detail

/// Decodes to the file's natural channel count (gray, gray+alpha, RGB, RGBA).
inline ImageTensor decode_png(std::span<const std::uint8_t> bytes, const std::string& name) {
  detail::PngImageGuard g;
  if (!png_image_begin_read_from_memory(&g.img, bytes.data(), bytes.size())) {
    throw FormatError(name + ": " + g.img.message);
  }
  const bool color = (g.img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool alpha = (g.img.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  const int channels = (color ? 3 : 1) + (alpha ? 1 : 0);
  g.img.format = detail::png_format_for(channels);
  const auto w = static_cast<int>(g.img.width);
  const auto h = static_cast<int>(g.img.height);
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(g.img));
  if (!png_image_finish_read(&g.img, nullptr, px.data(), 0, nullptr)) {
    throw FormatError(name + ": " + g.img.message);
  }
  return ImageTensor(w, h, channels, std::move(px));
}

inline std::vector<std::uint8_t> encode_png(const ImageTensor& img) {
  detail::PngImageGuard g;
  g.img.width = static_cast<png_uint_32>(img.width());
  g.img.height = static_cast<png_uint_32>(img.height());
  g.img.format = detail::png_format_for(img.channels());
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&g.img, nullptr, &size, 0, img.pixels().data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + g.img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&g.img, out.data(), &size, 0, img.pixels().data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + g.img.message);
  }
  out.resize(size);
  return out;
}

/// `class_count` bounds the accepted class ids; without it the count is
/// max(class) + 1. An optional "filename,class" header row is skipped.
inline Dataset read_png_dir(const fs::path& dir, const fs::path& labels_csv,
                            std::optional<int> class_count = std::nullopt) {
  std::ifstream in(labels_csv);
  if (!in) throw FormatError("cannot open label CSV " + labels_csv.string());
  Dataset data;
  std::string line;
  std::size_t row = 0;
  int max_class = -1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw FormatError(labels_csv.string() + " row " + std::to_string(row) + ": expected filename,class");
    }
    const std::string file = line.substr(0, comma);
    const std::string cls_text = line.substr(comma + 1);
    if (row == 1 && file == "filename") continue;
    char* end = nullptr;
    const long cls = std::strtol(cls_text.c_str(), &end, 10);
    if (cls_text.empty() || *end != '\0' || cls < 0 || (class_count && cls >= *class_count)) {
      throw FormatError(file + ": unknown class '" + cls_text + "'");
    }
    const fs::path path = dir / file;
    if (!fs::exists(path)) throw FormatError(file + ": file not found in " + dir.string());
    ImageTensor img = decode_png(read_file_bytes(path), file);
    if (!data.empty() && !img.same_shape(data.images.front())) {
      throw ShapeError(file + ": dimension mismatch, " + img.shape_string() + " vs " +
                       data.images.front().shape_string());
    }
    data.push_back(std::move(img), static_cast<int>(cls));
    max_class = std::max(max_class, static_cast<int>(cls));
  }
  if (data.empty()) throw FormatError(labels_csv.string() + ": no records");
  data.class_count = class_count.value_or(std::max(max_class + 1, 2));
  return data;
}

inline std::string png_record_name(std::size_t i) { return record_stem(i) + ".png"; }

/// Writes <dir>/NNNNNN.png for every record and <dir>/labels.csv.
inline void write_png_dir(const fs::path& dir, const Dataset& data) {
  fs::create_directories(dir);
  std::string csv = "filename,class\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string name = png_record_name(i);
    write_file_atomic(dir / name, encode_png(data.images[i]));
    csv += name + "," + std::to_string(data.classes[i]) + "\n";
  }
  write_file_atomic(dir / "labels.csv", csv);
}

}  // namespace kmix
