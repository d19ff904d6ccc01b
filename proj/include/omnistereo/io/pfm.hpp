#pragma once

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "omnistereo/error.hpp"
#include "omnistereo/geometry.hpp"
#include "omnistereo/raster.hpp"

namespace omnistereo::io {

/// Float raster as stored in a PFM file. `data` is row-major, top row first,
/// channels interleaved; the file itself stores rows bottom to top.
struct PfmImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;
};

namespace detail {

inline std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0x0000ff00u) | ((v << 8) & 0x00ff0000u) | (v << 24);
}

class HeaderCursor {
 public:
  explicit HeaderCursor(const std::string& bytes) : b_(bytes) {}

  std::size_t offset() const { return pos_; }

  void skip_space() {
    while (pos_ < b_.size() && std::isspace(static_cast<unsigned char>(b_[pos_]))) ++pos_;
  }

  std::string token(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < b_.size() && !std::isspace(static_cast<unsigned char>(b_[pos_]))) ++pos_;
    if (start == pos_) throw FormatError(std::string("pfm: missing ") + what, start);
    return b_.substr(start, pos_ - start);
  }

  int positive_int(const char* what) {
    const std::size_t at = (skip_space(), pos_);
    const std::string t = token(what);
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size() || v <= 0 || v > std::numeric_limits<int>::max())
      throw FormatError(std::string("pfm: bad ") + what + " '" + t + "'", at);
    return static_cast<int>(v);
  }

  double number(const char* what) {
    const std::size_t at = (skip_space(), pos_);
    const std::string t = token(what);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size() || !std::isfinite(v) || v == 0.0)
      throw FormatError(std::string("pfm: bad ") + what + " '" + t + "'", at);
    return v;
  }

  /// Consumes the single whitespace byte that ends the header.
  void end_header() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_])))
      throw FormatError("pfm: header not terminated by whitespace", pos_);
    ++pos_;
  }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses PFM bytes. Malformed or truncated input throws FormatError with the byte offset.
inline PfmImage parse_pfm(const std::string& bytes) {
  detail::HeaderCursor cur(bytes);
  const std::string magic = cur.token("magic");
  PfmImage img;
  if (magic == "Pf")
    img.channels = 1;
  else if (magic == "PF")
    img.channels = 3;
  else
    throw FormatError("pfm: bad magic '" + magic.substr(0, 8) + "'", 0);
  img.width = cur.positive_int("width");
  img.height = cur.positive_int("height");
  const double scale = cur.number("scale");
  cur.end_header();

  const bool little = scale < 0.0;
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
  const std::size_t start = cur.offset();
  if (bytes.size() - start < count * 4)
    throw FormatError("pfm: truncated data, expected " + std::to_string(count * 4) + " bytes", bytes.size());
  if (bytes.size() - start > count * 4) throw FormatError("pfm: trailing bytes after data", start + count * 4);

  img.data.resize(count);
  const std::size_t row_len = static_cast<std::size_t>(img.width) * img.channels;
  const bool swap = little != (std::endian::native == std::endian::little);
  for (int file_row = 0; file_row < img.height; ++file_row) {
    const int row = img.height - 1 - file_row;
    for (std::size_t k = 0; k < row_len; ++k) {
      std::uint32_t raw = 0;
      std::memcpy(&raw, bytes.data() + start + (static_cast<std::size_t>(file_row) * row_len + k) * 4, 4);
      if (swap) raw = detail::byteswap32(raw);
      std::memcpy(&img.data[static_cast<std::size_t>(row) * row_len + k], &raw, 4);
    }
  }
  return img;
}

inline std::string serialize_pfm(const PfmImage& img, bool little_endian = true) {
  if (img.channels != 1 && img.channels != 3) throw DomainError("pfm: only 1 or 3 channels can be stored");
  if (img.width <= 0 || img.height <= 0) throw DomainError("pfm: dimensions must be positive");
  const std::size_t row_len = static_cast<std::size_t>(img.width) * img.channels;
  if (img.data.size() != row_len * img.height) throw DomainError("pfm: data size does not match dimensions");

  std::string out = std::string(img.channels == 1 ? "Pf" : "PF") + "\n" + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n" + (little_endian ? "-1.0" : "1.0") + "\n";
  const std::size_t header = out.size();
  out.resize(header + img.data.size() * 4);
  const bool swap = little_endian != (std::endian::native == std::endian::little);
  for (int file_row = 0; file_row < img.height; ++file_row) {
    const int row = img.height - 1 - file_row;
    for (std::size_t k = 0; k < row_len; ++k) {
      std::uint32_t raw = 0;
      std::memcpy(&raw, &img.data[static_cast<std::size_t>(row) * row_len + k], 4);
      if (swap) raw = detail::byteswap32(raw);
      std::memcpy(out.data() + header + (static_cast<std::size_t>(file_row) * row_len + k) * 4, &raw, 4);
    }
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

inline PfmImage read_pfm(const std::string& path) {
  try {
    return parse_pfm(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.message(), e.offset());
  }
}

inline void write_pfm(const std::string& path, const PfmImage& img, bool little_endian = true) {
  write_file(path, serialize_pfm(img, little_endian));
}

// ---------------------------------------------------------------------------
// Raster conversions. Invalid pixels are stored as +inf; non-finite values
// read back as invalid.

inline PfmImage to_pfm(const Panorama& p) {
  p.check();
  PfmImage img{p.width(), p.height(), p.channels, p.data};
  if (!p.valid.empty()) {
    for (std::size_t i = 0; i < p.pixel_count(); ++i) {
      if (p.valid[i]) continue;
      for (int c = 0; c < p.channels; ++c) {
        float& v = img.data[i * p.channels + c];
        if (std::isfinite(v)) v = std::numeric_limits<float>::infinity();
      }
    }
  }
  return img;
}

template <typename Tag>
PfmImage to_pfm(const ScalarMap<Tag>& m) {
  return to_pfm(to_panorama(m));
}

inline Panorama panorama_from_pfm(const PfmImage& img, Projection projection) {
  Panorama p = Panorama::zeros({projection, img.width, img.height}, img.channels);
  p.data = img.data;
  p.valid.assign(p.pixel_count(), 1);
  bool any_invalid = false;
  for (std::size_t i = 0; i < p.pixel_count(); ++i)
    for (int c = 0; c < p.channels; ++c)
      if (!std::isfinite(p.data[i * p.channels + c])) {
        p.valid[i] = 0;
        any_invalid = true;
      }
  if (!any_invalid) p.valid.clear();
  return p;
}

template <typename Map>
Map map_from_pfm(const PfmImage& img, Projection projection) {
  if (img.channels != 1) throw FormatError("pfm: expected a single-channel map", 0);
  return from_panorama<Map>(panorama_from_pfm(img, projection));
}

}  // namespace omnistereo::io
