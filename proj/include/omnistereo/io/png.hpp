#pragma once

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "omnistereo/error.hpp"
#include "omnistereo/geometry.hpp"
#include "omnistereo/io/pfm.hpp"
#include "omnistereo/raster.hpp"

namespace omnistereo::io {

/// Decoded 8- or 16-bit PNG, gray or RGB. `range` holds the value range
/// recorded in tEXt chunks, when present.
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;  // row-major, channels interleaved
  std::optional<double> range_min;
  std::optional<double> range_max;

  int max_code() const { return bit_depth == 16 ? 65535 : 255; }
};

inline constexpr const char* kPngMinKey = "omnistereo:min";
inline constexpr const char* kPngMaxKey = "omnistereo:max";

namespace detail {

struct PngContext {
  const std::string* input = nullptr;
  std::size_t pos = 0;
  std::string* output = nullptr;
  char message[256] = {0};
};

inline void png_on_error(png_structp png, png_const_charp msg) {
  auto* ctx = static_cast<PngContext*>(png_get_error_ptr(png));
  std::snprintf(ctx->message, sizeof(ctx->message), "%s", msg);
  png_longjmp(png, 1);
}
inline void png_on_warning(png_structp, png_const_charp) {}
inline void png_read_bytes(png_structp png, png_bytep dst, png_size_t n) {
  auto* ctx = static_cast<PngContext*>(png_get_io_ptr(png));
  if (ctx->pos + n > ctx->input->size()) png_error(png, "unexpected end of file");
  std::memcpy(dst, ctx->input->data() + ctx->pos, n);
  ctx->pos += n;
}
inline void png_write_bytes(png_structp png, png_bytep src, png_size_t n) {
  auto* ctx = static_cast<PngContext*>(png_get_io_ptr(png));
  ctx->output->append(reinterpret_cast<const char*>(src), n);
}
inline void png_flush_noop(png_structp) {}

struct PngHeader {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::size_t rowbytes = 0;
};

// The two functions below hold no objects with destructors, so longjmp out
// of libpng cannot skip any cleanup.
inline bool png_read_header(png_structp png, png_infop info, PngHeader* hdr) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);
  hdr->width = png_get_image_width(png, info);
  hdr->height = png_get_image_height(png, info);
  hdr->channels = png_get_channels(png, info);
  hdr->bit_depth = png_get_bit_depth(png, info);
  hdr->rowbytes = png_get_rowbytes(png, info);
  return true;
}

inline bool png_read_rows(png_structp png, png_infop info, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, info);
  return true;
}

inline bool png_write_all(png_structp png, png_infop info, const PngHeader* hdr, int color_type, png_textp text,
                          int num_text, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_IHDR(png, info, hdr->width, hdr->height, hdr->bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (num_text > 0) png_set_text(png, info, text, num_text);
  png_write_info(png, info);
  if (hdr->bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_write_image(png, rows);
  png_write_end(png, info);
  return true;
}

inline std::optional<double> parse_text_number(const char* s) {
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline PngImage decode_png(const std::string& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
    throw FormatError("png: bad signature", 0);
  detail::PngContext ctx;
  ctx.input = &bytes;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx, detail::png_on_error, detail::png_on_warning);
  if (png == nullptr) throw Error("png: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("png: cannot create info struct");
  }
  png_set_read_fn(png, &ctx, detail::png_read_bytes);

  auto fail = [&]() {
    png_destroy_read_struct(&png, &info, nullptr);
    return FormatError(std::string("png: ") + ctx.message, ctx.pos);
  };

  detail::PngHeader hdr;
  if (!detail::png_read_header(png, info, &hdr)) throw fail();
  if (hdr.channels != 1 && hdr.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png: unsupported channel layout", ctx.pos);
  }
  std::vector<png_byte> buffer(hdr.rowbytes * hdr.height);
  std::vector<png_bytep> rows(hdr.height);
  for (png_uint_32 r = 0; r < hdr.height; ++r) rows[r] = buffer.data() + r * hdr.rowbytes;
  if (!detail::png_read_rows(png, info, rows.data())) throw fail();

  PngImage img;
  img.width = static_cast<int>(hdr.width);
  img.height = static_cast<int>(hdr.height);
  img.channels = hdr.channels;
  img.bit_depth = hdr.bit_depth;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (img.bit_depth == 16) {
      std::uint16_t v = 0;
      std::memcpy(&v, buffer.data() + (i / (img.width * img.channels)) * hdr.rowbytes +
                          (i % (img.width * img.channels)) * 2,
                  2);
      img.samples[i] = v;
    } else {
      img.samples[i] = buffer[(i / (img.width * img.channels)) * hdr.rowbytes + i % (img.width * img.channels)];
    }
  }

  png_textp text = nullptr;
  int num_text = 0;
  png_get_text(png, info, &text, &num_text);
  for (int k = 0; k < num_text; ++k) {
    if (std::strcmp(text[k].key, kPngMinKey) == 0) img.range_min = detail::parse_text_number(text[k].text);
    if (std::strcmp(text[k].key, kPngMaxKey) == 0) img.range_max = detail::parse_text_number(text[k].text);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline std::string encode_png(const PngImage& img) {
  if (img.channels != 1 && img.channels != 3) throw DomainError("png: only gray or RGB can be written");
  if (img.bit_depth != 8 && img.bit_depth != 16) throw DomainError("png: bit depth must be 8 or 16");
  if (img.width <= 0 || img.height <= 0) throw DomainError("png: dimensions must be positive");
  const std::size_t row_samples = static_cast<std::size_t>(img.width) * img.channels;
  if (img.samples.size() != row_samples * img.height) throw DomainError("png: sample count mismatch");

  const std::size_t bytes_per = img.bit_depth == 16 ? 2 : 1;
  std::vector<png_byte> buffer(row_samples * bytes_per * img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    if (bytes_per == 2) {
      const std::uint16_t v = img.samples[i];
      std::memcpy(buffer.data() + i * 2, &v, 2);
    } else {
      buffer[i] = static_cast<png_byte>(std::min<std::uint16_t>(img.samples[i], 255));
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int r = 0; r < img.height; ++r) rows[static_cast<std::size_t>(r)] = buffer.data() + r * row_samples * bytes_per;

  std::string min_text = img.range_min ? detail::format_double(*img.range_min) : std::string();
  std::string max_text = img.range_max ? detail::format_double(*img.range_max) : std::string();
  std::string min_key = kPngMinKey, max_key = kPngMaxKey;
  std::vector<png_text> text;
  auto add_text = [&](std::string& key, std::string& value) {
    png_text t{};
    t.compression = PNG_TEXT_COMPRESSION_NONE;
    t.key = key.data();
    t.text = value.data();
    t.text_length = value.size();
    text.push_back(t);
  };
  if (img.range_min) add_text(min_key, min_text);
  if (img.range_max) add_text(max_key, max_text);

  std::string out;
  detail::PngContext ctx;
  ctx.output = &out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx, detail::png_on_error, detail::png_on_warning);
  if (png == nullptr) throw Error("png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png: cannot create info struct");
  }
  png_set_write_fn(png, &ctx, detail::png_write_bytes, detail::png_flush_noop);
  detail::PngHeader hdr;
  hdr.width = static_cast<png_uint_32>(img.width);
  hdr.height = static_cast<png_uint_32>(img.height);
  hdr.bit_depth = img.bit_depth;
  const int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  const bool ok = detail::png_write_all(png, info, &hdr, color, text.data(), static_cast<int>(text.size()), rows.data());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw Error(std::string("png: ") + ctx.message);
  return out;
}

inline PngImage read_png(const std::string& path) {
  try {
    return decode_png(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.message(), e.offset());
  }
}

inline void write_png(const std::string& path, const PngImage& img) { write_file(path, encode_png(img)); }

/// Maps codes linearly onto [min, max] when the file records a range, else onto [0, 1].
inline Panorama panorama_from_png(const PngImage& img, Projection projection) {
  Panorama p = Panorama::zeros({projection, img.width, img.height}, img.channels);
  const double lo = img.range_min.value_or(0.0);
  const double hi = img.range_max.value_or(1.0);
  const double scale = (hi - lo) / img.max_code();
  for (std::size_t i = 0; i < img.samples.size(); ++i) p.data[i] = static_cast<float>(lo + scale * img.samples[i]);
  return p;
}

/// Quantizes a 1- or 3-channel panorama onto [lo, hi] and records the range.
/// Invalid pixels become code 0.
inline PngImage png_from_panorama(const Panorama& p, int bit_depth, double lo, double hi) {
  p.check();
  if (p.channels != 1 && p.channels != 3) throw DomainError("png: only 1 or 3 channels can be written");
  if (bit_depth != 8 && bit_depth != 16) throw DomainError("png: bit depth must be 8 or 16");
  if (!(hi > lo)) throw DomainError("png: range max must exceed min");
  PngImage img;
  img.width = p.width();
  img.height = p.height();
  img.channels = p.channels;
  img.bit_depth = bit_depth;
  img.range_min = lo;
  img.range_max = hi;
  img.samples.resize(p.data.size());
  const double top = img.max_code();
  for (std::size_t i = 0; i < p.pixel_count(); ++i)
    for (int c = 0; c < p.channels; ++c) {
      const std::size_t k = i * p.channels + c;
      const double v = p.data[k];
      if (!p.valid.empty() && !p.valid[i]) continue;
      if (!std::isfinite(v)) continue;
      img.samples[k] = static_cast<std::uint16_t>(std::lround(std::clamp((v - lo) / (hi - lo), 0.0, 1.0) * top));
    }
  return img;
}

}  // namespace omnistereo::io
