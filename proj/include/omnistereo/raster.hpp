#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "omnistereo/error.hpp"
#include "omnistereo/geometry.hpp"

namespace omnistereo {

/// Multi-channel float image tagged with its projection. Rows run along the
/// height axis (v), columns along the width axis (u), channels innermost.
/// An empty `valid` vector means every pixel is valid.
struct Panorama {
  PanoramaGeometry geometry;
  int channels = 1;
  std::vector<float> data;
  std::vector<std::uint8_t> valid;

  static Panorama zeros(const PanoramaGeometry& g, int channels = 1) {
    check_geometry(g);
    if (channels < 1) throw DomainError("panorama needs at least one channel");
    Panorama p;
    p.geometry = g;
    p.channels = channels;
    p.data.assign(static_cast<std::size_t>(g.width) * g.height * channels, 0.0f);
    return p;
  }

  int width() const { return geometry.width; }
  int height() const { return geometry.height; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(geometry.width) * geometry.height; }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * geometry.width + static_cast<std::size_t>(col);
  }

  float& at(int row, int col, int ch = 0) { return data[index(row, col) * channels + ch]; }
  float at(int row, int col, int ch = 0) const { return data[index(row, col) * channels + ch]; }

  bool is_valid(int row, int col) const { return valid.empty() || valid[index(row, col)] != 0; }
  bool has_mask() const { return !valid.empty(); }

  void ensure_mask() {
    if (valid.empty()) valid.assign(pixel_count(), 1);
  }

  void check() const {
    check_geometry(geometry);
    if (data.size() != pixel_count() * static_cast<std::size_t>(channels))
      throw DomainError("panorama data length does not match H*W*C");
    if (!valid.empty() && valid.size() != pixel_count())
      throw DomainError("panorama mask does not match its dimensions");
  }
};

/// Single-channel float raster with a materialized validity mask. The tag
/// keeps disparity, depth and confidence maps from being mixed up.
template <typename Tag>
struct ScalarMap {
  PanoramaGeometry geometry;
  std::vector<float> values;
  std::vector<std::uint8_t> valid;

  static ScalarMap invalid(const PanoramaGeometry& g) {
    check_geometry(g);
    ScalarMap m;
    m.geometry = g;
    m.values.assign(static_cast<std::size_t>(g.width) * g.height, 0.0f);
    m.valid.assign(m.values.size(), 0);
    return m;
  }

  static ScalarMap filled(const PanoramaGeometry& g, float value) {
    ScalarMap m = invalid(g);
    std::fill(m.values.begin(), m.values.end(), value);
    std::fill(m.valid.begin(), m.valid.end(), std::uint8_t{1});
    return m;
  }

  int width() const { return geometry.width; }
  int height() const { return geometry.height; }
  std::size_t size() const { return values.size(); }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * geometry.width + static_cast<std::size_t>(col);
  }

  float& at(int row, int col) { return values[index(row, col)]; }
  float at(int row, int col) const { return values[index(row, col)]; }
  bool is_valid(int row, int col) const { return valid[index(row, col)] != 0; }

  void set(int row, int col, float v) {
    values[index(row, col)] = v;
    valid[index(row, col)] = 1;
  }

  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }

  void check() const {
    check_geometry(geometry);
    const auto n = static_cast<std::size_t>(geometry.width) * geometry.height;
    if (values.size() != n || valid.size() != n) throw DomainError("scalar map size does not match its geometry");
  }
};

struct DisparityTag {};
struct DepthTag {};
struct ConfidenceTag {};

/// Pixel disparity (cylindrical) or angular disparity in radians (Cassini).
using DisparityMap = ScalarMap<DisparityTag>;
/// Euclidean distance from the camera center, meters.
using DepthMap = ScalarMap<DepthTag>;
/// Per-pixel reliability in [0, 1].
using ConfidenceMap = ScalarMap<ConfidenceTag>;

template <typename Tag>
Panorama to_panorama(const ScalarMap<Tag>& m) {
  Panorama p;
  p.geometry = m.geometry;
  p.channels = 1;
  p.data = m.values;
  p.valid = m.valid;
  return p;
}

template <typename Map>
Map from_panorama(const Panorama& p, int channel = 0) {
  p.check();
  Map m = Map::invalid(p.geometry);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const float v = p.data[i * p.channels + channel];
    m.values[i] = v;
    m.valid[i] = (p.valid.empty() || p.valid[i]) && std::isfinite(v) ? 1 : 0;
  }
  return m;
}

template <typename A, typename B>
void check_same_geometry(const A& a, const B& b, const char* what) {
  if (!(a.geometry == b.geometry)) throw DomainError(std::string(what) + ": geometry mismatch");
}

// ---------------------------------------------------------------------------
// Sampling

enum class Interpolation { Nearest, Bilinear };

/// Which image axis covers a full turn and therefore wraps.
enum class WrapAxis { None, Horizontal, Vertical };

inline WrapAxis wrap_axis(Projection p) {
  switch (p) {
    case Projection::Cassini:
    case Projection::Cylindrical:
      return WrapAxis::Vertical;
    case Projection::ERP:
      return WrapAxis::Horizontal;
    case Projection::Perspective:
      return WrapAxis::None;
  }
  return WrapAxis::None;
}

inline int wrap_index(long long i, int n) {
  long long r = i % n;
  if (r < 0) r += n;
  return static_cast<int>(r);
}

namespace detail {

/// Resolves a continuous coordinate along one axis into two taps and the
/// weight of the second tap. Returns false when the coordinate is outside a
/// non-wrapping axis, i.e. outside [-0.5, n - 0.5).
inline bool axis_taps(double c, int n, bool wraps, int& i0, int& i1, double& frac) {
  if (!std::isfinite(c)) return false;
  if (!wraps && (c < -0.5 || c >= n - 0.5)) return false;
  const double f = std::floor(c);
  frac = c - f;
  const auto base = static_cast<long long>(f);
  if (wraps) {
    i0 = wrap_index(base, n);
    i1 = wrap_index(base + 1, n);
  } else {
    i0 = static_cast<int>(std::clamp<long long>(base, 0, n - 1));
    i1 = static_cast<int>(std::clamp<long long>(base + 1, 0, n - 1));
  }
  return true;
}

inline bool axis_nearest(double c, int n, bool wraps, int& i) {
  if (!std::isfinite(c)) return false;
  if (!wraps && (c < -0.5 || c >= n - 0.5)) return false;
  const auto r = static_cast<long long>(std::floor(c + 0.5));
  i = wraps ? wrap_index(r, n) : static_cast<int>(std::clamp<long long>(r, 0, n - 1));
  return true;
}

}  // namespace detail

/// Samples all channels of `src` at `px` into `out`. Returns false when the
/// position is outside the image or touches an invalid texel with non-zero weight.
inline bool sample(const Panorama& src, const PixelCoord& px, Interpolation interp, std::span<float> out) {
  const WrapAxis axis = wrap_axis(src.geometry.projection);
  const bool wrap_u = axis == WrapAxis::Horizontal;
  const bool wrap_v = axis == WrapAxis::Vertical;
  const int w = src.width();
  const int h = src.height();
  const int nc = src.channels;

  if (interp == Interpolation::Nearest) {
    int col = 0;
    int row = 0;
    if (!detail::axis_nearest(px.u, w, wrap_u, col) || !detail::axis_nearest(px.v, h, wrap_v, row)) return false;
    if (!src.is_valid(row, col)) return false;
    for (int c = 0; c < nc; ++c) out[c] = src.at(row, col, c);
    return true;
  }

  int c0 = 0, c1 = 0, r0 = 0, r1 = 0;
  double fu = 0.0, fv = 0.0;
  if (!detail::axis_taps(px.u, w, wrap_u, c0, c1, fu) || !detail::axis_taps(px.v, h, wrap_v, r0, r1, fv))
    return false;
  if (src.has_mask()) {
    if (!src.is_valid(r0, c0)) return false;
    if (fu > 0.0 && !src.is_valid(r0, c1)) return false;
    if (fv > 0.0 && !src.is_valid(r1, c0)) return false;
    if (fu > 0.0 && fv > 0.0 && !src.is_valid(r1, c1)) return false;
  }
  for (int c = 0; c < nc; ++c) {
    // Zero-weight taps are never read, so invalid neighbors cannot leak NaN/inf.
    const double a = src.at(r0, c0, c);
    const double b = fu > 0.0 ? src.at(r0, c1, c) : a;
    const double d = fv > 0.0 ? src.at(r1, c0, c) : a;
    const double e = fv > 0.0 ? (fu > 0.0 ? src.at(r1, c1, c) : d) : b;
    const double top = a + fu * (b - a);
    const double bottom = d + fu * (e - d);
    out[c] = static_cast<float>(top + fv * (bottom - top));
  }
  return true;
}

/// Single-channel convenience over a scalar map.
template <typename Tag>
bool sample(const ScalarMap<Tag>& src, const PixelCoord& px, Interpolation interp, float& out) {
  const WrapAxis axis = wrap_axis(src.geometry.projection);
  const bool wrap_u = axis == WrapAxis::Horizontal;
  const bool wrap_v = axis == WrapAxis::Vertical;
  const int w = src.width();
  const int h = src.height();
  if (interp == Interpolation::Nearest) {
    int col = 0, row = 0;
    if (!detail::axis_nearest(px.u, w, wrap_u, col) || !detail::axis_nearest(px.v, h, wrap_v, row)) return false;
    if (!src.is_valid(row, col)) return false;
    out = src.at(row, col);
    return true;
  }
  int c0 = 0, c1 = 0, r0 = 0, r1 = 0;
  double fu = 0.0, fv = 0.0;
  if (!detail::axis_taps(px.u, w, wrap_u, c0, c1, fu) || !detail::axis_taps(px.v, h, wrap_v, r0, r1, fv))
    return false;
  if (!src.is_valid(r0, c0) || (fu > 0.0 && !src.is_valid(r0, c1)) || (fv > 0.0 && !src.is_valid(r1, c0)) ||
      (fu > 0.0 && fv > 0.0 && !src.is_valid(r1, c1)))
    return false;
  const double a = src.at(r0, c0);
  const double b = fu > 0.0 ? src.at(r0, c1) : a;
  const double d = fv > 0.0 ? src.at(r1, c0) : a;
  const double e = fv > 0.0 ? (fu > 0.0 ? src.at(r1, c1) : d) : b;
  const double top = a + fu * (b - a);
  const double bottom = d + fu * (e - d);
  out = static_cast<float>(top + fv * (bottom - top));
  return true;
}

}  // namespace omnistereo
