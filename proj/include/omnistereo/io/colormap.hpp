#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>

#include "omnistereo/error.hpp"
#include "omnistereo/io/png.hpp"
#include "omnistereo/raster.hpp"

namespace omnistereo::io {

enum class Colormap { Turbo, Gray };

inline std::optional<Colormap> colormap_from_string(std::string_view s) {
  if (s == "turbo") return Colormap::Turbo;
  if (s == "gray" || s == "grey") return Colormap::Gray;
  return std::nullopt;
}

/// Polynomial fit of the Turbo colormap, t in [0, 1].
inline std::array<double, 3> turbo(double t) {
  const double x = std::clamp(t, 0.0, 1.0);
  const double r = 0.13572138 + x * (4.61539260 + x * (-42.66032258 + x * (132.13108234 + x * (-152.94239396 + x * 59.28637943))));
  const double g = 0.09140261 + x * (2.19418839 + x * (4.84296658 + x * (-14.18503333 + x * (4.27729857 + x * 2.82956604))));
  const double b = 0.10667330 + x * (12.64194608 + x * (-60.58204836 + x * (110.36276771 + x * (-89.90310912 + x * 27.34824973))));
  return {std::clamp(r, 0.0, 1.0), std::clamp(g, 0.0, 1.0), std::clamp(b, 0.0, 1.0)};
}

/// Range of the valid, finite values of a single-channel panorama.
inline std::pair<double, double> value_range(const Panorama& p) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < p.pixel_count(); ++i) {
    if (!p.valid.empty() && !p.valid[i]) continue;
    const double v = p.data[i * p.channels];
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (!(hi > lo)) hi = lo + 1.0;
  return {lo, hi};
}

/// 8-bit RGB rendering of the first channel over [lo, hi]; invalid pixels are black.
inline PngImage colorize(const Panorama& p, Colormap cmap, double lo, double hi) {
  p.check();
  if (!(hi > lo)) throw DomainError("viz: max must exceed min");
  PngImage img;
  img.width = p.width();
  img.height = p.height();
  img.channels = 3;
  img.bit_depth = 8;
  img.range_min = lo;
  img.range_max = hi;
  img.samples.assign(p.pixel_count() * 3, 0);
  for (std::size_t i = 0; i < p.pixel_count(); ++i) {
    const double v = p.data[i * p.channels];
    if ((!p.valid.empty() && !p.valid[i]) || !std::isfinite(v)) continue;
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    const std::array<double, 3> rgb = cmap == Colormap::Turbo ? turbo(t) : std::array<double, 3>{t, t, t};
    for (int c = 0; c < 3; ++c) img.samples[i * 3 + c] = static_cast<std::uint16_t>(std::lround(rgb[c] * 255.0));
  }
  return img;
}

}  // namespace omnistereo::io
