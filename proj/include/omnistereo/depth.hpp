#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <tuple>
#include <vector>

#include "omnistereo/disparity_math.hpp"
#include "omnistereo/error.hpp"
#include "omnistereo/geometry.hpp"
#include "omnistereo/parallel.hpp"
#include "omnistereo/raster.hpp"

namespace omnistereo {

/// Cassini geometry with the same angular resolution as a cylindrical map:
/// the 360 degree axis keeps its height and the 180 degree axis gets H / 2.
inline PanoramaGeometry matching_cassini_geometry(const PanoramaGeometry& cyl) {
  if (cyl.projection != Projection::Cylindrical) throw DomainError("matching_cassini_geometry: cylindrical input required");
  return {Projection::Cassini, std::max(1, cyl.height / 2), cyl.height};
}

namespace detail {

/// Bilinear disparity lookup that does not blend across depth edges: when the
/// taps in play differ by more than `continuity_ratio` (relative), the
/// nearest tap is used instead. Any invalid tap in play makes the sample invalid.
inline bool sample_disparity_edge_aware(const DisparityMap& disp, const PixelCoord& px, double continuity_ratio,
                                        float& out) {
  const WrapAxis axis = wrap_axis(disp.geometry.projection);
  int c0 = 0, c1 = 0, r0 = 0, r1 = 0;
  double fu = 0.0, fv = 0.0;
  if (!axis_taps(px.u, disp.width(), axis == WrapAxis::Horizontal, c0, c1, fu) ||
      !axis_taps(px.v, disp.height(), axis == WrapAxis::Vertical, r0, r1, fv))
    return false;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [r, c, w] : {std::tuple{r0, c0, (1 - fu) * (1 - fv)}, std::tuple{r0, c1, fu * (1 - fv)},
                                std::tuple{r1, c0, (1 - fu) * fv}, std::tuple{r1, c1, fu * fv}}) {
    if (w <= 0.0) continue;
    if (!disp.is_valid(r, c)) return false;
    lo = std::min(lo, static_cast<double>(disp.at(r, c)));
    hi = std::max(hi, static_cast<double>(disp.at(r, c)));
  }
  const bool blend = lo > 0.0 && hi <= lo * (1.0 + continuity_ratio);
  return sample(disp, px, blend ? Interpolation::Bilinear : Interpolation::Nearest, out);
}

}  // namespace detail

/// Cylindrical pixel disparity (rectified left frame) to Euclidean depth on a
/// Cassini grid of the same frame. Disparity is sampled bilinearly except
/// across depth edges (see sample_disparity_edge_aware), then
/// rho_cyl = B R / d is lifted along the Cassini ray. Rays outside the
/// cylinder's horizontal field of view stay invalid.
inline DepthMap cylindrical_disparity_to_cassini_depth(const DisparityMap& disp, double baseline,
                                                       const PanoramaGeometry& out_geom, int workers = 1,
                                                       double continuity_ratio = 0.1) {
  disp.check();
  if (disp.geometry.projection != Projection::Cylindrical)
    throw DomainError("cylindrical_disparity_to_cassini_depth: input must be cylindrical");
  if (out_geom.projection != Projection::Cassini)
    throw DomainError("cylindrical_disparity_to_cassini_depth: output must be Cassini");
  if (!(baseline > 0.0)) throw DomainError("cylindrical_disparity_to_cassini_depth: baseline must be positive");

  DepthMap out = DepthMap::invalid(out_geom);
  parallel_for_rows(out_geom.height, workers, [&](int r0, int r1) {
    for (int row = r0; row < r1; ++row) {
      for (int col = 0; col < out_geom.width; ++col) {
        const CartesianPoint ray = unproject_pixel({double(col), double(row)}, out_geom);
        const auto px = try_project(ray, disp.geometry);
        float d = 0.0f;
        if (!px || !detail::sample_disparity_edge_aware(disp, *px, continuity_ratio, d)) continue;
        const auto rho_cyl = depth_from_disparity_cylindrical(d, baseline, disp.geometry);
        if (!rho_cyl) continue;
        const double rho = euclidean_from_cylindrical(*rho_cyl, ray);
        if (!(rho > 0.0) || !std::isfinite(rho)) continue;
        out.set(row, col, static_cast<float>(rho));
      }
    }
  });
  return out;
}

/// Bilinear transfer of a cylindrical confidence map onto a Cassini grid, clamped to [0, 1].
inline ConfidenceMap confidence_to_cassini(const ConfidenceMap& conf, const PanoramaGeometry& out_geom,
                                           int workers = 1) {
  conf.check();
  ConfidenceMap out = ConfidenceMap::invalid(out_geom);
  parallel_for_rows(out_geom.height, workers, [&](int r0, int r1) {
    for (int row = r0; row < r1; ++row) {
      for (int col = 0; col < out_geom.width; ++col) {
        const auto px = try_project(unproject_pixel({double(col), double(row)}, out_geom), conf.geometry);
        float c = 0.0f;
        if (!px || !sample(conf, *px, Interpolation::Bilinear, c)) continue;
        out.set(row, col, std::clamp(c, 0.0f, 1.0f));
      }
    }
  });
  return out;
}

/// Cassini angular disparity (rectified left frame, right camera at -x) to
/// Euclidean depth, per pixel.
inline DepthMap angular_disparity_to_depth(const DisparityMap& disp, double baseline, int workers = 1) {
  disp.check();
  if (disp.geometry.projection != Projection::Cassini)
    throw DomainError("angular_disparity_to_depth: input must be Cassini");
  DepthMap out = DepthMap::invalid(disp.geometry);
  const int w = disp.width();
  parallel_for_rows(disp.height(), workers, [&](int r0, int r1) {
    for (int row = r0; row < r1; ++row) {
      for (int col = 0; col < w; ++col) {
        if (!disp.is_valid(row, col)) continue;
        const double phi = col * kPi / w - kPi / 2;
        const auto rho = rectified_spherical_depth(phi, disp.at(row, col), baseline);
        if (rho) out.set(row, col, static_cast<float>(*rho));
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Forward warping into the reference view

struct AlignOptions {
  /// Neighboring source pixels whose depths differ by less than this ratio
  /// are treated as one surface and rasterized as triangles; larger jumps are
  /// left open so occlusions stay holes. Zero disables triangle splatting.
  double continuity_ratio = 0.1;
  /// Triangles whose footprint exceeds this many pixels along an axis are
  /// skipped. They only occur where a cell straddles a pole of the target.
  int max_triangle_extent = 64;
  int workers = 1;
};

struct AlignedDepth {
  DepthMap depth;
  ConfidenceMap confidence;  // all invalid when no confidence was supplied
};

namespace detail {

struct ZSample {
  float depth = std::numeric_limits<float>::infinity();
  float confidence = 0.0f;
  std::uint64_t key = std::numeric_limits<std::uint64_t>::max();

  /// Nearest surface wins; equal depths fall back to the smaller source key so
  /// the result never depends on splat order.
  bool offer(float d, float c, std::uint64_t k) {
    if (d < depth || (d == depth && k < key)) {
      depth = d;
      confidence = c;
      key = k;
      return true;
    }
    return false;
  }
};

struct WarpedVertex {
  double u = 0.0, v = 0.0;
  double depth = 0.0;
  double confidence = 0.0;
};

/// Moves b and c onto the same branch of the wrapping vertical axis as a.
inline void unwrap_vertices(const PanoramaGeometry& g, const WarpedVertex& a, WarpedVertex& b, WarpedVertex& c) {
  const double h = g.height;
  b.v += h * std::round((a.v - b.v) / h);
  c.v += h * std::round((a.v - c.v) / h);
}

inline bool triangle_fits(const PanoramaGeometry& g, WarpedVertex a, WarpedVertex b, WarpedVertex c, int max_extent) {
  unwrap_vertices(g, a, b, c);
  return std::max({a.u, b.u, c.u}) - std::min({a.u, b.u, c.u}) <= max_extent &&
         std::max({a.v, b.v, c.v}) - std::min({a.v, b.v, c.v}) <= max_extent;
}

inline void raster_triangle(std::vector<ZSample>& zbuf, const PanoramaGeometry& g, WarpedVertex a, WarpedVertex b,
                            WarpedVertex c, std::uint64_t key) {
  unwrap_vertices(g, a, b, c);
  const double umin = std::min({a.u, b.u, c.u}), umax = std::max({a.u, b.u, c.u});
  const double vmin = std::min({a.v, b.v, c.v}), vmax = std::max({a.v, b.v, c.v});
  const double area = (b.u - a.u) * (c.v - a.v) - (c.u - a.u) * (b.v - a.v);
  if (std::abs(area) < 1e-12) return;
  const double inv_area = 1.0 / area;
  const int c0 = std::max(0, static_cast<int>(std::ceil(umin)));
  const int c1 = std::min(g.width - 1, static_cast<int>(std::floor(umax)));
  const auto r0 = static_cast<long long>(std::ceil(vmin));
  const auto r1 = static_cast<long long>(std::floor(vmax));
  constexpr double eps = -1e-9;
  for (long long r = r0; r <= r1; ++r) {
    for (int col = c0; col <= c1; ++col) {
      const double pu = col, pv = static_cast<double>(r);
      const double wa = ((b.u - pu) * (c.v - pv) - (c.u - pu) * (b.v - pv)) * inv_area;
      const double wb = ((c.u - pu) * (a.v - pv) - (a.u - pu) * (c.v - pv)) * inv_area;
      const double wc = 1.0 - wa - wb;
      if (wa < eps || wb < eps || wc < eps) continue;
      const double d = wa * a.depth + wb * b.depth + wc * c.depth;
      const double cf = wa * a.confidence + wb * b.confidence + wc * c.confidence;
      const int row = wrap_index(r, g.height);
      zbuf[static_cast<std::size_t>(row) * g.width + col].offer(static_cast<float>(d), static_cast<float>(cf), key);
    }
  }
}

}  // namespace detail

/// Forward-warps a Cassini depth map (and optional confidence) from the
/// `src_pose` frame into the `ref_pose` frame. Depth-continuous 2x2 cells are
/// rasterized as triangles so magnified surfaces stay closed; valid pixels on
/// no such cell are splatted to their nearest target pixel. The nearest
/// surface wins per target pixel. Target pixels nothing lands on stay invalid.
inline AlignedDepth align_depth_to_reference(const DepthMap& src, const Pose& src_pose, const Pose& ref_pose,
                                             const ConfidenceMap* src_conf = nullptr,
                                             const AlignOptions& opts = {}) {
  src.check();
  if (src.geometry.projection != Projection::Cassini)
    throw DomainError("align_depth_to_reference: depth must be Cassini");
  if (src_conf != nullptr) check_same_geometry(src, *src_conf, "align_depth_to_reference");
  check_pose(src_pose);
  check_pose(ref_pose);

  const PanoramaGeometry& g = src.geometry;
  const Pose to_ref = compose_pose(invert_pose(ref_pose), src_pose);
  const int w = g.width;
  const int h = g.height;
  const std::size_t n = src.size();

  // Warp every valid source pixel once.
  std::vector<detail::WarpedVertex> warped(n);
  std::vector<std::uint8_t> ok(n, 0);
  parallel_for_rows(h, opts.workers, [&](int r0, int r1) {
    for (int row = r0; row < r1; ++row) {
      for (int col = 0; col < w; ++col) {
        const std::size_t i = src.index(row, col);
        if (!src.valid[i]) continue;
        const double rho = src.values[i];
        if (!(rho > 0.0)) continue;
        const CartesianPoint p = transform_point(to_ref, rho * unproject_pixel({double(col), double(row)}, g));
        const auto px = try_project(p, g);
        if (!px) continue;
        const double conf = src_conf != nullptr && src_conf->valid[i] ? src_conf->values[i] : 0.0;
        warped[i] = {px->u, px->v, p.norm(), conf};
        ok[i] = 1;
      }
    }
  });

  // A 2x2 cell whose corners all warped and lie on one surface is rasterized
  // as two triangles. Pixels on such a cell are covered exactly by them;
  // only pixels on no cell are splatted to their nearest target pixel.
  std::vector<std::uint8_t> cell(n, 0);
  if (opts.continuity_ratio > 0.0) {
    parallel_for_rows(h, opts.workers, [&](int r0, int r1) {
      for (int row = r0; row < r1; ++row) {
        const int row_d = (row + 1) % h;
        for (int col = 0; col + 1 < w; ++col) {
          const std::size_t i = src.index(row, col), i_r = src.index(row, col + 1);
          const std::size_t i_d = src.index(row_d, col), i_dr = src.index(row_d, col + 1);
          if (!ok[i] || !ok[i_r] || !ok[i_d] || !ok[i_dr]) continue;
          const double d_lo = std::min({src.values[i], src.values[i_r], src.values[i_d], src.values[i_dr]});
          const double d_hi = std::max({src.values[i], src.values[i_r], src.values[i_d], src.values[i_dr]});
          if (d_hi > d_lo * (1.0 + opts.continuity_ratio)) continue;
          if (!detail::triangle_fits(g, warped[i], warped[i_r], warped[i_d], opts.max_triangle_extent) ||
              !detail::triangle_fits(g, warped[i_r], warped[i_dr], warped[i_d], opts.max_triangle_extent))
            continue;
          cell[i] = 1;
        }
      }
    });
  }
  auto on_cell = [&](int row, int col) {
    const int row_u = (row + h - 1) % h;
    return cell[src.index(row, col)] || cell[src.index(row_u, col)] ||
           (col > 0 && (cell[src.index(row, col - 1)] || cell[src.index(row_u, col - 1)]));
  };

  std::vector<std::vector<detail::ZSample>> zbufs(static_cast<std::size_t>(chunk_count(h, opts.workers)));
  parallel_for_chunks(h, opts.workers, [&](int chunk, int r0, int r1) {
    auto& zbuf = zbufs[static_cast<std::size_t>(chunk)];
    zbuf.assign(n, detail::ZSample{});
    for (int row = r0; row < r1; ++row) {
      for (int col = 0; col < w; ++col) {
        const std::size_t i = src.index(row, col);
        if (!ok[i]) continue;
        const auto& s = warped[i];
        if (cell[i]) {
          const int row_d = (row + 1) % h;
          const std::size_t i_r = src.index(row, col + 1), i_d = src.index(row_d, col), i_dr = src.index(row_d, col + 1);
          detail::raster_triangle(zbuf, g, s, warped[i_r], warped[i_d], 4 * i + 1);
          detail::raster_triangle(zbuf, g, warped[i_r], warped[i_dr], warped[i_d], 4 * i + 2);
        }
        if (on_cell(row, col)) continue;
        int tc = 0, tr = 0;
        if (detail::axis_nearest(s.u, w, false, tc) && detail::axis_nearest(s.v, h, true, tr))
          zbuf[static_cast<std::size_t>(tr) * w + tc].offer(static_cast<float>(s.depth),
                                                            static_cast<float>(s.confidence), 4 * i);
      }
    }
  });

  AlignedDepth out{DepthMap::invalid(g), ConfidenceMap::invalid(g)};
  for (std::size_t i = 0; i < n; ++i) {
    detail::ZSample best;
    for (const auto& zbuf : zbufs) {
      if (zbuf.empty()) continue;
      best.offer(zbuf[i].depth, zbuf[i].confidence, zbuf[i].key);
    }
    if (!std::isfinite(best.depth)) continue;
    out.depth.values[i] = best.depth;
    out.depth.valid[i] = 1;
    if (src_conf != nullptr) {
      out.confidence.values[i] = std::clamp(best.confidence, 0.0f, 1.0f);
      out.confidence.valid[i] = 1;
    }
  }
  return out;
}

}  // namespace omnistereo
