#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "omnistereo/depth.hpp"
#include "omnistereo/error.hpp"
#include "omnistereo/fusion_eval.hpp"
#include "omnistereo/geometry.hpp"
#include "omnistereo/raster.hpp"
#include "omnistereo/resample.hpp"
#include "omnistereo/stereo_match.hpp"

namespace omnistereo {

/// Camera poses (camera to world) and the index of the reference camera
/// whose frame the fused depth is expressed in.
struct Rig {
  std::vector<Pose> cameras;
  int reference = 0;

  void check() const {
    if (cameras.size() < 3)
      throw DomainError("pipeline: at least three cameras are required, got " + std::to_string(cameras.size()));
    if (reference < 0 || reference >= static_cast<int>(cameras.size()))
      throw DomainError("pipeline: reference camera index out of range");
    for (const auto& p : cameras) check_pose(p);
  }
};

struct HoleFillOptions {
  int radius = 2;            // square neighborhood half-size
  int min_neighbors = 6;     // valid neighbors required to fill
  double max_spread = 0.2;   // neighbors must satisfy max <= (1 + spread) min
  int iterations = 16;
};

/// Matching settings tuned for 256 x 512 rectified cylinders.
inline MatchParams default_pipeline_match() {
  MatchParams m;
  m.max_disparity = 128;
  m.cost = {CostKind::Census, 9};
  m.temperature = 0.25;
  m.consistency_tolerance = 2.0;
  return m;
}

struct PipelineParams {
  /// Rectified cylindrical geometry every pair is matched in.
  PanoramaGeometry cylinder{Projection::Cylindrical, 256, 512};
  MatchParams match = default_pipeline_match();
  AlignOptions align{};
  Interpolation rectify_interpolation = Interpolation::Bilinear;
  /// Matches below this disparity (px) or confidence are dropped before conversion.
  double min_disparity = 2.0;
  double min_confidence = 0.0;
  /// Disparity regions smaller than speckle_size pixels (neighbors within
  /// speckle_range px) are dropped; 0 disables the filter.
  int speckle_size = 100;
  double speckle_range = 1.0;
  /// When set, views whose aligned depth differs from the per-pixel weighted
  /// median by more than this relative amount are left out of the fusion.
  std::optional<double> consensus_tolerance = 0.1;
  /// When set, small holes in the fused map whose neighbors agree are filled.
  std::optional<HoleFillOptions> hole_fill = HoleFillOptions{};
  /// When set, the fused depth is also resampled to this ERP geometry.
  std::optional<PanoramaGeometry> erp_output;
  int workers = 1;
};

struct PairRecord {
  int left = 0;
  int right = 0;
  double baseline = 0.0;
  std::size_t matched_pixels = 0;  // valid disparities
  std::size_t aligned_pixels = 0;  // valid depths after warping to the reference
};

struct PipelineResult {
  PanoramaGeometry reference_geometry;  // Cassini, reference camera frame
  DepthMap depth;
  ConfidenceMap confidence;
  std::optional<DepthMap> erp_depth;
  std::optional<MetricReport> metrics;
  std::vector<PairRecord> pairs;
};

/// Resamples a depth map to another projection around the same center.
inline DepthMap reproject_depth_map(const DepthMap& depth, const PanoramaGeometry& out_geom, int workers = 1) {
  const Panorama p = reproject_panorama(to_panorama(depth), out_geom, Mat3::Identity(), Interpolation::Nearest, workers);
  return from_panorama<DepthMap>(p);
}

/// Invalidates, per pixel, the views whose depth lies more than `tolerance`
/// (relative) away from the confidence-weighted median of all valid views.
/// Ties in the median go to the lower depth.
inline void reject_inconsistent_views(std::vector<std::pair<DepthMap, ConfidenceMap>>& views, double tolerance) {
  if (views.empty()) return;
  if (!(tolerance >= 0.0)) throw DomainError("consensus tolerance must be non-negative");
  const std::size_t n = views.front().first.size();
  std::vector<std::pair<float, double>> samples;  // depth, weight
  for (std::size_t i = 0; i < n; ++i) {
    samples.clear();
    double total = 0.0;
    for (const auto& [d, c] : views) {
      if (!d.valid[i]) continue;
      const double w = c.valid[i] ? std::max(0.0, static_cast<double>(c.values[i])) : 0.0;
      samples.emplace_back(d.values[i], w);
      total += w;
    }
    if (samples.size() < 2) continue;
    std::sort(samples.begin(), samples.end());
    double median = samples.front().first;
    if (total > 0.0) {
      double acc = 0.0;
      for (const auto& [d, w] : samples) {
        acc += w;
        median = d;
        if (acc >= 0.5 * total) break;
      }
    } else {
      median = samples[(samples.size() - 1) / 2].first;
    }
    for (auto& [d, c] : views)
      if (d.valid[i] && std::abs(d.values[i] - median) > tolerance * median) {
        d.valid[i] = 0;
        c.valid[i] = 0;
      }
  }
}

/// Fills invalid pixels from the median of their valid neighbors when enough
/// neighbors exist and they lie on one smooth surface. Large holes and holes
/// on depth edges stay open. Filled pixels get the mean neighbor confidence.
/// Returns the number of filled pixels.
inline std::size_t fill_small_holes(DepthMap& depth, ConfidenceMap& confidence, const HoleFillOptions& opt) {
  check_same_geometry(depth, confidence, "fill_small_holes");
  if (opt.radius < 1 || opt.min_neighbors < 1 || !(opt.max_spread >= 0.0) || opt.iterations < 0)
    throw DomainError("fill_small_holes: invalid options");
  const int h = depth.height();
  const int w = depth.width();
  const bool wrap_rows = wrap_axis(depth.geometry.projection) == WrapAxis::Vertical;
  const bool wrap_cols = wrap_axis(depth.geometry.projection) == WrapAxis::Horizontal;
  std::size_t filled = 0;
  std::vector<float> vals;
  for (int it = 0; it < opt.iterations; ++it) {
    const DepthMap src = depth;
    const ConfidenceMap src_conf = confidence;
    std::size_t pass = 0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        if (src.is_valid(i, j)) continue;
        vals.clear();
        double conf = 0.0;
        for (int di = -opt.radius; di <= opt.radius; ++di)
          for (int dj = -opt.radius; dj <= opt.radius; ++dj) {
            int r = i + di;
            int c = j + dj;
            if (wrap_rows) r = wrap_index(r, h);
            if (wrap_cols) c = wrap_index(c, w);
            if (r < 0 || r >= h || c < 0 || c >= w || !src.is_valid(r, c)) continue;
            vals.push_back(src.at(r, c));
            conf += src_conf.is_valid(r, c) ? src_conf.at(r, c) : 0.0;
          }
        if (static_cast<int>(vals.size()) < opt.min_neighbors) continue;
        const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
        if (!(*lo > 0.0f) || *hi > *lo * (1.0 + opt.max_spread)) continue;
        auto mid = vals.begin() + static_cast<std::ptrdiff_t>((vals.size() - 1) / 2);
        std::nth_element(vals.begin(), mid, vals.end());
        depth.set(i, j, *mid);
        confidence.set(i, j, static_cast<float>(conf / static_cast<double>(vals.size())));
        ++pass;
      }
    filled += pass;
    if (pass == 0) break;
  }
  return filled;
}

/// Rectify every camera pair, match, convert to Cassini depth, warp into the
/// reference camera frame and fuse. Pairs run one after another; each stage
/// splits its rows over `params.workers` threads. With `gt` (Cassini depth
/// in the reference frame) the result carries depth metrics over `gt_mask`.
inline PipelineResult run_pipeline(const Rig& rig, const std::vector<Panorama>& panoramas,
                                   const PipelineParams& params, const DepthMap* gt = nullptr,
                                   const std::vector<std::uint8_t>* gt_mask = nullptr) {
  rig.check();
  if (panoramas.size() != rig.cameras.size())
    throw DomainError("pipeline: " + std::to_string(rig.cameras.size()) + " cameras but " +
                      std::to_string(panoramas.size()) + " panoramas");
  if (params.cylinder.projection != Projection::Cylindrical)
    throw DomainError("pipeline: matching geometry must be cylindrical");

  MatchParams match = params.match;
  match.workers = params.workers;
  AlignOptions align = params.align;
  align.workers = params.workers;

  PipelineResult result;
  result.reference_geometry = matching_cassini_geometry(params.cylinder);
  const Pose& ref_pose = rig.cameras[static_cast<std::size_t>(rig.reference)];

  std::vector<std::pair<DepthMap, ConfidenceMap>> aligned;
  for (const auto& [i, j] : enumerate_pairs(static_cast<int>(rig.cameras.size()))) {
    const auto pair_name = "pair (" + std::to_string(i) + ", " + std::to_string(j) + ")";
    try {
      const auto& pl = panoramas[static_cast<std::size_t>(i)];
      const auto& pr = panoramas[static_cast<std::size_t>(j)];
      if (pl.data.empty() || pr.data.empty()) throw DomainError("missing panorama");
      const RectifiedPair pair = rectify_pair(rig.cameras[static_cast<std::size_t>(i)],
                                              rig.cameras[static_cast<std::size_t>(j)], pl, pr, params.cylinder,
                                              params.rectify_interpolation, params.workers);
      MatchResult m = match_pair(pair, match);
      for (std::size_t k = 0; k < m.disparity.size(); ++k) {
        if (!m.disparity.valid[k]) continue;
        if (m.disparity.values[k] < params.min_disparity || m.confidence.values[k] < params.min_confidence) {
          m.disparity.valid[k] = 0;
          m.confidence.valid[k] = 0;
        }
      }
      if (params.speckle_size > 0) filter_speckles(m.disparity, params.speckle_size, params.speckle_range);
      for (std::size_t k = 0; k < m.disparity.size(); ++k)
        if (!m.disparity.valid[k]) m.confidence.valid[k] = 0;
      const DepthMap depth =
          cylindrical_disparity_to_cassini_depth(m.disparity, pair.baseline, result.reference_geometry, params.workers);
      const ConfidenceMap conf = confidence_to_cassini(m.confidence, result.reference_geometry, params.workers);
      AlignedDepth a = align_depth_to_reference(depth, pair.pose_left, ref_pose, &conf, align);
      result.pairs.push_back({i, j, pair.baseline, m.disparity.valid_count(), a.depth.valid_count()});
      aligned.emplace_back(std::move(a.depth), std::move(a.confidence));
    } catch (const FormatError&) {
      throw;
    } catch (const DomainError& e) {
      throw DomainError("pipeline: " + pair_name + ": " + e.what());
    } catch (const Error& e) {
      throw Error("pipeline: " + pair_name + ": " + e.what());
    }
  }

  if (params.consensus_tolerance) reject_inconsistent_views(aligned, *params.consensus_tolerance);
  FusedDepth fused = fuse_depths(aligned);
  result.depth = std::move(fused.depth);
  result.confidence = std::move(fused.confidence);
  if (params.hole_fill) fill_small_holes(result.depth, result.confidence, *params.hole_fill);
  if (params.erp_output) result.erp_depth = reproject_depth_map(result.depth, *params.erp_output, params.workers);
  if (gt != nullptr) result.metrics = depth_metrics(result.depth, *gt, gt_mask);
  return result;
}

}  // namespace omnistereo
