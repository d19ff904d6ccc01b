#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "omnistereo/error.hpp"
#include "omnistereo/geometry.hpp"
#include "omnistereo/raster.hpp"

namespace omnistereo {

/// All unordered camera index pairs (i < j) in lexicographic order; m (m - 1) / 2 of them.
inline std::vector<std::pair<int, int>> enumerate_pairs(int m) {
  if (m < 2) throw DomainError("enumerate_pairs: need at least two cameras, got " + std::to_string(m));
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(m) * (m - 1) / 2);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) pairs.emplace_back(i, j);
  return pairs;
}

/// One aligned view entering the fusion.
struct FusionInput {
  const DepthMap* depth = nullptr;
  const ConfidenceMap* confidence = nullptr;
};

struct FusedDepth {
  DepthMap depth;
  ConfidenceMap confidence;  // normalized total confidence, i.e. mean over contributing views
};

/// Confidence-weighted mean of the valid depths per pixel. A pixel whose
/// contributing confidences are all zero falls back to the plain mean; a
/// pixel no view covers stays invalid.
inline FusedDepth fuse_depths(std::span<const FusionInput> views) {
  if (views.empty()) throw DomainError("fuse_depths: no views");
  const PanoramaGeometry g = views.front().depth->geometry;
  for (const auto& v : views) {
    if (v.depth == nullptr || v.confidence == nullptr) throw DomainError("fuse_depths: missing map");
    v.depth->check();
    v.confidence->check();
    if (!(v.depth->geometry == g) || !(v.confidence->geometry == g)) throw DomainError("fuse_depths: geometry mismatch");
  }
  FusedDepth out{DepthMap::invalid(g), ConfidenceMap::invalid(g)};
  const std::size_t n = out.depth.size();
  for (std::size_t i = 0; i < n; ++i) {
    double weighted = 0.0, weights = 0.0, plain = 0.0;
    int count = 0;
    for (const auto& v : views) {
      if (!v.depth->valid[i]) continue;
      const double d = v.depth->values[i];
      const double c = v.confidence->valid[i] ? std::clamp(static_cast<double>(v.confidence->values[i]), 0.0, 1.0) : 0.0;
      weighted += c * d;
      weights += c;
      plain += d;
      ++count;
    }
    if (count == 0) continue;
    out.depth.values[i] = static_cast<float>(weights > 0.0 ? weighted / weights : plain / count);
    out.depth.valid[i] = 1;
    out.confidence.values[i] = static_cast<float>(weights / count);
    out.confidence.valid[i] = 1;
  }
  return out;
}

inline FusedDepth fuse_depths(const std::vector<std::pair<DepthMap, ConfidenceMap>>& views) {
  std::vector<FusionInput> in;
  in.reserve(views.size());
  for (const auto& [d, c] : views) in.push_back({&d, &c});
  return fuse_depths(std::span<const FusionInput>(in));
}

// ---------------------------------------------------------------------------
// Metrics

enum class MetricKind { Disparity, Depth };

/// Error statistics over the evaluated pixels. Percentages are in [0, 100].
struct MetricReport {
  MetricKind kind = MetricKind::Disparity;
  std::size_t count = 0;     // evaluated pixels
  std::size_t excluded = 0;  // masked-in pixels dropped for non-positive depth
  double mae = 0.0;
  double rmse = 0.0;
  // disparity
  double px1 = 0.0, px3 = 0.0, px5 = 0.0, d1 = 0.0;
  // depth
  double abs_rel = 0.0, sq_rel = 0.0, silog = 0.0;
  double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0;

  /// Stable-ordered key/value view for printing.
  std::vector<std::pair<std::string, double>> entries() const {
    std::vector<std::pair<std::string, double>> e{{"count", static_cast<double>(count)}, {"mae", mae}, {"rmse", rmse}};
    if (kind == MetricKind::Disparity) {
      e.insert(e.end(), {{"px1", px1}, {"px3", px3}, {"px5", px5}, {"d1", d1}});
    } else {
      e.insert(e.end(), {{"excluded", static_cast<double>(excluded)},
                         {"abs_rel", abs_rel},
                         {"sq_rel", sq_rel},
                         {"silog", silog},
                         {"delta1", delta1},
                         {"delta2", delta2},
                         {"delta3", delta3}});
    }
    return e;
  }
};

namespace detail {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

template <typename A, typename B>
std::vector<std::size_t> evaluated_pixels(const A& pred, const B& gt, const std::vector<std::uint8_t>* mask) {
  pred.check();
  gt.check();
  check_same_geometry(pred, gt, "metrics");
  if (mask != nullptr && mask->size() != pred.size()) throw DomainError("metrics: mask size mismatch");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred.valid[i] && gt.valid[i] && (mask == nullptr || (*mask)[i])) idx.push_back(i);
  return idx;
}

inline double percent(std::size_t k, std::size_t n) { return 100.0 * static_cast<double>(k) / static_cast<double>(n); }

}  // namespace detail

/// MAE, RMSE, Px1/3/5 (share of errors > 1, 3, 5 px) and D1 (error > 3 px and
/// > 5% of ground truth). Throws DomainError when nothing is evaluated.
inline MetricReport disparity_metrics(const DisparityMap& pred, const DisparityMap& gt,
                                      const std::vector<std::uint8_t>* mask = nullptr) {
  const auto idx = detail::evaluated_pixels(pred, gt, mask);
  if (idx.empty()) throw DomainError("disparity_metrics: empty evaluation set");
  MetricReport r;
  r.kind = MetricKind::Disparity;
  r.count = idx.size();
  detail::CompensatedSum abs_sum, sq_sum;
  std::size_t o1 = 0, o3 = 0, o5 = 0, od1 = 0;
  for (const auto i : idx) {
    const double g = gt.values[i];
    const double err = std::abs(static_cast<double>(pred.values[i]) - g);
    abs_sum.add(err);
    sq_sum.add(err * err);
    o1 += err > 1.0;
    o3 += err > 3.0;
    o5 += err > 5.0;
    od1 += err > 3.0 && err > 0.05 * g;
  }
  const auto n = static_cast<double>(r.count);
  r.mae = abs_sum.value() / n;
  r.rmse = std::sqrt(sq_sum.value() / n);
  r.px1 = detail::percent(o1, r.count);
  r.px3 = detail::percent(o3, r.count);
  r.px5 = detail::percent(o5, r.count);
  r.d1 = detail::percent(od1, r.count);
  return r;
}

/// MAE, RMSE, AbsRel, SqRel, SILog (variance of log residuals) and the
/// delta_k accuracies (max ratio < 1.25^k). Pixels with a non-positive
/// prediction or ground truth are excluded and counted.
inline MetricReport depth_metrics(const DepthMap& pred, const DepthMap& gt,
                                  const std::vector<std::uint8_t>* mask = nullptr) {
  const auto candidates = detail::evaluated_pixels(pred, gt, mask);
  std::vector<std::size_t> idx;
  idx.reserve(candidates.size());
  for (const auto i : candidates)
    if (pred.values[i] > 0.0f && gt.values[i] > 0.0f && std::isfinite(pred.values[i]) && std::isfinite(gt.values[i]))
      idx.push_back(i);
  MetricReport r;
  r.kind = MetricKind::Depth;
  r.excluded = candidates.size() - idx.size();
  if (idx.empty()) throw DomainError("depth_metrics: empty evaluation set");
  r.count = idx.size();

  detail::CompensatedSum abs_sum, sq_sum, abs_rel, sq_rel, log_sum;
  std::size_t a1 = 0, a2 = 0, a3 = 0;
  constexpr double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  for (const auto i : idx) {
    const double p = pred.values[i];
    const double g = gt.values[i];
    const double err = p - g;
    abs_sum.add(std::abs(err));
    sq_sum.add(err * err);
    abs_rel.add(std::abs(err) / g);
    sq_rel.add(err * err / g);
    log_sum.add(std::log(p) - std::log(g));
    const double ratio = std::max(p / g, g / p);
    a1 += ratio < t1;
    a2 += ratio < t2;
    a3 += ratio < t3;
  }
  const auto n = static_cast<double>(r.count);
  const double log_mean = log_sum.value() / n;
  detail::CompensatedSum log_var;
  for (const auto i : idx) {
    const double e = std::log(static_cast<double>(pred.values[i])) - std::log(static_cast<double>(gt.values[i])) - log_mean;
    log_var.add(e * e);
  }
  r.mae = abs_sum.value() / n;
  r.rmse = std::sqrt(sq_sum.value() / n);
  r.abs_rel = abs_rel.value() / n;
  r.sq_rel = sq_rel.value() / n;
  r.silog = std::max(0.0, log_var.value() / n);
  r.delta1 = detail::percent(a1, r.count);
  r.delta2 = detail::percent(a2, r.count);
  r.delta3 = detail::percent(a3, r.count);
  return r;
}

/// Mask of Cassini columns whose angle from the image center is within fov / 2.
inline std::vector<std::uint8_t> central_band_mask(const PanoramaGeometry& g, double fov) {
  if (g.projection != Projection::Cassini) throw DomainError("central_band_mask: Cassini geometry required");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(g.width) * g.height, 0);
  for (int col = 0; col < g.width; ++col) {
    const double phi = col * kPi / g.width - kPi / 2;
    if (std::abs(phi) > fov / 2) continue;
    for (int row = 0; row < g.height; ++row) mask[static_cast<std::size_t>(row) * g.width + col] = 1;
  }
  return mask;
}

}  // namespace omnistereo
