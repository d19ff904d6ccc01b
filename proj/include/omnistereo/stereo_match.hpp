#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "omnistereo/circular_attention.hpp"
#include "omnistereo/error.hpp"
#include "omnistereo/parallel.hpp"
#include "omnistereo/raster.hpp"
#include "omnistereo/resample.hpp"

namespace omnistereo {

/// Matching costs, H x W x D, lower is better. Hypotheses whose right-image
/// position falls off the image carry kSentinelCost.
struct CostVolume {
  static constexpr float kSentinelCost = 1.0e6f;

  PanoramaGeometry geometry;
  int max_disparity = 0;
  std::vector<float> costs;

  std::size_t index(int row, int col, int d) const {
    return (static_cast<std::size_t>(row) * geometry.width + col) * max_disparity + d;
  }
  float at(int row, int col, int d) const { return costs[index(row, col, d)]; }
  float& at(int row, int col, int d) { return costs[index(row, col, d)]; }
};

/// Per-pixel distribution over disparity hypotheses.
struct ProbabilityVolume {
  PanoramaGeometry geometry;
  int max_disparity = 0;
  std::vector<float> probs;

  std::size_t index(int row, int col, int d) const {
    return (static_cast<std::size_t>(row) * geometry.width + col) * max_disparity + d;
  }
  float at(int row, int col, int d) const { return probs[index(row, col, d)]; }
  const float* pixel(int row, int col) const { return probs.data() + index(row, col, 0); }
};

enum class CostKind { Census, SAD };

struct CostSpec {
  CostKind kind = CostKind::Census;
  int window = 7;
};

/// Disparity search range used for the two reference resolutions (H x W
/// 1024 x 512 and 512 x 256); other sizes scale the first with the height.
inline int default_max_disparity(const PanoramaGeometry& g) {
  if (g.height == 1024 && g.width == 512) return 272;
  if (g.height == 512 && g.width == 256) return 256;
  const int scaled = static_cast<int>(std::lround(272.0 * g.height / 1024.0));
  return std::clamp(scaled, 2, g.width);
}

namespace detail {

/// Mean over channels, one float per pixel.
inline std::vector<float> grayscale(const Panorama& p) {
  p.check();
  std::vector<float> g(p.pixel_count());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0.0;
    for (int c = 0; c < p.channels; ++c) s += p.data[i * p.channels + c];
    g[i] = static_cast<float>(s / p.channels);
  }
  return g;
}

using CensusCode = std::array<std::uint64_t, 2>;

/// Census signature: one bit per window neighbor, set when the neighbor is
/// darker than the center. Rows wrap, columns clamp.
inline std::vector<CensusCode> census_transform(const std::vector<float>& img, int h, int w, int window,
                                                int workers) {
  const int r = window / 2;
  std::vector<CensusCode> codes(img.size(), CensusCode{0, 0});
  parallel_for_rows(h, workers, [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i) {
      for (int j = 0; j < w; ++j) {
        const float center = img[static_cast<std::size_t>(i) * w + j];
        CensusCode code{0, 0};
        int bit = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int ii = wrap_index(i + dy, h);
          for (int dx = -r; dx <= r; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int jj = std::clamp(j + dx, 0, w - 1);
            if (img[static_cast<std::size_t>(ii) * w + jj] < center)
              code[static_cast<std::size_t>(bit / 64)] |= std::uint64_t{1} << (bit % 64);
            ++bit;
          }
        }
        codes[static_cast<std::size_t>(i) * w + j] = code;
      }
    }
  });
  return codes;
}

/// Windowed mean absolute difference between multi-channel feature planes.
/// Window rows wrap; columns outside the image or whose right partner falls
/// off the image are left out of the mean.
inline void sad_costs(const std::vector<float>& left, const std::vector<float>& right, int channels, int window,
                      CostVolume& cv, int workers) {
  const int h = cv.geometry.height;
  const int w = cv.geometry.width;
  const int nd = cv.max_disparity;
  const int r = window / 2;
  parallel_for_rows(h, workers, [&](int r0, int r1) {
    std::vector<double> colsum(static_cast<std::size_t>(w), 0.0);
    for (int i = r0; i < r1; ++i) {
      for (int d = 0; d < nd; ++d) {
        // Per-column sums over the window rows at this disparity.
        for (int j = d; j < w; ++j) {
          double s = 0.0;
          for (int dy = -r; dy <= r; ++dy) {
            const std::size_t row = static_cast<std::size_t>(wrap_index(i + dy, h));
            const float* a = left.data() + (row * w + j) * channels;
            const float* b = right.data() + (row * w + j - d) * channels;
            for (int c = 0; c < channels; ++c) s += std::abs(static_cast<double>(a[c]) - b[c]);
          }
          colsum[static_cast<std::size_t>(j)] = s;
        }
        for (int j = 0; j < w; ++j) {
          if (j < d) {
            cv.at(i, j, d) = CostVolume::kSentinelCost;
            continue;
          }
          double s = 0.0;
          int count = 0;
          for (int dx = -r; dx <= r; ++dx) {
            const int jj = j + dx;
            if (jj < d || jj >= w) continue;
            s += colsum[static_cast<std::size_t>(jj)];
            ++count;
          }
          cv.at(i, j, d) = static_cast<float>(s / (count * static_cast<double>(window) * channels));
        }
      }
    }
  });
}

inline void check_pair_for_matching(const RectifiedPair& pair, int max_disparity) {
  pair.left.check();
  pair.right.check();
  if (!(pair.left.geometry == pair.right.geometry)) throw DomainError("matching: left/right geometries differ");
  if (pair.left.channels != pair.right.channels) throw DomainError("matching: left/right channel counts differ");
  if (max_disparity < 2) throw DomainError("matching: max disparity must be at least 2");
  if (max_disparity > pair.left.geometry.width)
    throw DomainError("matching: max disparity " + std::to_string(max_disparity) + " exceeds width " +
                      std::to_string(pair.left.geometry.width));
}

inline void check_window(int window) {
  if (window < 1 || window % 2 == 0) throw DomainError("matching: window must be odd and positive");
}

}  // namespace detail

/// Matching cost of every left pixel against the right pixel `d` columns to its
/// left on the same row.
inline CostVolume build_cost_volume(const RectifiedPair& pair, int max_disparity, const CostSpec& spec,
                                    int workers = 1) {
  detail::check_pair_for_matching(pair, max_disparity);
  detail::check_window(spec.window);
  const PanoramaGeometry& g = pair.left.geometry;
  const int h = g.height;
  const int w = g.width;
  CostVolume cv{g, max_disparity, std::vector<float>(static_cast<std::size_t>(h) * w * max_disparity)};
  const auto left = detail::grayscale(pair.left);
  const auto right = detail::grayscale(pair.right);

  if (spec.kind == CostKind::SAD) {
    detail::sad_costs(left, right, 1, spec.window, cv, workers);
    return cv;
  }
  if (spec.window * spec.window - 1 > 128) throw DomainError("matching: census window larger than 11x11");
  const auto cl = detail::census_transform(left, h, w, spec.window, workers);
  const auto cr = detail::census_transform(right, h, w, spec.window, workers);
  parallel_for_rows(h, workers, [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i) {
      for (int j = 0; j < w; ++j) {
        const auto& a = cl[static_cast<std::size_t>(i) * w + j];
        for (int d = 0; d < max_disparity; ++d) {
          if (j < d) {
            cv.at(i, j, d) = CostVolume::kSentinelCost;
            continue;
          }
          const auto& b = cr[static_cast<std::size_t>(i) * w + j - d];
          cv.at(i, j, d) = static_cast<float>(std::popcount(a[0] ^ b[0]) + std::popcount(a[1] ^ b[1]));
        }
      }
    }
  });
  return cv;
}

/// Windowed mean of costs per hypothesis. Rows wrap; columns average only
/// in-image, non-sentinel neighbors. Sentinel entries stay sentinel.
inline CostVolume aggregate_costs(const CostVolume& cv, int window, int workers = 1) {
  detail::check_window(window);
  if (window == 1) return cv;
  const int h = cv.geometry.height;
  const int w = cv.geometry.width;
  const int nd = cv.max_disparity;
  const int r = window / 2;
  CostVolume vertical = cv;
  parallel_for_rows(h, workers, [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < w; ++j)
        for (int d = 0; d < nd; ++d) {
          if (j < d || cv.at(i, j, d) >= CostVolume::kSentinelCost) continue;
          double s = 0.0;
          for (int dy = -r; dy <= r; ++dy) s += cv.at(wrap_index(i + dy, h), j, d);
          vertical.at(i, j, d) = static_cast<float>(s / window);
        }
  });
  CostVolume out = vertical;
  parallel_for_rows(h, workers, [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < w; ++j)
        for (int d = 0; d < nd; ++d) {
          if (vertical.at(i, j, d) >= CostVolume::kSentinelCost) continue;
          double s = 0.0;
          int count = 0;
          for (int dx = -r; dx <= r; ++dx) {
            const int jj = j + dx;
            if (jj < 0 || jj >= w) continue;
            const float c = vertical.at(i, jj, d);
            if (c >= CostVolume::kSentinelCost) continue;
            s += c;
            ++count;
          }
          out.at(i, j, d) = static_cast<float>(s / count);
        }
  });
  return out;
}

/// Minimum over the `window` x `window` neighborhood of each cost. Applied
/// after box aggregation this picks, per pixel, the best of all windows that
/// contain it, which keeps windows from straddling depth edges.
inline CostVolume shiftable_min_filter(const CostVolume& cv, int window, int workers = 1) {
  detail::check_window(window);
  if (window == 1) return cv;
  const int h = cv.geometry.height;
  const int w = cv.geometry.width;
  const int nd = cv.max_disparity;
  const int r = window / 2;
  CostVolume vertical = cv;
  parallel_for_rows(h, workers, [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < w; ++j)
        for (int d = 0; d < nd; ++d) {
          if (cv.at(i, j, d) >= CostVolume::kSentinelCost) continue;
          float m = cv.at(i, j, d);
          for (int dy = -r; dy <= r; ++dy) m = std::min(m, cv.at(wrap_index(i + dy, h), j, d));
          vertical.at(i, j, d) = m;
        }
  });
  CostVolume out = vertical;
  parallel_for_rows(h, workers, [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < w; ++j)
        for (int d = 0; d < nd; ++d) {
          if (vertical.at(i, j, d) >= CostVolume::kSentinelCost) continue;
          float m = vertical.at(i, j, d);
          for (int dx = -r; dx <= r; ++dx) {
            const int jj = j + dx;
            if (jj >= 0 && jj < w) m = std::min(m, vertical.at(i, jj, d));
          }
          out.at(i, j, d) = m;
        }
  });
  return out;
}

/// p(d) = softmax(-cost / temperature) per pixel.
inline ProbabilityVolume softmax_probabilities(const CostVolume& cv, double temperature, int workers = 1) {
  if (!(temperature > 0.0)) throw DomainError("softmax_probabilities: temperature must be positive");
  const int h = cv.geometry.height;
  const int w = cv.geometry.width;
  const int nd = cv.max_disparity;
  ProbabilityVolume pv{cv.geometry, nd, std::vector<float>(cv.costs.size())};
  parallel_for_rows(h, workers, [&](int r0, int r1) {
    std::vector<double> e(static_cast<std::size_t>(nd));
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < w; ++j) {
        const float* c = cv.costs.data() + cv.index(i, j, 0);
        const float lowest = *std::min_element(c, c + nd);
        double total = 0.0;
        for (int d = 0; d < nd; ++d) {
          e[static_cast<std::size_t>(d)] = std::exp(-(static_cast<double>(c[d]) - lowest) / temperature);
          total += e[static_cast<std::size_t>(d)];
        }
        float* p = pv.probs.data() + pv.index(i, j, 0);
        for (int d = 0; d < nd; ++d) p[d] = static_cast<float>(e[static_cast<std::size_t>(d)] / total);
      }
  });
  return pv;
}

/// Soft-argmin: probability-weighted mean hypothesis, clamped to [0, D - 1].
inline DisparityMap regress_disparity(const ProbabilityVolume& pv, int workers = 1) {
  DisparityMap out = DisparityMap::invalid(pv.geometry);
  const int w = pv.geometry.width;
  const int nd = pv.max_disparity;
  parallel_for_rows(pv.geometry.height, workers, [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < w; ++j) {
        const float* p = pv.pixel(i, j);
        double s = 0.0;
        for (int d = 0; d < nd; ++d) s += static_cast<double>(d) * p[d];
        out.set(i, j, static_cast<float>(std::clamp(s, 0.0, static_cast<double>(nd - 1))));
      }
  });
  return out;
}

/// Probability mass on the hypotheses {r-1, r, r+1} around r = round(disparity),
/// rounding halves away from zero.
inline ConfidenceMap confidence_map(const ProbabilityVolume& pv, const DisparityMap& disp, int workers = 1) {
  check_same_geometry(pv, disp, "confidence_map");
  ConfidenceMap out = ConfidenceMap::invalid(pv.geometry);
  const int w = pv.geometry.width;
  const int nd = pv.max_disparity;
  parallel_for_rows(pv.geometry.height, workers, [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < w; ++j) {
        if (!disp.is_valid(i, j)) continue;
        const auto r = static_cast<long long>(std::round(static_cast<double>(disp.at(i, j))));
        const float* p = pv.pixel(i, j);
        double s = 0.0;
        for (long long d = r - 1; d <= r + 1; ++d)
          if (d >= 0 && d < nd) s += p[d];
        out.set(i, j, static_cast<float>(std::clamp(s, 0.0, 1.0)));
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Feature path with circular attention

/// Four per-pixel features: intensity, horizontal and vertical central
/// differences, and intensity minus its 3x3 mean. Rows wrap, columns clamp.
inline FeatureMap<double> matching_features(const Panorama& p) {
  const auto g = detail::grayscale(p);
  const int h = p.height();
  const int w = p.width();
  auto px = [&](int i, int j) {
    return static_cast<double>(g[static_cast<std::size_t>(wrap_index(i, h)) * w + std::clamp(j, 0, w - 1)]);
  };
  auto f = FeatureMap<double>::zeros(h, w, 4);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double mean = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) mean += px(i + dy, j + dx);
      f.at(i, j, 0) = px(i, j);
      f.at(i, j, 1) = 0.5 * (px(i, j + 1) - px(i, j - 1));
      f.at(i, j, 2) = 0.5 * (px(i + 1, j) - px(i - 1, j));
      f.at(i, j, 3) = px(i, j) - mean / 9.0;
    }
  return f;
}

/// Parameters used when attention is requested without explicit weights:
/// two heads over the full vertical circle, small seeded perturbation of identity.
inline AttentionParams<double> default_matching_attention(int height) {
  return random_attention_params<double>(4, 2, height, 0x5eedULL, 0.05);
}

struct MatchParams {
  int max_disparity = 64;
  CostSpec cost{};
  /// Box aggregation window over costs; 1 disables it.
  int aggregation_window = 5;
  /// Follow aggregation with a min filter of the same size (shiftable windows).
  bool shiftable_windows = false;
  double temperature = 0.5;
  /// Run circular attention on per-pixel features and match them by SAD.
  bool attention = false;
  std::optional<AttentionParams<double>> attention_params;
  /// When set, also match right to left and drop left pixels whose two
  /// disparities differ by more than this many pixels.
  std::optional<double> consistency_tolerance;
  int workers = 1;
};

struct MatchResult {
  DisparityMap disparity;
  ConfidenceMap confidence;
};

namespace detail {

inline ProbabilityVolume match_probabilities(const RectifiedPair& pair, const MatchParams& params) {
  const PanoramaGeometry& g = pair.left.geometry;
  CostVolume cv;
  if (params.attention) {
    detail::check_window(params.cost.window);
    const auto ap = params.attention_params ? *params.attention_params : default_matching_attention(g.height);
    const auto fl = circular_axial_attention(matching_features(pair.left), ap, params.workers);
    const auto fr = circular_axial_attention(matching_features(pair.right), ap, params.workers);
    const std::vector<float> l(fl.data.begin(), fl.data.end());
    const std::vector<float> r(fr.data.begin(), fr.data.end());
    cv = CostVolume{g, params.max_disparity,
                    std::vector<float>(static_cast<std::size_t>(g.height) * g.width * params.max_disparity)};
    detail::sad_costs(l, r, fl.channels, params.cost.window, cv, params.workers);
  } else {
    cv = build_cost_volume(pair, params.max_disparity, params.cost, params.workers);
  }
  if (params.aggregation_window > 1) {
    cv = aggregate_costs(cv, params.aggregation_window, params.workers);
    if (params.shiftable_windows) cv = shiftable_min_filter(cv, params.aggregation_window, params.workers);
  }
  return softmax_probabilities(cv, params.temperature, params.workers);
}

inline Panorama mirror_columns(const Panorama& p) {
  Panorama out = p;
  const int w = p.width();
  for (int i = 0; i < p.height(); ++i)
    for (int j = 0; j < w; ++j) {
      for (int c = 0; c < p.channels; ++c) out.at(i, j, c) = p.at(i, w - 1 - j, c);
      if (!p.valid.empty()) out.valid[out.index(i, j)] = p.valid[p.index(i, w - 1 - j)];
    }
  return out;
}

/// Disparity of the right view (match in the left image at j + d), computed
/// by matching the mirrored pair with the roles swapped.
inline DisparityMap right_view_disparity(const RectifiedPair& pair, const MatchParams& params) {
  RectifiedPair mirrored;
  mirrored.left = mirror_columns(pair.right);
  mirrored.right = mirror_columns(pair.left);
  mirrored.baseline = pair.baseline;
  const DisparityMap m = regress_disparity(match_probabilities(mirrored, params), params.workers);
  DisparityMap out = m;
  const int w = m.width();
  for (int i = 0; i < m.height(); ++i)
    for (int j = 0; j < w; ++j) {
      const float d = m.values[m.index(i, w - 1 - j)];
      out.values[out.index(i, j)] = d;
      out.valid[out.index(i, j)] = pair.right.is_valid(i, j) && j + d <= w - 0.5f ? 1 : 0;
    }
  return out;
}

}  // namespace detail

/// Cost volume, optional aggregation, softmax, soft-argmin and confidence.
/// Pixels that are invalid in the left image, or whose match falls left of
/// the right image, come back invalid, as do pixels failing the optional
/// left-right consistency check.
inline MatchResult match_pair(const RectifiedPair& pair, const MatchParams& params) {
  detail::check_pair_for_matching(pair, params.max_disparity);
  if (params.consistency_tolerance && !(*params.consistency_tolerance >= 0.0))
    throw DomainError("matching: consistency tolerance must be non-negative");
  const PanoramaGeometry& g = pair.left.geometry;
  const auto pv = detail::match_probabilities(pair, params);
  MatchResult res{regress_disparity(pv, params.workers), ConfidenceMap::invalid(g)};
  for (int i = 0; i < g.height; ++i)
    for (int j = 0; j < g.width; ++j) {
      const std::size_t k = res.disparity.index(i, j);
      if (!pair.left.is_valid(i, j) || j - res.disparity.values[k] < -0.5f) res.disparity.valid[k] = 0;
    }
  if (params.consistency_tolerance) {
    const DisparityMap right = detail::right_view_disparity(pair, params);
    for (int i = 0; i < g.height; ++i)
      for (int j = 0; j < g.width; ++j) {
        const std::size_t k = res.disparity.index(i, j);
        if (!res.disparity.valid[k]) continue;
        const double d = res.disparity.values[k];
        const long jr = std::lround(j - d);
        if (jr < 0 || jr >= g.width || !right.is_valid(i, static_cast<int>(jr)) ||
            std::abs(d - right.at(i, static_cast<int>(jr))) > *params.consistency_tolerance)
          res.disparity.valid[k] = 0;
      }
  }
  res.confidence = confidence_map(pv, res.disparity, params.workers);
  return res;
}

/// Invalidates connected regions of fewer than `max_size` pixels, where
/// 4-neighbors join a region when their disparities differ by at most
/// `max_diff`. Rows wrap. Returns the number of pixels removed.
inline std::size_t filter_speckles(DisparityMap& disp, int max_size, double max_diff) {
  disp.check();
  if (max_size < 0 || !(max_diff >= 0.0)) throw DomainError("filter_speckles: invalid parameters");
  const int h = disp.height();
  const int w = disp.width();
  std::vector<int> label(disp.size(), -1);
  std::vector<std::size_t> members;
  std::vector<std::size_t> stack;
  std::size_t removed = 0;
  int next = 0;
  for (std::size_t seed = 0; seed < disp.size(); ++seed) {
    if (!disp.valid[seed] || label[seed] >= 0) continue;
    members.clear();
    stack.assign(1, seed);
    label[seed] = next;
    while (!stack.empty()) {
      const std::size_t k = stack.back();
      stack.pop_back();
      members.push_back(k);
      const int i = static_cast<int>(k / static_cast<std::size_t>(w));
      const int j = static_cast<int>(k % static_cast<std::size_t>(w));
      const std::array<std::pair<int, int>, 4> nbrs{{{wrap_index(i - 1, h), j}, {wrap_index(i + 1, h), j}, {i, j - 1}, {i, j + 1}}};
      for (const auto& [ni, nj] : nbrs) {
        if (nj < 0 || nj >= w) continue;
        const std::size_t n = disp.index(ni, nj);
        if (!disp.valid[n] || label[n] >= 0) continue;
        if (std::abs(static_cast<double>(disp.values[n]) - disp.values[k]) > max_diff) continue;
        label[n] = next;
        stack.push_back(n);
      }
    }
    ++next;
    if (static_cast<int>(members.size()) >= max_size) continue;
    for (const std::size_t k : members) disp.valid[k] = 0;
    removed += members.size();
  }
  return removed;
}

}  // namespace omnistereo
