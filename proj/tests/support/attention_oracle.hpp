#pragma once

// Independent reference evaluation of the windowed attention for tests.

#include <cmath>
#include <vector>

#include "omnistereo/circular_attention.hpp"

namespace omnistereo::test_support {

using FM = FeatureMap<double>;
using Params = AttentionParams<double>;

/// Plain nested-loop evaluation of the windowed attention, written against
/// the formula without sharing any code with the library.
inline FM brute_force(const FM& x, const Params& p) {
  const int h = x.height, w = x.width, c = p.channels, dq = c / p.heads, m = p.span;
  FM y = FM::zeros(h, w, c);
  auto matvec = [](const RowMatrix<double>& a, const std::vector<double>& v) {
    std::vector<double> out(static_cast<std::size_t>(a.rows()), 0.0);
    for (int r = 0; r < a.rows(); ++r)
      for (int k = 0; k < a.cols(); ++k) out[static_cast<std::size_t>(r)] += a(r, k) * v[static_cast<std::size_t>(k)];
    return out;
  };
  auto pixel = [&](int i, int j) {
    std::vector<double> v(static_cast<std::size_t>(c));
    for (int k = 0; k < c; ++k) v[static_cast<std::size_t>(k)] = x.at(i, j, k);
    return matvec(p.pre, v);
  };
  for (int j = 0; j < w; ++j)
    for (int i = 0; i < h; ++i) {
      std::vector<double> concat(static_cast<std::size_t>(c), 0.0);
      for (int hd = 0; hd < p.heads; ++hd) {
        const auto& H = p.head[static_cast<std::size_t>(hd)];
        const auto q = matvec(H.query, pixel(i, j));
        std::vector<double> logit(static_cast<std::size_t>(m));
        std::vector<std::vector<double>> val(static_cast<std::size_t>(m));
        for (int t = 0; t < m; ++t) {
          const int off = t - m / 2;
          const int row = ((i + off) % h + h) % h;
          const auto k = matvec(H.key, pixel(row, j));
          auto v = matvec(H.value, pixel(row, j));
          double s = 0.0;
          for (int e = 0; e < dq; ++e) s += q[e] * k[e] + q[e] * H.pos_query(t, e) + k[e] * H.pos_key(t, e);
          for (int e = 0; e < dq; ++e) v[e] += H.pos_value(t, e);
          logit[static_cast<std::size_t>(t)] = s;
          val[static_cast<std::size_t>(t)] = v;
        }
        double z = 0.0;
        for (double s : logit) z += std::exp(s);
        for (int t = 0; t < m; ++t)
          for (int e = 0; e < dq; ++e)
            concat[static_cast<std::size_t>(hd * dq + e)] += std::exp(logit[t]) / z * val[t][e];
      }
      const auto out = matvec(p.post, concat);
      for (int k = 0; k < c; ++k) y.at(i, j, k) = out[static_cast<std::size_t>(k)] + (p.residual ? x.at(i, j, k) : 0.0);
    }
  return y;
}

/// Every scalar parameter as a mutable reference, in a fixed order.
inline std::vector<double*> parameter_slots(Params& p) {
  std::vector<double*> out;
  auto add = [&](RowMatrix<double>& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) out.push_back(m.data() + k);
  };
  add(p.pre);
  add(p.post);
  for (auto& hd : p.head) {
    add(hd.query);
    add(hd.key);
    add(hd.value);
    add(hd.pos_query);
    add(hd.pos_key);
    add(hd.pos_value);
  }
  return out;
}

}  // namespace omnistereo::test_support
