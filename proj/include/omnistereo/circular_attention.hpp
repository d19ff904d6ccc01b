#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "omnistereo/error.hpp"
#include "omnistereo/parallel.hpp"

namespace omnistereo {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// h x w x channels tensor, channels innermost. Rows run along the 360 degree axis.
template <typename T>
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> data;

  static FeatureMap zeros(int h, int w, int c) {
    if (h <= 0 || w <= 0 || c <= 0) throw DomainError("feature map dimensions must be positive");
    return {h, w, c, std::vector<T>(static_cast<std::size_t>(h) * w * c, T(0))};
  }

  std::size_t pixel(int i, int j) const { return static_cast<std::size_t>(i) * width + j; }
  T& at(int i, int j, int c) { return data[pixel(i, j) * channels + c]; }
  T at(int i, int j, int c) const { return data[pixel(i, j) * channels + c]; }
  const T* ptr(int i, int j) const { return data.data() + pixel(i, j) * channels; }
  T* ptr(int i, int j) { return data.data() + pixel(i, j) * channels; }
};

/// Per-head projections and relative positional tables. Positional rows are
/// indexed by offset - offset_begin().
template <typename T>
struct AttentionHead {
  RowMatrix<T> query;      // head_dim x channels
  RowMatrix<T> key;        // head_dim x channels
  RowMatrix<T> value;      // head_dim x channels
  RowMatrix<T> pos_query;  // span x head_dim
  RowMatrix<T> pos_key;    // span x head_dim
  RowMatrix<T> pos_value;  // span x head_dim
};

/// Multi-head vertical attention with a 1 x span window. `pre` and `post` are
/// the per-pixel linear maps around the heads; with `residual` the input is
/// added to the output.
template <typename T>
struct AttentionParams {
  int channels = 0;
  int heads = 8;
  int span = 256;
  bool residual = true;
  RowMatrix<T> pre;   // channels x channels
  RowMatrix<T> post;  // channels x channels
  std::vector<AttentionHead<T>> head;

  int head_dim() const { return heads > 0 ? channels / heads : 0; }
  /// Signed offset of the first window row relative to the query row.
  int offset_begin() const { return -(span / 2); }

  /// Zero-filled parameters of the right shapes (also used as a gradient container).
  static AttentionParams zeros(int channels, int heads, int span, bool residual = true) {
    AttentionParams p;
    p.channels = channels;
    p.heads = heads;
    p.span = span;
    p.residual = residual;
    p.check_config();
    const int dq = p.head_dim();
    p.pre = RowMatrix<T>::Zero(channels, channels);
    p.post = RowMatrix<T>::Zero(channels, channels);
    p.head.resize(static_cast<std::size_t>(heads));
    for (auto& hd : p.head) {
      hd.query = RowMatrix<T>::Zero(dq, channels);
      hd.key = RowMatrix<T>::Zero(dq, channels);
      hd.value = RowMatrix<T>::Zero(dq, channels);
      hd.pos_query = RowMatrix<T>::Zero(span, dq);
      hd.pos_key = RowMatrix<T>::Zero(span, dq);
      hd.pos_value = RowMatrix<T>::Zero(span, dq);
    }
    return p;
  }

  void check_config() const {
    if (channels <= 0 || heads <= 0 || span <= 0) throw DomainError("attention: channels, heads and span must be positive");
    if (channels % heads != 0)
      throw DomainError("attention: heads (" + std::to_string(heads) + ") must divide channels (" +
                        std::to_string(channels) + ")");
  }

  void check() const {
    check_config();
    const int dq = head_dim();
    auto shape_ok = [](const RowMatrix<T>& m, int r, int c) { return m.rows() == r && m.cols() == c; };
    if (!shape_ok(pre, channels, channels) || !shape_ok(post, channels, channels))
      throw DomainError("attention: pre/post maps must be channels x channels");
    if (static_cast<int>(head.size()) != heads) throw DomainError("attention: wrong number of heads");
    for (const auto& hd : head) {
      if (!shape_ok(hd.query, dq, channels) || !shape_ok(hd.key, dq, channels) || !shape_ok(hd.value, dq, channels))
        throw DomainError("attention: projection shape mismatch");
      if (!shape_ok(hd.pos_query, span, dq) || !shape_ok(hd.pos_key, span, dq) || !shape_ok(hd.pos_value, span, dq))
        throw DomainError("attention: positional table shape mismatch");
    }
  }
};

/// Deterministic pseudo-random parameters, entries uniform in [-scale, scale].
/// `pre` and `post` start from identity plus the same noise.
template <typename T>
AttentionParams<T> random_attention_params(int channels, int heads, int span, std::uint64_t seed, T scale = T(0.5),
                                           bool residual = true) {
  auto p = AttentionParams<T>::zeros(channels, heads, span, residual);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  auto fill = [&](RowMatrix<T>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<T>(scale * dist(rng));
  };
  fill(p.pre);
  p.pre += RowMatrix<T>::Identity(channels, channels);
  for (auto& hd : p.head) {
    fill(hd.query);
    fill(hd.key);
    fill(hd.value);
    fill(hd.pos_query);
    fill(hd.pos_key);
    fill(hd.pos_value);
  }
  fill(p.post);
  p.post += RowMatrix<T>::Identity(channels, channels);
  return p;
}

/// Instrumentation for the cost model: counts scalar multiplies and exps.
struct AttentionCounters {
  std::uint64_t multiplies = 0;
  std::uint64_t exps = 0;

  AttentionCounters& operator+=(const AttentionCounters& o) {
    multiplies += o.multiplies;
    exps += o.exps;
    return *this;
  }
};

namespace detail {

template <typename T>
T dot(const T* a, const T* b, int n) {
  T s = T(0);
  for (int t = 0; t < n; ++t) s += a[t] * b[t];
  return s;
}

/// out[r] = sum_c m(r, c) in[c]
template <typename T>
void apply(const RowMatrix<T>& m, const T* in, T* out) {
  const auto rows = static_cast<int>(m.rows());
  const auto cols = static_cast<int>(m.cols());
  for (int r = 0; r < rows; ++r) out[r] = dot(m.data() + static_cast<std::size_t>(r) * cols, in, cols);
}

/// out[c] += sum_r m(r, c) in[r]
template <typename T>
void apply_transpose_add(const RowMatrix<T>& m, const T* in, T* out) {
  const auto rows = static_cast<int>(m.rows());
  const auto cols = static_cast<int>(m.cols());
  for (int r = 0; r < rows; ++r) {
    const T* row = m.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) out[c] += row[c] * in[r];
  }
}

/// g += a b^T over all pixels, in pixel order.
template <typename T>
void accumulate_outer(RowMatrix<T>& g, const std::vector<T>& a, const std::vector<T>& b, std::size_t pixels) {
  const auto rows = static_cast<int>(g.rows());
  const auto cols = static_cast<int>(g.cols());
  for (std::size_t px = 0; px < pixels; ++px) {
    const T* av = a.data() + px * rows;
    const T* bv = b.data() + px * cols;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) g(r, c) += av[r] * bv[c];
  }
}

/// Intermediate tensors of one forward pass.
template <typename T>
struct AttentionState {
  std::vector<T> projected;  // pixels x channels, pre-map output
  std::vector<T> q, k, v;    // [head][pixel][head_dim]
  std::vector<T> concat;     // pixels x channels, head outputs
  std::vector<T> weights;    // [head][pixel][span], only when requested
};

template <typename T>
void project_inputs(const FeatureMap<T>& x, const AttentionParams<T>& p, AttentionState<T>& st, int workers,
                    AttentionCounters* counters) {
  const std::size_t n = static_cast<std::size_t>(x.height) * x.width;
  const int c = p.channels;
  const int dq = p.head_dim();
  st.projected.assign(n * c, T(0));
  st.q.assign(static_cast<std::size_t>(p.heads) * n * dq, T(0));
  st.k.assign(st.q.size(), T(0));
  st.v.assign(st.q.size(), T(0));
  parallel_for_rows(x.height, workers, [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i) {
      for (int j = 0; j < x.width; ++j) {
        const std::size_t px = x.pixel(i, j);
        T* xt = st.projected.data() + px * c;
        apply(p.pre, x.ptr(i, j), xt);
        for (int hd = 0; hd < p.heads; ++hd) {
          const std::size_t off = (static_cast<std::size_t>(hd) * n + px) * dq;
          apply(p.head[hd].query, xt, st.q.data() + off);
          apply(p.head[hd].key, xt, st.k.data() + off);
          apply(p.head[hd].value, xt, st.v.data() + off);
        }
      }
    }
  });
  if (counters != nullptr) counters->multiplies += n * (static_cast<std::uint64_t>(c) * c + 3ull * p.heads * dq * c);
}

template <typename T>
void finish_outputs(const FeatureMap<T>& x, const AttentionParams<T>& p, const AttentionState<T>& st, bool residual,
                    FeatureMap<T>& y, int workers, AttentionCounters* counters) {
  const int c = p.channels;
  parallel_for_rows(x.height, workers, [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i) {
      for (int j = 0; j < x.width; ++j) {
        const std::size_t px = x.pixel(i, j);
        T* out = y.ptr(i, j);
        apply(p.post, st.concat.data() + px * c, out);
        if (residual)
          for (int ch = 0; ch < c; ++ch) out[ch] += x.ptr(i, j)[ch];
      }
    }
  });
  if (counters != nullptr)
    counters->multiplies += static_cast<std::uint64_t>(x.height) * x.width * static_cast<std::uint64_t>(c) * c;
}

/// Windowed attention core over every column. Writes head outputs into
/// st.concat and, when keep_weights is set, the softmax weights into st.weights.
template <typename T>
void attend_columns(const FeatureMap<T>& x, const AttentionParams<T>& p, AttentionState<T>& st, bool keep_weights,
                    int workers, AttentionCounters* counters) {
  const int h = x.height;
  const int w = x.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const int c = p.channels;
  const int dq = p.head_dim();
  const int m = p.span;
  const int lo = p.offset_begin();
  st.concat.assign(n * c, T(0));
  if (keep_weights) st.weights.assign(static_cast<std::size_t>(p.heads) * n * m, T(0));

  std::vector<AttentionCounters> per_chunk(static_cast<std::size_t>(chunk_count(w, workers)));
  parallel_for_chunks(w, workers, [&](int chunk, int j0, int j1) {
    AttentionCounters local;
    std::vector<T> logits(static_cast<std::size_t>(m));
    for (int j = j0; j < j1; ++j) {
      for (int i = 0; i < h; ++i) {
        const std::size_t o = x.pixel(i, j);
        for (int hd = 0; hd < p.heads; ++hd) {
          const auto& H = p.head[hd];
          const std::size_t base = static_cast<std::size_t>(hd) * n;
          const T* q_o = st.q.data() + (base + o) * dq;
          T max_logit = -std::numeric_limits<T>::infinity();
          for (int t = 0; t < m; ++t) {
            const int row = static_cast<int>(((i + lo + t) % h + h) % h);
            const T* k_p = st.k.data() + (base + x.pixel(row, j)) * dq;
            const T s = dot(q_o, k_p, dq) + dot(q_o, H.pos_query.data() + static_cast<std::size_t>(t) * dq, dq) +
                        dot(k_p, H.pos_key.data() + static_cast<std::size_t>(t) * dq, dq);
            logits[t] = s;
            max_logit = std::max(max_logit, s);
          }
          T total = T(0);
          for (int t = 0; t < m; ++t) {
            logits[t] = std::exp(logits[t] - max_logit);
            total += logits[t];
          }
          T* out = st.concat.data() + o * c + static_cast<std::size_t>(hd) * dq;
          for (int t = 0; t < m; ++t) {
            const T a = logits[t] / total;
            if (keep_weights) st.weights[(base + o) * m + t] = a;
            const int row = static_cast<int>(((i + lo + t) % h + h) % h);
            const T* v_p = st.v.data() + (base + x.pixel(row, j)) * dq;
            const T* rv = H.pos_value.data() + static_cast<std::size_t>(t) * dq;
            for (int e = 0; e < dq; ++e) out[e] += a * (v_p[e] + rv[e]);
          }
          local.multiplies += static_cast<std::uint64_t>(m) * (4ull * dq);
          local.exps += static_cast<std::uint64_t>(m);
        }
      }
    }
    per_chunk[static_cast<std::size_t>(chunk)] = local;
  });
  if (counters != nullptr)
    for (const auto& pc : per_chunk) *counters += pc;
}

template <typename T>
void check_attention_inputs(const FeatureMap<T>& x, const AttentionParams<T>& p) {
  p.check();
  if (x.channels != p.channels)
    throw DomainError("attention: input has " + std::to_string(x.channels) + " channels, parameters expect " +
                      std::to_string(p.channels));
  if (x.data.size() != static_cast<std::size_t>(x.height) * x.width * x.channels)
    throw DomainError("attention: feature map data length mismatch");
  if (p.span > x.height)
    throw DomainError("attention: span " + std::to_string(p.span) + " exceeds height " + std::to_string(x.height));
}

}  // namespace detail

/// Vertical attention over a circular 1 x span window:
///   y_o = post( concat_heads sum_p softmax_p(q_o.k_p + q_o.rq_{p-o} + k_p.rk_{p-o}) (v_p + rv_{p-o}) ) [+ x_o]
/// Window rows wrap modulo the height; columns never interact.
template <typename T>
FeatureMap<T> circular_axial_attention(const FeatureMap<T>& x, const AttentionParams<T>& p, int workers = 1,
                                       AttentionCounters* counters = nullptr) {
  detail::check_attention_inputs(x, p);
  detail::AttentionState<T> st;
  detail::project_inputs(x, p, st, workers, counters);
  detail::attend_columns(x, p, st, false, workers, counters);
  FeatureMap<T> y = FeatureMap<T>::zeros(x.height, x.width, x.channels);
  detail::finish_outputs(x, p, st, p.residual, y, workers, counters);
  return y;
}

/// Unrestricted self-attention over the whole lattice, without positional
/// terms or residual: the dense reference the windowed kernel reduces to.
/// Cost is quadratic in the pixel count.
template <typename T>
FeatureMap<T> global_self_attention(const FeatureMap<T>& x, const AttentionParams<T>& p) {
  p.check();
  if (x.channels != p.channels) throw DomainError("attention: channel mismatch");
  const std::size_t n = static_cast<std::size_t>(x.height) * x.width;
  const int c = p.channels;
  const int dq = p.head_dim();
  detail::AttentionState<T> st;
  detail::project_inputs(x, p, st, 1, nullptr);
  st.concat.assign(n * c, T(0));
  std::vector<T> logits(n);
  for (std::size_t o = 0; o < n; ++o) {
    for (int hd = 0; hd < p.heads; ++hd) {
      const std::size_t base = static_cast<std::size_t>(hd) * n;
      const T* q_o = st.q.data() + (base + o) * dq;
      T max_logit = -std::numeric_limits<T>::infinity();
      for (std::size_t q = 0; q < n; ++q) {
        logits[q] = detail::dot(q_o, st.k.data() + (base + q) * dq, dq);
        max_logit = std::max(max_logit, logits[q]);
      }
      T total = T(0);
      for (std::size_t q = 0; q < n; ++q) {
        logits[q] = std::exp(logits[q] - max_logit);
        total += logits[q];
      }
      T* out = st.concat.data() + o * c + static_cast<std::size_t>(hd) * dq;
      for (std::size_t q = 0; q < n; ++q) {
        const T a = logits[q] / total;
        const T* v_p = st.v.data() + (base + q) * dq;
        for (int e = 0; e < dq; ++e) out[e] += a * v_p[e];
      }
    }
  }
  FeatureMap<T> y = FeatureMap<T>::zeros(x.height, x.width, x.channels);
  detail::finish_outputs(x, p, st, false, y, 1, nullptr);
  return y;
}

/// Straightforward per-query evaluation of the windowed attention with Eigen
/// vectors and no shared intermediates. Slow; used to cross-check the kernel.
template <typename T>
FeatureMap<T> circular_axial_attention_direct(const FeatureMap<T>& x, const AttentionParams<T>& p) {
  detail::check_attention_inputs(x, p);
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  const int c = p.channels;
  const int dq = p.head_dim();
  auto input = [&](int i, int j) {
    Vec v(c);
    for (int t = 0; t < c; ++t) v[t] = x.at(i, j, t);
    return v;
  };
  FeatureMap<T> y = FeatureMap<T>::zeros(x.height, x.width, x.channels);
  for (int i = 0; i < x.height; ++i)
    for (int j = 0; j < x.width; ++j) {
      const Vec q_in = p.pre * input(i, j);
      Vec concat(c);
      for (int hd = 0; hd < p.heads; ++hd) {
        const auto& h = p.head[static_cast<std::size_t>(hd)];
        const Vec q = h.query * q_in;
        std::vector<T> logits(static_cast<std::size_t>(p.span));
        std::vector<Vec> values;
        for (int r = 0; r < p.span; ++r) {
          const int row = (((i + p.offset_begin() + r) % x.height) + x.height) % x.height;
          const Vec xp = p.pre * input(row, j);
          const Vec k = h.key * xp;
          const Vec rq = h.pos_query.row(r).transpose();
          const Vec rk = h.pos_key.row(r).transpose();
          logits[static_cast<std::size_t>(r)] = q.dot(k) + q.dot(rq) + k.dot(rk);
          values.push_back(h.value * xp + h.pos_value.row(r).transpose());
        }
        const T top = *std::max_element(logits.begin(), logits.end());
        T total = T(0);
        for (auto& l : logits) total += (l = std::exp(l - top));
        Vec out = Vec::Zero(dq);
        for (int r = 0; r < p.span; ++r) out += (logits[static_cast<std::size_t>(r)] / total) * values[static_cast<std::size_t>(r)];
        concat.segment(static_cast<Eigen::Index>(hd) * dq, dq) = out;
      }
      Vec o = p.post * concat;
      if (p.residual) o += input(i, j);
      for (int t = 0; t < c; ++t) y.at(i, j, t) = o[t];
    }
  return y;
}

template <typename T>
struct AttentionGradients {
  FeatureMap<T> input;
  AttentionParams<T> params;
};

/// Gradients of sum(upstream * circular_axial_attention(x, p)) with respect to
/// the input and every parameter. Column work runs in parallel; all cross-column
/// reductions happen in a fixed order.
template <typename T>
AttentionGradients<T> attention_parameter_gradients(const FeatureMap<T>& x, const AttentionParams<T>& p,
                                                    const FeatureMap<T>& upstream, int workers = 1) {
  detail::check_attention_inputs(x, p);
  if (upstream.height != x.height || upstream.width != x.width || upstream.channels != x.channels)
    throw DomainError("attention gradients: upstream shape mismatch");

  const int h = x.height;
  const int w = x.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const int c = p.channels;
  const int dq = p.head_dim();
  const int m = p.span;
  const int lo = p.offset_begin();

  detail::AttentionState<T> st;
  detail::project_inputs(x, p, st, workers, nullptr);
  detail::attend_columns(x, p, st, true, workers, nullptr);

  AttentionGradients<T> g{FeatureMap<T>::zeros(h, w, c), AttentionParams<T>::zeros(c, p.heads, m, p.residual)};

  // Output stage: y = post z (+ x).
  std::vector<T> gz(n * c, T(0));
  detail::accumulate_outer(g.params.post, upstream.data, st.concat, n);
  for (std::size_t px = 0; px < n; ++px) {
    detail::apply_transpose_add(p.post, upstream.data.data() + px * c, gz.data() + px * c);
    if (p.residual)
      for (int ch = 0; ch < c; ++ch) g.input.data[px * c + ch] += upstream.data[px * c + ch];
  }

  // Attention core, per head and column.
  std::vector<T> gq(st.q.size(), T(0)), gk(st.k.size(), T(0)), gv(st.v.size(), T(0));
  const std::size_t table = static_cast<std::size_t>(m) * dq;
  // Positional gradients per column, summed in column order afterwards.
  std::vector<T> col_rq(static_cast<std::size_t>(p.heads) * w * table, T(0));
  std::vector<T> col_rk(col_rq.size(), T(0)), col_rv(col_rq.size(), T(0));

  parallel_for_rows(w, workers, [&](int j0, int j1) {
    std::vector<T> ga(static_cast<std::size_t>(m));
    for (int j = j0; j < j1; ++j) {
      for (int hd = 0; hd < p.heads; ++hd) {
        const auto& H = p.head[hd];
        const std::size_t base = static_cast<std::size_t>(hd) * n;
        const std::size_t col_off = (static_cast<std::size_t>(hd) * w + j) * table;
        for (int i = 0; i < h; ++i) {
          const std::size_t o = x.pixel(i, j);
          const T* g_out = gz.data() + o * c + static_cast<std::size_t>(hd) * dq;
          const T* a = st.weights.data() + (base + o) * m;
          T weighted = T(0);
          for (int t = 0; t < m; ++t) {
            const int row = static_cast<int>(((i + lo + t) % h + h) % h);
            const std::size_t pp = base + x.pixel(row, j);
            const T* v_p = st.v.data() + pp * dq;
            const T* rv = H.pos_value.data() + static_cast<std::size_t>(t) * dq;
            T s = T(0);
            for (int e = 0; e < dq; ++e) {
              s += g_out[e] * (v_p[e] + rv[e]);
              gv[pp * dq + e] += a[t] * g_out[e];
              col_rv[col_off + static_cast<std::size_t>(t) * dq + e] += a[t] * g_out[e];
            }
            ga[t] = s;
            weighted += a[t] * s;
          }
          const T* q_o = st.q.data() + (base + o) * dq;
          for (int t = 0; t < m; ++t) {
            const T gs = a[t] * (ga[t] - weighted);
            const int row = static_cast<int>(((i + lo + t) % h + h) % h);
            const std::size_t pp = base + x.pixel(row, j);
            const T* k_p = st.k.data() + pp * dq;
            const T* rq = H.pos_query.data() + static_cast<std::size_t>(t) * dq;
            const T* rk = H.pos_key.data() + static_cast<std::size_t>(t) * dq;
            for (int e = 0; e < dq; ++e) {
              gq[(base + o) * dq + e] += gs * (k_p[e] + rq[e]);
              gk[pp * dq + e] += gs * (q_o[e] + rk[e]);
              col_rq[col_off + static_cast<std::size_t>(t) * dq + e] += gs * q_o[e];
              col_rk[col_off + static_cast<std::size_t>(t) * dq + e] += gs * k_p[e];
            }
          }
        }
      }
    }
  });

  for (int hd = 0; hd < p.heads; ++hd) {
    auto& G = g.params.head[hd];
    for (int j = 0; j < w; ++j) {
      const std::size_t col_off = (static_cast<std::size_t>(hd) * w + j) * table;
      for (std::size_t e = 0; e < table; ++e) {
        G.pos_query.data()[e] += col_rq[col_off + e];
        G.pos_key.data()[e] += col_rk[col_off + e];
        G.pos_value.data()[e] += col_rv[col_off + e];
      }
    }
  }

  // Projections: q = Wq xt, k = Wk xt, v = Wv xt, xt = pre x.
  std::vector<T> gxt(n * c, T(0));
  for (int hd = 0; hd < p.heads; ++hd) {
    const std::size_t off = static_cast<std::size_t>(hd) * n * dq;
    auto& G = g.params.head[hd];
    const auto& H = p.head[hd];
    for (std::size_t px = 0; px < n; ++px) {
      const T* xt = st.projected.data() + px * c;
      const T* gqp = gq.data() + off + px * dq;
      const T* gkp = gk.data() + off + px * dq;
      const T* gvp = gv.data() + off + px * dq;
      for (int r = 0; r < dq; ++r)
        for (int col = 0; col < c; ++col) {
          G.query(r, col) += gqp[r] * xt[col];
          G.key(r, col) += gkp[r] * xt[col];
          G.value(r, col) += gvp[r] * xt[col];
        }
      detail::apply_transpose_add(H.query, gqp, gxt.data() + px * c);
      detail::apply_transpose_add(H.key, gkp, gxt.data() + px * c);
      detail::apply_transpose_add(H.value, gvp, gxt.data() + px * c);
    }
  }
  detail::accumulate_outer(g.params.pre, gxt, x.data, n);
  for (std::size_t px = 0; px < n; ++px)
    detail::apply_transpose_add(p.pre, gxt.data() + px * c, g.input.data.data() + px * c);
  return g;
}

}  // namespace omnistereo
