#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "omnistereo/circular_attention.hpp"
#include "omnistereo/error.hpp"
#include "omnistereo/io/pfm.hpp"

namespace omnistereo::io {

// Attention parameter file: 8-byte magic, four little-endian int32 (channels,
// heads, span, residual), then little-endian float64 matrices in row-major
// order: pre, post, and per head query, key, value, pos_query, pos_key, pos_value.
inline constexpr char kAttentionMagic[8] = {'C', 'A', 'T', 'T', 'N', '1', '\0', '\0'};

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  static_assert(sizeof(U) == 4 || sizeof(U) == 8);
  unsigned char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(U) / 2; ++i) std::swap(b[i], b[sizeof(U) - 1 - i]);
  out.append(reinterpret_cast<const char*>(b), sizeof(U));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : b_(bytes) {}

  template <typename U>
  U get(const char* what) {
    if (pos_ + sizeof(U) > b_.size()) throw FormatError(std::string("attention params: truncated at ") + what, pos_);
    unsigned char b[sizeof(U)];
    std::memcpy(b, b_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big)
      for (std::size_t i = 0; i < sizeof(U) / 2; ++i) std::swap(b[i], b[sizeof(U) - 1 - i]);
    U v;
    std::memcpy(&v, b, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::size_t offset() const { return pos_; }
  std::size_t size() const { return b_.size(); }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

template <typename F>
void for_each_matrix(AttentionParams<double>& p, F&& f) {
  f(p.pre);
  f(p.post);
  for (auto& hd : p.head) {
    f(hd.query);
    f(hd.key);
    f(hd.value);
    f(hd.pos_query);
    f(hd.pos_key);
    f(hd.pos_value);
  }
}

}  // namespace detail

inline std::string serialize_attention_params(AttentionParams<double> p) {
  p.check();
  std::string out(kAttentionMagic, sizeof(kAttentionMagic));
  detail::put_le<std::int32_t>(out, p.channels);
  detail::put_le<std::int32_t>(out, p.heads);
  detail::put_le<std::int32_t>(out, p.span);
  detail::put_le<std::int32_t>(out, p.residual ? 1 : 0);
  detail::for_each_matrix(p, [&](const RowMatrix<double>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_le<double>(out, m.data()[i]);
  });
  return out;
}

inline AttentionParams<double> parse_attention_params(const std::string& bytes) {
  if (bytes.size() < sizeof(kAttentionMagic) || std::memcmp(bytes.data(), kAttentionMagic, sizeof(kAttentionMagic)) != 0)
    throw FormatError("attention params: bad magic", 0);
  detail::ByteReader in(bytes);
  for (std::size_t i = 0; i < sizeof(kAttentionMagic); ++i) in.get<std::uint8_t>("magic");
  const int channels = in.get<std::int32_t>("channels");
  const int heads = in.get<std::int32_t>("heads");
  const int span = in.get<std::int32_t>("span");
  const int residual = in.get<std::int32_t>("residual");
  if (channels <= 0 || heads <= 0 || span <= 0 || channels % heads != 0 || (residual != 0 && residual != 1))
    throw FormatError("attention params: invalid configuration", sizeof(kAttentionMagic));
  const std::size_t expected = static_cast<std::size_t>(channels) * channels * 2 +
                               static_cast<std::size_t>(heads) * 3 * (channels / heads) * (channels + span);
  if (bytes.size() != in.offset() + expected * 8)
    throw FormatError("attention params: expected " + std::to_string(expected) + " float64 values",
                      std::min(bytes.size(), in.offset() + expected * 8));
  auto p = AttentionParams<double>::zeros(channels, heads, span, residual == 1);
  detail::for_each_matrix(p, [&](RowMatrix<double>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = in.get<double>("matrix");
  });
  return p;
}

inline AttentionParams<double> read_attention_params(const std::string& path) {
  try {
    return parse_attention_params(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.message(), e.offset());
  }
}

inline void write_attention_params(const std::string& path, const AttentionParams<double>& p) {
  write_file(path, serialize_attention_params(p));
}

/// Feature tensors travel as single-channel PFM images of width w * channels.
inline PfmImage tensor_to_pfm(const FeatureMap<double>& x) {
  PfmImage img{x.width * x.channels, x.height, 1, std::vector<float>(x.data.size())};
  for (std::size_t i = 0; i < x.data.size(); ++i) img.data[i] = static_cast<float>(x.data[i]);
  return img;
}

inline FeatureMap<double> tensor_from_pfm(const PfmImage& img, int channels) {
  if (img.channels != 1) throw FormatError("tensor: expected a single-channel PFM", 0);
  if (channels <= 0 || img.width % channels != 0)
    throw DomainError("tensor: width " + std::to_string(img.width) + " is not a multiple of " + std::to_string(channels) +
                      " channels");
  auto x = FeatureMap<double>::zeros(img.height, img.width / channels, channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) x.data[i] = img.data[i];
  return x;
}

}  // namespace omnistereo::io
