// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>

#include "tavlad/attention.hpp"
#include "tavlad/dataio/binary.hpp"
#include "tavlad/dataio/feature_volume.hpp"

// On-disk formats. All integers are 32-bit little-endian unsigned, all
// payload values 32-bit little-endian IEEE-754 floats.
//
// TAVF (feature volume):
//   "TAVF" | version=1 | T | rows | cols | P | T*rows*cols*P floats [t][cell][channel]
//
// TAVW (attention / classifier weights):
//   "TAVW" | version=1 | C | P | has_bias:u8 | C*P floats row-major | [C bias floats]
namespace tavlad {

inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::uint32_t kWeightsFormatVersion = 1;

namespace detail {

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max())
    throw ContractError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

inline std::uint32_t read_positive(io::ByteReader& in, const char* what) {
  const std::uint64_t at = in.offset();
  const std::uint32_t v = in.u32();
  if (v == 0) throw FormatError(std::string(what) + " must be positive", at);
  return v;
}

inline double read_finite_f32(io::ByteReader& in) {
  const std::uint64_t at = in.offset();
  const double v = in.f32();
  if (!std::isfinite(v)) throw FormatError("non-finite value in payload", at);
  return v;
}

}  // namespace detail

inline io::ByteWriter encode_features(const FeatureVolume& v) {
  io::ByteWriter out;
  out.bytes("TAVF");
  out.u32(kFeatureFormatVersion);
  out.u32(detail::checked_u32(v.frames(), "frame count"));
  out.u32(detail::checked_u32(v.grid_rows(), "grid rows"));
  out.u32(detail::checked_u32(v.grid_cols(), "grid cols"));
  out.u32(detail::checked_u32(v.channels(), "channel count"));
  for (double x : v.tensor().data()) out.f32(static_cast<float>(x));
  return out;
}

inline FeatureVolume decode_features(io::ByteReader& in) {
  in.expect_magic("TAVF");
  in.expect_version(kFeatureFormatVersion);
  const std::uint32_t frames = detail::read_positive(in, "frame count");
  const std::uint32_t rows = detail::read_positive(in, "grid rows");
  const std::uint32_t cols = detail::read_positive(in, "grid cols");
  const std::uint32_t channels = detail::read_positive(in, "channel count");
  const std::uint64_t count = std::uint64_t{frames} * rows * cols * channels;
  in.need(count * 4, "feature payload");
  FeatureVolume v(frames, rows, cols, channels);
  for (double& x : v.tensor().data()) x = detail::read_finite_f32(in);
  in.expect_end();
  return v;
}

inline void write_features(const FeatureVolume& v, const std::filesystem::path& path) {
  encode_features(v).save(path);
}

inline FeatureVolume read_features(const std::filesystem::path& path) {
  auto in = io::ByteReader::open(path);
  return decode_features(in);
}

inline io::ByteWriter encode_attention_weights(const AttentionWeights& aw) {
  aw.validate();
  io::ByteWriter out;
  out.bytes("TAVW");
  out.u32(kWeightsFormatVersion);
  out.u32(detail::checked_u32(aw.classes(), "class count"));
  out.u32(detail::checked_u32(aw.channels(), "channel count"));
  out.u8(aw.bias ? 1 : 0);
  for (double x : aw.weights.data()) out.f32(static_cast<float>(x));
  if (aw.bias)
    for (double x : aw.bias->data()) out.f32(static_cast<float>(x));
  return out;
}

inline AttentionWeights decode_attention_weights(io::ByteReader& in) {
  in.expect_magic("TAVW");
  in.expect_version(kWeightsFormatVersion);
  const std::uint32_t classes = detail::read_positive(in, "class count");
  const std::uint32_t channels = detail::read_positive(in, "channel count");
  const std::uint64_t flag_at = in.offset();
  const std::uint8_t has_bias = in.u8();
  if (has_bias > 1) throw FormatError("bias flag must be 0 or 1", flag_at);
  in.need((std::uint64_t{classes} * channels + (has_bias ? classes : 0)) * 4, "weights payload");
  AttentionWeights aw{Tensor::matrix(classes, channels), std::nullopt};
  for (double& x : aw.weights.data()) x = detail::read_finite_f32(in);
  if (has_bias) {
    aw.bias = Tensor::matrix(1, classes);
    for (double& x : aw.bias->data()) x = detail::read_finite_f32(in);
  }
  in.expect_end();
  return aw;
}

inline void write_attention_weights(const AttentionWeights& aw, const std::filesystem::path& path) {
  encode_attention_weights(aw).save(path);
}

inline AttentionWeights read_attention_weights(const std::filesystem::path& path) {
  auto in = io::ByteReader::open(path);
  return decode_attention_weights(in);
}

}  // namespace tavlad
