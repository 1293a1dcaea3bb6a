// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tavlad/dataio/binary.hpp"
#include "tavlad/dataio/formats.hpp"
#include "tavlad/numerics/grad_check.hpp"

// TAVC checkpoint container, little-endian throughout:
//
//   "TAVC" | version:u32 = 1 | tensor_count:u32
//   tensor_count x { name_len:u32 | name bytes | ndim:u32 | ndim x dim:u32 |
//                    prod(dims) x f64 }
//   flags: aggregator:u8 (0 = gru, 1 = sum) | attention_enabled:u8 |
//          dropout_rate:f64 | stage:u32
namespace tavlad {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct CheckpointFlags {
  std::uint8_t aggregator = 0;
  std::uint8_t attention_enabled = 1;
  double dropout_rate = 0.5;
  std::uint32_t stage = 0;

  friend bool operator==(const CheckpointFlags&, const CheckpointFlags&) = default;
};

struct Checkpoint {
  std::vector<NamedTensor> tensors;  // file order is preserved
  CheckpointFlags flags;

  const Tensor* find(std::string_view name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t.value;
    return nullptr;
  }
};

inline io::ByteWriter encode_checkpoint(const Checkpoint& ck) {
  io::ByteWriter out;
  out.bytes("TAVC");
  out.u32(kCheckpointFormatVersion);
  out.u32(detail::checked_u32(ck.tensors.size(), "tensor count"));
  for (const auto& t : ck.tensors) {
    out.u32(detail::checked_u32(t.name.size(), "tensor name length"));
    out.bytes(t.name);
    out.u32(detail::checked_u32(t.value.ndim(), "tensor rank"));
    for (std::size_t d : t.value.dims()) out.u32(detail::checked_u32(d, "tensor dim"));
    for (double x : t.value.data()) out.f64(x);
  }
  out.u8(ck.flags.aggregator);
  out.u8(ck.flags.attention_enabled);
  out.f64(ck.flags.dropout_rate);
  out.u32(ck.flags.stage);
  return out;
}

inline Checkpoint decode_checkpoint(io::ByteReader& in) {
  in.expect_magic("TAVC");
  in.expect_version(kCheckpointFormatVersion);
  Checkpoint ck;
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint32_t name_len = in.u32();
    t.name = in.string(name_len);
    const std::uint64_t rank_at = in.offset();
    const std::uint32_t rank = in.u32();
    if (rank == 0) throw FormatError("tensor \"" + t.name + "\" has rank 0", rank_at);
    std::vector<std::size_t> dims;
    std::uint64_t elements = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t extent = detail::read_positive(in, "tensor dim");
      dims.push_back(extent);
      elements *= extent;
    }
    in.need(elements * 8, "tensor payload");
    std::vector<double> data(elements);
    for (double& x : data) x = in.f64();
    t.value = Tensor(std::move(dims), std::move(data));
    ck.tensors.push_back(std::move(t));
  }
  const std::uint64_t flags_at = in.offset();
  ck.flags.aggregator = in.u8();
  ck.flags.attention_enabled = in.u8();
  if (ck.flags.aggregator > 1 || ck.flags.attention_enabled > 1)
    throw FormatError("flag bytes must be 0 or 1", flags_at);
  const std::uint64_t rate_at = in.offset();
  ck.flags.dropout_rate = in.f64();
  if (!(ck.flags.dropout_rate >= 0.0 && ck.flags.dropout_rate < 1.0))
    throw FormatError("dropout rate outside [0, 1)", rate_at);
  ck.flags.stage = in.u32();
  in.expect_end();
  return ck;
}

inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  encode_checkpoint(ck).save(path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  auto in = io::ByteReader::open(path);
  return decode_checkpoint(in);
}

}  // namespace tavlad
