// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tavlad/attention.hpp"
#include "tavlad/codebook.hpp"
#include "tavlad/dataio/feature_volume.hpp"
#include "tavlad/error.hpp"
#include "tavlad/numerics/tape.hpp"

// Attention-weighted soft-assignment VLAD.
//
//   a_k(x_i) = m_i * softmax_k(W_k . x_i + B_k)
//   V[k][j]  = sum_i a_k(x_i) * (x_i[j] - c_k[j])
//
// The frame descriptor V is K x P. The temporal-sum baseline adds the frame
// descriptors of a video.
namespace tavlad {

struct Membership {
  Tensor values;  // N x K
};

struct FrameDescriptor {
  Tensor values;  // K x P
  std::size_t frame_index = 0;
};

struct SumVideoDescriptor {
  Tensor values;  // K x P
};

namespace ad {

struct CodebookVars {
  Var centers;
  Var assign_weights;
  Var assign_bias;
};

inline CodebookVars constant_codebook(Tape& tape, const Codebook& cb) {
  return {tape.constant(cb.centers), tape.constant(cb.assign_weights),
          tape.constant(cb.assign_bias)};
}

// N x K membership; attn is an N x 1 column of m_i or absent (m_i = 1).
inline Var membership(Var frame, std::optional<Var> attn, const CodebookVars& cb) {
  const Tensor& f = frame.value();
  TAVLAD_REQUIRE(f.cols() == cb.centers.value().cols(), "membership: frame has ", f.cols(),
                 " channels, codebook has ", cb.centers.value().cols());
  const Var scores = add_row(matmul(frame, cb.assign_weights, false, true), cb.assign_bias);
  const Var soft = softmax_rows(scores);
  if (!attn) return soft;
  TAVLAD_REQUIRE(attn->value().size() == f.rows(), "membership: attention has ",
                 attn->value().size(), " entries for ", f.rows(), " cells");
  return scale_rows(soft, *attn);
}

// K x P frame descriptor.
inline Var encode_frame(Var frame, std::optional<Var> attn, const CodebookVars& cb) {
  const Var a = membership(frame, attn, cb);
  const Var weighted = matmul(a, frame, true, false);
  const Var mass = col_sum(a);
  return sub(weighted, scale_rows(cb.centers, mass));
}

}  // namespace ad

namespace detail {

inline void check_attention(std::span<const double> attn, std::size_t cells) {
  TAVLAD_REQUIRE(attn.size() == cells, "attention has ", attn.size(), " entries for ", cells,
                 " cells");
  for (double m : attn)
    TAVLAD_REQUIRE(m > 0.0 && m < 1.0, "attention values must lie in (0, 1), got ", m);
}

}  // namespace detail

inline Membership membership(const Tensor& frame, std::optional<std::span<const double>> attn,
                             const Codebook& cb) {
  ad::Tape tape;
  const ad::Var f = tape.constant(frame);
  std::optional<ad::Var> m;
  if (attn) {
    detail::check_attention(*attn, frame.rows());
    m = tape.constant(Tensor({attn->size(), 1}, std::vector<double>(attn->begin(), attn->end())));
  }
  return {ad::membership(f, m, ad::constant_codebook(tape, cb)).value()};
}

inline FrameDescriptor encode_frame(const Tensor& frame,
                                    std::optional<std::span<const double>> attn,
                                    const Codebook& cb, std::size_t frame_index = 0) {
  ad::Tape tape;
  const ad::Var f = tape.constant(frame);
  std::optional<ad::Var> m;
  if (attn) {
    detail::check_attention(*attn, frame.rows());
    m = tape.constant(Tensor({attn->size(), 1}, std::vector<double>(attn->begin(), attn->end())));
  }
  return {ad::encode_frame(f, m, ad::constant_codebook(tape, cb)).value(), frame_index};
}

inline std::vector<FrameDescriptor> encode_frames(const FeatureVolume& video,
                                                  const AttentionMap* attn, const Codebook& cb) {
  TAVLAD_REQUIRE(video.frames() >= 1, "encode: empty video");
  if (attn)
    TAVLAD_REQUIRE(attn->values.rows() == video.frames() && attn->values.cols() == video.cells(),
                   "encode: attention map shape does not match the video");
  std::vector<FrameDescriptor> out;
  out.reserve(video.frames());
  for (std::size_t t = 0; t < video.frames(); ++t) {
    std::optional<std::span<const double>> m;
    if (attn) m = attn->values.row_span(t);
    out.push_back(encode_frame(video.frame(t), m, cb, t));
  }
  return out;
}

inline SumVideoDescriptor encode_video_sum(const FeatureVolume& video, const AttentionMap* attn,
                                           const Codebook& cb) {
  const auto frames = encode_frames(video, attn, cb);
  SumVideoDescriptor out{Tensor::matrix(cb.clusters(), cb.channels())};
  for (const auto& f : frames) out.values += f.values;
  return out;
}

}  // namespace tavlad
