// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <vector>

#include "tavlad/dataio/feature_volume.hpp"
#include "tavlad/error.hpp"
#include "tavlad/numerics/ops.hpp"
#include "tavlad/numerics/tape.hpp"
#include "tavlad/numerics/tensor.hpp"

// Top-down attention from class activation maps.
//
// For frame features f (N cells x P channels) and classifier weights w
// (C classes x P channels):
//   winning class  c* = argmax_c  mean_i(f_i) . w^c + b_c
//   CAM            M(i) = f_i . w^{c*}
//   attention      m_i = sigmoid(M(i))
// The winning class is a constant for differentiation; only row c* of w
// receives gradient.
namespace tavlad {

struct AttentionWeights {
  Tensor weights;             // C x P
  std::optional<Tensor> bias;  // 1 x C

  std::size_t classes() const noexcept { return weights.rows(); }
  std::size_t channels() const noexcept { return weights.cols(); }

  void validate() const {
    TAVLAD_REQUIRE(weights.ndim() == 2 && classes() >= 1 && channels() >= 1,
                   "attention weights must be a non-empty C x P matrix");
    TAVLAD_REQUIRE(weights.all_finite(), "attention weights contain non-finite entries");
    if (bias) {
      TAVLAD_REQUIRE(bias->size() == classes(), "attention bias has ", bias->size(),
                     " entries for ", classes(), " classes");
      TAVLAD_REQUIRE(bias->all_finite(), "attention bias contains non-finite entries");
    }
  }

  friend bool operator==(const AttentionWeights&, const AttentionWeights&) = default;
};

// sigmoid saturates to exactly 0 or 1 in double precision for |x| > ~37;
// attention is kept inside the open interval.
inline constexpr double kMinAttention = 0x1.0p-1022;
inline constexpr double kMaxAttention = 1.0 - 0x1.0p-53;

inline double attention_value(double cam_value) noexcept {
  return std::clamp(sigmoid(cam_value), kMinAttention, kMaxAttention);
}

struct CamMap {
  std::vector<double> values;  // length N, pre-sigmoid
  std::size_t class_index = 0;
};

struct AttentionMap {
  Tensor values;  // T x N, entries in (0, 1)
};

// Per-class logits of the spatially averaged frame.
inline std::vector<double> class_logits(const Tensor& frame, const Tensor& weights,
                                        const Tensor* bias) {
  TAVLAD_REQUIRE(frame.cols() == weights.cols(), "attention: frame has ", frame.cols(),
                 " channels, weights expect ", weights.cols());
  TAVLAD_REQUIRE(frame.rows() >= 1, "attention: frame has no cells");
  std::vector<double> pooled(frame.cols(), 0.0);
  for (std::size_t i = 0; i < frame.rows(); ++i)
    for (std::size_t l = 0; l < frame.cols(); ++l) pooled[l] += frame(i, l);
  for (double& v : pooled) v /= static_cast<double>(frame.rows());

  std::vector<double> logits(weights.rows(), 0.0);
  for (std::size_t c = 0; c < weights.rows(); ++c) {
    double s = 0.0;
    for (std::size_t l = 0; l < pooled.size(); ++l) s += pooled[l] * weights(c, l);
    logits[c] = s + (bias ? (*bias)[c] : 0.0);
  }
  return logits;
}

inline std::vector<double> class_logits(const Tensor& frame, const AttentionWeights& aw) {
  return class_logits(frame, aw.weights, aw.bias ? &*aw.bias : nullptr);
}

// Ties go to the lowest class index.
inline std::size_t winning_class(const Tensor& frame, const Tensor& weights, const Tensor* bias) {
  const auto logits = class_logits(frame, weights, bias);
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = c;
  return best;
}

inline std::size_t winning_class(const Tensor& frame, const AttentionWeights& aw) {
  return winning_class(frame, aw.weights, aw.bias ? &*aw.bias : nullptr);
}

inline CamMap cam(const Tensor& frame, const AttentionWeights& aw, std::size_t c) {
  TAVLAD_REQUIRE(c < aw.classes(), "cam: class ", c, " out of range (", aw.classes(), " classes)");
  TAVLAD_REQUIRE(frame.cols() == aw.channels(), "cam: frame has ", frame.cols(),
                 " channels, weights expect ", aw.channels());
  CamMap out{std::vector<double>(frame.rows(), 0.0), c};
  for (std::size_t i = 0; i < frame.rows(); ++i) {
    double s = 0.0;
    for (std::size_t l = 0; l < frame.cols(); ++l) s += aw.weights(c, l) * frame(i, l);
    out.values[i] = s;
  }
  return out;
}

inline AttentionMap attention_map(const FeatureVolume& video, const AttentionWeights& aw) {
  TAVLAD_REQUIRE(video.frames() >= 1, "attention_map: empty video");
  AttentionMap out{Tensor::matrix(video.frames(), video.cells())};
  for (std::size_t t = 0; t < video.frames(); ++t) {
    const Tensor f = video.frame(t);
    const CamMap m = cam(f, aw, winning_class(f, aw));
    for (std::size_t i = 0; i < m.values.size(); ++i) out.values(t, i) = attention_value(m.values[i]);
  }
  return out;
}

namespace ad {

// Differentiable attention for one frame: returns an N x 1 column of m_i.
// `weights` is the C x P weight Var; the bias only takes part in choosing
// the winning class.
inline Var frame_attention(Var frame, Var weights, const std::optional<Tensor>& bias) {
  const std::size_t c = winning_class(frame.value(), weights.value(), bias ? &*bias : nullptr);
  return clamp(sigmoid(matmul(frame, select_row(weights, c), false, true)), kMinAttention,
               kMaxAttention);
}

}  // namespace ad

}  // namespace tavlad
