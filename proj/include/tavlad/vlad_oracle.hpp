// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "tavlad/codebook.hpp"
#include "tavlad/vlad.hpp"

// Reference VLAD by explicit loops over (cell, cluster, channel). Shares no
// code with the tape-based encoder; used to cross-check it.
namespace tavlad {

enum class AssignmentMode { soft, hard };

inline FrameDescriptor vlad_oracle(const Tensor& frame, std::optional<std::span<const double>> attn,
                                   const Codebook& cb, AssignmentMode mode) {
  const std::size_t n = frame.rows();
  const std::size_t k = cb.clusters();
  const std::size_t p = cb.channels();
  TAVLAD_REQUIRE(frame.cols() == p, "vlad_oracle: channel mismatch");
  if (attn) TAVLAD_REQUIRE(attn->size() == n, "vlad_oracle: attention length mismatch");

  FrameDescriptor out{Tensor::matrix(k, p), 0};
  std::vector<double> a(k);
  for (std::size_t i = 0; i < n; ++i) {
    const double m = attn ? (*attn)[i] : 1.0;
    if (mode == AssignmentMode::soft) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        double s = cb.assign_bias[c];
        for (std::size_t j = 0; j < p; ++j) s += cb.assign_weights(c, j) * frame(i, j);
        a[c] = s;
        best = std::max(best, s);
      }
      double z = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        a[c] = std::exp(a[c] - best);
        z += a[c];
      }
      for (std::size_t c = 0; c < k; ++c) a[c] = m * a[c] / z;
    } else {
      std::size_t nearest = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        double d = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
          const double diff = frame(i, j) - cb.centers(c, j);
          d += diff * diff;
        }
        if (d < best) {
          best = d;
          nearest = c;
        }
      }
      for (std::size_t c = 0; c < k; ++c) a[c] = c == nearest ? m : 0.0;
    }
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t j = 0; j < p; ++j) out.values(c, j) += a[c] * (frame(i, j) - cb.centers(c, j));
  }
  return out;
}

}  // namespace tavlad
