// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tavlad/error.hpp"
#include "tavlad/numerics/tensor.hpp"

namespace tavlad {

// Norms below this are treated as degenerate and passed through unchanged.
inline constexpr double kNormEps = 1e-12;

inline std::vector<double> softmax(std::span<const double> v) {
  TAVLAD_REQUIRE(!v.empty(), "softmax of an empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

inline double sigmoid(double x) noexcept {
  // Split on sign so exp never overflows.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct Normalized {
  std::vector<double> values;
  bool degenerate = false;
};

inline Normalized l2_normalize(std::span<const double> v, double eps = kNormEps) {
  TAVLAD_REQUIRE(eps > 0.0, "l2_normalize eps must be positive");
  Normalized out{std::vector<double>(v.begin(), v.end()), false};
  const double n = l2_norm(v);
  if (n < eps) {
    out.degenerate = true;
    return out;
  }
  for (double& x : out.values) x /= n;
  return out;
}

struct IntraNormalized {
  Tensor values;
  std::size_t degenerate_rows = 0;
};

inline IntraNormalized intra_normalize(const Tensor& m, double eps = kNormEps) {
  IntraNormalized out{m, 0};
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = l2_normalize(m.row_span(r), eps);
    if (row.degenerate) ++out.degenerate_rows;
    std::copy(row.values.begin(), row.values.end(), out.values.row_span(r).begin());
  }
  return out;
}

}  // namespace tavlad
