// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tavlad/error.hpp"
#include "tavlad/numerics/tensor.hpp"

namespace tavlad {

// T frames of a rows x cols grid of P-channel feature vectors, stored as a
// T x N x P tensor with N = rows * cols.
class FeatureVolume {
 public:
  FeatureVolume() = default;

  FeatureVolume(std::size_t frames, std::size_t grid_rows, std::size_t grid_cols,
                std::size_t channels)
      : rows_(grid_rows), cols_(grid_cols), data_({frames, grid_rows * grid_cols, channels}) {
    TAVLAD_REQUIRE(frames > 0 && grid_rows > 0 && grid_cols > 0 && channels > 0,
                   "feature volume dims must be positive");
  }

  FeatureVolume(std::size_t grid_rows, std::size_t grid_cols, Tensor data)
      : rows_(grid_rows), cols_(grid_cols), data_(std::move(data)) {
    TAVLAD_REQUIRE(data_.ndim() == 3, "feature volume tensor must be 3-d");
    TAVLAD_REQUIRE(data_.dims()[1] == rows_ * cols_, "feature volume has ", data_.dims()[1],
                   " cells for a ", rows_, "x", cols_, " grid");
  }

  std::size_t frames() const noexcept { return data_.empty() ? 0 : data_.dims()[0]; }
  std::size_t cells() const noexcept { return rows_ * cols_; }
  std::size_t channels() const noexcept { return data_.empty() ? 0 : data_.dims()[2]; }
  std::size_t grid_rows() const noexcept { return rows_; }
  std::size_t grid_cols() const noexcept { return cols_; }

  const Tensor& tensor() const noexcept { return data_; }
  Tensor& tensor() noexcept { return data_; }

  double& at(std::size_t t, std::size_t cell, std::size_t ch) {
    return data_[(t * cells() + cell) * channels() + ch];
  }
  double at(std::size_t t, std::size_t cell, std::size_t ch) const {
    return data_[(t * cells() + cell) * channels() + ch];
  }

  std::span<const double> cell(std::size_t t, std::size_t c) const {
    return data_.data().subspan((t * cells() + c) * channels(), channels());
  }
  std::span<double> cell(std::size_t t, std::size_t c) {
    return data_.data().subspan((t * cells() + c) * channels(), channels());
  }

  // Frame t as an N x P matrix.
  Tensor frame(std::size_t t) const {
    TAVLAD_REQUIRE(t < frames(), "frame ", t, " out of range (", frames(), " frames)");
    auto s = data_.data().subspan(t * cells() * channels(), cells() * channels());
    return Tensor({cells(), channels()}, std::vector<double>(s.begin(), s.end()));
  }

  // New volume made of the given frames, in order (duplicates allowed).
  FeatureVolume select_frames(std::span<const std::size_t> indices) const {
    FeatureVolume out(indices.size(), rows_, cols_, channels());
    const std::size_t stride = cells() * channels();
    for (std::size_t j = 0; j < indices.size(); ++j) {
      TAVLAD_REQUIRE(indices[j] < frames(), "frame index ", indices[j], " out of range");
      auto src = data_.data().subspan(indices[j] * stride, stride);
      std::copy(src.begin(), src.end(), out.data_.data().begin() + static_cast<long>(j * stride));
    }
    return out;
  }

  friend bool operator==(const FeatureVolume&, const FeatureVolume&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Tensor data_;
};

}  // namespace tavlad
