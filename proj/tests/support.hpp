// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "tavlad/tavlad.hpp"

namespace tavlad::testing {

inline Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (double& x : t.data()) x = scale * rng.normal();
  return t;
}

inline FeatureVolume random_volume(Rng& rng, std::size_t frames, std::size_t rows, std::size_t cols,
                                   std::size_t channels) {
  FeatureVolume v(frames, rows, cols, channels);
  for (double& x : v.tensor().data()) x = rng.normal();
  return v;
}

inline std::vector<double> random_attention(Rng& rng, std::size_t n) {
  std::vector<double> m(n);
  for (double& x : m) x = rng.uniform(0.05, 0.95);
  return m;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string bytes_of(const io::ByteWriter& w) {
  return {w.buffer().begin(), w.buffer().end()};
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "tavlad";
    if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    for (char& ch : name)
      if (ch == '/') ch = '_';
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace tavlad::testing
