// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tavlad/attention.hpp"
#include "tavlad/error.hpp"

namespace tavlad {

// round(m * 255), halves away from zero.
inline unsigned char attention_pixel(double m) {
  return static_cast<unsigned char>(std::clamp(std::round(m * 255.0), 0.0, 255.0));
}

// Binary PGM: "P5 <cols> <rows> 255\n" followed by rows*cols bytes.
inline std::string encode_pgm(std::span<const double> values, std::size_t rows, std::size_t cols) {
  TAVLAD_REQUIRE(values.size() == rows * cols, "pgm: ", values.size(), " values for a ", rows, "x",
                 cols, " image");
  std::string out = "P5 " + std::to_string(cols) + " " + std::to_string(rows) + " 255\n";
  for (double m : values) out.push_back(static_cast<char>(attention_pixel(m)));
  return out;
}

// Writes frame_<t>.pgm for every frame of the map.
inline std::vector<std::filesystem::path> export_attention_pgm(const AttentionMap& attn,
                                                               std::size_t rows, std::size_t cols,
                                                               const std::filesystem::path& out_dir) {
  TAVLAD_REQUIRE(attn.values.cols() == rows * cols, "pgm: attention map has ", attn.values.cols(),
                 " cells for a ", rows, "x", cols, " grid");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (std::size_t t = 0; t < attn.values.rows(); ++t) {
    const auto path = out_dir / ("frame_" + std::to_string(t) + ".pgm");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    const std::string img = encode_pgm(attn.values.row_span(t), rows, cols);
    out.write(img.data(), static_cast<std::streamsize>(img.size()));
    if (!out) throw IoError("write failed: " + path.string());
    written.push_back(path);
  }
  return written;
}

}  // namespace tavlad
