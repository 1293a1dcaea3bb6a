// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tavlad/attention.hpp"
#include "tavlad/dataio/formats.hpp"
#include "tavlad/dataio/manifest.hpp"
#include "tavlad/error.hpp"
#include "tavlad/numerics/rng.hpp"

// Desk-scale synthetic action dataset.
//
// Each class owns an ordered list of `segments` unit prototypes. Over the
// frames of a video the signal feature moves linearly from one prototype to
// the next, so the class is defined by the order in which prototypes are
// visited. With `reversed_pairs`, class 2p+1 is made of the exact frame
// reversals of the videos of class 2p: both classes contain the same
// multiset of frames and differ only in temporal order.
//
// In every frame, `signal_cells` consecutive cells (row-major, wrapping)
// starting at an anchor that random-walks over the grid carry the signal
// feature plus N(0, noise^2) per channel; all other cells are pure noise.
// The attention weights file holds one row per prototype, scaled by
// `attention_scale`, standing in for a pretrained object classifier.
namespace tavlad {

struct SyntheticSpec {
  std::size_t num_classes = 4;
  std::size_t videos_per_class = 40;
  std::size_t frames = 12;
  std::size_t grid_rows = 4;
  std::size_t grid_cols = 4;
  std::size_t channels = 16;
  std::size_t segments = 2;
  std::size_t prototypes = 0;  // 0: exactly as many as the classes need
  double noise = 0.1;
  std::size_t signal_cells = 3;
  bool reversed_pairs = true;
  bool clamp_nonnegative = false;
  double attention_scale = 4.0;
  std::size_t sample_frames = 8;
  double train_fraction = 0.5;
  double val_fraction = 0.25;
  std::uint64_t seed = 0;

  std::size_t prototype_groups() const {
    return reversed_pairs ? (num_classes + 1) / 2 : num_classes;
  }
  std::size_t required_prototypes() const { return prototype_groups() * segments; }
  std::size_t prototype_count() const {
    return prototypes == 0 ? required_prototypes() : prototypes;
  }
  std::size_t cells() const { return grid_rows * grid_cols; }

  // Class 2p+1 is the reversal of class 2p when pairing is on.
  bool is_reversed(std::size_t c) const { return reversed_pairs && c % 2 == 1; }
  bool has_partner(std::size_t c) const {
    return reversed_pairs && (c % 2 == 1 || c + 1 < num_classes);
  }

  std::size_t train_count() const {
    return static_cast<std::size_t>(std::floor(train_fraction * videos_per_class));
  }
  std::size_t val_count() const {
    return static_cast<std::size_t>(std::floor(val_fraction * videos_per_class));
  }
  std::size_t test_count() const { return videos_per_class - train_count() - val_count(); }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("synthetic spec: " + m); };
    if (num_classes < 1) fail("num_classes must be at least 1");
    if (videos_per_class < 1) fail("videos_per_class must be at least 1");
    if (frames < 1 || grid_rows < 1 || grid_cols < 1 || channels < 1)
      fail("frames, grid and channels must be positive");
    if (segments < 1) fail("segments must be at least 1");
    if (signal_cells < 1 || signal_cells > cells())
      fail("signal_cells=" + std::to_string(signal_cells) + " does not fit a " +
           std::to_string(grid_rows) + "x" + std::to_string(grid_cols) + " grid");
    if (prototype_count() < required_prototypes())
      fail("needs at least " + std::to_string(required_prototypes()) + " prototypes");
    if (!(noise >= 0.0)) fail("noise must be non-negative");
    if (!(attention_scale > 0.0)) fail("attention_scale must be positive");
    if (sample_frames < 1) fail("sample_frames must be at least 1");
    if (train_fraction <= 0.0 || val_fraction <= 0.0 || train_fraction + val_fraction >= 1.0)
      fail("split fractions must be positive and leave room for a test split");
    if (train_count() == 0 || val_count() == 0 || test_count() == 0)
      fail("videos_per_class too small for a non-empty train/val/test split");
  }
};

enum class Split { train, val, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

struct SyntheticVideo {
  FeatureVolume features;
  FeatureVolume mask;  // T x N x 1, 1 on signal cells
  std::size_t label = 0;
  std::size_t index = 0;  // within its class
  Split split = Split::train;
};

struct SyntheticDataset {
  SyntheticSpec spec;
  Tensor prototypes;  // prototype_count x P
  AttentionWeights attention;
  std::vector<SyntheticVideo> videos;  // class-major, index-minor
};

namespace detail {

inline Tensor draw_prototypes(const SyntheticSpec& spec, Rng rng) {
  Tensor protos = Tensor::matrix(spec.prototype_count(), spec.channels);
  for (std::size_t k = 0; k < protos.rows(); ++k) {
    auto row = protos.row_span(k);
    double norm = 0.0;
    do {
      for (double& x : row) {
        x = rng.normal();
        if (spec.clamp_nonnegative) x = std::abs(x);
      }
      norm = l2_norm(row);
    } while (norm < 1e-6);
    for (double& x : row) x /= norm;
  }
  return protos;
}

inline std::vector<double> keyframe_mix(const Tensor& protos, std::size_t first, std::size_t segments,
                                        std::size_t t, std::size_t frames) {
  std::vector<double> out(protos.cols(), 0.0);
  if (segments == 1 || frames == 1) {
    auto p = protos.row_span(first);
    std::copy(p.begin(), p.end(), out.begin());
    return out;
  }
  const double u = static_cast<double>(t) / static_cast<double>(frames - 1) *
                   static_cast<double>(segments - 1);
  const std::size_t seg = std::min(static_cast<std::size_t>(u), segments - 2);
  const double w = u - static_cast<double>(seg);
  auto a = protos.row_span(first + seg);
  auto b = protos.row_span(first + seg + 1);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = (1.0 - w) * a[j] + w * b[j];
  return out;
}

inline SyntheticVideo make_video(const SyntheticSpec& spec, const Tensor& protos, std::size_t label,
                                 std::size_t index, Rng rng) {
  const std::size_t n = spec.cells();
  SyntheticVideo v{FeatureVolume(spec.frames, spec.grid_rows, spec.grid_cols, spec.channels),
                   FeatureVolume(spec.frames, spec.grid_rows, spec.grid_cols, 1), label, index,
                   Split::train};
  const std::size_t group = spec.reversed_pairs ? label / 2 : label;
  const std::size_t first = group * spec.segments;

  std::size_t r = static_cast<std::size_t>(rng.uniform_index(spec.grid_rows));
  std::size_t c = static_cast<std::size_t>(rng.uniform_index(spec.grid_cols));
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const auto signal = keyframe_mix(protos, first, spec.segments, t, spec.frames);
    std::vector<bool> is_signal(n, false);
    for (std::size_t j = 0; j < spec.signal_cells; ++j) is_signal[(r * spec.grid_cols + c + j) % n] = true;
    for (std::size_t cell = 0; cell < n; ++cell) {
      auto dst = v.features.cell(t, cell);
      for (std::size_t ch = 0; ch < spec.channels; ++ch) {
        double x = spec.noise * rng.normal();
        if (is_signal[cell]) x += signal[ch];
        dst[ch] = spec.clamp_nonnegative ? std::max(0.0, x) : x;
      }
      v.mask.at(t, cell, 0) = is_signal[cell] ? 1.0 : 0.0;
    }
    switch (rng.uniform_index(5)) {
      case 0: r = r > 0 ? r - 1 : r; break;
      case 1: r = r + 1 < spec.grid_rows ? r + 1 : r; break;
      case 2: c = c > 0 ? c - 1 : c; break;
      case 3: c = c + 1 < spec.grid_cols ? c + 1 : c; break;
      default: break;
    }
  }
  return v;
}

inline FeatureVolume reverse_frames(const FeatureVolume& v) {
  std::vector<std::size_t> idx(v.frames());
  for (std::size_t t = 0; t < idx.size(); ++t) idx[t] = v.frames() - 1 - t;
  return v.select_frames(idx);
}

}  // namespace detail

inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  SyntheticDataset ds;
  ds.spec = spec;
  ds.prototypes = detail::draw_prototypes(spec, root.split("prototypes"));
  ds.attention.weights = ds.prototypes;
  ds.attention.weights *= spec.attention_scale;

  const std::size_t per = spec.videos_per_class;
  for (std::size_t label = 0; label < spec.num_classes; ++label) {
    for (std::size_t i = 0; i < per; ++i) {
      SyntheticVideo v;
      if (spec.is_reversed(label)) {
        const SyntheticVideo& src = ds.videos[(label - 1) * per + i];
        v = SyntheticVideo{detail::reverse_frames(src.features), detail::reverse_frames(src.mask),
                           label, i, Split::train};
      } else {
        v = detail::make_video(spec, ds.prototypes, label, i, root.split("video", label * per + i));
      }
      v.split = i < spec.train_count()                      ? Split::train
                : i < spec.train_count() + spec.val_count() ? Split::val
                                                            : Split::test;
      ds.videos.push_back(std::move(v));
    }
  }
  return ds;
}

// In-memory equivalent of load_dataset on the split's manifest.
inline Dataset synthetic_split(const SyntheticDataset& ds, Split split) {
  Dataset out;
  for (const auto& v : ds.videos) {
    if (v.split != split) continue;
    const auto idx = uniform_sample(v.features.frames(), ds.spec.sample_frames);
    out.push_back({v.features.select_frames(idx), v.label});
  }
  return out;
}

inline std::filesystem::path mask_path_for(const std::filesystem::path& features) {
  std::filesystem::path p = features;
  p.replace_extension(".mask.tavf");
  return p;
}

struct SyntheticFiles {
  std::filesystem::path train_manifest;
  std::filesystem::path val_manifest;
  std::filesystem::path test_manifest;
  std::filesystem::path attention_weights;
  std::size_t train = 0, val = 0, test = 0;
};

// Writes attention.tavw, {train,val,test}.manifest and videos/ under out_dir.
inline SyntheticFiles write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "videos", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "videos").string() + ": " + ec.message());

  SyntheticFiles files;
  files.attention_weights = out_dir / "attention.tavw";
  write_attention_weights(ds.attention, files.attention_weights);

  DatasetManifest base;
  base.num_classes = ds.spec.num_classes;
  base.channels = ds.spec.channels;
  base.grid_rows = ds.spec.grid_rows;
  base.grid_cols = ds.spec.grid_cols;
  base.attention_weights = "attention.tavw";
  base.sample_frames = ds.spec.sample_frames;
  DatasetManifest train = base, val = base, test = base;

  for (const auto& v : ds.videos) {
    const fs::path rel = fs::path("videos") / ("c" + std::to_string(v.label) + "_v" +
                                               std::to_string(v.index) + ".tavf");
    write_features(v.features, out_dir / rel);
    write_features(v.mask, out_dir / mask_path_for(rel));
    DatasetManifest& m = v.split == Split::train ? train : v.split == Split::val ? val : test;
    m.records.push_back({rel, v.label});
  }
  files.train_manifest = out_dir / "train.manifest";
  files.val_manifest = out_dir / "val.manifest";
  files.test_manifest = out_dir / "test.manifest";
  write_manifest(train, files.train_manifest);
  write_manifest(val, files.val_manifest);
  write_manifest(test, files.test_manifest);
  files.train = train.records.size();
  files.val = val.records.size();
  files.test = test.records.size();
  return files;
}

// Signal masks for every record of a synthetic manifest, frame-sampled the
// same way as load_dataset. Each entry is T_sample x N.
inline std::vector<Tensor> load_masks(const DatasetManifest& m) {
  std::vector<Tensor> out;
  for (const auto& r : m.records) {
    const FeatureVolume mask = read_features(m.resolve(mask_path_for(r.features)));
    const auto sampled = mask.select_frames(uniform_sample(mask.frames(), m.sample_frames));
    out.push_back(sampled.tensor().reshaped({sampled.frames(), sampled.cells()}));
  }
  return out;
}

}  // namespace tavlad
