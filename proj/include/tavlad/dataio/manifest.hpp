// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tavlad/dataio/formats.hpp"
#include "tavlad/error.hpp"

namespace tavlad {

// Frame indices floor((j + 0.5) * total / count) for j in [0, count).
inline std::vector<std::size_t> uniform_sample(std::size_t total, std::size_t count) {
  TAVLAD_REQUIRE(total >= 1 && count >= 1, "uniform_sample needs total >= 1 and count >= 1");
  std::vector<std::size_t> idx(count);
  for (std::size_t j = 0; j < count; ++j) idx[j] = ((2 * j + 1) * total) / (2 * count);
  return idx;
}

struct ManifestRecord {
  std::filesystem::path features;  // as written in the manifest
  std::size_t label = 0;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

// Text manifest, one "key value" header line each, then the records:
//
//   tavlad-manifest 1
//   num_classes 4
//   channels 16
//   grid 4 4
//   attention_weights attention.tavw
//   sample_frames 8
//   records 2
//   train/v0000.tavf 0
//   train/v0001.tavf 1
//
// Relative paths resolve against the manifest's directory. Paths must not
// contain whitespace.
struct DatasetManifest {
  std::size_t num_classes = 0;
  std::size_t channels = 0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::filesystem::path attention_weights;
  std::size_t sample_frames = 0;
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;  // not serialized

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
  }

  std::filesystem::path attention_weights_path() const { return resolve(attention_weights); }
};

inline std::string manifest_text(const DatasetManifest& m) {
  std::ostringstream out;
  out << "tavlad-manifest 1\n"
      << "num_classes " << m.num_classes << "\n"
      << "channels " << m.channels << "\n"
      << "grid " << m.grid_rows << " " << m.grid_cols << "\n"
      << "attention_weights " << m.attention_weights.generic_string() << "\n"
      << "sample_frames " << m.sample_frames << "\n"
      << "records " << m.records.size() << "\n";
  for (const auto& r : m.records) out << r.features.generic_string() << " " << r.label << "\n";
  return out.str();
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << manifest_text(m);
  if (!out) throw IoError("write failed: " + path.string());
}

namespace detail {

class LineParser {
 public:
  LineParser(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::istringstream next(const char* expecting) {
    line_start_ = offset_;
    std::string line;
    if (!std::getline(in_, line)) fail(std::string("unexpected end of file, expected ") + expecting);
    offset_ += line.size() + 1;
    return std::istringstream(line);
  }

  template <typename T>
  T keyed(const char* key) {
    auto ls = next(key);
    std::string k;
    T v{};
    if (!(ls >> k) || k != key || !(ls >> v)) fail(std::string("expected \"") + key + " <value>\"");
    return v;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(source_ + ": " + msg, line_start_);
  }

 private:
  std::istream& in_;
  std::string source_;
  std::uint64_t offset_ = 0;
  std::uint64_t line_start_ = 0;
};

}  // namespace detail

// Parses a manifest and checks labels and referenced files.
inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  detail::LineParser p(in, path.string());

  DatasetManifest m;
  m.base_dir = path.parent_path();
  {
    auto ls = p.next("header");
    std::string magic;
    int version = 0;
    if (!(ls >> magic >> version) || magic != "tavlad-manifest") p.fail("bad manifest magic");
    if (version != 1) p.fail("unsupported manifest version " + std::to_string(version));
  }
  m.num_classes = p.keyed<std::size_t>("num_classes");
  m.channels = p.keyed<std::size_t>("channels");
  {
    auto ls = p.next("grid");
    std::string k;
    if (!(ls >> k >> m.grid_rows >> m.grid_cols) || k != "grid") p.fail("expected \"grid <rows> <cols>\"");
  }
  m.attention_weights = p.keyed<std::string>("attention_weights");
  m.sample_frames = p.keyed<std::size_t>("sample_frames");
  const auto count = p.keyed<std::size_t>("records");
  if (m.num_classes == 0 || m.channels == 0 || m.grid_rows == 0 || m.grid_cols == 0 ||
      m.sample_frames == 0)
    p.fail("header values must be positive");

  for (std::size_t i = 0; i < count; ++i) {
    auto ls = p.next("record");
    std::string file;
    std::size_t label = 0;
    if (!(ls >> file >> label)) p.fail("expected \"<path> <label>\"");
    if (label >= m.num_classes)
      p.fail("label " + std::to_string(label) + " outside [0, " + std::to_string(m.num_classes) + ")");
    m.records.push_back({file, label});
    if (!std::filesystem::exists(m.resolve(file)))
      throw IoError("manifest " + path.string() + " references missing file " +
                    m.resolve(file).string());
  }
  if (!std::filesystem::exists(m.attention_weights_path()))
    throw IoError("manifest " + path.string() + " references missing attention weights " +
                  m.attention_weights_path().string());
  return m;
}

struct LabeledVideo {
  FeatureVolume video;  // already frame-sampled
  std::size_t label = 0;
};

using Dataset = std::vector<LabeledVideo>;

// Loads every record with uniform frame sampling to sample_frames frames.
inline Dataset load_dataset(const DatasetManifest& m) {
  Dataset out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) {
    const auto path = m.resolve(r.features);
    FeatureVolume v = read_features(path);
    if (v.channels() != m.channels || v.grid_rows() != m.grid_rows || v.grid_cols() != m.grid_cols)
      throw ContractError(detail::concat(path.string(), ": volume is ", v.grid_rows(), "x",
                                         v.grid_cols(), "x", v.channels(), ", manifest expects ",
                                         m.grid_rows, "x", m.grid_cols, "x", m.channels));
    const auto idx = uniform_sample(v.frames(), m.sample_frames);
    out.push_back({v.select_frames(idx), r.label});
  }
  return out;
}

inline AttentionWeights load_manifest_attention(const DatasetManifest& m) {
  AttentionWeights aw = read_attention_weights(m.attention_weights_path());
  if (aw.channels() != m.channels)
    throw ContractError(detail::concat(m.attention_weights_path().string(), ": weights have ",
                                       aw.channels(), " channels, manifest expects ", m.channels));
  return aw;
}

}  // namespace tavlad
