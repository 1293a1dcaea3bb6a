// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <vector>

#include "tavlad/dataio/manifest.hpp"
#include "tavlad/error.hpp"
#include "tavlad/numerics/rng.hpp"
#include "tavlad/numerics/tensor.hpp"

namespace tavlad {

// Selectivity used by the reference configuration.
inline constexpr double kDefaultAlpha = 1000.0;
inline constexpr std::size_t kDefaultClusters = 64;
inline constexpr std::size_t kDefaultKMeansIterations = 100;
inline constexpr std::size_t kSamplesPerCluster = 100;

// Soft-assignment scores for cluster k are  assign_weights[k] . x + assign_bias[k].
// At initialization these equal -alpha * |x - c_k|^2 up to a per-x constant.
struct Codebook {
  Tensor centers;         // K x P
  Tensor assign_weights;  // K x P
  Tensor assign_bias;     // 1 x K
  double alpha = kDefaultAlpha;

  std::size_t clusters() const noexcept { return centers.rows(); }
  std::size_t channels() const noexcept { return centers.cols(); }

  void validate() const {
    TAVLAD_REQUIRE(clusters() >= 1 && channels() >= 1, "codebook needs K >= 1 and P >= 1");
    TAVLAD_REQUIRE(alpha > 0.0, "codebook alpha must be positive");
    TAVLAD_REQUIRE(assign_weights.rows() == clusters() && assign_weights.cols() == channels(),
                   "assign_weights must be K x P");
    TAVLAD_REQUIRE(assign_bias.size() == clusters(), "assign_bias must have K entries");
  }

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

struct AssignmentParams {
  Tensor weights;  // K x P, 2 alpha c_k
  Tensor bias;     // 1 x K, -alpha |c_k|^2
};

inline AssignmentParams init_assignment_params(const Tensor& centers, double alpha) {
  TAVLAD_REQUIRE(alpha > 0.0, "alpha must be positive, got ", alpha);
  AssignmentParams p{Tensor::matrix(centers.rows(), centers.cols()),
                     Tensor::matrix(1, centers.rows())};
  for (std::size_t k = 0; k < centers.rows(); ++k) {
    double sq = 0.0;
    for (std::size_t j = 0; j < centers.cols(); ++j) {
      p.weights(k, j) = 2.0 * alpha * centers(k, j);
      sq += centers(k, j) * centers(k, j);
    }
    p.bias[k] = -alpha * sq;
  }
  return p;
}

inline Codebook make_codebook(Tensor centers, double alpha) {
  auto p = init_assignment_params(centers, alpha);
  Codebook cb{std::move(centers), std::move(p.weights), std::move(p.bias), alpha};
  cb.validate();
  return cb;
}

// Draws n feature vectors uniformly over (video, frame, cell) with
// replacement from every frame of every video in the manifest.
inline Tensor sample_features(const DatasetManifest& manifest, std::size_t n_samples, Rng& rng) {
  TAVLAD_REQUIRE(!manifest.records.empty(), "sample_features: manifest has no records");
  TAVLAD_REQUIRE(n_samples >= 1, "sample_features: n_samples must be at least 1");
  std::map<std::size_t, FeatureVolume> cache;
  Tensor out = Tensor::matrix(n_samples, manifest.channels);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const auto v = static_cast<std::size_t>(rng.uniform_index(manifest.records.size()));
    auto it = cache.find(v);
    if (it == cache.end()) {
      const auto path = manifest.resolve(manifest.records[v].features);
      FeatureVolume vol = read_features(path);
      if (vol.channels() != manifest.channels)
        throw ContractError(detail::concat(path.string(), ": ", vol.channels(),
                                           " channels, manifest expects ", manifest.channels));
      it = cache.emplace(v, std::move(vol)).first;
    }
    const FeatureVolume& vol = it->second;
    const auto t = static_cast<std::size_t>(rng.uniform_index(vol.frames()));
    const auto c = static_cast<std::size_t>(rng.uniform_index(vol.cells()));
    auto src = vol.cell(t, c);
    std::copy(src.begin(), src.end(), out.row_span(s).begin());
  }
  return out;
}

struct KMeansResult {
  Tensor centers;                // K x P
  std::vector<double> distortion;  // per assignment step, non-increasing
  std::vector<std::size_t> assignment;
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Nearest center with ties to the lowest index.
inline std::size_t nearest_center(std::span<const double> x, const Tensor& centers, double* dist) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centers.rows(); ++k) {
    const double d = squared_distance(x, centers.row_span(k));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

inline Tensor kmeans_plus_plus(const Tensor& samples, std::size_t k, Rng& rng) {
  const std::size_t n = samples.rows();
  Tensor centers = Tensor::matrix(k, samples.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(rng.uniform_index(n));
  for (std::size_t c = 0; c < k; ++c) {
    auto src = samples.row_span(pick);
    std::copy(src.begin(), src.end(), centers.row_span(c).begin());
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(samples.row_span(i), centers.row_span(c)));
      total += d2[i];
    }
    if (total <= 0.0) {
      pick = static_cast<std::size_t>(rng.uniform_index(n));
      continue;
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc > target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }
  return centers;
}

}  // namespace detail

// k-means++ seeding followed by Lloyd iterations until the assignment stops
// changing or max_iter updates have run. An empty cluster is moved onto the
// sample farthest from its current center.
inline KMeansResult kmeans(const Tensor& samples, std::size_t k, std::size_t max_iter, Rng& rng) {
  const std::size_t n = samples.rows();
  TAVLAD_REQUIRE(k >= 1, "kmeans: K must be at least 1");
  TAVLAD_REQUIRE(n >= k, "kmeans: need at least K=", k, " samples, got ", n);
  const std::size_t p = samples.cols();

  KMeansResult res;
  res.centers = detail::kmeans_plus_plus(samples, k, rng);
  std::vector<std::size_t> assign(n, std::numeric_limits<std::size_t>::max());
  std::vector<double> dist(n, 0.0);

  auto assign_step = [&]() {
    bool changed = false;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = detail::nearest_center(samples.row_span(i), res.centers, &dist[i]);
      changed = changed || a != assign[i];
      assign[i] = a;
      total += dist[i];
    }
    res.distortion.push_back(total);
    return changed;
  };

  for (std::size_t it = 0; it < max_iter; ++it) {
    if (!assign_step()) {
      res.converged = true;
      break;
    }
    ++res.iterations;

    Tensor sums = Tensor::matrix(k, p);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      auto dst = sums.row_span(assign[i]);
      auto src = samples.row_span(i);
      for (std::size_t j = 0; j < p; ++j) dst[j] += src[j];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        auto dst = res.centers.row_span(c);
        auto src = sums.row_span(c);
        for (std::size_t j = 0; j < p; ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      taken[far] = true;
      auto src = samples.row_span(far);
      std::copy(src.begin(), src.end(), res.centers.row_span(c).begin());
    }
  }
  if (!res.converged) res.converged = !assign_step();
  res.assignment = assign;
  return res;
}

}  // namespace tavlad
