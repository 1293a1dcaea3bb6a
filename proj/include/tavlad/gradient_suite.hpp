// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tavlad/model.hpp"
#include "tavlad/numerics/grad_check.hpp"

// Finite-difference check of the whole pipeline on a tiny instance:
// T=3 frames, 2x2 grid (N=4), P=5, K=3, H=4, C=2.
namespace tavlad {

inline constexpr double kGradSuiteEps = 1e-5;
inline constexpr double kGradSuiteTol = 1e-4;
// A small selectivity keeps the soft assignment away from saturation so
// central differences stay accurate at eps = 1e-5.
inline constexpr double kGradSuiteAlpha = 1.0;

struct GradSuiteCase {
  Aggregator aggregator = Aggregator::gru;
  bool attention = true;
  std::uint32_t stage = 2;
  bool freeze_attention = false;

  std::string label() const {
    return std::string(to_string(aggregator)) + (attention ? "+attn" : "-attn") + " stage" +
           std::to_string(stage) + (freeze_attention ? " frozen-attn" : "");
  }
};

struct GradSuiteResult {
  GradSuiteCase config;
  std::uint64_t seed = 0;
  GradCheckReport report;
};

inline std::vector<GradSuiteCase> gradient_suite_cases() {
  std::vector<GradSuiteCase> out;
  for (Aggregator agg : {Aggregator::gru, Aggregator::sum}) {
    for (bool attn : {true, false}) {
      out.push_back({agg, attn, 1, false});
      out.push_back({agg, attn, 2, false});
    }
    out.push_back({agg, true, 2, true});
  }
  return out;
}

struct TinyProblem {
  ModelParams params;
  FeatureVolume video;
  std::size_t label = 0;
};

inline TinyProblem tiny_problem(std::uint64_t seed, Aggregator agg, bool attention) {
  constexpr std::size_t T = 3, R = 2, Cc = 2, P = 5, K = 3, H = 4, C = 2;
  Rng rng(seed);
  Rng data = rng.split("tiny.data");
  FeatureVolume video(T, R, Cc, P);
  for (double& x : video.tensor().data()) x = data.normal();

  AttentionWeights aw;
  aw.weights = Tensor::matrix(C, P);
  for (double& x : aw.weights.data()) x = data.normal() / std::sqrt(static_cast<double>(P));
  aw.bias = Tensor::matrix(1, C);
  for (double& x : aw.bias->data()) x = 0.1 * data.normal();

  Tensor centers = Tensor::matrix(K, P);
  for (double& x : centers.data()) x = data.normal();
  ModelOptions opt;
  opt.hidden = H;
  opt.num_classes = C;
  opt.aggregator = agg;
  opt.attention_enabled = attention;
  Rng init = rng.split("tiny.init");
  TinyProblem tp{init_model(std::move(aw), make_codebook(std::move(centers), kGradSuiteAlpha), opt, init),
                 std::move(video), static_cast<std::size_t>(data.uniform_index(C))};
  tp.params.stage = 1;
  return tp;
}

// Checks d(loss)/d(tensor) for every tensor trainable in `trainable`, with
// the same dropout mask replayed on every evaluation.
inline GradCheckReport check_model_gradients(const ModelParams& params, const FeatureVolume& video,
                                             std::size_t label, const std::set<std::string>& trainable,
                                             const Rng& dropout, double eps, double tol) {
  std::vector<NamedTensor> checked;
  {
    ad::Tape probe;
    const auto vars = ad::bind(probe, params, {});
    for (const auto& [name, var] : ad::named_vars(vars))
      if (trainable.count(name)) checked.push_back({name, var.value()});
  }
  const LossGraph loss = [&](ad::Tape& tape, std::span<const ad::Var> vs) {
    std::map<std::string, ad::Var> overrides;
    for (std::size_t i = 0; i < checked.size(); ++i) overrides.emplace(checked[i].name, vs[i]);
    const auto vars = ad::bind(tape, params, {}, overrides);
    Rng drop = dropout;
    const auto g = ad::forward(tape, vars, params, video, Mode::train, &drop);
    return ad::cross_entropy(g.logits, label);
  };
  return grad_check(loss, checked, eps, tol);
}

inline GradSuiteResult run_gradient_case(const GradSuiteCase& c, std::uint64_t seed,
                                         double eps = kGradSuiteEps, double tol = kGradSuiteTol) {
  const TinyProblem tp = tiny_problem(seed, c.aggregator, c.attention);
  const auto trainable = trainable_tensors(c.stage, c.freeze_attention);
  return {c, seed,
          check_model_gradients(tp.params, tp.video, tp.label, trainable, Rng::derive(seed, "tiny.dropout"),
                                eps, tol)};
}

inline std::vector<GradSuiteResult> run_gradient_suite(const std::vector<std::uint64_t>& seeds,
                                                       double eps = kGradSuiteEps,
                                                       double tol = kGradSuiteTol) {
  std::vector<GradSuiteResult> out;
  for (std::uint64_t s : seeds)
    for (const auto& c : gradient_suite_cases()) out.push_back(run_gradient_case(c, s, eps, tol));
  return out;
}

}  // namespace tavlad
