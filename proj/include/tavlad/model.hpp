// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "tavlad/attention.hpp"
#include "tavlad/codebook.hpp"
#include "tavlad/dataio/checkpoint.hpp"
#include "tavlad/dataio/feature_volume.hpp"
#include "tavlad/error.hpp"
#include "tavlad/numerics/rng.hpp"
#include "tavlad/numerics/tape.hpp"
#include "tavlad/temporal.hpp"
#include "tavlad/vlad.hpp"

namespace tavlad {

enum class Aggregator : std::uint8_t { gru = 0, sum = 1 };
enum class Mode { train, eval };

inline constexpr double kDefaultDropout = 0.5;

inline const char* to_string(Aggregator a) { return a == Aggregator::gru ? "gru" : "sum"; }

// Every tensor of the pipeline plus the structural flags.
//
// Tensor names, in checkpoint order:
//   attention.weights  attention.bias (optional)
//   codebook.centers  codebook.assign_weights  codebook.assign_bias  codebook.alpha
//   gru.wz gru.wr gru.wh gru.uz gru.ur gru.uh gru.bz gru.br gru.bh
//   fc.weights  fc.bias
struct ModelParams {
  AttentionWeights attention;
  Codebook codebook;
  GruParams gru;
  Tensor fc_weights;  // classes x descriptor_size
  Tensor fc_bias;     // 1 x classes
  Aggregator aggregator = Aggregator::gru;
  bool attention_enabled = true;
  double dropout_rate = kDefaultDropout;
  std::uint32_t stage = 1;

  std::size_t num_classes() const noexcept { return fc_weights.rows(); }
  std::size_t clusters() const noexcept { return codebook.clusters(); }
  std::size_t channels() const noexcept { return codebook.channels(); }
  std::size_t hidden() const noexcept { return gru.hidden(); }

  std::size_t descriptor_size() const noexcept {
    return clusters() * (aggregator == Aggregator::gru ? hidden() : channels());
  }

  // Visits (name, tensor) in canonical order. codebook.alpha is presented
  // as a 1 x 1 tensor; edits to it are written back.
  template <typename F>
  void for_each_tensor(F&& f) {
    visit(*this, f);
  }

  template <typename F>
  void for_each_tensor(F&& f) const {
    visit(*this, f);
  }

  std::vector<NamedTensor> named_tensors() const {
    std::vector<NamedTensor> out;
    for_each_tensor([&](std::string_view n, const Tensor& t) { out.push_back({std::string(n), t}); });
    return out;
  }

  void validate() const {
    attention.validate();
    codebook.validate();
    gru.validate();
    TAVLAD_REQUIRE(attention.channels() == channels(), "attention weights have ",
                   attention.channels(), " channels, codebook has ", channels());
    TAVLAD_REQUIRE(gru.input() == channels(), "GRU input size ", gru.input(),
                   " does not match codebook channels ", channels());
    TAVLAD_REQUIRE(num_classes() >= 1 && fc_weights.cols() == descriptor_size(),
                   "classifier expects ", fc_weights.cols(), " inputs, descriptor has ",
                   descriptor_size());
    TAVLAD_REQUIRE(fc_bias.size() == num_classes(), "classifier bias size mismatch");
    TAVLAD_REQUIRE(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout rate must lie in [0, 1)");
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f("attention.weights", self.attention.weights);
    if (self.attention.bias) f("attention.bias", *self.attention.bias);
    f("codebook.centers", self.codebook.centers);
    f("codebook.assign_weights", self.codebook.assign_weights);
    f("codebook.assign_bias", self.codebook.assign_bias);
    Tensor alpha = Tensor::scalar(self.codebook.alpha);
    if constexpr (std::is_const_v<Self>) {
      f("codebook.alpha", static_cast<const Tensor&>(alpha));
    } else {
      f("codebook.alpha", alpha);
      self.codebook.alpha = alpha[0];
    }
    f("gru.wz", self.gru.wz);
    f("gru.wr", self.gru.wr);
    f("gru.wh", self.gru.wh);
    f("gru.uz", self.gru.uz);
    f("gru.ur", self.gru.ur);
    f("gru.uh", self.gru.uh);
    f("gru.bz", self.gru.bz);
    f("gru.br", self.gru.br);
    f("gru.bh", self.gru.bh);
    f("fc.weights", self.fc_weights);
    f("fc.bias", self.fc_bias);
  }
};

struct ModelOptions {
  std::size_t hidden = kDefaultHidden;
  std::size_t num_classes = 0;
  Aggregator aggregator = Aggregator::gru;
  bool attention_enabled = true;
  double dropout_rate = kDefaultDropout;
};

// GRU and classifier weights uniform in (-1/sqrt(fan), 1/sqrt(fan)) with
// fan = H for the GRU and the descriptor length for the classifier;
// classifier bias starts at zero.
inline ModelParams init_model(AttentionWeights attention, Codebook codebook,
                              const ModelOptions& opt, Rng& rng) {
  TAVLAD_REQUIRE(opt.num_classes >= 1, "init_model: num_classes must be positive");
  ModelParams m;
  m.attention = std::move(attention);
  m.codebook = std::move(codebook);
  m.aggregator = opt.aggregator;
  m.attention_enabled = opt.attention_enabled;
  m.dropout_rate = opt.dropout_rate;
  m.stage = 0;
  Rng gru_rng = rng.split("init.gru");
  m.gru = GruParams::random(m.channels(), opt.hidden, gru_rng);
  const std::size_t d = m.descriptor_size();
  m.fc_weights = Tensor::matrix(opt.num_classes, d);
  m.fc_bias = Tensor::matrix(1, opt.num_classes);
  Rng fc_rng = rng.split("init.fc");
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& x : m.fc_weights.data()) x = fc_rng.uniform(-bound, bound);
  m.validate();
  return m;
}

// Tensors updated in each training stage.
inline std::set<std::string> trainable_tensors(std::uint32_t stage, bool freeze_attention = false) {
  TAVLAD_REQUIRE(stage == 1 || stage == 2, "stage must be 1 or 2, got ", stage);
  std::set<std::string> s = {"gru.wz", "gru.wr", "gru.wh", "gru.uz", "gru.ur", "gru.uh",
                             "gru.bz", "gru.br", "gru.bh", "fc.weights", "fc.bias"};
  if (stage == 2) {
    s.insert({"codebook.centers", "codebook.assign_weights", "codebook.assign_bias"});
    if (!freeze_attention) s.insert({"attention.weights", "attention.bias"});
  }
  return s;
}

namespace ad {

struct ModelVars {
  Var attention_weights;
  std::optional<Tensor> attention_bias;
  CodebookVars codebook;
  GruVars gru;
  Var fc_weights;
  Var fc_bias;
};

// Binds every tensor of `params` onto the tape. Names in `overrides` use the
// given Var; otherwise names in `trainable` become parameters and the rest
// constants.
inline ModelVars bind(Tape& tape, const ModelParams& params, const std::set<std::string>& trainable,
                      const std::map<std::string, Var>& overrides = {}) {
  std::map<std::string, Var, std::less<>> vars;
  params.for_each_tensor([&](std::string_view name, const Tensor& t) {
    const std::string key(name);
    if (auto it = overrides.find(key); it != overrides.end()) {
      vars.emplace(key, it->second);
    } else {
      vars.emplace(key, trainable.count(key) ? tape.parameter(t) : tape.constant(t));
    }
  });
  auto v = [&](std::string_view n) { return vars.find(n)->second; };
  ModelVars mv{v("attention.weights"),
               params.attention.bias,
               {v("codebook.centers"), v("codebook.assign_weights"), v("codebook.assign_bias")},
               {v("gru.wz"), v("gru.wr"), v("gru.wh"), v("gru.uz"), v("gru.ur"), v("gru.uh"),
                v("gru.bz"), v("gru.br"), v("gru.bh")},
               v("fc.weights"),
               v("fc.bias")};
  return mv;
}

// Differentiable tensors of a binding, by checkpoint name. The attention bias
// only selects the winning class and carries no gradient.
inline std::vector<std::pair<std::string, Var>> named_vars(const ModelVars& v) {
  return {{"attention.weights", v.attention_weights},
          {"codebook.centers", v.codebook.centers},
          {"codebook.assign_weights", v.codebook.assign_weights},
          {"codebook.assign_bias", v.codebook.assign_bias},
          {"gru.wz", v.gru.wz}, {"gru.wr", v.gru.wr}, {"gru.wh", v.gru.wh},
          {"gru.uz", v.gru.uz}, {"gru.ur", v.gru.ur}, {"gru.uh", v.gru.uh},
          {"gru.bz", v.gru.bz}, {"gru.br", v.gru.br}, {"gru.bh", v.gru.bh},
          {"fc.weights", v.fc_weights}, {"fc.bias", v.fc_bias}};
}

struct ForwardGraph {
  Var logits;      // 1 x classes
  Var descriptor;  // 1 x descriptor_size, before dropout
  std::vector<Var> attention;  // per frame, N x 1 (empty when disabled)
};

// attention -> per-frame VLAD -> temporal aggregation -> normalization ->
// dropout (train mode) -> affine classifier.
inline ForwardGraph forward(Tape& tape, const ModelVars& vars, const ModelParams& params,
                            const FeatureVolume& video, Mode mode, Rng* dropout_rng) {
  TAVLAD_REQUIRE(video.frames() >= 1, "forward: empty video");
  TAVLAD_REQUIRE(video.channels() == params.channels(), "forward[input]: video has ",
                 video.channels(), " channels, model expects ", params.channels());
  ForwardGraph g;
  std::vector<Var> frame_desc;
  frame_desc.reserve(video.frames());
  for (std::size_t t = 0; t < video.frames(); ++t) {
    const Var frame = tape.constant(video.frame(t));
    std::optional<Var> attn;
    if (params.attention_enabled) {
      attn = frame_attention(frame, vars.attention_weights, vars.attention_bias);
      g.attention.push_back(*attn);
    }
    frame_desc.push_back(encode_frame(frame, attn, vars.codebook));
  }

  Var pooled = frame_desc.front();
  if (params.aggregator == Aggregator::gru) {
    pooled = aggregate(frame_desc, vars.gru);
  } else {
    for (std::size_t t = 1; t < frame_desc.size(); ++t) pooled = add(pooled, frame_desc[t]);
  }
  g.descriptor = finalize_descriptor(pooled);

  Var classifier_in = g.descriptor;
  if (mode == Mode::train && params.dropout_rate > 0.0) {
    TAVLAD_REQUIRE(dropout_rng != nullptr, "forward: train mode with dropout needs an Rng");
    Tensor mask = Tensor::matrix(1, g.descriptor.value().size());
    const double keep_scale = 1.0 / (1.0 - params.dropout_rate);
    for (double& x : mask.data()) x = dropout_rng->uniform() >= params.dropout_rate ? keep_scale : 0.0;
    classifier_in = mul(g.descriptor, tape.constant(std::move(mask)));
  }
  TAVLAD_REQUIRE(vars.fc_weights.value().cols() == classifier_in.value().size(),
                 "forward[classifier]: weights expect ", vars.fc_weights.value().cols(),
                 " inputs, descriptor has ", classifier_in.value().size());
  g.logits = add(matmul(classifier_in, vars.fc_weights, false, true), vars.fc_bias);
  return g;
}

}  // namespace ad

struct ForwardOutput {
  std::vector<double> logits;
  VideoDescriptor descriptor;
  std::optional<AttentionMap> attention;
};

inline ForwardOutput forward(const FeatureVolume& video, const ModelParams& params, Mode mode,
                             Rng* rng = nullptr) {
  ad::Tape tape;
  const auto vars = ad::bind(tape, params, {});
  const auto g = ad::forward(tape, vars, params, video, mode, rng);
  ForwardOutput out;
  out.logits = g.logits.value().values();
  out.descriptor.values = g.descriptor.value().values();
  out.descriptor.degenerate = std::abs(l2_norm(out.descriptor.values) - 1.0) > 1e-6;
  if (params.attention_enabled) {
    AttentionMap m{Tensor::matrix(video.frames(), video.cells())};
    for (std::size_t t = 0; t < g.attention.size(); ++t)
      for (std::size_t i = 0; i < video.cells(); ++i) m.values(t, i) = g.attention[t].value()[i];
    out.attention = std::move(m);
  }
  return out;
}

// Cross-entropy -log softmax(logits)[label] via log-sum-exp.
inline double loss(std::span<const double> logits, std::size_t label) {
  TAVLAD_REQUIRE(label < logits.size(), "loss: label ", label, " out of range for ",
                 logits.size(), " classes");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - mx);
  return mx + std::log(s) - logits[label];
}

// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline Checkpoint to_checkpoint(const ModelParams& p) {
  Checkpoint ck;
  ck.tensors = p.named_tensors();
  ck.flags.aggregator = static_cast<std::uint8_t>(p.aggregator);
  ck.flags.attention_enabled = p.attention_enabled ? 1 : 0;
  ck.flags.dropout_rate = p.dropout_rate;
  ck.flags.stage = p.stage;
  return ck;
}

namespace detail {

inline const Tensor& require_tensor(const Checkpoint& ck, std::string_view name) {
  const Tensor* t = ck.find(name);
  if (!t) throw ContractError("checkpoint lacks tensor \"" + std::string(name) + "\"");
  return *t;
}

}  // namespace detail

inline Codebook codebook_from_checkpoint(const Checkpoint& ck) {
  Codebook cb{detail::require_tensor(ck, "codebook.centers"),
              detail::require_tensor(ck, "codebook.assign_weights"),
              detail::require_tensor(ck, "codebook.assign_bias"),
              detail::require_tensor(ck, "codebook.alpha")[0]};
  cb.validate();
  return cb;
}

inline Checkpoint codebook_checkpoint(const Codebook& cb) {
  Checkpoint ck;
  ck.tensors = {{"codebook.centers", cb.centers},
                {"codebook.assign_weights", cb.assign_weights},
                {"codebook.assign_bias", cb.assign_bias},
                {"codebook.alpha", Tensor::scalar(cb.alpha)}};
  ck.flags.stage = 0;
  return ck;
}

inline ModelParams from_checkpoint(const Checkpoint& ck) {
  ModelParams p;
  p.attention.weights = detail::require_tensor(ck, "attention.weights");
  if (const Tensor* b = ck.find("attention.bias")) p.attention.bias = *b;
  p.codebook = codebook_from_checkpoint(ck);
  p.gru = {detail::require_tensor(ck, "gru.wz"), detail::require_tensor(ck, "gru.wr"),
           detail::require_tensor(ck, "gru.wh"), detail::require_tensor(ck, "gru.uz"),
           detail::require_tensor(ck, "gru.ur"), detail::require_tensor(ck, "gru.uh"),
           detail::require_tensor(ck, "gru.bz"), detail::require_tensor(ck, "gru.br"),
           detail::require_tensor(ck, "gru.bh")};
  p.fc_weights = detail::require_tensor(ck, "fc.weights");
  p.fc_bias = detail::require_tensor(ck, "fc.bias");
  p.aggregator = static_cast<Aggregator>(ck.flags.aggregator);
  p.attention_enabled = ck.flags.attention_enabled != 0;
  p.dropout_rate = ck.flags.dropout_rate;
  p.stage = ck.flags.stage;
  p.validate();
  return p;
}

inline void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  write_checkpoint(to_checkpoint(p), path);
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  return from_checkpoint(read_checkpoint(path));
}

}  // namespace tavlad
