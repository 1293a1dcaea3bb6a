// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tavlad/dataio/manifest.hpp"
#include "tavlad/error.hpp"
#include "tavlad/model.hpp"
#include "tavlad/numerics/rng.hpp"
#include "tavlad/numerics/tape.hpp"

namespace tavlad {

struct TrainConfig {
  std::uint32_t stage = 1;
  std::size_t epochs = 50;
  double base_lr = 1e-2;
  std::size_t batch_size = 32;
  double decay_factor = 0.5;
  std::size_t decay_every = 5;
  double dropout_rate = kDefaultDropout;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool freeze_attention = false;
  std::size_t threads = 1;

  // Stage 1: 50 epochs at 1e-2. Stage 2: 30 epochs at 1e-4. Both halve the
  // rate every 5 epochs, batch 32, dropout 0.5.
  static TrainConfig defaults_for_stage(std::uint32_t stage) {
    TrainConfig c;
    c.stage = stage;
    if (stage == 2) {
      c.epochs = 30;
      c.base_lr = 1e-4;
    }
    return c;
  }

  void validate() const {
    TAVLAD_REQUIRE(stage == 1 || stage == 2, "stage must be 1 or 2");
    TAVLAD_REQUIRE(epochs >= 1, "epochs must be at least 1");
    TAVLAD_REQUIRE(batch_size >= 1, "batch size must be at least 1");
    TAVLAD_REQUIRE(decay_factor > 0.0 && decay_factor <= 1.0, "decay factor must lie in (0, 1]");
    TAVLAD_REQUIRE(decay_every >= 1, "decay interval must be at least 1 epoch");
    TAVLAD_REQUIRE(base_lr >= 0.0, "learning rate must be non-negative");
    TAVLAD_REQUIRE(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout rate must lie in [0, 1)");
  }
};

inline double lr_schedule(std::size_t epoch, double base_lr, const TrainConfig& cfg) {
  return base_lr * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every));
}

// ADAM moments for one tensor.
struct AdamMoments {
  Tensor m;
  Tensor v;
  std::uint64_t step = 0;
};

using AdamState = std::map<std::string, AdamMoments>;

inline void adam_update(Tensor& param, const Tensor& grad, AdamMoments& state, double lr,
                        const TrainConfig& cfg) {
  TAVLAD_REQUIRE(param.size() == grad.size(), "adam_update: gradient has ", grad.size(),
                 " elements for a parameter of ", param.size());
  if (state.m.size() != param.size()) {
    state.m = Tensor(param.dims(), 0.0);
    state.v = Tensor(param.dims(), 0.0);
  }
  ++state.step;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double delta = lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.adam_eps);
    if (delta != 0.0) param[i] -= delta;
  }
}

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<std::size_t> predictions;
};

struct HistoryEntry {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

using History = std::vector<HistoryEntry>;

inline std::string history_csv(const History& h) {
  std::ostringstream out;
  out << "epoch,lr,train_loss,train_acc,val_acc\n";
  out << std::setprecision(17);
  for (const auto& e : h)
    out << e.epoch << "," << e.lr << "," << e.train_loss << "," << e.train_accuracy << ","
        << e.val_accuracy << "\n";
  return out.str();
}

inline void write_history(const History& h, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << history_csv(h);
}

namespace detail {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// handled by exactly one worker; callers write results by index.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

inline EvalResult evaluate(const Dataset& data, const ModelParams& params, std::size_t threads = 1) {
  TAVLAD_REQUIRE(!data.empty(), "evaluate: empty dataset");
  const std::size_t c = params.num_classes();
  EvalResult r;
  r.confusion.assign(c, std::vector<std::size_t>(c, 0));
  r.predictions.assign(data.size(), 0);
  detail::parallel_for(data.size(), threads, [&](std::size_t i) {
    TAVLAD_REQUIRE(data[i].label < c, "evaluate: label ", data[i].label, " out of range for ", c,
                   " classes");
    const auto out = forward(data[i].video, params, Mode::eval);
    r.predictions[i] = argmax(out.logits);
  });
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    ++r.confusion[data[i].label][r.predictions[i]];
    if (r.predictions[i] == data[i].label) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

struct TrainResult {
  ModelParams final_params;
  ModelParams best_params;  // highest validation accuracy, earliest on ties
  std::size_t best_epoch = 0;
  History history;
  std::size_t optimizer_steps = 0;
};

// Mini-batch ADAM over the tensors trainable in cfg.stage. Frozen tensors
// are never bound as parameters and stay bit-identical.
inline TrainResult train_stage(const Dataset& train, const Dataset& val, ModelParams params,
                               const TrainConfig& cfg) {
  cfg.validate();
  TAVLAD_REQUIRE(!train.empty() && !val.empty(), "train_stage: datasets must be non-empty");
  TAVLAD_REQUIRE(cfg.stage == 1 || params.stage >= 1,
                 "train_stage: stage 2 needs parameters produced by stage 1");
  params.validate();
  params.dropout_rate = cfg.dropout_rate;
  params.stage = cfg.stage;

  const auto trainable = trainable_tensors(cfg.stage, cfg.freeze_attention);
  const Rng root(cfg.seed);
  AdamState adam;
  TrainResult res;
  double best_val = -1.0;
  const std::size_t n = train.size();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.base_lr, cfg);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng = root.split("shuffle", epoch);
    shuffle_rng.shuffle(order);

    double loss_total = 0.0;
    for (std::size_t start = 0, batch = 0; start < n; start += cfg.batch_size, ++batch) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      std::vector<std::map<std::string, Tensor>> grads(count);
      std::vector<double> losses(count, 0.0);
      detail::parallel_for(count, cfg.threads, [&](std::size_t j) {
        const std::size_t sample = order[start + j];
        Rng drop = root.split("dropout", epoch * n + start + j);
        ad::Tape tape;
        const auto vars = ad::bind(tape, params, trainable);
        const auto g = ad::forward(tape, vars, params, train[sample].video, Mode::train, &drop);
        const ad::Var l = ad::cross_entropy(g.logits, train[sample].label);
        losses[j] = l.value()[0];
        if (!std::isfinite(losses[j])) return;
        tape.backward(l);
        for (const auto& [name, var] : ad::named_vars(vars))
          if (trainable.count(name)) grads[j].emplace(name, tape.grad(var));
      });
      for (std::size_t j = 0; j < count; ++j) {
        if (!std::isfinite(losses[j]))
          throw NumericError(detail::concat("non-finite loss at epoch ", epoch, ", batch ", batch,
                                            ", sample ", order[start + j]));
        loss_total += losses[j];
      }

      const double inv = 1.0 / static_cast<double>(count);
      params.for_each_tensor([&](std::string_view name, Tensor& t) {
        const std::string key(name);
        if (!trainable.count(key)) return;
        Tensor mean(t.dims(), 0.0);
        for (std::size_t j = 0; j < count; ++j) {
          auto it = grads[j].find(key);
          if (it != grads[j].end()) mean += it->second;
        }
        mean *= inv;
        adam_update(t, mean, adam[key], lr, cfg);
      });
      ++res.optimizer_steps;
    }

    HistoryEntry e;
    e.epoch = epoch;
    e.lr = lr;
    e.train_loss = loss_total / static_cast<double>(n);
    e.train_accuracy = evaluate(train, params, cfg.threads).accuracy;
    e.val_accuracy = evaluate(val, params, cfg.threads).accuracy;
    res.history.push_back(e);
    if (e.val_accuracy > best_val) {
      best_val = e.val_accuracy;
      res.best_params = params;
      res.best_epoch = epoch;
    }
  }
  res.final_params = std::move(params);
  return res;
}

}  // namespace tavlad
