// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tavlad/error.hpp"
#include "tavlad/numerics/ops.hpp"
#include "tavlad/numerics/rng.hpp"
#include "tavlad/numerics/tape.hpp"
#include "tavlad/vlad.hpp"

// Temporal aggregation with K GRU streams sharing one parameter set.
//
//   z  = sigmoid(Wz x + Uz h + bz)
//   r  = sigmoid(Wr x + Ur h + br)
//   h~ = tanh(Wh x + Uh (r * h) + bh)
//   h' = (1 - z) * h + z * h~
//
// Stream k consumes row k of every frame descriptor, starting from h = 0.
// The K final states are stacked into a K x H matrix, intra-normalized per
// row, flattened row-major and L2-normalized.
namespace tavlad {

inline constexpr std::size_t kDefaultHidden = 256;

struct GruParams {
  Tensor wz, wr, wh;  // H x P
  Tensor uz, ur, uh;  // H x H
  Tensor bz, br, bh;  // 1 x H

  std::size_t hidden() const noexcept { return wz.rows(); }
  std::size_t input() const noexcept { return wz.cols(); }

  static GruParams zeros(std::size_t input, std::size_t hidden) {
    const Tensor w = Tensor::matrix(hidden, input);
    const Tensor u = Tensor::matrix(hidden, hidden);
    const Tensor b = Tensor::matrix(1, hidden);
    return {w, w, w, u, u, u, b, b, b};
  }

  // Every entry uniform in (-1/sqrt(H), 1/sqrt(H)).
  static GruParams random(std::size_t input, std::size_t hidden, Rng& rng) {
    GruParams g = zeros(input, hidden);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (Tensor* t : g.tensors())
      for (double& x : t->data()) x = rng.uniform(-bound, bound);
    return g;
  }

  std::vector<Tensor*> tensors() { return {&wz, &wr, &wh, &uz, &ur, &uh, &bz, &br, &bh}; }

  void validate() const {
    const std::size_t h = hidden();
    const std::size_t p = input();
    TAVLAD_REQUIRE(h >= 1 && p >= 1, "GRU sizes must be positive");
    for (const Tensor* w : {&wz, &wr, &wh})
      TAVLAD_REQUIRE(w->rows() == h && w->cols() == p, "GRU input weights must be H x P");
    for (const Tensor* u : {&uz, &ur, &uh})
      TAVLAD_REQUIRE(u->rows() == h && u->cols() == h, "GRU recurrent weights must be H x H");
    for (const Tensor* b : {&bz, &br, &bh})
      TAVLAD_REQUIRE(b->size() == h, "GRU biases must have H entries");
  }

  friend bool operator==(const GruParams&, const GruParams&) = default;
};

struct GruState {
  Tensor h;  // K x H
};

struct VideoDescriptor {
  std::vector<double> values;  // K*H (or K*P for the sum aggregator)
  bool degenerate = false;
};

namespace ad {

struct GruVars {
  Var wz, wr, wh, uz, ur, uh, bz, br, bh;
};

inline GruVars constant_gru(Tape& tape, const GruParams& g) {
  return {tape.constant(g.wz), tape.constant(g.wr), tape.constant(g.wh),
          tape.constant(g.uz), tape.constant(g.ur), tape.constant(g.uh),
          tape.constant(g.bz), tape.constant(g.br), tape.constant(g.bh)};
}

// One step for a batch of streams: x is S x P, h is S x H.
inline Var gru_step(Var x, Var h, const GruVars& g) {
  TAVLAD_REQUIRE(x.value().cols() == g.wz.value().cols(), "gru_step: input has ",
                 x.value().cols(), " features, GRU expects ", g.wz.value().cols());
  TAVLAD_REQUIRE(h.value().cols() == g.uz.value().cols() && h.value().rows() == x.value().rows(),
                 "gru_step: hidden state shape mismatch");
  auto gate = [&](Var w, Var u, Var b, Var hin) {
    return add_row(add(matmul(x, w, false, true), matmul(hin, u, false, true)), b);
  };
  const Var z = sigmoid(gate(g.wz, g.uz, g.bz, h));
  const Var r = sigmoid(gate(g.wr, g.ur, g.br, h));
  const Var cand = tanh(gate(g.wh, g.uh, g.bh, mul(r, h)));
  return add(h, mul(z, sub(cand, h)));
}

// Runs the K streams over the frame descriptors in order; returns K x H.
inline Var aggregate(std::span<const Var> frames, const GruVars& g) {
  TAVLAD_REQUIRE(!frames.empty(), "aggregate: empty frame sequence");
  Tape& tape = *frames.front().tape;
  const std::size_t k = frames.front().value().rows();
  for (const Var& f : frames)
    TAVLAD_REQUIRE(f.value().rows() == k && f.value().cols() == frames.front().value().cols(),
                   "aggregate: inconsistent frame descriptor shapes");
  Var h = tape.constant(Tensor::matrix(k, g.uz.value().rows()));
  for (const Var& f : frames) h = gru_step(f, h, g);
  return h;
}

// Intra-normalize rows, flatten, L2-normalize. Returns 1 x (rows * cols).
inline Var finalize_descriptor(Var m) { return row_normalize(flatten(row_normalize(m))); }

}  // namespace ad

inline std::vector<double> gru_step(std::span<const double> x, std::span<const double> h,
                                    const GruParams& p) {
  p.validate();
  TAVLAD_REQUIRE(x.size() == p.input() && h.size() == p.hidden(), "gru_step: expected x of ",
                 p.input(), " and h of ", p.hidden(), " entries");
  ad::Tape tape;
  const ad::Var xv = tape.constant(Tensor::row(x));
  const ad::Var hv = tape.constant(Tensor::row(h));
  return ad::gru_step(xv, hv, ad::constant_gru(tape, p)).value().values();
}

inline Tensor aggregate(std::span<const FrameDescriptor> frames, const GruParams& p) {
  TAVLAD_REQUIRE(!frames.empty(), "aggregate: empty frame sequence");
  p.validate();
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& f : frames) vars.push_back(tape.constant(f.values));
  return ad::aggregate(vars, ad::constant_gru(tape, p)).value();
}

inline VideoDescriptor finalize_descriptor(const Tensor& m) {
  const auto rows = intra_normalize(m);
  auto flat = l2_normalize(rows.values.data());
  return {std::move(flat.values), flat.degenerate || rows.degenerate_rows > 0};
}

}  // namespace tavlad
