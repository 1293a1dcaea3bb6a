// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <utility>
#include <vector>

#include "tavlad/error.hpp"
#include "tavlad/numerics/ops.hpp"
#include "tavlad/numerics/tensor.hpp"

// Reverse-mode differentiation over a small set of matrix primitives.
//
// A Tape records every value produced by an operation in creation order.
// Each recorded node that depends on a parameter keeps a closure that
// pushes its output gradient into its inputs. Tape::backward() seeds the
// root with 1 and walks the nodes in reverse exactly once.
namespace tavlad::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor v) { return push(std::move(v), false, nullptr); }
  Var parameter(Tensor v) { return push(std::move(v), true, nullptr); }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient accumulated into v by the last backward(); zeros when v was
  // never reached.
  Tensor grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.has_grad) return n.grad;
    return Tensor(n.value.dims(), 0.0);
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  // Record an operation result. The closure is dropped when no input needs a
  // gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
    bool needs = false;
    for (const Var& in : inputs) {
      TAVLAD_REQUIRE(in.tape == this, "operand belongs to a different tape");
      needs = needs || nodes_[in.id].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(fn) : nullptr);
  }

  // Mutable gradient slot for an input; allocated as zeros on first touch.
  Tensor& grad_slot(Var v) {
    Node& n = nodes_[v.id];
    if (!n.has_grad) {
      n.grad = Tensor(n.value.dims(), 0.0);
      n.has_grad = true;
    }
    return n.grad;
  }

  // Gradient flowing into the node currently being replayed.
  const Tensor& upstream() const { return nodes_[current_].grad; }

  // Runs the reverse sweep from a scalar root. Returns how many recorded
  // operations were replayed.
  std::size_t backward(Var root) {
    TAVLAD_REQUIRE(root.tape == this, "backward root belongs to a different tape");
    TAVLAD_REQUIRE(value(root).size() == 1, "backward root must be a scalar, got ",
                   value(root).size(), " elements");
    for (Node& n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor();
    }
    grad_slot(root)[0] = 1.0;
    std::size_t replayed = 0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.has_grad || !n.backward) continue;
      current_ = i;
      n.backward(*this);
      ++replayed;
    }
    return replayed;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  Var push(Tensor v, bool requires_grad, Backward fn) {
    nodes_.push_back(Node{std::move(v), Tensor(), requires_grad, false, std::move(fn)});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::size_t current_ = 0;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace detail {

// out += op(x) * op(y) where op transposes when the flag is set.
inline void gemm_acc(Tensor& out, const Tensor& x, bool tx, const Tensor& y, bool ty) {
  const std::size_t m = tx ? x.cols() : x.rows();
  const std::size_t k = tx ? x.rows() : x.cols();
  const std::size_t n = ty ? y.rows() : y.cols();
  const std::size_t xc = x.cols();
  const std::size_t yc = y.cols();
  const std::span<const double> xd = x.data();
  const std::span<const double> yd = y.data();
  std::span<double> od = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double a = tx ? xd[p * xc + i] : xd[i * xc + p];
      if (a == 0.0) continue;
      double* orow = od.data() + i * n;
      if (ty) {
        for (std::size_t j = 0; j < n; ++j) orow[j] += a * yd[j * yc + p];
      } else {
        const double* yrow = yd.data() + p * yc;
        for (std::size_t j = 0; j < n; ++j) orow[j] += a * yrow[j];
      }
    }
  }
}

inline void require_same_size(const Tensor& a, const Tensor& b, const char* op) {
  TAVLAD_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), op, ": shape mismatch (",
                 a.rows(), "x", a.cols(), " vs ", b.rows(), "x", b.cols(), ")");
}

}  // namespace detail

// op(a) * op(b); trans_a / trans_b select transposition of each operand.
inline Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = trans_a ? av.cols() : av.rows();
  const std::size_t ka = trans_a ? av.rows() : av.cols();
  const std::size_t kb = trans_b ? bv.cols() : bv.rows();
  const std::size_t n = trans_b ? bv.rows() : bv.cols();
  TAVLAD_REQUIRE(ka == kb, "matmul: inner dimensions differ (", ka, " vs ", kb, ")");
  Tensor out = Tensor::matrix(m, n);
  detail::gemm_acc(out, av, trans_a, bv, trans_b);
  return a.tape->record(std::move(out), {a, b}, [a, b, trans_a, trans_b](Tape& t) {
    const Tensor& g = t.upstream();
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_slot(a);
      if (!trans_a) detail::gemm_acc(ga, g, false, bv, !trans_b);
      else detail::gemm_acc(ga, bv, trans_b, g, true);
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_slot(b);
      if (!trans_b) detail::gemm_acc(gb, av, !trans_a, g, false);
      else detail::gemm_acc(gb, g, true, av, trans_a);
    }
  });
}

inline Var add(Var a, Var b) {
  detail::require_same_size(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t) {
    if (t.requires_grad(a)) t.grad_slot(a) += t.upstream();
    if (t.requires_grad(b)) t.grad_slot(b) += t.upstream();
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_size(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t) {
    const Tensor& g = t.upstream();
    if (t.requires_grad(a)) t.grad_slot(a) += g;
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_slot(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

// Element-wise product.
inline Var mul(Var a, Var b) {
  detail::require_same_size(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t) {
    const Tensor& g = t.upstream();
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_slot(a);
      const Tensor& bv = t.value(b);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_slot(b);
      const Tensor& av = t.value(a);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(Var a, double s) {
  Tensor out = a.value();
  out *= s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape& t) {
    Tensor& ga = t.grad_slot(a);
    const Tensor& g = t.upstream();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * g[i];
  });
}

// Adds a bias vector (cols elements) to every row.
inline Var add_row(Var a, Var bias) {
  const Tensor& av = a.value();
  TAVLAD_REQUIRE(bias.value().size() == av.cols(), "add_row: bias has ", bias.value().size(),
                 " elements, matrix has ", av.cols(), " columns");
  Tensor out = av;
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return a.tape->record(std::move(out), {a, bias}, [a, bias](Tape& t) {
    const Tensor& g = t.upstream();
    if (t.requires_grad(a)) t.grad_slot(a) += g;
    if (t.requires_grad(bias)) {
      Tensor& gb = t.grad_slot(bias);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    }
  });
}

// Multiplies row r of a by v[r].
inline Var scale_rows(Var a, Var v) {
  const Tensor& av = a.value();
  const Tensor& vv = v.value();
  TAVLAD_REQUIRE(vv.size() == av.rows(), "scale_rows: ", vv.size(), " scales for ", av.rows(),
                 " rows");
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= vv[r];
  return a.tape->record(std::move(out), {a, v}, [a, v](Tape& t) {
    const Tensor& g = t.upstream();
    const Tensor& av = t.value(a);
    const Tensor& vv = t.value(v);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_slot(a);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) * vv[r];
    }
    if (t.requires_grad(v)) {
      Tensor& gv = t.grad_slot(v);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) s += g(r, c) * av(r, c);
        gv[r] += s;
      }
    }
  });
}

inline Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& x : out.data()) x = ::tavlad::sigmoid(x);
  Tape& tape = *a.tape;
  const std::size_t out_id = tape.size();
  return tape.record(std::move(out), {a}, [a, out_id](Tape& t) {
    const Tensor& g = t.upstream();
    const Tensor& yv = t.value(Var{&t, out_id});
    Tensor& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * yv[i] * (1.0 - yv[i]);
  });
}

inline Var tanh(Var a) {
  Tensor out = a.value();
  for (double& x : out.data()) x = std::tanh(x);
  Tape& tape = *a.tape;
  const std::size_t out_id = tape.size();
  return tape.record(std::move(out), {a}, [a, out_id](Tape& t) {
    const Tensor& g = t.upstream();
    const Tensor& yv = t.value(Var{&t, out_id});
    Tensor& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * (1.0 - yv[i] * yv[i]);
  });
}

// Clamps into [lo, hi]; gradient passes only where the input was inside.
inline Var clamp(Var a, double lo, double hi) {
  Tensor out = a.value();
  for (double& x : out.data()) x = std::clamp(x, lo, hi);
  return a.tape->record(std::move(out), {a}, [a, lo, hi](Tape& t) {
    const Tensor& g = t.upstream();
    const Tensor& av = t.value(a);
    Tensor& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (av[i] > lo && av[i] < hi) ga[i] += g[i];
  });
}

// Row-wise softmax with max subtraction.
inline Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  Tensor out = av;
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto s = ::tavlad::softmax(av.row_span(r));
    std::copy(s.begin(), s.end(), out.row_span(r).begin());
  }
  Tape& tape = *a.tape;
  const std::size_t out_id = tape.size();
  return tape.record(std::move(out), {a}, [a, out_id](Tape& t) {
    const Tensor& g = t.upstream();
    const Tensor& y = t.value(Var{&t, out_id});
    Tensor& ga = t.grad_slot(a);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

// L2-normalizes each row; rows with norm below eps pass through unchanged.
inline Var row_normalize(Var a, double eps = kNormEps) {
  const Tensor& av = a.value();
  Tensor out = av;
  std::vector<double> norms(av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    norms[r] = l2_norm(av.row_span(r));
    if (norms[r] < eps) continue;
    for (double& x : out.row_span(r)) x /= norms[r];
  }
  Tape& tape = *a.tape;
  const std::size_t out_id = tape.size();
  return tape.record(std::move(out), {a}, [a, out_id, eps, norms = std::move(norms)](Tape& t) {
    const Tensor& g = t.upstream();
    const Tensor& y = t.value(Var{&t, out_id});
    Tensor& ga = t.grad_slot(a);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      if (norms[r] < eps) {
        for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += g(r, c);
        continue;
      }
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c)
        ga(r, c) += (g(r, c) - y(r, c) * dot) / norms[r];
    }
  });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return a.tape->record(Tensor::scalar(s), {a}, [a](Tape& t) {
    const double g = t.upstream()[0];
    for (double& x : t.grad_slot(a).data()) x += g;
  });
}

// Column sums as a 1 x cols row.
inline Var col_sum(Var a) {
  const Tensor& av = a.value();
  Tensor out = Tensor::matrix(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out[c] += av(r, c);
  return a.tape->record(std::move(out), {a}, [a](Tape& t) {
    const Tensor& g = t.upstream();
    Tensor& ga = t.grad_slot(a);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[c];
  });
}

inline Var select_row(Var a, std::size_t row) {
  const Tensor& av = a.value();
  TAVLAD_REQUIRE(row < av.rows(), "select_row: row ", row, " out of range (", av.rows(), " rows)");
  Tensor out = Tensor::row(av.row_span(row));
  return a.tape->record(std::move(out), {a}, [a, row](Tape& t) {
    const Tensor& g = t.upstream();
    auto dst = t.grad_slot(a).row_span(row);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += g[c];
  });
}

inline Var reshape(Var a, std::vector<std::size_t> dims) {
  Tensor out = a.value().reshaped(std::move(dims));
  return a.tape->record(std::move(out), {a}, [a](Tape& t) {
    Tensor& ga = t.grad_slot(a);
    const Tensor& g = t.upstream();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
}

inline Var flatten(Var a) { return reshape(a, {1, a.value().size()}); }

// -log softmax(logits)[label] over a single row of logits.
inline Var cross_entropy(Var logits, std::size_t label) {
  const Tensor& z = logits.value();
  TAVLAD_REQUIRE(label < z.size(), "cross_entropy: label ", label, " out of range for ", z.size(),
                 " classes");
  const auto p = ::tavlad::softmax(z.data());
  double mx = z[0];
  for (double v : z.data()) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : z.data()) s += std::exp(v - mx);
  const double loss = mx + std::log(s) - z[label];
  return logits.tape->record(Tensor::scalar(loss), {logits}, [logits, label, p](Tape& t) {
    const double g = t.upstream()[0];
    Tensor& gz = t.grad_slot(logits);
    for (std::size_t i = 0; i < p.size(); ++i) gz[i] += g * (p[i] - (i == label ? 1.0 : 0.0));
  });
}

}  // namespace tavlad::ad
