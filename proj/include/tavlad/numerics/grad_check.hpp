// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tavlad/error.hpp"
#include "tavlad/numerics/tape.hpp"
#include "tavlad/numerics/tensor.hpp"

namespace tavlad {

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Builds a scalar loss on the tape from one Var per checked parameter, in
// the same order as the parameter list handed to grad_check.
using LossGraph = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tol = 0.0;

  bool passed() const {
    return std::all_of(entries.begin(), entries.end(),
                       [&](const GradCheckEntry& e) { return e.max_rel_error <= tol; });
  }

  const GradCheckEntry* worst() const {
    if (entries.empty()) return nullptr;
    return &*std::max_element(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return a.max_rel_error < b.max_rel_error;
    });
  }
};

inline double grad_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

// Compares reverse-mode gradients against central differences
// (f(x+eps) - f(x-eps)) / (2 eps) for every element of every parameter.
inline GradCheckReport grad_check(const LossGraph& loss_fn, std::span<const NamedTensor> params,
                                  double eps, double tol) {
  TAVLAD_REQUIRE(eps >= 1e-7 && eps <= 1e-3, "grad_check eps must lie in [1e-7, 1e-3], got ", eps);

  std::vector<Tensor> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& p : params) vars.push_back(tape.parameter(p.value));
    const ad::Var loss = loss_fn(tape, vars);
    if (!std::isfinite(loss.value()[0]))
      throw NumericError("grad_check: loss is not finite at the unperturbed point");
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }

  std::vector<Tensor> point;
  for (const auto& p : params) point.push_back(p.value);

  auto evaluate = [&](std::size_t which, std::size_t index, double delta) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (std::size_t i = 0; i < point.size(); ++i) {
      if (i != which) {
        vars.push_back(tape.constant(point[i]));
        continue;
      }
      Tensor shifted = point[i];
      shifted[index] += delta;
      vars.push_back(tape.constant(std::move(shifted)));
    }
    const double v = loss_fn(tape, vars).value()[0];
    if (!std::isfinite(v))
      throw NumericError(detail::concat("grad_check: non-finite loss after perturbing ",
                                        params[which].name, "[", index, "] by ", delta));
    return v;
  };

  GradCheckReport report;
  report.tol = tol;
  for (std::size_t p = 0; p < params.size(); ++p) {
    GradCheckEntry entry{params[p].name, 0.0, 0, 0.0, 0.0};
    for (std::size_t i = 0; i < point[p].size(); ++i) {
      const double numeric = (evaluate(p, i, eps) - evaluate(p, i, -eps)) / (2.0 * eps);
      const double a = analytic[p][i];
      const double rel = grad_rel_error(a, numeric);
      if (i == 0 || rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace tavlad
