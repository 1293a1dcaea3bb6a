// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>
#include <set>

#include "support.hpp"

namespace tavlad {
namespace {

using testing::random_matrix;

// Tensor -------------------------------------------------------------------

TEST(Tensor, MatrixIsRowMajor) {
  const Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t(1, 0), 4.0);
  EXPECT_EQ(t.row_span(1)[2], 6.0);
}

TEST(Tensor, RowsFoldLeadingDims) {
  const Tensor t({2, 3, 4}, 1.0);
  EXPECT_EQ(t.rows(), 6u);
  EXPECT_EQ(t.cols(), 4u);
  EXPECT_EQ(t.size(), 24u);
}

TEST(Tensor, ReshapeRejectsSizeChange) {
  const Tensor t = Tensor::matrix(2, 3);
  EXPECT_NO_THROW((void)t.reshaped({3, 2}));
  EXPECT_THROW((void)t.reshaped({4, 2}), ContractError);
}

TEST(Tensor, AllFiniteDetectsNanAndInf) {
  Tensor t = Tensor::matrix(1, 3, 1.0);
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
  t[1] = INFINITY;
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, MaxAbsDiffAndNorm) {
  const Tensor a = Tensor::row({3, 4});
  const Tensor b = Tensor::row({3, 2});
  EXPECT_EQ(max_abs_diff(a, b), 2.0);
  EXPECT_EQ(l2_norm(a.data()), 5.0);
}

// Rng ----------------------------------------------------------------------

TEST(Rng, MatchesSplitMix64ReferenceOutputs) {
  Rng r(0);
  EXPECT_EQ(r.next_u64(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(r.next_u64(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(r.next_u64(), 0x06C45D188009454FULL);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SplitDependsOnlyOnSeedAndLabel) {
  Rng a(7);
  const Rng fresh(7);
  for (int i = 0; i < 10; ++i) a.next_u64();
  Rng s1 = a.split("x", 3);
  Rng s2 = fresh.split("x", 3);
  EXPECT_EQ(s1.next_u64(), s2.next_u64());
}

TEST(Rng, DistinctLabelsGiveDistinctStreams) {
  const Rng root(1);
  std::set<std::uint64_t> firsts;
  for (std::uint64_t i = 0; i < 100; ++i) firsts.insert(root.split("video", i).next_u64());
  firsts.insert(root.split("other").next_u64());
  EXPECT_EQ(firsts.size(), 101u);
}

TEST(Rng, UniformIndexStaysInRangeAndCoversIt) {
  Rng r(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto k = r.uniform_index(7);
    ASSERT_LT(k, 7u);
    ++hits[k];
  }
  for (int h : hits) EXPECT_GT(h, 800);
  EXPECT_THROW(r.uniform_index(0), ContractError);
}

TEST(Rng, NormalMomentsAreStandard) {
  Rng r(11);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng r(5);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(v[0] * 1000 + v[1], 1);
}

// Scalar ops ---------------------------------------------------------------

TEST(Softmax, LargeLogitGapMatchesExtendedPrecision) {
  const std::vector<double> z = {1000.0, 0.0};
  const auto p = softmax(z);
  const long double e = std::exp(-1000.0L);
  const long double p1 = e / (1.0L + e);
  EXPECT_EQ(p[0], static_cast<double>(1.0L / (1.0L + e)));
  EXPECT_NEAR(p[1], static_cast<double>(p1), 1e-300);
  EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]));
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  Rng r(2);
  std::vector<double> z(9);
  for (double& x : z) x = 10.0 * r.normal();
  auto p = softmax(z);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-15);
  std::vector<double> shifted = z;
  for (double& x : shifted) x += 123.0;
  const auto q = softmax(shifted);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-14);  // the shifted inputs round differently
}

TEST(Softmax, EmptyInputIsAContractError) {
  EXPECT_THROW(softmax(std::vector<double>{}), ContractError);
}

TEST(Sigmoid, ExtremesDoNotOverflow) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_NEAR(sigmoid(-30.0), std::exp(-30.0) / (1.0 + std::exp(-30.0)), 1e-28);
}

TEST(L2Normalize, UnitNormForRegularInput) {
  const auto n = l2_normalize(std::vector<double>{3.0, 4.0});
  EXPECT_FALSE(n.degenerate);
  EXPECT_DOUBLE_EQ(n.values[0], 0.6);
  EXPECT_DOUBLE_EQ(n.values[1], 0.8);
}

TEST(L2Normalize, TinyInputPassesThroughAndIsFlagged) {
  const std::vector<double> v = {1e-14, 0.0};
  const auto n = l2_normalize(v);
  EXPECT_TRUE(n.degenerate);
  EXPECT_EQ(n.values, v);
}

TEST(IntraNormalize, RowsBecomeUnitAndZeroRowsAreCounted) {
  Tensor m = Tensor::matrix(3, 2, {3, 4, 0, 0, 1, 1});
  const auto r = intra_normalize(m);
  EXPECT_EQ(r.degenerate_rows, 1u);
  EXPECT_NEAR(l2_norm(r.values.row_span(0)), 1.0, 1e-15);
  EXPECT_EQ(r.values(1, 0), 0.0);
  EXPECT_NEAR(l2_norm(r.values.row_span(2)), 1.0, 1e-15);
}

// Tape ---------------------------------------------------------------------

TEST(Tape, BackwardOfSquareIsTwoX) {
  ad::Tape tape;
  const ad::Var x = tape.parameter(Tensor::row({1.5, -2.0, 0.25}));
  const ad::Var y = ad::sum(ad::mul(x, x));
  tape.backward(y);
  const Tensor g = tape.grad(x);
  EXPECT_EQ(g[0], 3.0);
  EXPECT_EQ(g[1], -4.0);
  EXPECT_EQ(g[2], 0.5);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  ad::Tape tape;
  const ad::Var c = tape.constant(Tensor::row({1.0, 2.0}));
  const ad::Var x = tape.parameter(Tensor::row({3.0, 4.0}));
  tape.backward(ad::sum(ad::mul(c, x)));
  EXPECT_EQ(tape.grad(c), Tensor(c.value().dims(), 0.0));
  EXPECT_EQ(tape.grad(x), c.value());
}

TEST(Tape, BackwardNeedsScalarRoot) {
  ad::Tape tape;
  const ad::Var x = tape.parameter(Tensor::row({1.0, 2.0}));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Tape, RepeatedBackwardGivesSameGradients) {
  ad::Tape tape;
  const ad::Var x = tape.parameter(Tensor::row({0.3, -0.7}));
  const ad::Var y = ad::sum(ad::tanh(ad::scale(x, 2.0)));
  tape.backward(y);
  const Tensor g1 = tape.grad(x);
  tape.backward(y);
  EXPECT_EQ(tape.grad(x), g1);
}

TEST(Tape, MatmulTransposesMatchExplicitProducts) {
  Rng r(4);
  ad::Tape tape;
  const Tensor a = random_matrix(r, 3, 2);
  const Tensor b = random_matrix(r, 4, 2);
  const ad::Var va = tape.constant(a), vb = tape.constant(b);
  const Tensor ab = ad::matmul(va, vb, false, true).value();
  ASSERT_EQ(ab.rows(), 3u);
  ASSERT_EQ(ab.cols(), 4u);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      EXPECT_NEAR(ab(i, j), a(i, 0) * b(j, 0) + a(i, 1) * b(j, 1), 1e-15);
  const Tensor ata = ad::matmul(va, va, true, false).value();
  ASSERT_EQ(ata.rows(), 2u);
  EXPECT_NEAR(ata(0, 1), a(0, 0) * a(0, 1) + a(1, 0) * a(1, 1) + a(2, 0) * a(2, 1), 1e-15);
  EXPECT_THROW(ad::matmul(va, vb), ContractError);
}

TEST(Tape, CrossEntropyMatchesLogSumExp) {
  ad::Tape tape;
  const ad::Var z = tape.parameter(Tensor::row({2.0, -1.0, 0.5}));
  const ad::Var l = ad::cross_entropy(z, 2);
  const double lse = std::log(std::exp(2.0) + std::exp(-1.0) + std::exp(0.5));
  EXPECT_NEAR(l.value()[0], lse - 0.5, 1e-15);
  tape.backward(l);
  const Tensor g = tape.grad(z);
  const auto p = softmax(z.value().data());
  EXPECT_NEAR(g[0], p[0], 1e-15);
  EXPECT_NEAR(g[2], p[2] - 1.0, 1e-15);
}

TEST(Tape, RowNormalizePassesTinyRowsThrough) {
  ad::Tape tape;
  const ad::Var x = tape.parameter(Tensor::matrix(2, 2, {3, 4, 0, 0}));
  const ad::Var y = ad::row_normalize(x);
  EXPECT_NEAR(y.value()(0, 0), 0.6, 1e-15);
  EXPECT_EQ(y.value()(1, 0), 0.0);
  tape.backward(ad::sum(y));
  EXPECT_EQ(tape.grad(x)(1, 1), 1.0);
}

TEST(Tape, ClampBlocksGradientOutsideRange) {
  ad::Tape tape;
  const ad::Var x = tape.parameter(Tensor::row({-2.0, 0.5, 3.0}));
  tape.backward(ad::sum(ad::clamp(x, 0.0, 1.0)));
  const Tensor g = tape.grad(x);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 1.0);
  EXPECT_EQ(g[2], 0.0);
}

// Every differentiable primitive against central differences.
struct PrimitiveCase {
  const char* name;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  std::function<ad::Var(std::span<const ad::Var>)> graph;
};

class PrimitiveGradients : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradients, MatchCentralDifferences) {
  const auto& pc = GetParam();
  Rng r(17);
  std::vector<NamedTensor> params;
  for (std::size_t i = 0; i < pc.shapes.size(); ++i)
    params.push_back({"p" + std::to_string(i),
                      random_matrix(r, pc.shapes[i].first, pc.shapes[i].second, 0.8)});
  const LossGraph loss = [&](ad::Tape& tape, std::span<const ad::Var> vs) {
    // A fixed random projection makes every output coordinate matter.
    const ad::Var out = pc.graph(vs);
    Rng wr(99);
    const ad::Var w = tape.constant(random_matrix(wr, out.value().rows(), out.value().cols()));
    return ad::sum(ad::mul(out, w));
  };
  const auto report = grad_check(loss, params, 1e-6, 1e-6);
  for (const auto& e : report.entries)
    EXPECT_LE(e.max_rel_error, 1e-6) << pc.name << " " << e.name << "[" << e.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(
    AllOps, PrimitiveGradients,
    ::testing::Values(
        PrimitiveCase{"matmul", {{3, 4}, {4, 2}}, [](auto v) { return ad::matmul(v[0], v[1]); }},
        PrimitiveCase{"matmul_tt", {{4, 3}, {2, 4}},
                      [](auto v) { return ad::matmul(v[0], v[1], true, true); }},
        PrimitiveCase{"add_sub", {{2, 3}, {2, 3}},
                      [](auto v) { return ad::sub(ad::add(v[0], v[1]), ad::mul(v[1], v[1])); }},
        PrimitiveCase{"scale", {{2, 2}}, [](auto v) { return ad::scale(v[0], -1.7); }},
        PrimitiveCase{"add_row", {{3, 4}, {1, 4}}, [](auto v) { return ad::add_row(v[0], v[1]); }},
        PrimitiveCase{"scale_rows", {{3, 4}, {3, 1}},
                      [](auto v) { return ad::scale_rows(v[0], v[1]); }},
        PrimitiveCase{"sigmoid", {{2, 3}}, [](auto v) { return ad::sigmoid(v[0]); }},
        PrimitiveCase{"tanh", {{2, 3}}, [](auto v) { return ad::tanh(v[0]); }},
        PrimitiveCase{"softmax_rows", {{3, 5}}, [](auto v) { return ad::softmax_rows(v[0]); }},
        PrimitiveCase{"row_normalize", {{3, 4}}, [](auto v) { return ad::row_normalize(v[0]); }},
        PrimitiveCase{"col_sum", {{3, 4}}, [](auto v) { return ad::col_sum(v[0]); }},
        PrimitiveCase{"select_row", {{3, 4}}, [](auto v) { return ad::select_row(v[0], 1); }},
        PrimitiveCase{"flatten", {{3, 4}},
                      [](auto v) { return ad::flatten(ad::mul(v[0], v[0])); }},
        PrimitiveCase{"cross_entropy", {{1, 5}},
                      [](auto v) { return ad::cross_entropy(v[0], 3); }}),
    [](const auto& info) { return std::string(info.param.name); });

}  // namespace
}  // namespace tavlad
