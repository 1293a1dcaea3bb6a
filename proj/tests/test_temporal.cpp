// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include "support.hpp"

namespace tavlad {
namespace {

using testing::random_matrix;

GruParams scalar_gru() {
  GruParams g = GruParams::zeros(1, 1);
  g.wz[0] = 0.5;
  g.uz[0] = -0.3;
  g.bz[0] = 0.1;
  g.wr[0] = -0.7;
  g.ur[0] = 0.2;
  g.br[0] = 0.05;
  g.wh[0] = 1.1;
  g.uh[0] = 0.4;
  g.bh[0] = -0.2;
  return g;
}

double scalar_step(double x, double h) {
  const double z = 1.0 / (1.0 + std::exp(-(0.5 * x - 0.3 * h + 0.1)));
  const double r = 1.0 / (1.0 + std::exp(-(-0.7 * x + 0.2 * h + 0.05)));
  const double cand = std::tanh(1.1 * x + 0.4 * (r * h) - 0.2);
  return (1.0 - z) * h + z * cand;
}

TEST(Gru, ScalarStepMatchesHandComputation) {
  const GruParams g = scalar_gru();
  for (double x : {-1.5, 0.0, 0.8})
    for (double h : {-0.4, 0.0, 0.9}) {
      const auto out = gru_step(std::vector<double>{x}, std::vector<double>{h}, g);
      EXPECT_NEAR(out[0], scalar_step(x, h), 1e-15) << "x=" << x << " h=" << h;
    }
}

TEST(Gru, AggregateRunsFromZeroStateInOrder) {
  const GruParams g = scalar_gru();
  const std::vector<double> xs = {0.3, -1.0, 2.0};
  std::vector<FrameDescriptor> frames;
  for (std::size_t t = 0; t < xs.size(); ++t) frames.push_back({Tensor::matrix(1, 1, {xs[t]}), t});
  double h = 0.0;
  for (double x : xs) h = scalar_step(x, h);
  EXPECT_NEAR(aggregate(frames, g)[0], h, 1e-15);
}

TEST(Gru, StreamsShareParametersButNotState) {
  Rng r(2);
  const GruParams g = GruParams::random(3, 4, r);
  const Tensor frame = random_matrix(r, 2, 3);
  const Tensor h = aggregate(std::vector<FrameDescriptor>{{frame, 0}}, g);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto single = gru_step(frame.row_span(k), std::vector<double>(4, 0.0), g);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(h(k, j), single[j], 1e-15);
  }
}

TEST(Gru, ZeroParametersHalveTheState) {
  const GruParams g = GruParams::zeros(2, 2);
  const auto out = gru_step(std::vector<double>{5.0, -3.0}, std::vector<double>{0.8, -0.2}, g);
  EXPECT_DOUBLE_EQ(out[0], 0.4);
  EXPECT_DOUBLE_EQ(out[1], -0.1);
}

TEST(Gru, RandomInitIsBoundedByInverseSqrtHidden) {
  Rng r(0);
  GruParams g = GruParams::random(5, 16, r);
  for (const Tensor* t : g.tensors())
    for (double x : t->data()) EXPECT_LE(std::abs(x), 0.25);
  EXPECT_EQ(g.hidden(), 16u);
  EXPECT_EQ(g.input(), 5u);
}

TEST(Gru, ShapeMismatchIsAContractError) {
  const GruParams g = GruParams::zeros(3, 2);
  EXPECT_THROW(gru_step(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 0.0}, g), ContractError);
  EXPECT_THROW(aggregate(std::vector<FrameDescriptor>{}, g), ContractError);
}

TEST(Gru, OrderOfFramesChangesTheState) {
  int differing = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r(seed);
    const GruParams g = GruParams::random(4, 6, r);
    std::vector<FrameDescriptor> frames;
    for (std::size_t t = 0; t < 5; ++t) frames.push_back({random_matrix(r, 3, 4), t});
    std::vector<FrameDescriptor> reversed(frames.rbegin(), frames.rend());
    if (max_abs_diff(aggregate(frames, g), aggregate(reversed, g)) > 1e-9) ++differing;
  }
  EXPECT_EQ(differing, 20);
}

TEST(Finalize, DescriptorIsUnitNormWithUnitRows) {
  Rng r(7);
  const Tensor m = random_matrix(r, 4, 6);
  const auto d = finalize_descriptor(m);
  EXPECT_FALSE(d.degenerate);
  ASSERT_EQ(d.values.size(), 24u);
  EXPECT_NEAR(l2_norm(d.values), 1.0, 1e-12);
  // Every intra-normalized row carries the same share of the final norm.
  for (std::size_t k = 0; k < 4; ++k) {
    const double rn = l2_norm(std::span<const double>(d.values).subspan(k * 6, 6));
    EXPECT_NEAR(rn, 0.5, 1e-12);
  }
}

TEST(Finalize, ZeroMatrixIsDegenerateAndFinite) {
  const auto d = finalize_descriptor(Tensor::matrix(3, 2));
  EXPECT_TRUE(d.degenerate);
  for (double x : d.values) EXPECT_EQ(x, 0.0);
}

TEST(Finalize, TapeVersionMatchesPlainVersion) {
  Rng r(8);
  const Tensor m = random_matrix(r, 3, 5);
  ad::Tape tape;
  const auto v = ad::finalize_descriptor(tape.constant(m)).value();
  const auto d = finalize_descriptor(m);
  for (std::size_t i = 0; i < d.values.size(); ++i) EXPECT_NEAR(v[i], d.values[i], 1e-15);
}

}  // namespace
}  // namespace tavlad
