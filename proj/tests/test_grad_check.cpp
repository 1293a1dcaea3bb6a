// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

namespace tavlad {
namespace {

TEST(GradCheck, SquareHasZeroErrorAgainstTwoX) {
  const std::vector<NamedTensor> params = {{"x", Tensor::row({0.5, -1.25, 3.0})}};
  const LossGraph f = [](ad::Tape&, std::span<const ad::Var> v) { return ad::sum(ad::mul(v[0], v[0])); };
  const auto r = grad_check(f, params, 1e-5, 1e-8);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_TRUE(r.passed());
  EXPECT_LT(r.entries[0].max_rel_error, 1e-9);
}

TEST(GradCheck, ParameterUnusedByTheLossHasZeroGradient) {
  const std::vector<NamedTensor> params = {{"used", Tensor::row({1.0})}, {"unused", Tensor::row({2.0})}};
  const LossGraph f = [](ad::Tape&, std::span<const ad::Var> v) { return ad::sum(ad::scale(v[0], 3.0)); };
  const auto r = grad_check(f, params, 1e-5, 1e-8);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.entries[1].analytic, 0.0);
  EXPECT_EQ(r.entries[1].numeric, 0.0);
}

TEST(GradCheck, WrongGradientIsReported) {
  const std::vector<NamedTensor> params = {{"x", Tensor::row({0.0})}};
  const LossGraph f = [](ad::Tape&, std::span<const ad::Var> v) {
    return ad::sum(ad::scale(ad::clamp(v[0], 0.0, 1.0), 1.0));
  };
  const auto ok = grad_check(f, params, 1e-5, 1e-4);
  // Centered differences straddle the clamp boundary and see slope 0.5.
  EXPECT_FALSE(ok.passed());
  EXPECT_EQ(ok.worst()->name, "x");
}

TEST(GradCheck, RelativeErrorUsesFloor) {
  EXPECT_EQ(grad_rel_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(grad_rel_error(1e-10, 0.0), 1e-2);
  EXPECT_DOUBLE_EQ(grad_rel_error(1.0, 3.0), 0.5);
}

TEST(GradCheck, EpsOutsideRangeIsRejected) {
  const std::vector<NamedTensor> params = {{"x", Tensor::row({1.0})}};
  const LossGraph f = [](ad::Tape&, std::span<const ad::Var> v) { return ad::sum(v[0]); };
  EXPECT_THROW(grad_check(f, params, 1e-9, 1e-4), ContractError);
  EXPECT_THROW(grad_check(f, params, 1e-2, 1e-4), ContractError);
}

TEST(GradCheck, NonFiniteLossNamesTheParameter) {
  const std::vector<NamedTensor> params = {{"w", Tensor::row({1e-300})}};
  const LossGraph f = [](ad::Tape& t, std::span<const ad::Var> v) {
    // Overflows to infinity for any input near the point.
    const ad::Var big = ad::scale(v[0], 1e308);
    return ad::sum(ad::mul(big, ad::mul(big, t.constant(Tensor::row({1e308})))));
  };
  try {
    grad_check(f, params, 1e-5, 1e-4);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("not finite"), std::string::npos);
  }
}

// Full pipeline on the tiny instance, every configuration, ten seeds.
class PipelineGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(PipelineGradients, AllConfigurationsPass) {
  for (const auto& c : gradient_suite_cases()) {
    const auto r = run_gradient_case(c, GetParam());
    const auto* w = r.report.worst();
    ASSERT_NE(w, nullptr);
    EXPECT_TRUE(r.report.passed()) << c.label() << ": " << w->name << "[" << w->worst_index
                                   << "] analytic " << w->analytic << " numeric " << w->numeric
                                   << " rel " << w->max_rel_error;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, PipelineGradients, ::testing::Range<std::uint64_t>(0, 10));

TEST(PipelineGradientSelection, StageOneChecksOnlyGruAndClassifier) {
  const auto tp = tiny_problem(0, Aggregator::gru, true);
  const auto r = check_model_gradients(tp.params, tp.video, tp.label, trainable_tensors(1),
                                       Rng(1), kGradSuiteEps, kGradSuiteTol);
  for (const auto& e : r.entries)
    EXPECT_TRUE(e.name.rfind("gru.", 0) == 0 || e.name.rfind("fc.", 0) == 0) << e.name;
  EXPECT_EQ(r.entries.size(), 11u);
}

TEST(PipelineGradientSelection, FrozenAttentionIsNotChecked) {
  const auto tp = tiny_problem(0, Aggregator::gru, true);
  const auto r = check_model_gradients(tp.params, tp.video, tp.label, trainable_tensors(2, true),
                                       Rng(1), kGradSuiteEps, kGradSuiteTol);
  for (const auto& e : r.entries) EXPECT_NE(e.name, "attention.weights");
  EXPECT_EQ(r.entries.size(), 14u);
}

}  // namespace
}  // namespace tavlad
