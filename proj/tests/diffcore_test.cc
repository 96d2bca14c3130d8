// Copyright 2026 The Taggant Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "taggant/error.h"
#include "taggant/model.h"
#include "taggant/ops.h"
#include "taggant/tape.h"
#include "op_cases.h"
#include "test_util.h"

namespace taggant {
namespace {

using diff::Shape;
using diff::Tensor;
using testing::FirstOrderError;
using testing::Project;
using testing::RandomTensor;
using testing::SecondOrderError;
using testing::OpCase;
using testing::UnaryCases;
using testing::kFirstOrderTol;
using testing::kSecondOrderTol;
namespace d = diff;


class OpGradientTest : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradientTest, FirstOrderMatchesFiniteDifferences) {
  const OpCase& c = GetParam();
  Rng rng(17);
  const Tensor x = RandomTensor(c.in_shape, rng, c.lo, c.hi);
  const auto f = Project(c.op, c.out_shape, 23);
  EXPECT_LE(FirstOrderError(f, x), kFirstOrderTol) << c.name;
}

TEST_P(OpGradientTest, SecondOrderMatchesFiniteDifferences) {
  const OpCase& c = GetParam();
  if (!c.second_order) GTEST_SKIP() << "first-order op";
  Rng rng(19);
  const Tensor x = RandomTensor(c.in_shape, rng, c.lo, c.hi);
  // A quadratic outer term keeps second-order paths non-trivial for linear ops.
  const auto proj = Project(c.op, c.out_shape, 29);
  const testing::ScalarFn f = [proj](const Tensor& t) {
    const Tensor s = proj(t);
    return d::Add(s, d::MulScalar(d::Mul(s, s), 0.5));
  };
  EXPECT_LE(SecondOrderError(f, x), kSecondOrderTol) << c.name;
}

TEST_P(OpGradientTest, OutputShapeAndDeterminism) {
  const OpCase& c = GetParam();
  Rng rng(31);
  const Tensor x = RandomTensor(c.in_shape, rng, c.lo, c.hi);
  const Tensor y1 = c.op(x);
  const Tensor y2 = c.op(x);
  EXPECT_EQ(y1.shape(), c.out_shape);
  ASSERT_EQ(y1.numel(), y2.numel());
  for (std::int64_t i = 0; i < y1.numel(); ++i) EXPECT_EQ(y1.at(i), y2.at(i));
  const auto g1 = testing::AnalyticGradient(Project(c.op, c.out_shape, 3), x);
  const auto g2 = testing::AnalyticGradient(Project(c.op, c.out_shape, 3), x);
  EXPECT_EQ(g1, g2);
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradientTest, ::testing::ValuesIn(UnaryCases()),
                         [](const auto& info) { return info.param.name; });

TEST(Grad, SquareAtThree) {
  const Tensor x = Tensor::Scalar(3.0, true);
  const auto g = d::Grad(d::Mul(x, x), {x});
  EXPECT_DOUBLE_EQ(g[0].item(), 6.0);
}

TEST(Grad, SecondDerivativeOfCube) {
  const Tensor x = Tensor::Scalar(2.0, true);
  const Tensor y = d::Mul(d::Mul(x, x), x);
  const auto g = d::Grad(y, {x}, {.create_graph = true});
  EXPECT_DOUBLE_EQ(g[0].item(), 12.0);
  const auto gg = d::Grad(g[0], {x});
  EXPECT_DOUBLE_EQ(gg[0].item(), 12.0);
}

TEST(Grad, UnreachableTargetIsAnError) {
  const Tensor x = Tensor::Scalar(1.0, true);
  const Tensor z = Tensor::Scalar(2.0, true);
  EXPECT_THROW(d::Grad(d::Mul(x, x), {z}), ConfigError);
  const auto g = d::Grad(d::Mul(x, x), {z}, {.allow_unused = true});
  EXPECT_EQ(g[0].item(), 0.0);
}

TEST(Grad, NonScalarOutputIsAnError) {
  const Tensor x = Tensor::Full({2}, 1.0, true);
  EXPECT_THROW(d::Grad(d::Mul(x, x), {x}), ConfigError);
}

TEST(Grad, NonFiniteValuesAreSurfaced) {
  const Tensor x = Tensor::FromData({2}, {1.0, -1.0}, true);
  EXPECT_THROW(d::Log(x), NumericalError);
  EXPECT_THROW(d::Div(x, Tensor::Zeros({2})), NumericalError);
  EXPECT_THROW(d::Exp(Tensor::Full({1}, 1000.0)), NumericalError);
}

TEST(Grad, ShapeMismatchIsAnError) {
  EXPECT_THROW(d::Add(Tensor::Zeros({2}), Tensor::Zeros({3})), ConfigError);
  EXPECT_THROW(d::MatMul(Tensor::Zeros({2, 3}), Tensor::Zeros({2, 3})), ConfigError);
}

TEST(Grad, NoGradGuardStopsRecording) {
  const Tensor x = Tensor::Scalar(1.0, true);
  d::NoGradGuard guard;
  EXPECT_FALSE(d::Mul(x, x).requires_grad());
}

TEST(Grad, ClampIsStraightThrough) {
  const Tensor x = Tensor::FromData({3}, {-0.5, 0.5, 1.5}, true);
  const Tensor y = d::ClampStraightThrough(x, 0.0, 1.0);
  EXPECT_EQ(y.at(0), 0.0);
  EXPECT_EQ(y.at(1), 0.5);
  EXPECT_EQ(y.at(2), 1.0);
  const auto g = d::Grad(d::Sum(y), {x});
  for (int i = 0; i < 3; ++i) EXPECT_EQ(g[0].at(i), 1.0);
}

TEST(Grad, CosineIsBounded) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor u = RandomTensor({7}, rng);
    const Tensor v = RandomTensor({7}, rng);
    const double c = d::Cosine(u, v).item();
    EXPECT_LE(c, 1.0);
    EXPECT_GE(c, -1.0);
  }
  const Tensor u = RandomTensor({7}, rng);
  EXPECT_NEAR(d::Cosine(u, u).item(), 1.0, 1e-15);
  EXPECT_NEAR(d::Cosine(u, d::Neg(u)).item(), -1.0, 1e-15);
}

TEST(Tape, SquareForward) {
  d::Tape tape({{"x", {1}}}, [](const d::Tape::Inputs& in) {
    return d::Mul(in.at("x"), in.at("x"));
  });
  EXPECT_EQ(tape.Forward({{"x", Tensor::FromData({1}, {2.0})}}).at(0), 4.0);
}

TEST(Tape, SoftmaxOfZeros) {
  d::Tape tape({{"x", {1, 2}}}, [](const d::Tape::Inputs& in) { return d::Softmax(in.at("x")); });
  const Tensor y = tape.Forward({{"x", Tensor::Zeros({1, 2})}});
  EXPECT_EQ(y.at(0), 0.5);
  EXPECT_EQ(y.at(1), 0.5);
}

TEST(Tape, SelfCosine) {
  d::Tape tape({{"u", {2}}, {"v", {2}}}, [](const d::Tape::Inputs& in) {
    return d::Cosine(in.at("u"), in.at("v"));
  });
  const Tensor u = Tensor::FromData({2}, {1.0, 0.0});
  EXPECT_EQ(tape.Forward({{"u", u}, {"v", u}}).item(), 1.0);
}

TEST(Tape, RecordsAreTopologicalAndReplayIsBitIdentical) {
  Rng rng(8);
  const Tensor x = RandomTensor({4, 4}, rng, -1, 1, true);
  d::Tape tape({{"x", {4, 4}}}, [](const d::Tape::Inputs& in) {
    const Tensor h = d::Gelu(d::MatMul(in.at("x"), in.at("x")));
    return d::L2Norm(d::Softmax(h));
  });
  const Tensor y1 = tape.Forward({{"x", x}});
  const auto records = tape.records();
  ASSERT_FALSE(records.empty());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& fn = records[i].node()->grad_fn;
    if (!fn) continue;
    for (const auto& in : fn->inputs) {
      if (in.node() == x.node()) continue;
      const auto pos = std::find_if(records.begin(), records.end(), [&](const Tensor& r) {
        return r.node() == in.node();
      });
      ASSERT_NE(pos, records.end());
      EXPECT_LT(pos - records.begin(), static_cast<std::ptrdiff_t>(i));
    }
  }
  const Tensor y2 = tape.Forward({{"x", x}});
  EXPECT_EQ(y1.item(), y2.item());
  EXPECT_EQ(d::Grad(y1, {x})[0].data()[3], d::Grad(y2, {x})[0].data()[3]);
}

TEST(Tape, UnboundOrMisshapenInputIsAnError) {
  d::Tape tape({{"x", {2}}}, [](const d::Tape::Inputs& in) { return d::Sum(in.at("x")); });
  EXPECT_THROW(tape.Forward({}), ConfigError);
  EXPECT_THROW(tape.Forward({{"x", Tensor::Zeros({3})}}), ConfigError);
}

// s(delta) = cos(grad_theta L(x + delta), c) on a small MLP.
TEST(Grad, GradientAlignmentThroughSmallMlp) {
  ModelSpec spec;
  spec.architecture = Architecture::kMlp;
  spec.input = {1, 3, 3};
  spec.classes = 3;
  spec.hidden = 5;
  spec.seed = 4;
  const Model model(spec);
  Rng rng(12);
  const Tensor x = RandomTensor({1, 1, 3, 3}, rng, 0.0, 1.0);
  const Tensor c = RandomTensor({model.parameter_count()}, rng);
  const testing::ScalarFn s = [&](const Tensor& delta) {
    const Tensor g = ParamGrad(model, d::Add(x, delta), {2}, LossKind::kCrossEntropy, true);
    return d::Cosine(g, c);
  };
  const Tensor delta = RandomTensor({1, 1, 3, 3}, rng, -0.1, 0.1);
  EXPECT_LE(FirstOrderError(s, delta), kFirstOrderTol);
}

}  // namespace
}  // namespace taggant
