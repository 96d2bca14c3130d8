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

#ifndef TAGGANT_OPS_H_
#define TAGGANT_OPS_H_

#include <array>
#include <cstdint>
#include <vector>

#include "taggant/tensor.h"

// Differentiable op inventory. Every backward rule is expressed through ops in
// this header, so gradients of any order are available when Grad() is called
// with create_graph. Elementwise binary ops require equal shapes; broadcasting
// is explicit (Expand, BroadcastRows, ...). Reductions sum in ascending index
// order.
namespace taggant::diff {

// Elementwise arithmetic.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Div(const Tensor& a, const Tensor& b);
Tensor Neg(const Tensor& a);
Tensor MulScalar(const Tensor& a, double c);
Tensor AddScalar(const Tensor& a, double c);

// Elementwise functions.
Tensor Exp(const Tensor& a);
Tensor Log(const Tensor& a);
Tensor Sqrt(const Tensor& a);
Tensor Sigmoid(const Tensor& a);
Tensor Softplus(const Tensor& a);
// GELU, tanh form.
Tensor Gelu(const Tensor& a);
// d/dx Gelu(x).
Tensor GeluDerivative(const Tensor& a);
// First-order only: the second derivative is zero almost everywhere.
Tensor Relu(const Tensor& a);
// Clamp whose derivative is the identity (straight-through).
Tensor ClampStraightThrough(const Tensor& a, double lo, double hi);

// Shape manipulation.
Tensor Reshape(const Tensor& a, Shape shape);
Tensor Transpose(const Tensor& a);  // rank 2
// Concatenation and slicing along axis 0.
Tensor Concat(const std::vector<Tensor>& parts);
Tensor Slice(const Tensor& a, std::int64_t begin, std::int64_t count);
// Places `a` at rows [begin, begin + a.dim(0)) of a zero tensor with
// `total` rows. Adjoint of Slice.
Tensor Embed(const Tensor& a, std::int64_t begin, std::int64_t total);

// Reductions and their broadcasting adjoints.
Tensor Sum(const Tensor& a);                       // -> scalar
Tensor Mean(const Tensor& a);                      // -> scalar
Tensor Expand(const Tensor& scalar, Shape shape);  // scalar -> shape
Tensor SumRows(const Tensor& a);                   // [N,F] -> [F]
Tensor BroadcastRows(const Tensor& v, std::int64_t rows);  // [F] -> [N,F]
Tensor SumCols(const Tensor& a);                   // [N,F] -> [N]
Tensor BroadcastCols(const Tensor& v, std::int64_t cols);  // [N] -> [N,F]
// Channel axis is rank-3 for images ([C,H,W] or [N,C,H,W]).
Tensor ChannelSum(const Tensor& a);                     // -> [C]
Tensor ChannelBroadcast(const Tensor& v, Shape shape);  // [C] -> shape
// Sum over the channel axis at every pixel: [N,C,H,W] -> [N,1,H,W].
Tensor PixelChannelSum(const Tensor& a);
Tensor PixelChannelRepeat(const Tensor& a, std::int64_t channels);

// Linear algebra.
Tensor MatMul(const Tensor& a, const Tensor& b);  // [M,K] x [K,N]
Tensor AddRowBias(const Tensor& x, const Tensor& bias);
Tensor Dot(const Tensor& a, const Tensor& b);
Tensor L2Norm(const Tensor& a);
Tensor Cosine(const Tensor& a, const Tensor& b);

// Convolution, NCHW input with OIHW weights.
struct Conv2dParams {
  std::int64_t stride = 1;
  std::int64_t padding = 0;
};
Tensor Conv2d(const Tensor& x, const Tensor& w, Conv2dParams p = {});
Tensor Conv2dInputGrad(const Tensor& grad_out, const Tensor& w,
                       const Shape& input_shape, Conv2dParams p);
Tensor Conv2dWeightGrad(const Tensor& x, const Tensor& grad_out,
                        const Shape& weight_shape, Conv2dParams p);
Tensor AddChannelBias(const Tensor& x, const Tensor& bias);

// Non-overlapping average pooling with window `size` over the last two axes.
Tensor AvgPool2d(const Tensor& x, std::int64_t size);
Tensor AvgUnpool2d(const Tensor& x, std::int64_t size);

// Classification losses, averaged over the batch.
Tensor LogSoftmax(const Tensor& logits);  // rows
Tensor Softmax(const Tensor& logits);
Tensor CrossEntropy(const Tensor& logits, const std::vector<int>& labels);
Tensor SoftCrossEntropy(const Tensor& logits, const Tensor& target_probs);
// Mean over batch and classes of the per-logit binary cross-entropy.
Tensor BinaryCrossEntropyWithLogits(const Tensor& logits, const Tensor& targets);
Tensor OneHot(const std::vector<int>& labels, std::int64_t classes);

// Image ops over the last three axes ([C,H,W] or [N,C,H,W]).
Tensor FlipHorizontal(const Tensor& x);
// y[c] = scale[c] * x[c] + shift[c].
Tensor ChannelAffine(const Tensor& x, const std::vector<double>& scale,
                     const std::vector<double>& shift);
// y[c] = sum_k mix[c][k] x[k]; mix is row-major C x C.
Tensor ChannelMix(const Tensor& x, const std::vector<double>& mix);

// Destination pixel (row, col) samples the source at
//   src_row = a[0]*row + a[1]*col + a[2],  src_col = a[3]*row + a[4]*col + a[5]
// with bilinear interpolation and zeros outside the image.
struct SamplingMap {
  std::array<double, 6> a{1, 0, 0, 0, 1, 0};
  static SamplingMap Translation(double d_row, double d_col);
  bool IsIdentity() const;
};
Tensor BilinearResample(const Tensor& x, const SamplingMap& map);
Tensor BilinearResampleAdjoint(const Tensor& g, const SamplingMap& map);

}  // namespace taggant::diff

#endif  // TAGGANT_OPS_H_
