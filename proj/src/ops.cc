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

#include "taggant/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "taggant/error.h"

namespace taggant::diff {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

using Grads = std::vector<Tensor>;


void RequireSameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + ShapeString(a.shape()) +
                      " vs " + ShapeString(b.shape()));
  }
}

void RequireRank(const Tensor& a, std::int64_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ConfigError(std::string(op) + ": expected rank " + std::to_string(rank) +
                      ", got shape " + ShapeString(a.shape()));
  }
}

void RequireImageRank(const Shape& s, const char* op) {
  if (s.size() < 3) {
    throw ConfigError(std::string(op) + ": expected [..., C, H, W], got " + ShapeString(s));
  }
}

template <typename F>
std::vector<double> MapValues(const Tensor& a, F f) {
  auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return out;
}

template <typename F>
std::vector<double> ZipValues(const Tensor& a, const Tensor& b, F f) {
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  return out;
}


// Image geometry over the last three axes.
struct ImageDims {
  std::int64_t planes_outer;  // product of leading axes
  std::int64_t channels;
  std::int64_t height;
  std::int64_t width;
};

ImageDims ImageDimsOf(const Shape& s) {
  const auto r = s.size();
  ImageDims d{1, s[r - 3], s[r - 2], s[r - 1]};
  for (std::size_t i = 0; i + 3 < r; ++i) d.planes_outer *= s[i];
  return d;
}

struct ConvGeometry {
  std::int64_t n, c, h, w;     // input
  std::int64_t o, kh, kw;      // weights
  std::int64_t ho, wo;         // output
  std::int64_t stride, pad;
  std::int64_t patch() const { return c * kh * kw; }
  std::int64_t locations() const { return ho * wo; }
};

ConvGeometry MakeGeometry(const Shape& x, const Shape& w, Conv2dParams p,
                          const char* op) {
  if (x.size() != 4 || w.size() != 4) {
    throw ConfigError(std::string(op) + ": expected NCHW input and OIHW weights, got " +
                      ShapeString(x) + " and " + ShapeString(w));
  }
  if (x[1] != w[1]) {
    throw ConfigError(std::string(op) + ": channel mismatch " + ShapeString(x) + " vs " +
                      ShapeString(w));
  }
  if (p.stride < 1 || p.padding < 0) throw ConfigError(std::string(op) + ": bad stride/padding");
  ConvGeometry g{x[0], x[1], x[2], x[3], w[0], w[2], w[3], 0, 0, p.stride, p.padding};
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw || g.ho < 1 || g.wo < 1) {
    throw ConfigError(std::string(op) + ": kernel larger than padded input");
  }
  return g;
}

// cols is [patch, n * locations], row-major.
RowMatrix Im2Col(const ConvGeometry& g, std::span<const double> x) {
  const auto L = g.locations();
  RowMatrix cols(g.patch(), g.n * L);
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const auto row = (c * g.kh + ki) * g.kw + kj;
        double* dst = cols.data() + row * g.n * L;
        for (std::int64_t n = 0; n < g.n; ++n) {
          const double* plane = x.data() + (n * g.c + c) * g.h * g.w;
          for (std::int64_t oh = 0; oh < g.ho; ++oh) {
            const auto ih = oh * g.stride - g.pad + ki;
            double* out = dst + n * L + oh * g.wo;
            if (ih < 0 || ih >= g.h) {
              std::fill(out, out + g.wo, 0.0);
              continue;
            }
            const double* src = plane + ih * g.w;
            if (g.stride == 1) {
              // Valid columns form one contiguous run.
              const auto lo = std::clamp<std::int64_t>(g.pad - kj, 0, g.wo);
              const auto hi = std::clamp<std::int64_t>(g.w + g.pad - kj, lo, g.wo);
              std::fill(out, out + lo, 0.0);
              std::copy(src + lo - g.pad + kj, src + hi - g.pad + kj, out + lo);
              std::fill(out + hi, out + g.wo, 0.0);
              continue;
            }
            for (std::int64_t ow = 0; ow < g.wo; ++ow) {
              const auto iw = ow * g.stride - g.pad + kj;
              out[ow] = (iw >= 0 && iw < g.w) ? src[iw] : 0.0;
            }
          }
        }
      }
    }
  }
  return cols;
}

std::vector<double> Col2Im(const ConvGeometry& g, const RowMatrix& cols) {
  const auto L = g.locations();
  std::vector<double> x(g.n * g.c * g.h * g.w, 0.0);
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const auto row = (c * g.kh + ki) * g.kw + kj;
        const double* src_row = cols.data() + row * g.n * L;
        for (std::int64_t n = 0; n < g.n; ++n) {
          double* plane = x.data() + (n * g.c + c) * g.h * g.w;
          for (std::int64_t oh = 0; oh < g.ho; ++oh) {
            const auto ih = oh * g.stride - g.pad + ki;
            if (ih < 0 || ih >= g.h) continue;
            const double* in = src_row + n * L + oh * g.wo;
            double* dst = plane + ih * g.w;
            if (g.stride == 1) {
              const auto lo = std::clamp<std::int64_t>(g.pad - kj, 0, g.wo);
              const auto hi = std::clamp<std::int64_t>(g.w + g.pad - kj, lo, g.wo);
              double* d = dst - g.pad + kj;
              for (auto ow = lo; ow < hi; ++ow) d[ow] += in[ow];
              continue;
            }
            for (std::int64_t ow = 0; ow < g.wo; ++ow) {
              const auto iw = ow * g.stride - g.pad + kj;
              if (iw >= 0 && iw < g.w) dst[iw] += in[ow];
            }
          }
        }
      }
    }
  }
  return x;
}

// [N, O, L] tensor data <-> [O, N*L] matrix.
RowMatrix OutputToMatrix(const ConvGeometry& g, std::span<const double> y) {
  const auto L = g.locations();
  RowMatrix m(g.o, g.n * L);
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t o = 0; o < g.o; ++o) {
      std::copy_n(y.data() + (n * g.o + o) * L, L, m.data() + o * g.n * L + n * L);
    }
  }
  return m;
}

std::vector<double> MatrixToOutput(const ConvGeometry& g, const RowMatrix& m) {
  const auto L = g.locations();
  std::vector<double> y(g.n * g.o * L);
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t o = 0; o < g.o; ++o) {
      std::copy_n(m.data() + o * g.n * L + n * L, L, y.data() + (n * g.o + o) * L);
    }
  }
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise arithmetic

Tensor Add(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "add");
  return MakeResult("add", a.shape(), ZipValues(a, b, std::plus<>()), {a, b},
                    [](const Tensor& g, const std::vector<bool>& n) {
                      return Grads{n[0] ? g : Tensor(), n[1] ? g : Tensor()};
                    });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "sub");
  return MakeResult("sub", a.shape(), ZipValues(a, b, std::minus<>()), {a, b},
                    [](const Tensor& g, const std::vector<bool>& n) {
                      return Grads{n[0] ? g : Tensor(), n[1] ? Neg(g) : Tensor()};
                    });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "mul");
  return MakeResult("mul", a.shape(), ZipValues(a, b, std::multiplies<>()), {a, b},
                    [a, b](const Tensor& g, const std::vector<bool>& n) {
                      return Grads{n[0] ? Mul(g, b) : Tensor(), n[1] ? Mul(g, a) : Tensor()};
                    });
}

Tensor Div(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "div");
  return MakeResult("div", a.shape(), ZipValues(a, b, std::divides<>()), {a, b},
                    [a, b](const Tensor& g, const std::vector<bool>& n) {
                      Grads out(2);
                      if (n[0]) out[0] = Div(g, b);
                      if (n[1]) out[1] = Neg(Div(Mul(g, a), Mul(b, b)));
                      return out;
                    });
}

Tensor Neg(const Tensor& a) {
  return MakeResult("neg", a.shape(), MapValues(a, [](double v) { return -v; }), {a},
                    [](const Tensor& g, const std::vector<bool>&) { return Grads{Neg(g)}; });
}

Tensor MulScalar(const Tensor& a, double c) {
  return MakeResult("mul_scalar", a.shape(), MapValues(a, [c](double v) { return v * c; }),
                    {a}, [c](const Tensor& g, const std::vector<bool>&) {
                      return Grads{MulScalar(g, c)};
                    });
}

Tensor AddScalar(const Tensor& a, double c) {
  return MakeResult("add_scalar", a.shape(), MapValues(a, [c](double v) { return v + c; }),
                    {a}, [](const Tensor& g, const std::vector<bool>&) { return Grads{g}; });
}

// ---------------------------------------------------------------------------
// Elementwise functions

Tensor Exp(const Tensor& a) {
  return MakeResult("exp", a.shape(), MapValues(a, [](double v) { return std::exp(v); }),
                    {a}, [a](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Mul(g, Exp(a))};
                    });
}

Tensor Log(const Tensor& a) {
  return MakeResult("log", a.shape(), MapValues(a, [](double v) { return std::log(v); }),
                    {a}, [a](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Div(g, a)};
                    });
}

Tensor Sqrt(const Tensor& a) {
  return MakeResult("sqrt", a.shape(), MapValues(a, [](double v) { return std::sqrt(v); }),
                    {a}, [a](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Div(MulScalar(g, 0.5), Sqrt(a))};
                    });
}

namespace {
// Elementwise kernels run on fixed blocks of 8 with a zero-padded tail, so
// every element takes the same vectorized path. Dynamic-size Eigen
// expressions peel a scalar prefix whose length depends on buffer alignment,
// which would make results vary between runs.
using Block = Eigen::Array<double, 8, 1>;

template <typename Fn>
std::vector<double> BlockMap(std::span<const double> in, Fn fn) {
  std::vector<double> out(in.size());
  Block x;
  Block y;
  for (std::size_t i = 0; i < in.size(); i += 8) {
    const std::size_t m = std::min<std::size_t>(8, in.size() - i);
    x.setZero();
    std::copy_n(in.data() + i, m, x.data());
    y = fn(x);
    std::copy_n(y.data(), m, out.data() + i);
  }
  return out;
}
}  // namespace

// Eigen's exp saturates instead of overflowing, so 1 / (1 + exp(-x)) is
// finite for any finite x.
Tensor Sigmoid(const Tensor& a) {
  auto values = BlockMap(a.data(), [](const Block& x) -> Block {
    return (1.0 + (-x).exp()).inverse();
  });
  return MakeResult("sigmoid", a.shape(), std::move(values), {a},
                    [a](const Tensor& g, const std::vector<bool>&) {
                      Tensor s = Sigmoid(a);
                      return Grads{Mul(g, Mul(s, AddScalar(Neg(s), 1.0)))};
                    });
}

Tensor Softplus(const Tensor& a) {
  auto values = BlockMap(a.data(), [](const Block& x) -> Block {
    return x.max(0.0) + (1.0 + (-x.abs()).exp()).log();
  });
  return MakeResult("softplus", a.shape(), std::move(values), {a},
                    [a](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Mul(g, Sigmoid(a))};
                    });
}

// GELU in its tanh form: x * Phi(x) ~= 0.5 x (1 + tanh(u)) = x * sigmoid(2u),
// u = sqrt(2/pi) (x + 0.044715 x^3). Only exp is needed, which vectorizes.
namespace {
constexpr double kGeluC = 0.79788456080286535588;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;

// sigmoid(2u).
Block GeluGate(const Block& x) {
  return (1.0 + (-2.0 * kGeluC * (x + kGeluK * x * x * x)).exp()).inverse();
}

// Second derivative from differentiable primitives, so every higher order
// is available:  4 t u' + 2 x t u'' + 4 x t (1 - 2s) u'^2  with t = s(1-s).
Tensor GeluSecondDerivative(const Tensor& a) {
  const Tensor a2 = Mul(a, a);
  const Tensor u = MulScalar(Add(a, MulScalar(Mul(a2, a), kGeluK)), kGeluC);
  const Tensor s = Sigmoid(MulScalar(u, 2.0));
  const Tensor t = Mul(s, AddScalar(Neg(s), 1.0));
  const Tensor du = MulScalar(AddScalar(MulScalar(a2, 3.0 * kGeluK), 1.0), kGeluC);
  const Tensor ddu = MulScalar(a, 6.0 * kGeluC * kGeluK);
  const Tensor term1 = MulScalar(Mul(t, du), 4.0);
  const Tensor term2 = MulScalar(Mul(Mul(a, t), ddu), 2.0);
  const Tensor term3 =
      MulScalar(Mul(Mul(Mul(a, t), AddScalar(MulScalar(s, -2.0), 1.0)), Mul(du, du)), 4.0);
  return Add(Add(term1, term2), term3);
}
}  // namespace

Tensor Gelu(const Tensor& a) {
  auto values = BlockMap(a.data(), [](const Block& x) -> Block { return x * GeluGate(x); });
  return MakeResult("gelu", a.shape(), std::move(values), {a},
                    [a](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Mul(g, GeluDerivative(a))};
                    });
}

Tensor GeluDerivative(const Tensor& a) {
  auto values = BlockMap(a.data(), [](const Block& x) -> Block {
    const Block s = GeluGate(x);
    return s + 2.0 * kGeluC * x * s * (1.0 - s) * (1.0 + 3.0 * kGeluK * x * x);
  });
  return MakeResult("gelu_derivative", a.shape(), std::move(values), {a},
                    [a](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Mul(g, GeluSecondDerivative(a))};
                    });
}

Tensor Relu(const Tensor& a) {
  return MakeResult("relu", a.shape(),
                    MapValues(a, [](double v) { return v > 0 ? v : 0.0; }), {a},
                    [a](const Tensor& g, const std::vector<bool>&) {
                      Tensor mask = Tensor::FromData(
                          a.shape(), MapValues(a, [](double v) { return v > 0 ? 1.0 : 0.0; }));
                      return Grads{Mul(g, mask)};
                    });
}

Tensor ClampStraightThrough(const Tensor& a, double lo, double hi) {
  return MakeResult("clamp_st", a.shape(),
                    MapValues(a, [lo, hi](double v) { return std::clamp(v, lo, hi); }), {a},
                    [](const Tensor& g, const std::vector<bool>&) { return Grads{g}; });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor Reshape(const Tensor& a, Shape shape) {
  if (NumElements(shape) != a.numel()) {
    throw ConfigError("reshape: cannot view " + ShapeString(a.shape()) + " as " +
                      ShapeString(shape));
  }
  Shape original = a.shape();
  return MakeResult("reshape", std::move(shape),
                    std::vector<double>(a.data().begin(), a.data().end()), {a},
                    [original](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Reshape(g, original)};
                    });
}

Tensor Transpose(const Tensor& a) {
  RequireRank(a, 2, "transpose");
  const auto rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(a.numel());
  auto in = a.data();
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) out[j * rows + i] = in[i * cols + j];
  return MakeResult("transpose", {cols, rows}, std::move(out), {a},
                    [](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Transpose(g)};
                    });
}

Tensor Concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ConfigError("concat: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  if (parts[0].rank() < 1) throw ConfigError("concat: scalar input");
  std::int64_t rows = 0;
  std::vector<std::int64_t> offsets;
  std::vector<double> out;
  for (const auto& p : parts) {
    Shape pt(p.shape().begin() + 1, p.shape().end());
    if (p.rank() < 1 || pt != tail) {
      throw ConfigError("concat: incompatible shape " + ShapeString(p.shape()));
    }
    offsets.push_back(rows);
    rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape shape = tail;
  shape.insert(shape.begin(), rows);
  std::vector<std::int64_t> counts;
  for (const auto& p : parts) counts.push_back(p.dim(0));
  return MakeResult("concat", std::move(shape), std::move(out), parts,
                    [offsets, counts](const Tensor& g, const std::vector<bool>& n) {
                      Grads out(offsets.size());
                      for (std::size_t i = 0; i < offsets.size(); ++i) {
                        if (n[i]) out[i] = Slice(g, offsets[i], counts[i]);
                      }
                      return out;
                    });
}

Tensor Slice(const Tensor& a, std::int64_t begin, std::int64_t count) {
  if (a.rank() < 1 || begin < 0 || count < 0 || begin + count > a.dim(0)) {
    throw ConfigError("slice: range [" + std::to_string(begin) + ", " +
                      std::to_string(begin + count) + ") out of bounds for " +
                      ShapeString(a.shape()));
  }
  Shape shape = a.shape();
  const auto row = a.numel() / std::max<std::int64_t>(a.dim(0), 1);
  shape[0] = count;
  std::vector<double> out(a.data().begin() + begin * row,
                          a.data().begin() + (begin + count) * row);
  const auto total = a.dim(0);
  return MakeResult("slice", std::move(shape), std::move(out), {a},
                    [begin, total](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Embed(g, begin, total)};
                    });
}

Tensor Embed(const Tensor& a, std::int64_t begin, std::int64_t total) {
  if (a.rank() < 1 || begin < 0 || begin + a.dim(0) > total) {
    throw ConfigError("embed: out of range");
  }
  Shape shape = a.shape();
  const auto row = a.dim(0) > 0 ? a.numel() / a.dim(0) : 0;
  shape[0] = total;
  std::vector<double> out(total * row, 0.0);
  std::copy(a.data().begin(), a.data().end(), out.begin() + begin * row);
  const auto count = a.dim(0);
  return MakeResult("embed", std::move(shape), std::move(out), {a},
                    [begin, count](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Slice(g, begin, count)};
                    });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor Sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Shape original = a.shape();
  return MakeResult("sum", {}, {s}, {a},
                    [original](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Expand(g, original)};
                    });
}

Tensor Mean(const Tensor& a) {
  if (a.numel() == 0) throw ConfigError("mean of empty tensor");
  return MulScalar(Sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor Expand(const Tensor& scalar, Shape shape) {
  if (scalar.numel() != 1) throw ConfigError("expand: input must have one element");
  const auto n = NumElements(shape);
  Shape original = scalar.shape();
  return MakeResult("expand", std::move(shape), std::vector<double>(n, scalar.item()),
                    {scalar}, [original](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Reshape(Sum(g), original)};
                    });
}

Tensor SumRows(const Tensor& a) {
  RequireRank(a, 2, "sum_rows");
  const auto rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(cols, 0.0);
  auto in = a.data();
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) out[j] += in[i * cols + j];
  return MakeResult("sum_rows", {cols}, std::move(out), {a},
                    [rows](const Tensor& g, const std::vector<bool>&) {
                      return Grads{BroadcastRows(g, rows)};
                    });
}

Tensor BroadcastRows(const Tensor& v, std::int64_t rows) {
  RequireRank(v, 1, "broadcast_rows");
  const auto cols = v.dim(0);
  std::vector<double> out(rows * cols);
  for (std::int64_t i = 0; i < rows; ++i)
    std::copy(v.data().begin(), v.data().end(), out.begin() + i * cols);
  return MakeResult("broadcast_rows", {rows, cols}, std::move(out), {v},
                    [](const Tensor& g, const std::vector<bool>&) {
                      return Grads{SumRows(g)};
                    });
}

Tensor SumCols(const Tensor& a) {
  RequireRank(a, 2, "sum_cols");
  const auto rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(rows, 0.0);
  auto in = a.data();
  for (std::int64_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) s += in[i * cols + j];
    out[i] = s;
  }
  return MakeResult("sum_cols", {rows}, std::move(out), {a},
                    [cols](const Tensor& g, const std::vector<bool>&) {
                      return Grads{BroadcastCols(g, cols)};
                    });
}

Tensor BroadcastCols(const Tensor& v, std::int64_t cols) {
  RequireRank(v, 1, "broadcast_cols");
  const auto rows = v.dim(0);
  std::vector<double> out(rows * cols);
  for (std::int64_t i = 0; i < rows; ++i)
    std::fill_n(out.begin() + i * cols, cols, v.data()[i]);
  return MakeResult("broadcast_cols", {rows, cols}, std::move(out), {v},
                    [](const Tensor& g, const std::vector<bool>&) {
                      return Grads{SumCols(g)};
                    });
}

Tensor ChannelSum(const Tensor& a) {
  RequireImageRank(a.shape(), "channel_sum");
  const auto d = ImageDimsOf(a.shape());
  const auto plane = d.height * d.width;
  std::vector<double> out(d.channels, 0.0);
  auto in = a.data();
  for (std::int64_t n = 0; n < d.planes_outer; ++n)
    for (std::int64_t c = 0; c < d.channels; ++c) {
      const double* p = in.data() + (n * d.channels + c) * plane;
      double s = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) s += p[i];
      out[c] += s;
    }
  Shape original = a.shape();
  return MakeResult("channel_sum", {d.channels}, std::move(out), {a},
                    [original](const Tensor& g, const std::vector<bool>&) {
                      return Grads{ChannelBroadcast(g, original)};
                    });
}

Tensor ChannelBroadcast(const Tensor& v, Shape shape) {
  RequireImageRank(shape, "channel_broadcast");
  const auto d = ImageDimsOf(shape);
  if (v.rank() != 1 || v.dim(0) != d.channels) {
    throw ConfigError("channel_broadcast: vector " + ShapeString(v.shape()) +
                      " does not match " + ShapeString(shape));
  }
  const auto plane = d.height * d.width;
  std::vector<double> out(NumElements(shape));
  for (std::int64_t n = 0; n < d.planes_outer; ++n)
    for (std::int64_t c = 0; c < d.channels; ++c)
      std::fill_n(out.begin() + (n * d.channels + c) * plane, plane, v.data()[c]);
  return MakeResult("channel_broadcast", std::move(shape), std::move(out), {v},
                    [](const Tensor& g, const std::vector<bool>&) {
                      return Grads{ChannelSum(g)};
                    });
}

Tensor PixelChannelSum(const Tensor& a) {
  RequireRank(a, 4, "pixel_channel_sum");
  const auto N = a.dim(0), C = a.dim(1), plane = a.dim(2) * a.dim(3);
  std::vector<double> out(N * plane, 0.0);
  auto in = a.data();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const double* p = in.data() + (n * C + c) * plane;
      double* o = out.data() + n * plane;
      for (std::int64_t i = 0; i < plane; ++i) o[i] += p[i];
    }
  return MakeResult("pixel_channel_sum", {N, 1, a.dim(2), a.dim(3)}, std::move(out), {a},
                    [C](const Tensor& g, const std::vector<bool>&) {
                      return Grads{PixelChannelRepeat(g, C)};
                    });
}

Tensor PixelChannelRepeat(const Tensor& a, std::int64_t channels) {
  RequireRank(a, 4, "pixel_channel_repeat");
  if (a.dim(1) != 1) throw ConfigError("pixel_channel_repeat: expected one channel");
  const auto N = a.dim(0), plane = a.dim(2) * a.dim(3);
  std::vector<double> out(N * channels * plane);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < channels; ++c)
      std::copy_n(a.data().begin() + n * plane, plane,
                  out.begin() + (n * channels + c) * plane);
  return MakeResult("pixel_channel_repeat", {N, channels, a.dim(2), a.dim(3)},
                    std::move(out), {a},
                    [](const Tensor& g, const std::vector<bool>&) {
                      return Grads{PixelChannelSum(g)};
                    });
}

// ---------------------------------------------------------------------------
// Linear algebra

// Eigen's vectorized kernels peel differently depending on the address of
// their operands, so products only ever see Eigen-owned (aligned) storage.
static RowMatrix OwnedMatrix(std::span<const double> values, std::int64_t rows, std::int64_t cols) {
  return ConstMapMatrix(values.data(), rows, cols);
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  RequireRank(a, 2, "matmul");
  RequireRank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ConfigError("matmul: inner dimensions differ " + ShapeString(a.shape()) + " x " +
                      ShapeString(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  RowMatrix prod(m, n);
  prod.noalias() = OwnedMatrix(a.data(), m, k) * OwnedMatrix(b.data(), k, n);
  std::vector<double> out(prod.data(), prod.data() + m * n);
  return MakeResult("matmul", {m, n}, std::move(out), {a, b},
                    [a, b](const Tensor& g, const std::vector<bool>& need) {
                      Grads out(2);
                      if (need[0]) out[0] = MatMul(g, Transpose(b));
                      if (need[1]) out[1] = MatMul(Transpose(a), g);
                      return out;
                    });
}

Tensor AddRowBias(const Tensor& x, const Tensor& bias) {
  RequireRank(x, 2, "add_row_bias");
  return Add(x, BroadcastRows(bias, x.dim(0)));
}

Tensor Dot(const Tensor& a, const Tensor& b) { return Sum(Mul(a, b)); }

Tensor L2Norm(const Tensor& a) { return Sqrt(Dot(a, a)); }

Tensor Cosine(const Tensor& a, const Tensor& b) {
  return Div(Dot(a, b), Mul(L2Norm(a), L2Norm(b)));
}

// ---------------------------------------------------------------------------
// Convolution

Tensor Conv2d(const Tensor& x, const Tensor& w, Conv2dParams p) {
  const auto g = MakeGeometry(x.shape(), w.shape(), p, "conv2d");
  const RowMatrix cols = Im2Col(g, x.data());
  RowMatrix y(g.o, g.n * g.locations());
  y.noalias() = OwnedMatrix(w.data(), g.o, g.patch()) * cols;
  return MakeResult("conv2d", {g.n, g.o, g.ho, g.wo}, MatrixToOutput(g, y), {x, w},
                    [x, w, p](const Tensor& grad, const std::vector<bool>& need) {
                      Grads out(2);
                      if (need[0]) out[0] = Conv2dInputGrad(grad, w, x.shape(), p);
                      if (need[1]) out[1] = Conv2dWeightGrad(x, grad, w.shape(), p);
                      return out;
                    });
}

Tensor Conv2dInputGrad(const Tensor& grad_out, const Tensor& w, const Shape& input_shape,
                       Conv2dParams p) {
  const auto g = MakeGeometry(input_shape, w.shape(), p, "conv2d_input_grad");
  if (grad_out.shape() != Shape{g.n, g.o, g.ho, g.wo}) {
    throw ConfigError("conv2d_input_grad: gradient shape " + ShapeString(grad_out.shape()));
  }
  const RowMatrix gm = OutputToMatrix(g, grad_out.data());
  RowMatrix cols(g.patch(), g.n * g.locations());
  cols.noalias() = OwnedMatrix(w.data(), g.o, g.patch()).transpose() * gm;
  return MakeResult("conv2d_input_grad", input_shape, Col2Im(g, cols), {grad_out, w},
                    [grad_out, w, p](const Tensor& u, const std::vector<bool>& need) {
                      Grads out(2);
                      if (need[0]) out[0] = Conv2d(u, w, p);
                      if (need[1]) out[1] = Conv2dWeightGrad(u, grad_out, w.shape(), p);
                      return out;
                    });
}

Tensor Conv2dWeightGrad(const Tensor& x, const Tensor& grad_out, const Shape& weight_shape,
                        Conv2dParams p) {
  const auto g = MakeGeometry(x.shape(), weight_shape, p, "conv2d_weight_grad");
  if (grad_out.shape() != Shape{g.n, g.o, g.ho, g.wo}) {
    throw ConfigError("conv2d_weight_grad: gradient shape " + ShapeString(grad_out.shape()));
  }
  const RowMatrix cols = Im2Col(g, x.data());
  const RowMatrix gm = OutputToMatrix(g, grad_out.data());
  RowMatrix dwm(g.o, g.patch());
  dwm.noalias() = gm * cols.transpose();
  std::vector<double> dw(dwm.data(), dwm.data() + g.o * g.patch());
  return MakeResult("conv2d_weight_grad", weight_shape, std::move(dw), {x, grad_out},
                    [x, grad_out, p](const Tensor& v, const std::vector<bool>& need) {
                      Grads out(2);
                      if (need[0]) out[0] = Conv2dInputGrad(grad_out, v, x.shape(), p);
                      if (need[1]) out[1] = Conv2d(x, v, p);
                      return out;
                    });
}

Tensor AddChannelBias(const Tensor& x, const Tensor& bias) {
  return Add(x, ChannelBroadcast(bias, x.shape()));
}

// ---------------------------------------------------------------------------
// Pooling

Tensor AvgPool2d(const Tensor& x, std::int64_t size) {
  RequireImageRank(x.shape(), "avg_pool2d");
  const auto d = ImageDimsOf(x.shape());
  if (size < 1 || d.height % size || d.width % size) {
    throw ConfigError("avg_pool2d: window " + std::to_string(size) +
                      " does not tile " + ShapeString(x.shape()));
  }
  const auto ho = d.height / size, wo = d.width / size;
  const auto planes = d.planes_outer * d.channels;
  const double scale = 1.0 / static_cast<double>(size * size);
  std::vector<double> out(planes * ho * wo, 0.0);
  auto in = x.data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * d.height * d.width;
    double* dst = out.data() + p * ho * wo;
    if (size == 2) {
      for (std::int64_t i = 0; i < ho; ++i) {
        const double* r0 = src + 2 * i * d.width;
        const double* r1 = r0 + d.width;
        for (std::int64_t j = 0; j < wo; ++j) {
          dst[i * wo + j] = ((r0[2 * j] + r0[2 * j + 1]) + (r1[2 * j] + r1[2 * j + 1])) * scale;
        }
      }
      continue;
    }
    for (std::int64_t i = 0; i < d.height; ++i)
      for (std::int64_t j = 0; j < d.width; ++j) dst[(i / size) * wo + j / size] += src[i * d.width + j];
    for (std::int64_t i = 0; i < ho * wo; ++i) dst[i] *= scale;
  }
  Shape shape = x.shape();
  shape[shape.size() - 2] = ho;
  shape[shape.size() - 1] = wo;
  return MakeResult("avg_pool2d", std::move(shape), std::move(out), {x},
                    [size](const Tensor& g, const std::vector<bool>&) {
                      return Grads{AvgUnpool2d(g, size)};
                    });
}

Tensor AvgUnpool2d(const Tensor& x, std::int64_t size) {
  RequireImageRank(x.shape(), "avg_unpool2d");
  const auto d = ImageDimsOf(x.shape());
  const auto ho = d.height * size, wo = d.width * size;
  const auto planes = d.planes_outer * d.channels;
  const double scale = 1.0 / static_cast<double>(size * size);
  std::vector<double> out(planes * ho * wo);
  auto in = x.data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * d.height * d.width;
    double* dst = out.data() + p * ho * wo;
    for (std::int64_t i = 0; i < ho; ++i) {
      const double* row = src + (i / size) * d.width;
      double* out_row = dst + i * wo;
      for (std::int64_t j = 0; j < d.width; ++j) {
        const double v = row[j] * scale;
        for (std::int64_t t = 0; t < size; ++t) out_row[j * size + t] = v;
      }
    }
  }
  Shape shape = x.shape();
  shape[shape.size() - 2] = ho;
  shape[shape.size() - 1] = wo;
  return MakeResult("avg_unpool2d", std::move(shape), std::move(out), {x},
                    [size](const Tensor& g, const std::vector<bool>&) {
                      return Grads{AvgPool2d(g, size)};
                    });
}

// ---------------------------------------------------------------------------
// Losses

Tensor LogSoftmax(const Tensor& logits) {
  RequireRank(logits, 2, "log_softmax");
  const auto rows = logits.dim(0), cols = logits.dim(1);
  std::vector<double> out(rows * cols);
  auto in = logits.data();
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* z = in.data() + i * cols;
    const double m = *std::max_element(z, z + cols);
    double s = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) s += std::exp(z[j] - m);
    const double lse = m + std::log(s);
    for (std::int64_t j = 0; j < cols; ++j) out[i * cols + j] = z[j] - lse;
  }
  return MakeResult("log_softmax", {rows, cols}, std::move(out), {logits},
                    [logits, cols](const Tensor& g, const std::vector<bool>&) {
                      return Grads{Sub(g, Mul(Softmax(logits), BroadcastCols(SumCols(g), cols)))};
                    });
}

Tensor Softmax(const Tensor& logits) { return Exp(LogSoftmax(logits)); }

Tensor OneHot(const std::vector<int>& labels, std::int64_t classes) {
  std::vector<double> out(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ConfigError("label " + std::to_string(labels[i]) + " out of range [0, " +
                        std::to_string(classes) + ")");
    }
    out[i * classes + labels[i]] = 1.0;
  }
  return Tensor::FromData({static_cast<std::int64_t>(labels.size()), classes}, std::move(out));
}

Tensor CrossEntropy(const Tensor& logits, const std::vector<int>& labels) {
  RequireRank(logits, 2, "cross_entropy");
  if (static_cast<std::int64_t>(labels.size()) != logits.dim(0)) {
    throw ConfigError("cross_entropy: batch has " + std::to_string(logits.dim(0)) +
                      " rows but " + std::to_string(labels.size()) + " labels");
  }
  return SoftCrossEntropy(logits, OneHot(labels, logits.dim(1)));
}

Tensor SoftCrossEntropy(const Tensor& logits, const Tensor& target_probs) {
  RequireSameShape(logits, target_probs, "soft_cross_entropy");
  const double inv_n = 1.0 / static_cast<double>(logits.dim(0));
  return MulScalar(Sum(Mul(LogSoftmax(logits), target_probs)), -inv_n);
}

Tensor BinaryCrossEntropyWithLogits(const Tensor& logits, const Tensor& targets) {
  RequireSameShape(logits, targets, "bce_with_logits");
  return Mean(Sub(Softplus(logits), Mul(targets, logits)));
}

// ---------------------------------------------------------------------------
// Image ops

Tensor FlipHorizontal(const Tensor& x) {
  RequireImageRank(x.shape(), "flip_horizontal");
  const auto w = x.shape().back();
  const auto rows = x.numel() / w;
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < w; ++j) out[r * w + j] = in[r * w + (w - 1 - j)];
  return MakeResult("flip_horizontal", x.shape(), std::move(out), {x},
                    [](const Tensor& g, const std::vector<bool>&) {
                      return Grads{FlipHorizontal(g)};
                    });
}

Tensor ChannelAffine(const Tensor& x, const std::vector<double>& scale,
                     const std::vector<double>& shift) {
  RequireImageRank(x.shape(), "channel_affine");
  const auto d = ImageDimsOf(x.shape());
  if (static_cast<std::int64_t>(scale.size()) != d.channels ||
      static_cast<std::int64_t>(shift.size()) != d.channels) {
    throw ConfigError("channel_affine: coefficient count does not match channels");
  }
  const auto plane = d.height * d.width;
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::int64_t n = 0; n < d.planes_outer; ++n)
    for (std::int64_t c = 0; c < d.channels; ++c) {
      const auto off = (n * d.channels + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) out[off + i] = scale[c] * in[off + i] + shift[c];
    }
  return MakeResult("channel_affine", x.shape(), std::move(out), {x},
                    [scale](const Tensor& g, const std::vector<bool>&) {
                      return Grads{ChannelAffine(g, scale, std::vector<double>(scale.size(), 0.0))};
                    });
}

Tensor ChannelMix(const Tensor& x, const std::vector<double>& mix) {
  RequireImageRank(x.shape(), "channel_mix");
  const auto d = ImageDimsOf(x.shape());
  const auto C = d.channels;
  if (static_cast<std::int64_t>(mix.size()) != C * C) {
    throw ConfigError("channel_mix: matrix size does not match channels");
  }
  const auto plane = d.height * d.width;
  std::vector<double> out(x.numel(), 0.0);
  auto in = x.data();
  for (std::int64_t n = 0; n < d.planes_outer; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      double* o = out.data() + (n * C + c) * plane;
      for (std::int64_t k = 0; k < C; ++k) {
        const double m = mix[c * C + k];
        const double* src = in.data() + (n * C + k) * plane;
        for (std::int64_t i = 0; i < plane; ++i) o[i] += m * src[i];
      }
    }
  std::vector<double> transposed(C * C);
  for (std::int64_t i = 0; i < C; ++i)
    for (std::int64_t j = 0; j < C; ++j) transposed[j * C + i] = mix[i * C + j];
  return MakeResult("channel_mix", x.shape(), std::move(out), {x},
                    [transposed](const Tensor& g, const std::vector<bool>&) {
                      return Grads{ChannelMix(g, transposed)};
                    });
}

SamplingMap SamplingMap::Translation(double d_row, double d_col) {
  SamplingMap m;
  m.a = {1, 0, -d_row, 0, 1, -d_col};
  return m;
}

bool SamplingMap::IsIdentity() const {
  return a == std::array<double, 6>{1, 0, 0, 0, 1, 0};
}

namespace {

// Calls f(dst_index, src_index, weight) for every bilinear tap inside the image.
template <typename F>
void ForEachTap(std::int64_t height, std::int64_t width, const SamplingMap& map, F f) {
  const auto& a = map.a;
  for (std::int64_t r = 0; r < height; ++r) {
    for (std::int64_t c = 0; c < width; ++c) {
      const double sr = a[0] * r + a[1] * c + a[2];
      const double sc = a[3] * r + a[4] * c + a[5];
      const double r0 = std::floor(sr), c0 = std::floor(sc);
      const double fr = sr - r0, fc = sc - c0;
      const auto ir = static_cast<std::int64_t>(r0), ic = static_cast<std::int64_t>(c0);
      const std::int64_t dst = r * width + c;
      const double w[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
      const std::int64_t rr[4] = {ir, ir, ir + 1, ir + 1};
      const std::int64_t cc[4] = {ic, ic + 1, ic, ic + 1};
      for (int t = 0; t < 4; ++t) {
        if (w[t] == 0.0) continue;
        if (rr[t] < 0 || rr[t] >= height || cc[t] < 0 || cc[t] >= width) continue;
        f(dst, rr[t] * width + cc[t], w[t]);
      }
    }
  }
}

}  // namespace

Tensor BilinearResample(const Tensor& x, const SamplingMap& map) {
  RequireImageRank(x.shape(), "bilinear_resample");
  const auto d = ImageDimsOf(x.shape());
  const auto plane = d.height * d.width;
  const auto planes = d.planes_outer * d.channels;
  std::vector<double> out(x.numel(), 0.0);
  auto in = x.data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * plane;
    double* dst = out.data() + p * plane;
    ForEachTap(d.height, d.width, map,
               [&](std::int64_t o, std::int64_t i, double w) { dst[o] += w * src[i]; });
  }
  return MakeResult("bilinear_resample", x.shape(), std::move(out), {x},
                    [map](const Tensor& g, const std::vector<bool>&) {
                      return Grads{BilinearResampleAdjoint(g, map)};
                    });
}

Tensor BilinearResampleAdjoint(const Tensor& g, const SamplingMap& map) {
  RequireImageRank(g.shape(), "bilinear_resample_adjoint");
  const auto d = ImageDimsOf(g.shape());
  const auto plane = d.height * d.width;
  const auto planes = d.planes_outer * d.channels;
  std::vector<double> out(g.numel(), 0.0);
  auto in = g.data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * plane;
    double* dst = out.data() + p * plane;
    ForEachTap(d.height, d.width, map,
               [&](std::int64_t o, std::int64_t i, double w) { dst[i] += w * src[o]; });
  }
  return MakeResult("bilinear_resample_adjoint", g.shape(), std::move(out), {g},
                    [map](const Tensor& u, const std::vector<bool>&) {
                      return Grads{BilinearResample(u, map)};
                    });
}

}  // namespace taggant::diff
