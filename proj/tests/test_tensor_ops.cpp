#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rcf/ops.hpp"
#include "test_support.hpp"

using namespace rcf;
using rcf::testing::central_difference;
using rcf::testing::dot;
using rcf::testing::random_tensor;
using rcf::testing::rel_error;

namespace {

// Six nested loops, no im2col.
Tensor<double> conv_reference(const Tensor<double>& in, const ConvParams<double>& p) {
  const Shape s = in.shape();
  const std::size_t kh = p.kernel_h(), kw = p.kernel_w(), oc = p.out_channels();
  const std::size_t oh = (s.h + 2 * p.pad - p.dilation * (kh - 1) - 1) / p.stride + 1;
  const std::size_t ow = (s.w + 2 * p.pad - p.dilation * (kw - 1) - 1) / p.stride + 1;
  Tensor<double> out(Shape{s.n, oc, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < oc; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = p.bias[o];
          for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long iy = long(y * p.stride + ky * p.dilation) - long(p.pad);
                const long ix = long(x * p.stride + kx * p.dilation) - long(p.pad);
                if (iy < 0 || ix < 0 || iy >= long(s.h) || ix >= long(s.w)) continue;
                acc += p.weights.at(o, c, ky, kx) * in.at(n, c, iy, ix);
              }
          out.at(n, o, y, x) = acc;
        }
  return out;
}

Tensor<double> pool_reference(const Tensor<double>& in, std::size_t k, std::size_t stride) {
  const Shape s = in.shape();
  const std::size_t oh = (s.h + stride - 1) / stride, ow = (s.w + stride - 1) / stride;
  Tensor<double> out(Shape{s.n, s.c, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double m = -INFINITY;
          for (std::size_t dy = 0; dy < k; ++dy)
            for (std::size_t dx = 0; dx < k; ++dx) {
              const std::size_t iy = y * stride + dy, ix = x * stride + dx;
              if (iy < s.h && ix < s.w) m = std::max(m, in.at(n, c, iy, ix));
            }
          out.at(n, c, y, x) = m;
        }
  return out;
}

// Half-pixel bilinear interpolation with clamped source coordinates.
double interpolate(const Tensor<double>& in, std::size_t c, double sy, double sx) {
  const Shape s = in.shape();
  sy = std::clamp(sy, 0.0, double(s.h - 1));
  sx = std::clamp(sx, 0.0, double(s.w - 1));
  const std::size_t y0 = std::size_t(sy), x0 = std::size_t(sx);
  const std::size_t y1 = std::min(y0 + 1, s.h - 1), x1 = std::min(x0 + 1, s.w - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * in.at(0, c, y0, x0) + fx * in.at(0, c, y0, x1)) +
         fy * ((1 - fx) * in.at(0, c, y1, x0) + fx * in.at(0, c, y1, x1));
}

}  // namespace

TEST(Conv2d, IdentityKernelReproducesInput) {
  std::mt19937_64 rng(1);
  auto x = random_tensor(Shape{1, 1, 5, 7}, rng);
  auto p = make_conv<double>(1, 1, 3, 1, 1);
  p.weights.at(0, 0, 1, 1) = 1.0;
  EXPECT_TRUE(same_values(conv2d(x, p), x));
}

TEST(Conv2d, PointwiseAffineOnConstant) {
  Tensor<double> x(Shape{1, 1, 4, 4}, 2.5);
  auto p = make_conv<double>(1, 1, 1);
  p.weights[0] = 0.3;
  p.bias[0] = -0.2;
  const auto y = conv2d(x, p);
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.3 * 2.5 - 0.2);
}

TEST(Conv2d, DilatedMatchesNestedLoops) {
  std::mt19937_64 rng(2);
  auto x = random_tensor(Shape{1, 4, 6, 6}, rng);
  auto p = make_conv<double>(2, 4, 3, 1, 2, 2);
  p.weights = random_tensor(p.weights.shape(), rng);
  p.bias = random_tensor(p.bias.shape(), rng);
  const auto got = conv2d(x, p);
  const auto want = conv_reference(x, p);
  ASSERT_EQ(got.shape(), want.shape());
  EXPECT_LT(max_abs_diff(got, want), 1e-12);
}

TEST(Conv2d, RandomGeometriesMatchNestedLoops) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> d(1, 8), k(1, 3), st(1, 3), pd(0, 2);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t kk = k(rng), dil = k(rng), stride = st(rng), pad = pd(rng);
    const Shape in{d(rng) % 3 + 1, d(rng), d(rng), d(rng)};
    if (conv_out_extent(in.h, kk, stride, pad, dil) < 1 ||
        conv_out_extent(in.w, kk, stride, pad, dil) < 1) {
      continue;
    }
    auto p = make_conv<double>(d(rng), in.c, kk, stride, pad, dil);
    p.weights = random_tensor(p.weights.shape(), rng);
    p.bias = random_tensor(p.bias.shape(), rng);
    auto x = random_tensor(in, rng);
    EXPECT_LT(max_abs_diff(conv2d(x, p), conv_reference(x, p)), 1e-12) << "trial " << trial;
  }
}

TEST(Conv2d, ChannelMismatchNamesAxis) {
  Tensor<double> x(Shape{1, 3, 5, 5});
  auto p = make_conv<double>(2, 4, 3);
  try {
    conv2d(x, p);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos);
  }
}

TEST(Conv2d, NonPositiveOutputIsAnError) {
  Tensor<double> x(Shape{1, 1, 2, 2});
  auto p = make_conv<double>(1, 1, 3);
  EXPECT_THROW(conv2d(x, p), ShapeError);
}

TEST(Conv2dBackward, ZeroGradOutGivesZeroGradients) {
  std::mt19937_64 rng(4);
  auto x = random_tensor(Shape{1, 2, 5, 5}, rng);
  auto p = make_conv<double>(3, 2, 3, 1, 1);
  p.weights = random_tensor(p.weights.shape(), rng);
  Tensor<double> go(Shape{1, 3, 5, 5});
  const auto gi = conv2d_backward(x, p, go);
  for (double v : gi.values()) EXPECT_EQ(v, 0.0);
  for (double v : p.weights.grad()) EXPECT_EQ(v, 0.0);
  for (double v : p.bias.grad()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2dBackward, SingleOutputGradientIsInputPatch) {
  std::mt19937_64 rng(5);
  auto x = random_tensor(Shape{1, 2, 6, 6}, rng);
  auto p = make_conv<double>(1, 2, 3, 1, 0, 1);
  Tensor<double> go(Shape{1, 1, 4, 4});
  go.at(0, 0, 2, 1) = 1.0;
  conv2d_backward(x, p, go);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx)
        EXPECT_EQ(p.weights.grad()[p.weights.index(0, c, ky, kx)], x.at(0, c, 2 + ky, 1 + kx));
  EXPECT_EQ(p.bias.grad()[0], 1.0);
}

TEST(Conv2dBackward, GradientsAccumulate) {
  std::mt19937_64 rng(6);
  auto x = random_tensor(Shape{1, 2, 5, 5}, rng);
  auto p = make_conv<double>(2, 2, 3, 1, 1);
  auto go = random_tensor(Shape{1, 2, 5, 5}, rng);
  conv2d_backward(x, p, go);
  const std::vector<double> once(p.weights.grad().begin(), p.weights.grad().end());
  conv2d_backward(x, p, go);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(p.weights.grad()[i], 2 * once[i], 1e-12);
}

TEST(Conv2dBackward, ShapeMismatchThrows) {
  auto p = make_conv<double>(2, 1, 3, 1, 1);
  Tensor<double> x(Shape{1, 1, 4, 4});
  Tensor<double> go(Shape{1, 2, 3, 4});
  EXPECT_THROW(conv2d_backward(x, p, go), ShapeError);
}

TEST(Conv2dBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> d(1, 6), k(1, 3), st(1, 2), pd(0, 2);
  int checked = 0;
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t kk = k(rng), dil = k(rng), stride = st(rng), pad = pd(rng);
    const Shape in{std::size_t(1 + trial % 2), d(rng), d(rng) + 2, d(rng) + 2};
    if (conv_out_extent(in.h, kk, stride, pad, dil) < 1 ||
        conv_out_extent(in.w, kk, stride, pad, dil) < 1) {
      continue;
    }
    auto p = make_conv<double>(d(rng), in.c, kk, stride, pad, dil);
    p.weights = random_tensor(p.weights.shape(), rng);
    p.bias = random_tensor(p.bias.shape(), rng);
    auto x = random_tensor(in, rng);
    const auto r = random_tensor(conv2d(x, p).shape(), rng);
    auto objective = [&]() { return dot(conv2d(x, p), r); };
    const auto gi = conv2d_backward(x, p, r);
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_LT(rel_error(gi[i], central_difference(objective, x[i])), 1e-4);
    }
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
      EXPECT_LT(rel_error(p.weights.grad()[i], central_difference(objective, p.weights[i])), 1e-4);
    }
    for (std::size_t i = 0; i < p.bias.size(); ++i) {
      EXPECT_LT(rel_error(p.bias.grad()[i], central_difference(objective, p.bias[i])), 1e-4);
    }
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(MaxPool, ConstantInputGivesConstantOutput) {
  Tensor<double> x(Shape{1, 2, 5, 5}, 0.4);
  const auto y = max_pool2d(x, 2, 2).output;
  for (double v : y.values()) EXPECT_EQ(v, 0.4);
}

TEST(MaxPool, TwoByTwo) {
  Tensor<double> x(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const auto r = max_pool2d(x, 2, 2);
  ASSERT_EQ(r.output.size(), 1u);
  EXPECT_EQ(r.output[0], 4.0);
  EXPECT_EQ(r.argmax[0], 3u);
}

TEST(MaxPool, TiesBreakTowardSmallestIndex) {
  Tensor<double> x(Shape{1, 1, 2, 2}, 1.0);
  EXPECT_EQ(max_pool2d(x, 2, 2).argmax[0], 0u);
}

TEST(MaxPool, RandomMatchesNestedLoops) {
  std::mt19937_64 rng(8);
  auto x = random_tensor(Shape{1, 1, 7, 7}, rng);
  const auto got = max_pool2d(x, 2, 2).output;
  EXPECT_EQ(got.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_TRUE(same_values(got, pool_reference(x, 2, 2)));
  std::uniform_int_distribution<std::size_t> d(1, 8), k(1, 3);
  for (int trial = 0; trial < 40; ++trial) {
    auto y = random_tensor(Shape{1, d(rng) % 3 + 1, d(rng), d(rng)}, rng);
    const std::size_t kk = k(rng), s = k(rng);
    EXPECT_TRUE(same_values(max_pool2d(y, kk, s).output, pool_reference(y, kk, s)));
  }
}

TEST(MaxPool, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_tensor(Shape{1, 2, 7, 6}, rng);
    const auto fwd = max_pool2d(x, 2, trial % 2 ? 1 : 2);
    const auto r = random_tensor(fwd.output.shape(), rng);
    const auto gi = max_pool2d_backward(r, fwd.argmax, x.shape());
    auto objective = [&]() { return dot(max_pool2d(x, 2, trial % 2 ? 1 : 2).output, r); };
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_LT(rel_error(gi[i], central_difference(objective, x[i])), 1e-4);
    }
  }
}

TEST(BilinearUpsample, FactorOneCopies) {
  std::mt19937_64 rng(10);
  auto x = random_tensor(Shape{1, 2, 5, 6}, rng);
  EXPECT_TRUE(same_values(bilinear_upsample(x, 1, 5, 6), x));
  const auto cropped = bilinear_upsample(x, 1, 3, 4);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t xx = 0; xx < 4; ++xx) EXPECT_EQ(cropped.at(0, c, y, xx), x.at(0, c, y, xx));
}

TEST(BilinearUpsample, ConstantStaysConstant) {
  for (std::size_t f = 1; f <= 16; ++f) {
    Tensor<double> x(Shape{1, 1, 3, 5}, 0.7);
    const auto y = bilinear_upsample(x, f, 3 * f, 5 * f - (f > 1 ? 1 : 0));
    for (double v : y.values()) EXPECT_NEAR(v, 0.7, 1e-12) << "factor " << f;
  }
}

TEST(BilinearUpsample, RampMatchesDirectInterpolation) {
  Tensor<double> x(Shape{1, 1, 2, 2}, std::vector<double>{0.0, 1.0, 2.0, 3.0});
  const auto y = bilinear_upsample(x, 2, 4, 4);
  for (std::size_t oy = 0; oy < 4; ++oy)
    for (std::size_t ox = 0; ox < 4; ++ox) {
      const double want = interpolate(x, 0, (oy + 0.5) / 2 - 0.5, (ox + 0.5) / 2 - 0.5);
      EXPECT_NEAR(y.at(0, 0, oy, ox), want, 1e-12);
    }
}

TEST(BilinearUpsample, RandomMatchesDirectInterpolation) {
  std::mt19937_64 rng(11);
  for (std::size_t f = 1; f <= 8; ++f) {
    auto x = random_tensor(Shape{1, 2, 3 + f % 3, 4}, rng);
    const auto y = bilinear_upsample(x, f, x.shape().h * f, x.shape().w * f);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t oy = 0; oy < y.shape().h; ++oy)
        for (std::size_t ox = 0; ox < y.shape().w; ++ox) {
          const double want =
              interpolate(x, c, (oy + 0.5) / double(f) - 0.5, (ox + 0.5) / double(f) - 0.5);
          EXPECT_NEAR(y.at(0, c, oy, ox), want, 1e-12) << "factor " << f;
        }
  }
}

TEST(BilinearUpsample, TargetLargerThanRawOutputThrows) {
  Tensor<double> x(Shape{1, 1, 3, 3});
  EXPECT_THROW(bilinear_upsample(x, 2, 7, 6), ShapeError);
}

TEST(BilinearUpsample, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (std::size_t f : {2u, 3u, 4u}) {
    auto x = random_tensor(Shape{1, 2, 3, 4}, rng);
    auto kernel = bilinear_kernel<double>(f);
    for (double& v : kernel.values()) v += 0.1;  // not necessarily bilinear when learned
    const std::size_t th = 3 * f - 1, tw = 4 * f;
    const auto r = random_tensor(Shape{1, 2, th, tw}, rng);
    std::vector<double> kgrad(kernel.size(), 0.0);
    const auto gi = upsample_backward(r, x.shape(), kernel, f, std::span<double>(kgrad), &x);
    auto objective = [&]() { return dot(upsample(x, kernel, f, th, tw), r); };
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_LT(rel_error(gi[i], central_difference(objective, x[i])), 1e-4);
    }
    for (std::size_t i = 0; i < kernel.size(); ++i) {
      EXPECT_LT(rel_error(kgrad[i], central_difference(objective, kernel[i])), 1e-4);
    }
  }
}

TEST(Sigmoid, ZeroIsHalf) {
  Tensor<double> x(Shape{1, 1, 1, 1}, 0.0);
  EXPECT_EQ(sigmoid(x)[0], 0.5);
  EXPECT_EQ(sigmoid_scalar(-1000.0), 0.0);
  EXPECT_EQ(sigmoid_scalar(1000.0), 1.0);
}

TEST(Sigmoid, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  auto x = random_tensor(Shape{1, 2, 4, 4}, rng, -4, 4);
  const auto r = random_tensor(x.shape(), rng);
  const auto gi = sigmoid_backward(sigmoid(x), r);
  auto objective = [&]() { return dot(sigmoid(x), r); };
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_LT(rel_error(gi[i], central_difference(objective, x[i])), 1e-4);
  }
}

TEST(EltwiseAdd, OppositesCancel) {
  std::mt19937_64 rng(14);
  auto x = random_tensor(Shape{2, 3, 4, 5}, rng);
  Tensor<double> neg = x;
  for (double& v : neg.values()) v = -v;
  const auto sum = eltwise_add(x, neg);
  for (double v : sum.values()) EXPECT_EQ(v, 0.0);
}

TEST(EltwiseAdd, MismatchThrows) {
  Tensor<double> a(Shape{1, 1, 2, 2}), b(Shape{1, 1, 2, 3});
  EXPECT_THROW(eltwise_add(a, b), ShapeError);
}

TEST(EltwiseAdd, GroupingDoesNotMatter) {
  std::mt19937_64 rng(15);
  // integer-valued so floating-point addition is exact
  auto a = random_tensor(Shape{1, 2, 3, 3}, rng, -50, 50);
  auto b = random_tensor(a.shape(), rng, -50, 50);
  auto c = random_tensor(a.shape(), rng, -50, 50);
  for (auto* t : {&a, &b, &c})
    for (double& v : t->values()) v = std::round(v);
  const Tensor<double>* all[] = {&a, &b, &c};
  const auto flat = eltwise_add<double>(std::span<const Tensor<double>* const>(all));
  EXPECT_TRUE(same_values(flat, eltwise_add(eltwise_add(a, b), c)));
  EXPECT_TRUE(same_values(flat, eltwise_add(a, eltwise_add(b, c))));
}

TEST(ConcatChannels, BlockOrderedChannels) {
  std::mt19937_64 rng(16);
  auto a = random_tensor(Shape{2, 3, 4, 5}, rng);
  auto b = random_tensor(Shape{2, 2, 4, 5}, rng);
  const Tensor<double>* parts[] = {&a, &b};
  const auto c = concat_channels<double>(std::span<const Tensor<double>* const>(parts));
  ASSERT_EQ(c.shape(), (Shape{2, 5, 4, 5}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 5; ++x) {
        for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(c.at(n, k, y, x), a.at(n, k, y, x));
        for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(c.at(n, 3 + k, y, x), b.at(n, k, y, x));
      }
  const std::size_t split[] = {3, 2};
  const auto back = split_channels(c, std::span<const std::size_t>(split));
  EXPECT_TRUE(same_values(back[0], a));
  EXPECT_TRUE(same_values(back[1], b));
}

TEST(ConcatChannels, GroupingDoesNotMatter) {
  std::mt19937_64 rng(17);
  auto a = random_tensor(Shape{1, 1, 3, 3}, rng);
  auto b = random_tensor(Shape{1, 2, 3, 3}, rng);
  auto c = random_tensor(Shape{1, 3, 3, 3}, rng);
  using Span = std::span<const Tensor<double>* const>;
  const Tensor<double>* abc[] = {&a, &b, &c};
  const Tensor<double>* ab[] = {&a, &b};
  const auto ab_t = concat_channels<double>(Span(ab));
  const Tensor<double>* ab_c[] = {&ab_t, &c};
  EXPECT_TRUE(same_values(concat_channels<double>(Span(abc)), concat_channels<double>(Span(ab_c))));
}

TEST(ConcatChannels, MismatchThrows) {
  Tensor<double> a(Shape{1, 1, 2, 2}), b(Shape{1, 1, 3, 2});
  const Tensor<double>* parts[] = {&a, &b};
  EXPECT_THROW(concat_channels<double>(std::span<const Tensor<double>* const>(parts)), ShapeError);
}

TEST(ResizeBilinear, SameSizeIsExactCopy) {
  std::mt19937_64 rng(18);
  auto x = random_tensor(Shape{1, 3, 5, 7}, rng);
  EXPECT_TRUE(same_values(resize_bilinear_image(x, 5, 7), x));
}

TEST(ResizeBilinear, MatchesDirectInterpolation) {
  std::mt19937_64 rng(19);
  auto x = random_tensor(Shape{1, 2, 5, 6}, rng);
  const auto y = resize_bilinear_image(x, 8, 4);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t oy = 0; oy < 8; ++oy)
      for (std::size_t ox = 0; ox < 4; ++ox) {
        const double want = interpolate(x, c, (oy + 0.5) * 5.0 / 8 - 0.5, (ox + 0.5) * 6.0 / 4 - 0.5);
        EXPECT_NEAR(y.at(0, c, oy, ox), want, 1e-12);
      }
}

TEST(ResizeBilinear, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(20);
  auto x = random_tensor(Shape{1, 2, 5, 6}, rng);
  for (auto [nh, nw] : {std::pair{8ul, 3ul}, std::pair{3ul, 9ul}}) {
    const auto r = random_tensor(Shape{1, 2, nh, nw}, rng);
    const auto gi = resize_bilinear_image_backward(r, x.shape());
    auto objective = [&]() { return dot(resize_bilinear_image(x, nh, nw), r); };
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_LT(rel_error(gi[i], central_difference(objective, x[i])), 1e-4);
    }
  }
}

TEST(Relu, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  auto x = random_tensor(Shape{1, 1, 6, 6}, rng);
  const auto r = random_tensor(x.shape(), rng);
  auto relu = [](Tensor<double> t) {
    relu_inplace(t);
    return t;
  };
  Tensor<double> g = r;
  relu_backward_inplace(relu(x), g);
  auto objective = [&]() { return dot(relu(x), r); };
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_LT(rel_error(g[i], central_difference(objective, x[i])), 1e-4);
  }
}

TEST(Sgd, PlainStepSubtractsGradient) {
  Tensor<double> p(Shape{1, 1, 1, 3}, std::vector<double>{1.0, 2.0, 3.0});
  auto g = p.ensure_grad();
  g[0] = 0.5;
  g[1] = -1.0;
  g[2] = 0.0;
  std::vector<Tensor<double>> vel{Tensor<double>(p.shape())};
  Tensor<double>* params[] = {&p};
  sgd_step<double>(params, vel, 1.0, 0.0, 0.0);
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], 3.0);
  EXPECT_EQ(p[2], 3.0);
  for (double v : p.grad()) EXPECT_EQ(v, 0.0);
}

TEST(Sgd, ZeroGradientZeroVelocityIsNoOp) {
  Tensor<double> p(Shape{1, 1, 2, 2}, std::vector<double>{1, -2, 3, -4});
  p.ensure_grad();
  std::vector<Tensor<double>> vel{Tensor<double>(p.shape())};
  Tensor<double>* params[] = {&p};
  sgd_step<double>(params, vel, 0.1, 0.9, 0.0);
  EXPECT_EQ(p[0], 1);
  EXPECT_EQ(p[3], -4);
}

TEST(Sgd, TwoMomentumStepsMatchRecurrence) {
  const double lr = 0.1, mom = 0.9, wd = 0.01, g = 0.3, x0 = 2.0;
  Tensor<double> p(Shape{1, 1, 1, 1}, x0);
  std::vector<Tensor<double>> vel{Tensor<double>(p.shape())};
  Tensor<double>* params[] = {&p};
  double x = x0, v = 0;
  for (int step = 0; step < 2; ++step) {
    p.ensure_grad()[0] = g;
    sgd_step<double>(params, vel, lr, mom, wd);
    v = mom * v - lr * (g + wd * x);
    x = x + v;
  }
  EXPECT_DOUBLE_EQ(p[0], x);
  EXPECT_DOUBLE_EQ(vel[0][0], v);
}

TEST(Sgd, MissingGradientThrows) {
  Tensor<double> p(Shape{1, 1, 1, 1});
  std::vector<Tensor<double>> vel{Tensor<double>(p.shape())};
  Tensor<double>* params[] = {&p};
  EXPECT_THROW(sgd_step<double>(params, vel, 0.1, 0.9, 0.0), ArgumentError);
}

TEST(Sgd, LrMultiplierScalesStep) {
  Tensor<double> p(Shape{1, 1, 1, 1}, 1.0);
  p.ensure_grad()[0] = 1.0;
  std::vector<Tensor<double>> vel{Tensor<double>(p.shape())};
  Tensor<double>* params[] = {&p};
  const double mult[] = {2.0};
  sgd_step<double>(params, vel, 0.25, 0.0, 0.0, mult);
  EXPECT_EQ(p[0], 0.5);
}

TEST(Tensor, FinitePrimitivesStayFinite) {
  std::mt19937_64 rng(22);
  auto x = random_tensor(Shape{1, 2, 6, 6}, rng, -50, 50);
  auto p = make_conv<double>(2, 2, 3, 1, 1);
  p.weights = random_tensor(p.weights.shape(), rng);
  EXPECT_TRUE(conv2d(x, p).all_finite());
  EXPECT_TRUE(sigmoid(x).all_finite());
  EXPECT_TRUE(bilinear_upsample(x, 4, 24, 24).all_finite());
  EXPECT_TRUE(max_pool2d(x, 2, 2).output.all_finite());
}

TEST(Tensor, ValueCountMismatchThrows) {
  EXPECT_THROW(Tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>(3)), ShapeError);
}
