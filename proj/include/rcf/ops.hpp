#pragma once

// Differentiable primitives the RCF graph is assembled from. Every forward
// op is a pure function of its inputs; backward ops either return fresh
// gradient tensors or accumulate into parameter gradient buffers.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "rcf/error.hpp"
#include "rcf/tensor.hpp"

namespace rcf {

// Weights (outC, inC, kH, kW), bias stored as (outC, 1, 1, 1).
template <typename T>
struct ConvParams {
  Tensor<T> weights;
  Tensor<T> bias;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t dilation = 1;

  std::size_t out_channels() const { return weights.shape().n; }
  std::size_t in_channels() const { return weights.shape().c; }
  std::size_t kernel_h() const { return weights.shape().h; }
  std::size_t kernel_w() const { return weights.shape().w; }

  void validate() const {
    const Shape& ws = weights.shape();
    if (ws.h < 1 || ws.w < 1) throw ShapeError("conv kernel must be at least 1x1");
    if (dilation < 1) throw ArgumentError("conv dilation must be >= 1");
    if (stride < 1) throw ArgumentError("conv stride must be >= 1");
    if (bias.size() != ws.n) {
      throw ShapeError(detail::concat("conv bias length ", bias.size(),
                                      " != output channels ", ws.n));
    }
  }
};

template <typename T>
ConvParams<T> make_conv(std::size_t out_c, std::size_t in_c, std::size_t k,
                        std::size_t stride = 1, std::size_t pad = 0,
                        std::size_t dilation = 1) {
  return ConvParams<T>{Tensor<T>(Shape{out_c, in_c, k, k}),
                       Tensor<T>(Shape{out_c, 1, 1, 1}), stride, pad,
                       dilation};
}

// floor((extent + 2 pad - dilation (k - 1) - 1) / stride) + 1, or 0 when the
// dilated kernel does not fit.
inline std::size_t conv_out_extent(std::size_t extent, std::size_t k,
                                   std::size_t stride, std::size_t pad,
                                   std::size_t dilation) {
  const long span = static_cast<long>(dilation * (k - 1) + 1);
  const long avail = static_cast<long>(extent + 2 * pad);
  if (avail < span) return 0;
  return static_cast<std::size_t>((avail - span) / static_cast<long>(stride)) + 1;
}

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  std::size_t in_c, in_h, in_w, kh, kw, out_h, out_w, stride, pad, dilation;

  bool is_pointwise() const {
    return kh == 1 && kw == 1 && stride == 1 && pad == 0;
  }
  std::size_t patch() const { return in_c * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

template <typename T>
ConvGeometry conv_geometry(const Shape& in, const ConvParams<T>& p) {
  p.validate();
  const Shape& ws = p.weights.shape();
  if (in.c != ws.c) {
    throw ShapeError(detail::concat("conv2d: channel axis mismatch, input has ",
                                    in.c, " channels, weights expect ", ws.c));
  }
  const std::size_t oh = conv_out_extent(in.h, ws.h, p.stride, p.pad, p.dilation);
  const std::size_t ow = conv_out_extent(in.w, ws.w, p.stride, p.pad, p.dilation);
  if (oh < 1) {
    throw ShapeError(detail::concat("conv2d: height axis output size is non-positive (input height ",
                                    in.h, ")"));
  }
  if (ow < 1) {
    throw ShapeError(detail::concat("conv2d: width axis output size is non-positive (input width ",
                                    in.w, ")"));
  }
  return {in.c, in.h, in.w, ws.h, ws.w, oh, ow, p.stride, p.pad, p.dilation};
}

// col[(c kh + ky) kw + kx][oy ow + ox]
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = col + ((c * g.kh + ky) * g.kw + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) -
                          static_cast<long>(g.pad);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = img + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) -
                            static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.in_w))
                          ? T{0}
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* img) {
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = col + ((c * g.kh + ky) * g.kw + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) -
                          static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          T* dst = img + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) -
                            static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.in_w)) {
              dst[static_cast<std::size_t>(ix)] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// Dilated cross-correlation plus bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& params) {
  const Shape& in = input.shape();
  const detail::ConvGeometry g = detail::conv_geometry(in, params);
  const std::size_t oc = params.out_channels();
  Tensor<T> out(Shape{in.n, oc, g.out_h, g.out_w});

  using Mat = detail::RowMat<T>;
  Eigen::Map<const Mat> w(params.weights.values().data(),
                          static_cast<Eigen::Index>(oc),
                          static_cast<Eigen::Index>(g.patch()));
  std::vector<T> col;
  if (!g.is_pointwise()) col.resize(g.patch() * g.pixels());

  for (std::size_t n = 0; n < in.n; ++n) {
    const T* src = input.plane(n, 0);
    if (!g.is_pointwise()) {
      detail::im2col(src, g, col.data());
      src = col.data();
    }
    Eigen::Map<const Mat> cols(src, static_cast<Eigen::Index>(g.patch()),
                               static_cast<Eigen::Index>(g.pixels()));
    Eigen::Map<Mat> o(out.plane(n, 0), static_cast<Eigen::Index>(oc),
                      static_cast<Eigen::Index>(g.pixels()));
    o.noalias() = w * cols;
    for (std::size_t k = 0; k < oc; ++k) {
      o.row(static_cast<Eigen::Index>(k)).array() += params.bias[k];
    }
  }
  return out;
}

// Accumulates dL/dweights and dL/dbias into the parameter gradient buffers.
// Returns dL/dinput, or an empty tensor when need_input_grad is false.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, ConvParams<T>& params,
                          const Tensor<T>& grad_out, bool need_input_grad = true) {
  const Shape& in = input.shape();
  const detail::ConvGeometry g = detail::conv_geometry(in, params);
  const std::size_t oc = params.out_channels();
  const Shape expected{in.n, oc, g.out_h, g.out_w};
  if (grad_out.shape() != expected) {
    throw ShapeError(detail::concat("conv2d_backward: grad_out shape ",
                                    grad_out.shape().str(), " != output shape ",
                                    expected.str()));
  }

  using Mat = detail::RowMat<T>;
  const auto patch = static_cast<Eigen::Index>(g.patch());
  const auto pixels = static_cast<Eigen::Index>(g.pixels());
  const auto rows = static_cast<Eigen::Index>(oc);

  Eigen::Map<const Mat> w(params.weights.values().data(), rows, patch);
  Eigen::Map<Mat> gw(params.weights.ensure_grad().data(), rows, patch);
  std::span<T> gb = params.bias.ensure_grad();

  Tensor<T> grad_in;
  if (need_input_grad) grad_in = Tensor<T>(in);

  std::vector<T> col;
  std::vector<T> gcol;
  if (!g.is_pointwise()) {
    col.resize(g.patch() * g.pixels());
    if (need_input_grad) gcol.resize(col.size());
  }

  for (std::size_t n = 0; n < in.n; ++n) {
    Eigen::Map<const Mat> go(grad_out.plane(n, 0), rows, pixels);
    for (std::size_t k = 0; k < oc; ++k) gb[k] += go.row(static_cast<Eigen::Index>(k)).sum();

    const T* src = input.plane(n, 0);
    if (!g.is_pointwise()) {
      detail::im2col(src, g, col.data());
      src = col.data();
    }
    Eigen::Map<const Mat> cols(src, patch, pixels);
    gw.noalias() += go * cols.transpose();

    if (need_input_grad) {
      if (g.is_pointwise()) {
        Eigen::Map<Mat> gi(grad_in.plane(n, 0), patch, pixels);
        gi.noalias() += w.transpose() * go;
      } else {
        Eigen::Map<Mat> gc(gcol.data(), patch, pixels);
        gc.noalias() = w.transpose() * go;
        detail::col2im_add(gcol.data(), g, grad_in.plane(n, 0));
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Max pooling. Windows start at multiples of stride and are clipped at the
// far border, so the output extent is ceil(extent / stride).

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

inline std::size_t pool_out_extent(std::size_t extent, std::size_t stride) {
  return (extent + stride - 1) / stride;
}

template <typename T>
PoolResult<T> max_pool2d(const Tensor<T>& input, std::size_t kernel,
                         std::size_t stride) {
  if (kernel < 1 || stride < 1) {
    throw ArgumentError("max_pool2d: kernel and stride must be >= 1");
  }
  const Shape& in = input.shape();
  const std::size_t oh = pool_out_extent(in.h, stride);
  const std::size_t ow = pool_out_extent(in.w, stride);
  PoolResult<T> r{Tensor<T>(Shape{in.n, in.c, oh, ow}), {}};
  r.argmax.resize(r.output.size());

  std::size_t o = 0;
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const std::size_t y0 = oy * stride;
        const std::size_t y1 = std::min(y0 + kernel, in.h);
        for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
          const std::size_t x0 = ox * stride;
          const std::size_t x1 = std::min(x0 + kernel, in.w);
          std::size_t best = input.index(n, c, y0, x0);
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t x = x0; x < x1; ++x) {
              const std::size_t i = input.index(n, c, y, x);
              // strict > keeps the smallest flat index on ties
              if (input[i] > input[best]) best = i;
            }
          }
          r.output[o] = input[best];
          r.argmax[o] = best;
        }
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> max_pool2d_backward(const Tensor<T>& grad_out,
                              std::span<const std::size_t> argmax,
                              const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("max_pool2d_backward: argmax size does not match grad_out");
  }
  Tensor<T> gi(input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) gi[argmax[o]] += grad_out[o];
  return gi;
}

// ---------------------------------------------------------------------------
// Upsampling by transposed convolution with a per-channel kernel of size
// 2f - f%2, stride f and padding ceil((f-1)/2). Input samples outside the
// grid replicate the nearest border sample, so a bilinear kernel is a
// partition of unity everywhere. The raw output has extent f * input extent
// and is cropped to (target_h, target_w) from the top-left corner.

inline std::size_t upsample_kernel_size(std::size_t factor) {
  return 2 * factor - factor % 2;
}
inline std::size_t upsample_pad(std::size_t factor) { return factor / 2; }

template <typename T>
Tensor<T> bilinear_kernel(std::size_t factor) {
  if (factor < 1) throw ArgumentError("bilinear_kernel: factor must be >= 1");
  const std::size_t k = upsample_kernel_size(factor);
  const double f = static_cast<double>((k + 1) / 2);
  const double center = (k % 2 == 1) ? f - 1.0 : f - 0.5;
  Tensor<T> kern(Shape{1, 1, k, k});
  for (std::size_t y = 0; y < k; ++y) {
    for (std::size_t x = 0; x < k; ++x) {
      const double wy = 1.0 - std::abs(static_cast<double>(y) - center) / f;
      const double wx = 1.0 - std::abs(static_cast<double>(x) - center) / f;
      kern.at(0, 0, y, x) = static_cast<T>(wy * wx);
    }
  }
  return kern;
}

namespace detail {

// Input indices i (possibly outside [0, n)) and kernel taps t with
// o = i f - pad + t, visited through fn(clamped_i, t).
template <typename Fn>
void upsample_taps(long o, std::size_t factor, std::size_t k, std::size_t pad,
                   std::size_t n, Fn&& fn) {
  const long f = static_cast<long>(factor);
  const long op = o + static_cast<long>(pad);
  // i f <= op  and  op - i f < k
  long i_hi = op >= 0 ? op / f : -((-op + f - 1) / f);
  for (long i = i_hi; op - i * f < static_cast<long>(k); --i) {
    const long ic = std::clamp(i, 0L, static_cast<long>(n) - 1);
    fn(static_cast<std::size_t>(ic), static_cast<std::size_t>(op - i * f));
  }
}

inline void check_upsample(const Shape& in, const Shape& ks, std::size_t factor,
                           std::size_t th, std::size_t tw) {
  if (factor < 1) throw ArgumentError("upsample: factor must be >= 1");
  const std::size_t k = upsample_kernel_size(factor);
  if (ks.n != 1 || ks.c != 1 || ks.h != k || ks.w != k) {
    throw ShapeError(detail::concat("upsample: kernel shape ", ks.str(),
                                    " does not match factor ", factor));
  }
  if (in.h == 0 || in.w == 0) throw ShapeError("upsample: empty input");
  if (th > in.h * factor || tw > in.w * factor) {
    throw ShapeError(detail::concat("upsample: target ", th, "x", tw,
                                    " exceeds raw output ", in.h * factor, "x",
                                    in.w * factor));
  }
}

}  // namespace detail

template <typename T>
Tensor<T> upsample(const Tensor<T>& input, const Tensor<T>& kernel,
                   std::size_t factor, std::size_t target_h, std::size_t target_w) {
  const Shape& in = input.shape();
  detail::check_upsample(in, kernel.shape(), factor, target_h, target_w);
  const std::size_t k = upsample_kernel_size(factor);
  const std::size_t pad = upsample_pad(factor);
  Tensor<T> out(Shape{in.n, in.c, target_h, target_w});
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const T* src = input.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t oy = 0; oy < target_h; ++oy) {
        for (std::size_t ox = 0; ox < target_w; ++ox) {
          T acc{0};
          detail::upsample_taps(static_cast<long>(oy), factor, k, pad, in.h,
                                [&](std::size_t iy, std::size_t ty) {
            detail::upsample_taps(static_cast<long>(ox), factor, k, pad, in.w,
                                  [&](std::size_t ix, std::size_t tx) {
              acc += kernel[ty * k + tx] * src[iy * in.w + ix];
            });
          });
          dst[oy * target_w + ox] = acc;
        }
      }
    }
  }
  return out;
}

// Returns dL/dinput; accumulates dL/dkernel into kernel_grad when non-empty.
template <typename T>
Tensor<T> upsample_backward(const Tensor<T>& grad_out, const Shape& input_shape,
                            const Tensor<T>& kernel, std::size_t factor,
                            std::span<T> kernel_grad = {},
                            const Tensor<T>* input = nullptr) {
  const Shape& go = grad_out.shape();
  detail::check_upsample(input_shape, kernel.shape(), factor, go.h, go.w);
  if (go.n != input_shape.n || go.c != input_shape.c) {
    throw ShapeError("upsample_backward: batch/channel mismatch");
  }
  if (!kernel_grad.empty() && input == nullptr) {
    throw ArgumentError("upsample_backward: kernel gradient needs the forward input");
  }
  const std::size_t k = upsample_kernel_size(factor);
  const std::size_t pad = upsample_pad(factor);
  Tensor<T> gi(input_shape);
  for (std::size_t n = 0; n < go.n; ++n) {
    for (std::size_t c = 0; c < go.c; ++c) {
      const T* g = grad_out.plane(n, c);
      T* dst = gi.plane(n, c);
      const T* src = input ? input->plane(n, c) : nullptr;
      for (std::size_t oy = 0; oy < go.h; ++oy) {
        for (std::size_t ox = 0; ox < go.w; ++ox) {
          const T gv = g[oy * go.w + ox];
          detail::upsample_taps(static_cast<long>(oy), factor, k, pad, input_shape.h,
                                [&](std::size_t iy, std::size_t ty) {
            detail::upsample_taps(static_cast<long>(ox), factor, k, pad, input_shape.w,
                                  [&](std::size_t ix, std::size_t tx) {
              dst[iy * input_shape.w + ix] += kernel[ty * k + tx] * gv;
              if (!kernel_grad.empty()) {
                kernel_grad[ty * k + tx] += src[iy * input_shape.w + ix] * gv;
              }
            });
          });
        }
      }
    }
  }
  return gi;
}

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, std::size_t factor,
                            std::size_t target_h, std::size_t target_w) {
  return upsample(input, bilinear_kernel<T>(factor), factor, target_h, target_w);
}

// ---------------------------------------------------------------------------
// Pointwise activations.

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = sigmoid_scalar(input[i]);
  return out;
}

// Uses the forward output.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, const Tensor<T>& grad_out) {
  if (output.shape() != grad_out.shape()) throw ShapeError("sigmoid_backward: shape mismatch");
  Tensor<T> gi(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    gi[i] = grad_out[i] * output[i] * (T{1} - output[i]);
  }
  return gi;
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (T& v : t.values()) v = std::max(v, T{0});
}

// Uses the forward output; gradient at exactly zero is taken as zero.
template <typename T>
void relu_backward_inplace(const Tensor<T>& output, Tensor<T>& grad) {
  if (output.shape() != grad.shape()) throw ShapeError("relu_backward: shape mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(output[i] > T{0})) grad[i] = T{0};
  }
}

// ---------------------------------------------------------------------------
// Elementwise sum and channel concatenation. Their backward passes are
// identity and channel split respectively.

template <typename T>
Tensor<T> eltwise_add(std::span<const Tensor<T>* const> operands) {
  if (operands.empty()) throw ArgumentError("eltwise_add: no operands");
  Tensor<T> out = *operands[0];
  out.drop_grad();
  for (std::size_t k = 1; k < operands.size(); ++k) {
    if (operands[k]->shape() != out.shape()) {
      throw ShapeError(detail::concat("eltwise_add: operand ", k, " has shape ",
                                      operands[k]->shape().str(), ", expected ",
                                      out.shape().str()));
    }
    const auto v = operands[k]->values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return out;
}

template <typename T>
Tensor<T> eltwise_add(const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T>* ops[] = {&a, &b};
  return eltwise_add<T>(std::span<const Tensor<T>* const>(ops));
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) throw ArgumentError("concat_channels: no operands");
  const Shape first = parts[0]->shape();
  std::size_t channels = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Shape& s = parts[k]->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError(detail::concat("concat_channels: operand ", k, " has shape ",
                                      s.str(), ", N/H/W must match ", first.str()));
    }
    channels += s.c;
  }
  Tensor<T> out(Shape{first.n, channels, first.h, first.w});
  for (std::size_t n = 0; n < first.n; ++n) {
    std::size_t c0 = 0;
    for (const Tensor<T>* p : parts) {
      const std::size_t len = p->shape().c * first.plane();
      std::copy_n(p->plane(n, 0), len, out.plane(n, c0));
      c0 += p->shape().c;
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& grad,
                                      std::span<const std::size_t> channels) {
  const Shape s = grad.shape();
  std::size_t total = 0;
  for (std::size_t c : channels) total += c;
  if (total != s.c) throw ShapeError("split_channels: channel counts do not sum to input");
  std::vector<Tensor<T>> out;
  out.reserve(channels.size());
  for (std::size_t c : channels) out.emplace_back(Shape{s.n, c, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < channels.size(); ++k) {
      std::copy_n(grad.plane(n, c0), channels[k] * s.plane(), out[k].plane(n, 0));
      c0 += channels[k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bilinear image resize with half-pixel centres and clamped borders.

namespace detail {

struct ResizeTap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

inline std::vector<ResizeTap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<ResizeTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace detail

template <typename T>
Tensor<T> resize_bilinear_image(const Tensor<T>& image, std::size_t new_h,
                                std::size_t new_w) {
  const Shape& in = image.shape();
  if (new_h == 0 || new_w == 0 || in.h == 0 || in.w == 0) {
    throw ShapeError("resize_bilinear_image: empty extent");
  }
  if (new_h == in.h && new_w == in.w) {
    Tensor<T> copy(in, std::vector<T>(image.values().begin(), image.values().end()));
    return copy;
  }
  const auto ty = detail::resize_taps(in.h, new_h);
  const auto tx = detail::resize_taps(in.w, new_w);
  Tensor<T> out(Shape{in.n, in.c, new_h, new_w});
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const T* src = image.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t y = 0; y < new_h; ++y) {
        const auto& a = ty[y];
        const T* r0 = src + a.i0 * in.w;
        const T* r1 = src + a.i1 * in.w;
        for (std::size_t x = 0; x < new_w; ++x) {
          const auto& b = tx[x];
          const double top = (1.0 - b.w1) * r0[b.i0] + b.w1 * r0[b.i1];
          const double bot = (1.0 - b.w1) * r1[b.i0] + b.w1 * r1[b.i1];
          dst[y * new_w + x] = static_cast<T>((1.0 - a.w1) * top + a.w1 * bot);
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> resize_bilinear_image_backward(const Tensor<T>& grad_out,
                                         const Shape& input_shape) {
  const Shape& go = grad_out.shape();
  if (go.n != input_shape.n || go.c != input_shape.c) {
    throw ShapeError("resize_bilinear_image_backward: batch/channel mismatch");
  }
  Tensor<T> gi(input_shape);
  const auto ty = detail::resize_taps(input_shape.h, go.h);
  const auto tx = detail::resize_taps(input_shape.w, go.w);
  for (std::size_t n = 0; n < go.n; ++n) {
    for (std::size_t c = 0; c < go.c; ++c) {
      const T* g = grad_out.plane(n, c);
      T* dst = gi.plane(n, c);
      for (std::size_t y = 0; y < go.h; ++y) {
        const auto& a = ty[y];
        for (std::size_t x = 0; x < go.w; ++x) {
          const auto& b = tx[x];
          const double v = g[y * go.w + x];
          dst[a.i0 * input_shape.w + b.i0] += static_cast<T>((1 - a.w1) * (1 - b.w1) * v);
          dst[a.i0 * input_shape.w + b.i1] += static_cast<T>((1 - a.w1) * b.w1 * v);
          dst[a.i1 * input_shape.w + b.i0] += static_cast<T>(a.w1 * (1 - b.w1) * v);
          dst[a.i1 * input_shape.w + b.i1] += static_cast<T>(a.w1 * b.w1 * v);
        }
      }
    }
  }
  return gi;
}

// ---------------------------------------------------------------------------
// SGD with momentum and L2 weight decay:
//   v <- momentum v - lr mult (grad + weight_decay param);  param <- param + v
// Gradients are zeroed afterwards. velocity[i] must match params[i] in size.

template <typename T>
void sgd_step(std::span<Tensor<T>* const> params, std::span<Tensor<T>> velocity,
              double lr, double momentum, double weight_decay,
              std::span<const double> lr_multiplier = {}) {
  if (velocity.size() != params.size()) {
    throw ArgumentError("sgd_step: one velocity buffer per parameter required");
  }
  if (!lr_multiplier.empty() && lr_multiplier.size() != params.size()) {
    throw ArgumentError("sgd_step: lr multiplier list length mismatch");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->has_grad()) {
      throw ArgumentError(detail::concat("sgd_step: parameter ", k, " has no gradient"));
    }
    if (velocity[k].size() != params[k]->size()) {
      throw ShapeError(detail::concat("sgd_step: velocity ", k, " has wrong size"));
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    const double step = lr * (lr_multiplier.empty() ? 1.0 : lr_multiplier[k]);
    std::span<T> g = p.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T v = static_cast<T>(momentum * velocity[k][i] -
                                 step * (g[i] + weight_decay * p[i]));
      velocity[k][i] = v;
      p[i] += v;
    }
    p.zero_grad();
  }
}

}  // namespace rcf
