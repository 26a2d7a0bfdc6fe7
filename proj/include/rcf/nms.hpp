#pragma once

// Edge thinning by non-maximum suppression along the edge normal. The normal
// is the dominant direction of the smoothed gradient structure tensor of the
// map, which is well defined both on ridges and on step-like responses.

#include <algorithm>
#include <cmath>
#include <vector>

#include "rcf/error.hpp"
#include "rcf/tensor.hpp"

namespace rcf {

namespace detail {

// Separable smoothing with a symmetric 1-D kernel, clamped borders.
inline std::vector<double> smooth(const std::vector<double>& in, std::size_t h, std::size_t w,
                                  const std::vector<double>& kernel) {
  const long r = static_cast<long>(kernel.size() / 2);
  std::vector<double> tmp(in.size()), out(in.size());
  auto cl = [](long v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(v, 0L, static_cast<long>(n) - 1));
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0;
      for (long k = -r; k <= r; ++k) acc += kernel[k + r] * in[y * w + cl(static_cast<long>(x) + k, w)];
      tmp[y * w + x] = acc;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0;
      for (long k = -r; k <= r; ++k) acc += kernel[k + r] * tmp[cl(static_cast<long>(y) + k, h) * w + x];
      out[y * w + x] = acc;
    }
  }
  return out;
}

// Bilinear sample of a row-major grid at (x, y), coordinates clamped.
template <typename T>
double sample_bilinear(const T* grid, std::size_t h, std::size_t w, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double top = (1 - fx) * grid[y0 * w + x0] + fx * grid[y0 * w + x1];
  const double bot = (1 - fx) * grid[y1 * w + x0] + fx * grid[y1 * w + x1];
  return (1 - fy) * top + fy * bot;
}

}  // namespace detail

// Edge-normal angle per pixel, in radians; the normal is (cos, sin) in
// (x, y) image coordinates.
template <typename T>
std::vector<double> edge_normal_angles(const Tensor<T>& map) {
  const Shape& s = map.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("edge_normal_angles: expected a (1,1,H,W) map");
  const std::size_t h = s.h, w = s.w;
  std::vector<double> e(map.values().begin(), map.values().end());
  const std::vector<double> pre = detail::smooth(e, h, w, {0.25, 0.5, 0.25});
  std::vector<double> jxx(e.size()), jxy(e.size()), jyy(e.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t xl = x > 0 ? x - 1 : x, xr = x + 1 < w ? x + 1 : x;
      const std::size_t yu = y > 0 ? y - 1 : y, yd = y + 1 < h ? y + 1 : y;
      const double gx = (pre[y * w + xr] - pre[y * w + xl]) / 2.0;
      const double gy = (pre[yd * w + x] - pre[yu * w + x]) / 2.0;
      jxx[y * w + x] = gx * gx;
      jxy[y * w + x] = gx * gy;
      jyy[y * w + x] = gy * gy;
    }
  }
  const std::vector<double> k5{1.0 / 9, 2.0 / 9, 3.0 / 9, 2.0 / 9, 1.0 / 9};
  jxx = detail::smooth(jxx, h, w, k5);
  jxy = detail::smooth(jxy, h, w, k5);
  jyy = detail::smooth(jyy, h, w, k5);
  std::vector<double> theta(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    theta[i] = 0.5 * std::atan2(2.0 * jxy[i], jxx[i] - jyy[i]);
  }
  return theta;
}

// Keeps a pixel (with its original value) when it is not smaller than the
// map sampled one pixel away on either side along its edge normal.
template <typename T>
Tensor<T> nms_thin(const Tensor<T>& map) {
  const Shape& s = map.shape();
  const std::size_t h = s.h, w = s.w;
  const std::vector<double> theta = edge_normal_angles(map);
  Tensor<T> out(s);
  const T* grid = map.values().data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      const double v = static_cast<double>(map[i]);
      if (v <= 0.0) continue;
      const double c = std::cos(theta[i]), sn = std::sin(theta[i]);
      const double xd = static_cast<double>(x), yd = static_cast<double>(y);
      const double a = detail::sample_bilinear(grid, h, w, xd + c, yd + sn);
      const double b = detail::sample_bilinear(grid, h, w, xd - c, yd - sn);
      if (v >= a && v >= b) out[i] = map[i];
    }
  }
  return out;
}

}  // namespace rcf
