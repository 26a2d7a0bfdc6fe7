#pragma once

#include <algorithm>
#include <cmath>

#include "rcf/tensor.hpp"

namespace rcf {

// Sobel gradient magnitude of the channel-mean image, scaled to [0, 1] by
// its maximum. Borders replicate.
template <typename T>
Tensor<T> sobel_edge_map(const Tensor<T>& image) {
  const Shape& s = image.shape();
  const std::size_t h = s.h, w = s.w;
  std::vector<double> gray(h * w, 0.0);
  for (std::size_t c = 0; c < s.c; ++c) {
    const T* p = image.plane(0, c);
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] += p[i] / static_cast<double>(s.c);
  }
  auto at = [&](long y, long x) {
    y = std::clamp(y, 0L, static_cast<long>(h) - 1);
    x = std::clamp(x, 0L, static_cast<long>(w) - 1);
    return gray[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  std::vector<double> mag(h * w);
  double peak = 0;
  for (long y = 0; y < static_cast<long>(h); ++y) {
    for (long x = 0; x < static_cast<long>(w); ++x) {
      const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      const double m = std::hypot(gx, gy);
      mag[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = m;
      peak = std::max(peak, m);
    }
  }
  Tensor<T> out = make_map<T>(h, w);
  if (peak > 0) {
    for (std::size_t i = 0; i < mag.size(); ++i) out[i] = static_cast<T>(mag[i] / peak);
  }
  return out;
}

}  // namespace rcf
