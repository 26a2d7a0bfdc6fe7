#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "rcf/error.hpp"
#include "rcf/model.hpp"
#include "rcf/ops.hpp"
#include "rcf/tensor.hpp"

namespace rcf {

struct InferenceConfig {
  std::array<double, 3> channel_means{0.0, 0.0, 0.0};
  std::vector<double> scales{0.5, 1.0, 1.5};
};

inline void validate_scales(std::span<const double> scales) {
  if (scales.empty()) throw ArgumentError("scale set is empty");
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw ArgumentError(detail::concat("scale ", s, " must be positive"));
    }
  }
}

// Pointwise mean; accumulated in extended precision so that averaging
// identical maps reproduces them exactly.
template <typename T>
Tensor<T> average_maps(std::span<const Tensor<T>> maps) {
  if (maps.empty()) throw ArgumentError("average_maps: no maps");
  const Shape s = maps[0].shape();
  for (std::size_t k = 1; k < maps.size(); ++k) {
    if (maps[k].shape() != s) {
      throw ShapeError(detail::concat("average_maps: map ", k, " has shape ",
                                      maps[k].shape().str(), ", expected ", s.str()));
    }
  }
  Tensor<T> out(s);
  const long double n = static_cast<long double>(maps.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    long double acc = 0;
    for (const auto& m : maps) acc += static_cast<long double>(m[i]);
    out[i] = static_cast<T>(acc / n);
  }
  return out;
}

template <typename T>
Tensor<T> subtract_means(const Tensor<T>& image, const std::array<double, 3>& means) {
  Tensor<T> x = image;
  x.drop_grad();
  const Shape& s = x.shape();
  if (s.c != 3) return x;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      if (means[c] == 0.0) continue;
      T* p = x.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) p[i] -= static_cast<T>(means[c]);
    }
  }
  return x;
}

template <typename T>
SideOutputs<T> predict(const Model<T>& model, const Tensor<T>& image,
                       const InferenceConfig& cfg = {}) {
  return model.forward(subtract_means(image, cfg.channel_means));
}

inline std::size_t scaled_extent(std::size_t extent, double scale) {
  return static_cast<std::size_t>(std::llround(scale * static_cast<double>(extent)));
}

// Resize image per scale, predict, resize the fused map back, average.
template <typename T>
Tensor<T> predict_multiscale(const Model<T>& model, const Tensor<T>& image,
                             std::span<const double> scales, const InferenceConfig& cfg = {}) {
  validate_scales(scales);
  const Shape& s = image.shape();
  const std::size_t min_size = model.min_input_size();
  for (double sc : scales) {
    const std::size_t h = scaled_extent(s.h, sc);
    const std::size_t w = scaled_extent(s.w, sc);
    if (h < min_size || w < min_size) {
      throw ShapeError(detail::concat("scale ", sc, " gives a ", h, "x", w,
                                      " image, below the model minimum of ", min_size));
    }
  }
  std::vector<Tensor<T>> maps;
  maps.reserve(scales.size());
  for (double sc : scales) {
    const Tensor<T> scaled =
        resize_bilinear_image(image, scaled_extent(s.h, sc), scaled_extent(s.w, sc));
    const SideOutputs<T> out = predict(model, scaled, cfg);
    maps.push_back(resize_bilinear_image(out.fused_map, s.h, s.w));
  }
  return average_maps<T>(maps);
}

}  // namespace rcf
