#pragma once

// Desk-scale synthetic edge dataset: anti-aliased filled shapes over a
// textured background, traced by simulated annotators whose boundaries are
// displaced by a smooth, bounded offset field.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "rcf/data.hpp"
#include "rcf/error.hpp"
#include "rcf/tensor.hpp"

namespace rcf {

enum class ShapeKind { Rectangle, Ellipse, Triangle };

struct SceneShape {
  ShapeKind kind = ShapeKind::Rectangle;
  // Rectangle / ellipse: centre, half extents (or radii) and rotation.
  double cx = 0, cy = 0, a = 0, b = 0, angle = 0;
  // Triangle vertices (x0, y0, x1, y1, x2, y2).
  std::array<double, 6> tri{};
  std::array<double, 3> color{};

  bool contains(double x, double y) const {
    switch (kind) {
      case ShapeKind::Rectangle:
      case ShapeKind::Ellipse: {
        const double c = std::cos(angle), s = std::sin(angle);
        const double dx = x - cx, dy = y - cy;
        const double lx = c * dx + s * dy;
        const double ly = -s * dx + c * dy;
        if (kind == ShapeKind::Rectangle) return std::abs(lx) <= a && std::abs(ly) <= b;
        return (lx * lx) / (a * a) + (ly * ly) / (b * b) <= 1.0;
      }
      case ShapeKind::Triangle: {
        auto edge = [&](int i, int j) {
          return (tri[2 * j] - tri[2 * i]) * (y - tri[2 * i + 1]) -
                 (tri[2 * j + 1] - tri[2 * i + 1]) * (x - tri[2 * i]);
        };
        const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
        return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      }
    }
    return false;
  }
};

// Low-frequency boundary displacement of one annotator for one shape:
//   offset(p) = jitter * dir * (0.6 + 0.4 sin(freq . p + phase)),
// so |offset| <= jitter everywhere.
struct AnnotatorWarp {
  double dir_x = 0, dir_y = 0;
  double freq_x = 0, freq_y = 0, phase = 0;
};

struct Scene {
  std::size_t height = 0, width = 0;
  double jitter = 0;
  std::vector<SceneShape> shapes;  // painted in order; later shapes on top
  std::array<double, 3> background{};
  double texture_amp = 0, texture_fx = 0, texture_fy = 0, texture_phase = 0;
  double noise_sigma = 0;
  std::uint64_t noise_seed = 0;
  std::vector<std::vector<AnnotatorWarp>> warps;  // [annotator][shape]

  std::array<double, 2> offset(std::size_t annotator, std::size_t shape, double x,
                               double y) const {
    const AnnotatorWarp& w = warps[annotator][shape];
    const double m = jitter * (0.6 + 0.4 * std::sin(w.freq_x * x + w.freq_y * y + w.phase));
    return {m * w.dir_x, m * w.dir_y};
  }

  // 1 + index of the top shape covering (x, y), 0 for background. A
  // negative annotator means the undisplaced geometry.
  int label(double x, double y, int annotator = -1) const {
    for (std::size_t s = shapes.size(); s-- > 0;) {
      double px = x, py = y;
      if (annotator >= 0) {
        const auto o = offset(static_cast<std::size_t>(annotator), s, x, y);
        px += o[0];
        py += o[1];
      }
      if (shapes[s].contains(px, py)) return static_cast<int>(s) + 1;
    }
    return 0;
  }

  // Pixel (r, c) is an edge when its centre label differs from the label of
  // its right or lower neighbour.
  template <typename T>
  Tensor<T> boundary_map(int annotator = -1) const {
    std::vector<int> labels(height * width);
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        labels[r * width + c] = label(static_cast<double>(c) + 0.5,
                                      static_cast<double>(r) + 0.5, annotator);
      }
    }
    Tensor<T> map = make_map<T>(height, width);
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        const int l = labels[r * width + c];
        const bool edge = (c + 1 < width && labels[r * width + c + 1] != l) ||
                          (r + 1 < height && labels[(r + 1) * width + c] != l);
        if (edge) map.at(0, 0, r, c) = T{1};
      }
    }
    return map;
  }

  // 4x4 supersampled coverage of the true geometry, texture and noise.
  template <typename T>
  Tensor<T> render() const {
    Tensor<T> img(Shape{1, 3, height, width});
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    constexpr int kSub = 4;
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        std::array<double, 3> acc{};
        const double cx = static_cast<double>(c) + 0.5;
        const double cy = static_cast<double>(r) + 0.5;
        const double tex =
            texture_amp * std::sin(texture_fx * cx + texture_fy * cy + texture_phase);
        for (int sy = 0; sy < kSub; ++sy) {
          for (int sx = 0; sx < kSub; ++sx) {
            const double x = static_cast<double>(c) + (sx + 0.5) / kSub;
            const double y = static_cast<double>(r) + (sy + 0.5) / kSub;
            const int l = label(x, y);
            for (int ch = 0; ch < 3; ++ch) {
              acc[ch] += l == 0 ? background[ch] + tex : shapes[l - 1].color[ch];
            }
          }
        }
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double v = acc[ch] / (kSub * kSub) + noise(rng);
          img.at(0, ch, r, c) = static_cast<T>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
    return img;
  }
};

struct SyntheticOptions {
  std::size_t count = 200;
  std::uint64_t seed = 0;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t annotators = 4;
  double jitter = 1.0;
  std::size_t first_index = 0;  // id numbering offset
};

template <typename T>
struct SyntheticDataset {
  std::vector<AnnotationSet<T>> samples;
  std::vector<Scene> scenes;
};

namespace detail {

inline SceneShape random_shape(std::mt19937_64& rng, double h, double w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double size = std::min(h, w);
  SceneShape s;
  const double pick = u(rng);
  s.kind = pick < 1.0 / 3 ? ShapeKind::Rectangle
                          : (pick < 2.0 / 3 ? ShapeKind::Ellipse : ShapeKind::Triangle);
  s.cx = w * (0.2 + 0.6 * u(rng));
  s.cy = h * (0.2 + 0.6 * u(rng));
  s.a = size * (0.1 + 0.2 * u(rng));
  s.b = size * (0.1 + 0.2 * u(rng));
  s.angle = std::numbers::pi * u(rng);
  if (s.kind == ShapeKind::Triangle) {
    const double base = 2 * std::numbers::pi * u(rng);
    for (int k = 0; k < 3; ++k) {
      const double th = base + k * 2 * std::numbers::pi / 3 + 0.6 * (u(rng) - 0.5);
      const double rad = size * (0.15 + 0.2 * u(rng));
      s.tri[2 * k] = s.cx + rad * std::cos(th);
      s.tri[2 * k + 1] = s.cy + rad * std::sin(th);
    }
  }
  return s;
}

inline double color_distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return (std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2])) / 3.0;
}

}  // namespace detail

// Builds the scene description of sample `index`; each sample draws from its
// own generator seeded by (seed, index).
inline Scene make_scene(const SyntheticOptions& opt, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(opt.seed),
                    static_cast<std::uint32_t>(opt.seed >> 32),
                    static_cast<std::uint32_t>(index), 0x52434653u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double h = static_cast<double>(opt.height);
  const double w = static_cast<double>(opt.width);

  Scene sc;
  sc.height = opt.height;
  sc.width = opt.width;
  sc.jitter = opt.jitter;
  for (double& c : sc.background) c = 0.2 + 0.6 * u(rng);
  sc.texture_amp = 0.06 + 0.1 * u(rng);
  const double tex_angle = std::numbers::pi * u(rng);
  const double tex_freq = 0.6 + 0.9 * u(rng);
  sc.texture_fx = tex_freq * std::cos(tex_angle);
  sc.texture_fy = tex_freq * std::sin(tex_angle);
  sc.texture_phase = 2 * std::numbers::pi * u(rng);
  sc.noise_sigma = 0.02 + 0.03 * u(rng);
  sc.noise_seed = rng();

  const std::size_t n_shapes = 1 + static_cast<std::size_t>(u(rng) * 4.0) % 4;
  for (std::size_t k = 0; k < n_shapes; ++k) {
    SceneShape s = detail::random_shape(rng, h, w);
    // keep every shape distinguishable from the background and its peers
    for (int attempt = 0; attempt < 32; ++attempt) {
      for (double& c : s.color) c = u(rng);
      bool ok = detail::color_distance(s.color, sc.background) > 0.15;
      for (const auto& other : sc.shapes) {
        ok = ok && detail::color_distance(s.color, other.color) > 0.15;
      }
      if (ok) break;
    }
    sc.shapes.push_back(s);
  }

  const double low_freq = 2 * std::numbers::pi / std::max(h, w);
  sc.warps.resize(opt.annotators);
  for (auto& per_shape : sc.warps) {
    for (std::size_t k = 0; k < n_shapes; ++k) {
      AnnotatorWarp wp;
      const double th = 2 * std::numbers::pi * u(rng);
      wp.dir_x = std::cos(th);
      wp.dir_y = std::sin(th);
      wp.freq_x = low_freq * (2 * u(rng) - 1);
      wp.freq_y = low_freq * (2 * u(rng) - 1);
      wp.phase = 2 * std::numbers::pi * u(rng);
      per_shape.push_back(wp);
    }
  }
  return sc;
}

template <typename T>
AnnotationSet<T> realize_scene(const Scene& sc, std::string id) {
  AnnotationSet<T> set;
  set.id = std::move(id);
  set.image = sc.render<T>();
  for (std::size_t a = 0; a < sc.warps.size(); ++a) {
    set.annotators.push_back(sc.boundary_map<T>(static_cast<int>(a)));
  }
  return set;
}

inline std::string synthetic_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth_%05zu", index);
  return buf;
}

template <typename T>
SyntheticDataset<T> generate_synthetic(const SyntheticOptions& opt) {
  if (opt.height < 32 || opt.width < 32) {
    throw ArgumentError("generate_synthetic: canvas must be at least 32x32");
  }
  if (opt.annotators < 1) throw ArgumentError("generate_synthetic: need at least one annotator");
  if (opt.jitter < 0) throw ArgumentError("generate_synthetic: jitter must be non-negative");
  SyntheticDataset<T> ds;
  for (std::size_t i = 0; i < opt.count; ++i) {
    const std::size_t index = opt.first_index + i;
    ds.scenes.push_back(make_scene(opt, index));
    ds.samples.push_back(realize_scene<T>(ds.scenes.back(), synthetic_id(index)));
  }
  return ds;
}

}  // namespace rcf
