#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "rcf/error.hpp"
#include "rcf/tensor.hpp"

namespace rcf {

// One image with the binary edge maps of m >= 1 annotators.
// image is (1,3,H,W); each annotator map is (1,1,H,W) with values in {0,1}.
template <typename T>
struct AnnotationSet {
  std::string id;
  Tensor<T> image;
  std::vector<Tensor<T>> annotators;

  std::size_t height() const { return image.shape().h; }
  std::size_t width() const { return image.shape().w; }

  void validate() const {
    if (annotators.empty()) throw ArgumentError("annotation set '" + id + "' has no annotators");
    const Shape& is = image.shape();
    for (std::size_t a = 0; a < annotators.size(); ++a) {
      const Shape& s = annotators[a].shape();
      if (s.n != 1 || s.c != 1 || s.h != is.h || s.w != is.w) {
        throw ShapeError(detail::concat("annotation set '", id, "': annotator ", a,
                                        " map ", s.str(), " does not match image ",
                                        is.str()));
      }
      for (T v : annotators[a].values()) {
        if (v != T{0} && v != T{1}) {
          throw ArgumentError(detail::concat("annotation set '", id, "': annotator ", a,
                                             " map is not binary"));
        }
      }
    }
  }
};

// Per-pixel fraction of annotators that marked an edge, k/m.
template <typename T>
struct GroundTruth {
  Tensor<T> prob;
  std::size_t annotators = 1;
};

template <typename T>
GroundTruth<T> consensus(const AnnotationSet<T>& ann) {
  ann.validate();
  const std::size_t m = ann.annotators.size();
  std::vector<unsigned> hits(ann.annotators[0].size(), 0);
  for (const auto& map : ann.annotators) {
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i] += map[i] != T{0};
  }
  GroundTruth<T> gt{Tensor<T>(ann.annotators[0].shape()), m};
  for (std::size_t i = 0; i < hits.size(); ++i) {
    gt.prob[i] = static_cast<T>(static_cast<double>(hits[i]) / static_cast<double>(m));
  }
  return gt;
}

// ---------------------------------------------------------------------------
// Geometric augmentation, applied identically to the image and every map.
// Rotations are counter-clockwise.

struct FlipH {};
struct Rot90 {};
struct Rot180 {};
struct Rot270 {};
struct Crop {
  std::size_t x = 0, y = 0, w = 0, h = 0;
};
using AugmentOp = std::variant<FlipH, Rot90, Rot180, Rot270, Crop>;

namespace detail {

// Applies a pixel permutation src(y, x) -> dst plane of size (oh, ow).
template <typename T, typename Fn>
Tensor<T> remap(const Tensor<T>& in, std::size_t oh, std::size_t ow, Fn&& source) {
  const Shape& s = in.shape();
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* src = in.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          const auto [sy, sx] = source(y, x);
          dst[y * ow + x] = src[sy * s.w + sx];
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> apply_op(const Tensor<T>& t, const AugmentOp& op) {
  const std::size_t h = t.shape().h;
  const std::size_t w = t.shape().w;
  using P = std::pair<std::size_t, std::size_t>;
  return std::visit(
      [&](const auto& o) -> Tensor<T> {
        using Op = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<Op, FlipH>) {
          return remap(t, h, w, [&](std::size_t y, std::size_t x) { return P{y, w - 1 - x}; });
        } else if constexpr (std::is_same_v<Op, Rot90>) {
          // dst (y, x) of a (w, h) grid <- src (x, w - 1 - y)
          return remap(t, w, h, [&](std::size_t y, std::size_t x) { return P{x, w - 1 - y}; });
        } else if constexpr (std::is_same_v<Op, Rot180>) {
          return remap(t, h, w,
                       [&](std::size_t y, std::size_t x) { return P{h - 1 - y, w - 1 - x}; });
        } else if constexpr (std::is_same_v<Op, Rot270>) {
          return remap(t, w, h, [&](std::size_t y, std::size_t x) { return P{h - 1 - x, y}; });
        } else {
          if (o.w == 0 || o.h == 0 || o.x + o.w > w || o.y + o.h > h) {
            throw ArgumentError(detail::concat("crop (", o.x, ",", o.y, ",", o.w, ",", o.h,
                                               ") outside ", w, "x", h, " image"));
          }
          return remap(t, o.h, o.w,
                       [&](std::size_t y, std::size_t x) { return P{y + o.y, x + o.x}; });
        }
      },
      op);
}

}  // namespace detail

template <typename T>
Tensor<T> augment_tensor(const Tensor<T>& t, std::span<const AugmentOp> ops) {
  Tensor<T> cur = t;
  cur.drop_grad();
  for (const auto& op : ops) cur = detail::apply_op(cur, op);
  return cur;
}

template <typename T>
AnnotationSet<T> augment(const AnnotationSet<T>& sample, std::span<const AugmentOp> ops) {
  AnnotationSet<T> out;
  out.id = sample.id;
  out.image = augment_tensor(sample.image, ops);
  for (const auto& m : sample.annotators) out.annotators.push_back(augment_tensor(m, ops));
  return out;
}

// Inverse of a bijective op (crop has none).
inline AugmentOp inverse(const AugmentOp& op) {
  if (std::holds_alternative<Rot90>(op)) return Rot270{};
  if (std::holds_alternative<Rot270>(op)) return Rot90{};
  if (std::holds_alternative<Crop>(op)) throw ArgumentError("crop has no inverse");
  return op;
}

// The eight dihedral variants: 4 rotations, each with and without a flip.
inline std::vector<std::vector<AugmentOp>> dihedral_variants() {
  std::vector<std::vector<AugmentOp>> out;
  const AugmentOp rots[] = {Rot90{}, Rot180{}, Rot270{}};
  for (int r = 0; r < 4; ++r) {
    std::vector<AugmentOp> base;
    if (r > 0) base.push_back(rots[r - 1]);
    out.push_back(base);
    base.push_back(FlipH{});
    out.push_back(base);
  }
  return out;
}

}  // namespace rcf
