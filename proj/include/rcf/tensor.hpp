#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rcf/error.hpp"

namespace rcf {

// (N, C, H, W) extents of a dense 4-D tensor.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t size() const noexcept { return n * c * h * w; }
  constexpr std::size_t plane() const noexcept { return h * w; }
  constexpr bool operator==(const Shape&) const = default;

  std::string str() const {
    return detail::concat("(", n, ",", c, ",", h, ",", w, ")");
  }
};

// Dense row-major (N, C, H, W) array with an optional gradient buffer of the
// same length. The gradient is absent until ensure_grad() is called.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(shape), values_(shape.size(), fill) {}

  Tensor(Shape shape, std::vector<T> values)
      : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.size()) {
      throw ShapeError(detail::concat("tensor of shape ", shape_.str(),
                                      " needs ", shape_.size(),
                                      " values, got ", values_.size()));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h,
                    std::size_t w) const noexcept {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return values_[index(n, c, h, w)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h,
              std::size_t w) const noexcept {
    return values_[index(n, c, h, w)];
  }

  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  // Pointer to the start of plane (n, c).
  T* plane(std::size_t n, std::size_t c) noexcept {
    return values_.data() + (n * shape_.c + c) * shape_.plane();
  }
  const T* plane(std::size_t n, std::size_t c) const noexcept {
    return values_.data() + (n * shape_.c + c) * shape_.plane();
  }

  bool has_grad() const noexcept { return grad_.has_value(); }

  // Allocates a zeroed gradient buffer if none exists.
  std::span<T> ensure_grad() {
    if (!grad_) grad_.emplace(values_.size(), T{0});
    return *grad_;
  }

  std::span<T> grad() {
    if (!grad_) throw ArgumentError("tensor has no gradient buffer");
    return *grad_;
  }
  std::span<const T> grad() const {
    if (!grad_) throw ArgumentError("tensor has no gradient buffer");
    return *grad_;
  }

  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), T{0});
  }
  void drop_grad() { grad_.reset(); }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  // Same dims, new meaning of the dims (for the rank bookkeeping of biases).
  void reshape(Shape s) {
    if (s.size() != shape_.size()) {
      throw ShapeError(detail::concat("cannot reshape ", shape_.str(), " to ",
                                      s.str()));
    }
    shape_ = s;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.size());
    std::transform(values_.begin(), values_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(),
                       [](T v) { return std::isfinite(v); });
  }

 private:
  Shape shape_{};
  std::vector<T> values_;
  std::optional<std::vector<T>> grad_;
};

// Value equality (gradients are ignored).
template <typename T>
bool same_values(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() &&
         std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(detail::concat("max_abs_diff: ", a.shape().str(), " vs ",
                                    b.shape().str()));
  }
  T m{0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

// Single-channel map of height h and width w.
template <typename T>
Tensor<T> make_map(std::size_t h, std::size_t w, T fill = T{0}) {
  return Tensor<T>(Shape{1, 1, h, w}, fill);
}

}  // namespace rcf
