#pragma once

// Annotator-robust class-balanced cross-entropy.
//
// A ground-truth value y in [0,1] is the fraction of annotators marking the
// pixel. y == 0 is a negative, y > eta a positive, anything in between is
// ignored. With |Y+| and |Y-| counted per ground-truth map,
//   alpha = lambda |Y+| / (|Y+| + |Y-|)   weights negatives,
//   beta  =        |Y-| / (|Y+| + |Y-|)   weights positives,
// and the per-pixel loss is the negative log-likelihood of the sigmoid
// probability, summed over pixels and over all side outputs plus the fused
// output.

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "rcf/error.hpp"
#include "rcf/model.hpp"
#include "rcf/tensor.hpp"

namespace rcf {

enum class PixelClass { Positive, Negative, Ignored };

struct LossParams {
  double eta = 0.5;
  double lambda = 1.1;

  void validate() const {
    if (!(eta >= 0.0 && eta < 1.0)) throw ArgumentError("loss: eta must lie in [0, 1)");
    if (!(lambda > 0.0)) throw ArgumentError("loss: lambda must be positive");
  }
};

inline PixelClass classify_pixel(double y, double eta) {
  if (!(y >= 0.0 && y <= 1.0)) {
    throw ArgumentError(detail::concat("classify_pixel: label ", y, " outside [0, 1]"));
  }
  if (y == 0.0) return PixelClass::Negative;
  if (y <= eta) return PixelClass::Ignored;
  return PixelClass::Positive;
}

struct ClassCounts {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t ignored = 0;
};

template <typename T>
ClassCounts count_classes(const Tensor<T>& gt, double eta) {
  ClassCounts c;
  for (T y : gt.values()) {
    switch (classify_pixel(static_cast<double>(y), eta)) {
      case PixelClass::Positive: ++c.positive; break;
      case PixelClass::Negative: ++c.negative; break;
      case PixelClass::Ignored: ++c.ignored; break;
    }
  }
  return c;
}

struct ClassWeights {
  double alpha;  // negatives
  double beta;   // positives
};

inline ClassWeights class_weights(const ClassCounts& c, double lambda) {
  const double total = static_cast<double>(c.positive + c.negative);
  if (total == 0.0) return {0.0, 0.0};
  return {lambda * static_cast<double>(c.positive) / total,
          static_cast<double>(c.negative) / total};
}

// nullopt for degenerate maps (no positives or no negatives); callers skip
// such images.
template <typename T>
std::optional<ClassWeights> balanced_weights(const Tensor<T>& gt, const LossParams& params) {
  params.validate();
  const ClassCounts c = count_classes(gt, params.eta);
  if (c.positive == 0 || c.negative == 0) return std::nullopt;
  return class_weights(c, params.lambda);
}

template <typename T>
bool is_degenerate(const Tensor<T>& gt, const LossParams& params) {
  return !balanced_weights(gt, params).has_value();
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
struct MapLoss {
  double loss = 0.0;
  Tensor<T> grad_logits;
};

// Sum over pixels of alpha softplus(x) for negatives and beta softplus(-x)
// for positives. Weights come from the ground-truth map (zero when the map
// has no labelled pixels at all).
template <typename T>
MapLoss<T> stage_loss(const Tensor<T>& logits, const Tensor<T>& gt, const LossParams& params) {
  params.validate();
  if (logits.shape() != gt.shape()) {
    throw ShapeError(detail::concat("stage_loss: logits ", logits.shape().str(),
                                    " vs ground truth ", gt.shape().str()));
  }
  const ClassWeights w = class_weights(count_classes(gt, params.eta), params.lambda);
  MapLoss<T> r{0.0, Tensor<T>(logits.shape())};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = static_cast<double>(logits[i]);
    switch (classify_pixel(static_cast<double>(gt[i]), params.eta)) {
      case PixelClass::Negative: {
        r.loss += w.alpha * softplus(x);
        r.grad_logits[i] = static_cast<T>(w.alpha * sigmoid_scalar(x));
        break;
      }
      case PixelClass::Positive: {
        r.loss += w.beta * softplus(-x);
        r.grad_logits[i] = static_cast<T>(w.beta * (sigmoid_scalar(x) - 1.0));
        break;
      }
      case PixelClass::Ignored:
        break;
    }
  }
  return r;
}

template <typename T>
struct TotalLoss {
  double loss = 0.0;
  std::vector<double> stage_losses;
  double fused_loss = 0.0;
  SideGrads<T> grads;
};

template <typename T>
TotalLoss<T> total_loss(const SideOutputs<T>& outputs, const Tensor<T>& gt,
                        const LossParams& params) {
  if (outputs.stage_logits.empty()) throw ArgumentError("total_loss: no stage outputs");
  TotalLoss<T> r;
  for (const auto& logit : outputs.stage_logits) {
    MapLoss<T> l = stage_loss(logit, gt, params);
    r.loss += l.loss;
    r.stage_losses.push_back(l.loss);
    r.grads.stage_logits.push_back(std::move(l.grad_logits));
  }
  if (!outputs.fused_logit.empty()) {
    MapLoss<T> l = stage_loss(outputs.fused_logit, gt, params);
    r.fused_loss = l.loss;
    r.loss += l.loss;
    r.grads.fused_logit = std::move(l.grad_logits);
  }
  return r;
}

}  // namespace rcf
