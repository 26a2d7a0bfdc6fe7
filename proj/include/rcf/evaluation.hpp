#pragma once

// Boundary benchmark: thin the prediction, sweep thresholds, match against
// every annotator and reduce the counts to ODS / OIS F-measures.

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rcf/error.hpp"
#include "rcf/matching.hpp"
#include "rcf/nms.hpp"
#include "rcf/tensor.hpp"

namespace rcf {

struct MatchParams {
  double max_dist_frac = 0.0075;  // of the image diagonal
  std::size_t thresholds = 99;

  void validate() const {
    if (!(max_dist_frac > 0.0 && max_dist_frac < 1.0)) {
      throw ArgumentError("max_dist_frac must lie in (0, 1)");
    }
    if (thresholds < 1) throw ArgumentError("need at least one threshold");
  }
};

// k / (n + 1) for k = 1..n.
inline std::vector<double> threshold_values(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t k = 0; k < n; ++k) t[k] = static_cast<double>(k + 1) / static_cast<double>(n + 1);
  return t;
}

struct ThresholdCounts {
  std::size_t tp_pred = 0;  // predicted pixels matched to at least one annotator
  std::size_t n_pred = 0;
  std::size_t tp_gt = 0;  // matched annotator pixels, summed over annotators
  std::size_t n_gt = 0;

  ThresholdCounts& operator+=(const ThresholdCounts& o) {
    tp_pred += o.tp_pred;
    n_pred += o.n_pred;
    tp_gt += o.tp_gt;
    n_gt += o.n_gt;
    return *this;
  }
  bool operator==(const ThresholdCounts&) const = default;

  double precision() const {
    return n_pred == 0 ? 0.0 : static_cast<double>(tp_pred) / static_cast<double>(n_pred);
  }
  double recall() const {
    return n_gt == 0 ? 0.0 : static_cast<double>(tp_gt) / static_cast<double>(n_gt);
  }
};

inline double f_measure(double p, double r) {
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

inline double f_measure(const ThresholdCounts& c) { return f_measure(c.precision(), c.recall()); }

struct ImageCounts {
  std::vector<ThresholdCounts> per_threshold;
};

inline double match_radius(std::size_t h, std::size_t w, double max_dist_frac) {
  return max_dist_frac * std::hypot(static_cast<double>(h), static_cast<double>(w));
}

// Counts for an already-thinned prediction.
template <typename T>
ImageCounts evaluate_thinned(const Tensor<T>& thinned, std::span<const Tensor<T>> annotators,
                             const MatchParams& params) {
  params.validate();
  if (annotators.empty()) throw ArgumentError("evaluate_image: no annotator maps");
  for (const auto& a : annotators) {
    if (a.shape() != thinned.shape()) {
      throw ShapeError(detail::concat("evaluate_image: annotator map ", a.shape().str(),
                                      " vs prediction ", thinned.shape().str()));
    }
  }
  const Shape& s = thinned.shape();
  const double radius = match_radius(s.h, s.w, params.max_dist_frac);
  std::size_t n_gt = 0;
  for (const auto& a : annotators) {
    for (T v : a.values()) n_gt += v != T{0};
  }

  ImageCounts out;
  Tensor<T> binary(s);
  for (double t : threshold_values(params.thresholds)) {
    ThresholdCounts c;
    c.n_gt = n_gt;
    for (std::size_t i = 0; i < thinned.size(); ++i) {
      const bool on = static_cast<double>(thinned[i]) >= t;
      binary[i] = on ? T{1} : T{0};
      c.n_pred += on;
    }
    std::vector<std::uint8_t> any(thinned.size(), 0);
    for (const auto& a : annotators) {
      const MatchResult m = match_boundaries(binary, a, radius);
      c.tp_gt += m.matched_gt;
      for (std::size_t i = 0; i < any.size(); ++i) any[i] |= m.pred_matched[i];
    }
    for (auto v : any) c.tp_pred += v;
    out.per_threshold.push_back(c);
  }
  return out;
}

template <typename T>
ImageCounts evaluate_image(const Tensor<T>& pred, std::span<const Tensor<T>> annotators,
                           const MatchParams& params) {
  return evaluate_thinned(nms_thin(pred), annotators, params);
}

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<ThresholdCounts> totals;  // summed over images
  std::vector<double> precision, recall, f;
  double ods_f = 0.0;
  double ods_threshold = 0.0;
  double ois_f = 0.0;
  ThresholdCounts ois_totals;
};

inline EvalReport ods_ois(std::span<const ImageCounts> images, std::span<const double> thresholds) {
  if (images.empty()) throw ArgumentError("ods_ois: no images");
  const std::size_t nt = thresholds.size();
  for (const auto& im : images) {
    if (im.per_threshold.size() != nt) throw ShapeError("ods_ois: threshold count mismatch");
  }
  EvalReport r;
  r.thresholds.assign(thresholds.begin(), thresholds.end());
  r.totals.assign(nt, {});
  for (const auto& im : images) {
    for (std::size_t k = 0; k < nt; ++k) r.totals[k] += im.per_threshold[k];
  }
  std::size_t best = 0;
  for (std::size_t k = 0; k < nt; ++k) {
    r.precision.push_back(r.totals[k].precision());
    r.recall.push_back(r.totals[k].recall());
    r.f.push_back(f_measure(r.totals[k]));
    if (r.f[k] > r.f[best]) best = k;
  }
  r.ods_f = r.f[best];
  r.ods_threshold = r.thresholds[best];

  for (const auto& im : images) {
    std::size_t b = 0;
    for (std::size_t k = 1; k < nt; ++k) {
      if (f_measure(im.per_threshold[k]) > f_measure(im.per_threshold[b])) b = k;
    }
    r.ois_totals += im.per_threshold[b];
  }
  r.ois_f = f_measure(r.ois_totals);
  return r;
}

inline EvalReport ods_ois(std::span<const ImageCounts> images, const MatchParams& params) {
  const auto t = threshold_values(params.thresholds);
  return ods_ois(images, std::span<const double>(t));
}

// "t precision recall f" per threshold, then "ODS f @ t" and "OIS f".
inline void write_report(std::ostream& os, const EvalReport& r) {
  char buf[128];
  for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f\n", r.thresholds[k], r.precision[k],
                  r.recall[k], r.f[k]);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "ODS %.6f @ %.6f\n", r.ods_f, r.ods_threshold);
  os << buf;
  std::snprintf(buf, sizeof buf, "OIS %.6f\n", r.ois_f);
  os << buf;
}

struct ParsedReport {
  std::vector<double> thresholds, precision, recall, f;
  double ods_f = 0, ods_threshold = 0, ois_f = 0;
};

inline ParsedReport parse_report(std::istream& is) {
  ParsedReport r;
  bool have_ods = false, have_ois = false;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line.rfind("ODS", 0) == 0) {
      std::string tag, at;
      if (!(ls >> tag >> r.ods_f >> at >> r.ods_threshold) || at != "@") {
        throw FormatError("bad ODS line: " + line);
      }
      have_ods = true;
    } else if (line.rfind("OIS", 0) == 0) {
      std::string tag;
      if (!(ls >> tag >> r.ois_f)) throw FormatError("bad OIS line: " + line);
      have_ois = true;
    } else {
      double t, p, rc, f;
      if (!(ls >> t >> p >> rc >> f)) throw FormatError("bad threshold line: " + line);
      r.thresholds.push_back(t);
      r.precision.push_back(p);
      r.recall.push_back(rc);
      r.f.push_back(f);
    }
  }
  if (!have_ods || !have_ois) throw FormatError("report lacks ODS/OIS lines");
  return r;
}

}  // namespace rcf
