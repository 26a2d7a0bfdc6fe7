#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rcf/error.hpp"
#include "rcf/ops.hpp"
#include "rcf/tensor.hpp"

namespace rcf {

// Which conv layers of a stage feed its side branch.
//   AllConvs      every conv -> 1x1-21, summed (RCF branch)
//   LastConvOnly  only the last conv -> 1x1-21 (HED-style branch)
//   None          stage has no side output
enum class SideMode { AllConvs, LastConvOnly, None };

inline const char* to_string(SideMode m) {
  switch (m) {
    case SideMode::AllConvs: return "all";
    case SideMode::LastConvOnly: return "last";
    case SideMode::None: return "none";
  }
  return "?";
}

inline SideMode side_mode_from_string(const std::string& s) {
  if (s == "all" || s == "rcf") return SideMode::AllConvs;
  if (s == "last" || s == "hed") return SideMode::LastConvOnly;
  if (s == "none") return SideMode::None;
  throw ArgumentError("unknown side mode '" + s + "' (expected all|last|none)");
}

enum class BackboneInit { Gaussian, Msra };

struct StageSpec {
  std::size_t num_convs = 1;
  std::size_t out_channels = 8;
  SideMode side_mode = SideMode::AllConvs;
  bool pool_after = true;
  std::size_t pool_stride = 2;
  std::size_t pool_kernel = 2;
  std::size_t dilation = 1;  // of this stage's 3x3 convs
};

struct NetworkConfig {
  std::vector<StageSpec> stages;
  std::size_t in_channels = 3;
  std::size_t side_channels = 21;  // depth of the per-conv 1x1 side convs
  bool fusion_enabled = true;
  bool side_nonlinearity = false;  // ReLU after each 1x1-21 conv
  bool learnable_upsample = false;
  BackboneInit backbone_init = BackboneInit::Gaussian;
  double init_std = 0.01;

  std::size_t num_side_outputs() const {
    std::size_t k = 0;
    for (const auto& s : stages) k += s.side_mode != SideMode::None;
    return k;
  }

  void validate() const {
    if (stages.empty()) throw ArgumentError("network config needs at least one stage");
    if (in_channels < 1 || side_channels < 1) {
      throw ArgumentError("network config: channel counts must be positive");
    }
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const auto& st = stages[s];
      if (st.num_convs < 1) {
        throw ArgumentError(detail::concat("stage ", s + 1, ": num_convs must be >= 1"));
      }
      if (st.out_channels < 1) {
        throw ArgumentError(detail::concat("stage ", s + 1, ": out_channels must be positive"));
      }
      if (st.dilation < 1 || st.pool_stride < 1 || st.pool_kernel < 1) {
        throw ArgumentError(detail::concat("stage ", s + 1,
                                           ": dilation and pool sizes must be >= 1"));
      }
    }
    if (num_side_outputs() == 0) throw ArgumentError("network config has no side outputs");
  }

  // Product of the pool strides preceding stage s.
  std::size_t stage_stride(std::size_t s) const {
    std::size_t stride = 1;
    for (std::size_t i = 0; i < s; ++i) {
      if (stages[i].pool_after) stride *= stages[i].pool_stride;
    }
    return stride;
  }

  // Smallest input extent: the cumulative stride of the deepest stage.
  std::size_t min_input_size() const { return stage_stride(stages.size() - 1); }
};

// VGG16 backbone without fully connected layers and pool5. With the default
// pool4_stride of 1, stage-5 convs are dilated to keep their receptive field.
inline NetworkConfig vgg16_rcf_config(std::size_t pool4_stride = 1,
                                      std::size_t dilation_stage5 = 2) {
  NetworkConfig cfg;
  const std::size_t convs[] = {2, 2, 3, 3, 3};
  const std::size_t widths[] = {64, 128, 256, 512, 512};
  for (std::size_t s = 0; s < 5; ++s) {
    StageSpec st;
    st.num_convs = convs[s];
    st.out_channels = widths[s];
    st.pool_after = s < 4;
    st.pool_stride = 2;
    cfg.stages.push_back(st);
  }
  cfg.stages[3].pool_stride = pool4_stride;
  if (pool4_stride == 1) {
    // a stride-1 pool keeps the extent with a clipped 2-wide window
    cfg.stages[4].dilation = dilation_stage5;
  }
  return cfg;
}

// One row of a receptive field table.
struct RFEntry {
  std::string layer;
  std::size_t rf_size;
  std::size_t stride;
};

// rf <- rf + (k - 1) dilation stride, stride <- stride * layer stride.
// With standard_pool4 the table describes the unmodified VGG-style backbone:
// every stage is followed by a 2x2 stride-2 pool (pool5 included) and no conv
// is dilated, which for the VGG16 config gives the classic 18-row table.
inline std::vector<RFEntry> receptive_field_table(const NetworkConfig& cfg,
                                                  bool standard_pool4) {
  std::vector<RFEntry> rows;
  std::size_t rf = 1;
  std::size_t stride = 1;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const StageSpec& st = cfg.stages[s];
    const std::size_t dil = standard_pool4 ? 1 : st.dilation;
    for (std::size_t j = 0; j < st.num_convs; ++j) {
      rf += 2 * dil * stride;
      rows.push_back({detail::concat("conv", s + 1, "_", j + 1), rf, stride});
    }
    const bool pool = standard_pool4 || st.pool_after;
    if (pool) {
      const std::size_t k = standard_pool4 ? 2 : st.pool_kernel;
      const std::size_t ps = standard_pool4 ? 2 : st.pool_stride;
      rf += (k - 1) * stride;
      stride *= ps;
      rows.push_back({detail::concat("pool", s + 1), rf, stride});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------

// Side outputs of one forward pass, all at input resolution.
template <typename T>
struct SideOutputs {
  std::vector<Tensor<T>> stage_logits;  // K maps (N,1,H,W)
  std::vector<Tensor<T>> stage_maps;
  Tensor<T> fused_logit;  // empty when fusion is disabled
  Tensor<T> fused_map;    // mean of stage maps when fusion is disabled
};

template <typename T>
struct SideGrads {
  std::vector<Tensor<T>> stage_logits;
  Tensor<T> fused_logit;  // may be empty
};

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor;
  std::size_t rank;  // 1 for biases, 4 for kernels
};

template <typename T>
struct Stage {
  std::vector<ConvParams<T>> convs;
  std::vector<ConvParams<T>> side;  // 1x1 -> side_channels
  std::vector<std::size_t> side_sources;  // conv index feeding side[i]
  ConvParams<T> score;  // 1x1 side_channels -> 1
  Tensor<T> up_kernel;  // (1,1,k,k); empty for stride-1 stages
  std::size_t up_factor = 1;
  bool has_side = false;
};

// Activations recorded by forward() for backward().
template <typename T>
struct ForwardTrace {
  struct StageTrace {
    Tensor<T> input;
    std::vector<Tensor<T>> conv_out;  // post-ReLU
    std::vector<Tensor<T>> side_out;  // post-activation 1x1-21 outputs
    Tensor<T> side_sum;
    Tensor<T> score;  // low-resolution logit
    std::vector<std::size_t> pool_argmax;
    Shape pooled_from{};
  };
  std::vector<StageTrace> stages;
  Tensor<T> fuse_input;
  std::size_t height = 0;
  std::size_t width = 0;
};

template <typename T>
class Model {
 public:
  Model() = default;

  // Side 1x1 convs and backbone ~ N(0, init_std^2) with zero biases (MSRA
  // backbone when requested); fusion weights 0.2, bias 0. Same seed, same
  // parameters.
  static Model build(const NetworkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.config_ = cfg;
    std::mt19937_64 rng(seed);
    auto gaussian = [&rng](Tensor<T>& t, double std) {
      std::normal_distribution<double> dist(0.0, std);
      for (T& v : t.values()) v = static_cast<T>(dist(rng));
    };

    std::size_t in_c = cfg.in_channels;
    for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
      const StageSpec& spec = cfg.stages[s];
      Stage<T> st;
      for (std::size_t j = 0; j < spec.num_convs; ++j) {
        auto conv = make_conv<T>(spec.out_channels, in_c, 3, 1, spec.dilation, spec.dilation);
        const double std = cfg.backbone_init == BackboneInit::Msra
                               ? std::sqrt(2.0 / static_cast<double>(in_c * 9))
                               : cfg.init_std;
        gaussian(conv.weights, std);
        st.convs.push_back(std::move(conv));
        in_c = spec.out_channels;
      }
      st.has_side = spec.side_mode != SideMode::None;
      if (st.has_side) {
        if (spec.side_mode == SideMode::AllConvs) {
          for (std::size_t j = 0; j < spec.num_convs; ++j) st.side_sources.push_back(j);
        } else {
          st.side_sources.push_back(spec.num_convs - 1);
        }
        for (std::size_t j = 0; j < st.side_sources.size(); ++j) {
          auto side = make_conv<T>(cfg.side_channels, spec.out_channels, 1);
          gaussian(side.weights, cfg.init_std);
          st.side.push_back(std::move(side));
        }
        st.score = make_conv<T>(1, cfg.side_channels, 1);
        gaussian(st.score.weights, cfg.init_std);
        st.up_factor = cfg.stage_stride(s);
        if (st.up_factor > 1) st.up_kernel = bilinear_kernel<T>(st.up_factor);
      }
      m.stages_.push_back(std::move(st));
    }
    if (cfg.fusion_enabled) {
      m.fuse_ = make_conv<T>(1, cfg.num_side_outputs(), 1);
      m.fuse_.weights.fill(static_cast<T>(0.2));
    }
    return m;
  }

  const NetworkConfig& config() const noexcept { return config_; }
  std::size_t num_side_outputs() const { return config_.num_side_outputs(); }
  std::size_t min_input_size() const { return config_.min_input_size(); }
  std::vector<Stage<T>>& stages() noexcept { return stages_; }
  const std::vector<Stage<T>>& stages() const noexcept { return stages_; }
  ConvParams<T>& fuse() noexcept { return fuse_; }

  // Learnable tensors in a fixed order, with their weight-file names.
  std::vector<NamedParam<T>> parameters() {
    std::vector<NamedParam<T>> out;
    auto add_conv = [&out](const std::string& base, ConvParams<T>& c) {
      out.push_back({base + "/weight", &c.weights, 4});
      out.push_back({base + "/bias", &c.bias, 1});
    };
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      Stage<T>& st = stages_[s];
      const std::string stage = detail::concat("stage", s + 1);
      for (std::size_t j = 0; j < st.convs.size(); ++j) {
        add_conv(detail::concat(stage, "/conv", j + 1), st.convs[j]);
      }
      for (std::size_t j = 0; j < st.side.size(); ++j) {
        add_conv(detail::concat(stage, "/side", st.side_sources[j] + 1), st.side[j]);
      }
      if (st.has_side) {
        add_conv(stage + "/score", st.score);
        if (config_.learnable_upsample && !st.up_kernel.empty()) {
          out.push_back({stage + "/upsample/kernel", &st.up_kernel, 4});
        }
      }
    }
    if (config_.fusion_enabled) add_conv("fuse", fuse_);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : const_cast<Model*>(this)->parameters()) n += p.tensor->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.tensor->zero_grad();
  }

  SideOutputs<T> forward(const Tensor<T>& image, ForwardTrace<T>* trace = nullptr) const {
    const Shape& is = image.shape();
    if (is.c != config_.in_channels) {
      throw ShapeError(detail::concat("forward: image has ", is.c, " channels, model expects ",
                                      config_.in_channels));
    }
    const std::size_t min_size = min_input_size();
    if (is.h < min_size || is.w < min_size) {
      throw ShapeError(detail::concat("forward: image ", is.h, "x", is.w,
                                      " is too small, minimum size is ", min_size, "x",
                                      min_size));
    }
    ForwardTrace<T> local;
    ForwardTrace<T>& tr = trace ? *trace : local;
    tr.stages.assign(stages_.size(), {});
    tr.height = is.h;
    tr.width = is.w;

    SideOutputs<T> out;
    Tensor<T> x = image;
    x.drop_grad();
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      const Stage<T>& st = stages_[s];
      const StageSpec& spec = config_.stages[s];
      auto& rec = tr.stages[s];
      rec.input = std::move(x);
      const Tensor<T>* cur = &rec.input;
      for (const auto& conv : st.convs) {
        Tensor<T> y = conv2d(*cur, conv);
        relu_inplace(y);
        rec.conv_out.push_back(std::move(y));
        cur = &rec.conv_out.back();
      }
      if (st.has_side) {
        for (std::size_t j = 0; j < st.side.size(); ++j) {
          Tensor<T> f = conv2d(rec.conv_out[st.side_sources[j]], st.side[j]);
          if (config_.side_nonlinearity) relu_inplace(f);
          rec.side_out.push_back(std::move(f));
        }
        std::vector<const Tensor<T>*> terms;
        for (const auto& f : rec.side_out) terms.push_back(&f);
        rec.side_sum = eltwise_add<T>(std::span<const Tensor<T>* const>(terms));
        rec.score = conv2d(rec.side_sum, st.score);
        Tensor<T> logit = st.up_factor > 1
                              ? upsample(rec.score, st.up_kernel, st.up_factor, is.h, is.w)
                              : rec.score;
        out.stage_maps.push_back(sigmoid(logit));
        out.stage_logits.push_back(std::move(logit));
      }
      if (spec.pool_after && s + 1 < stages_.size()) {
        rec.pooled_from = rec.conv_out.back().shape();
        auto pooled = max_pool2d(rec.conv_out.back(), spec.pool_kernel, spec.pool_stride);
        rec.pool_argmax = std::move(pooled.argmax);
        x = std::move(pooled.output);
      } else if (s + 1 < stages_.size()) {
        x = rec.conv_out.back();
      }
    }

    if (config_.fusion_enabled) {
      std::vector<const Tensor<T>*> parts;
      for (const auto& l : out.stage_logits) parts.push_back(&l);
      tr.fuse_input = concat_channels<T>(std::span<const Tensor<T>* const>(parts));
      out.fused_logit = conv2d(tr.fuse_input, fuse_);
      out.fused_map = sigmoid(out.fused_logit);
    } else {
      std::vector<const Tensor<T>*> parts;
      for (const auto& m : out.stage_maps) parts.push_back(&m);
      out.fused_map = eltwise_add<T>(std::span<const Tensor<T>* const>(parts));
      const T inv = T{1} / static_cast<T>(parts.size());
      for (T& v : out.fused_map.values()) v *= inv;
    }
    return out;
  }

  // Accumulates parameter gradients given dL/dlogit for every side output.
  void backward(const ForwardTrace<T>& tr, const SideGrads<T>& grads) {
    const std::size_t k = num_side_outputs();
    if (grads.stage_logits.size() != k) {
      throw ShapeError(detail::concat("backward: expected ", k, " stage gradients, got ",
                                      grads.stage_logits.size()));
    }
    if (tr.stages.size() != stages_.size()) throw ShapeError("backward: trace does not match model");

    std::vector<Tensor<T>> g_logit(grads.stage_logits.begin(), grads.stage_logits.end());
    if (config_.fusion_enabled && !grads.fused_logit.empty()) {
      Tensor<T> g_cat = conv2d_backward(tr.fuse_input, fuse_, grads.fused_logit);
      std::vector<std::size_t> ones(k, 1);
      auto parts = split_channels(g_cat, std::span<const std::size_t>(ones));
      for (std::size_t i = 0; i < k; ++i) {
        if (g_logit[i].shape() != parts[i].shape()) {
          throw ShapeError("backward: stage gradient shape mismatch");
        }
        for (std::size_t e = 0; e < parts[i].size(); ++e) g_logit[i][e] += parts[i][e];
      }
    }

    std::size_t side_index = k;
    Tensor<T> g_next_input;  // dL/d(input of stage s+1)
    for (std::size_t s = stages_.size(); s-- > 0;) {
      Stage<T>& st = stages_[s];
      const StageSpec& spec = config_.stages[s];
      const auto& rec = tr.stages[s];
      std::vector<Tensor<T>> g_conv(st.convs.size());
      for (std::size_t j = 0; j < st.convs.size(); ++j) g_conv[j] = Tensor<T>(rec.conv_out[j].shape());

      if (s + 1 < stages_.size() && !g_next_input.empty()) {
        Tensor<T> g_last = spec.pool_after
                               ? max_pool2d_backward(g_next_input, rec.pool_argmax, rec.pooled_from)
                               : std::move(g_next_input);
        add_into(g_conv.back(), g_last);
      }

      if (st.has_side) {
        const Tensor<T>& g_up = g_logit[--side_index];
        Tensor<T> g_score;
        if (st.up_factor > 1) {
          std::span<T> kgrad;
          if (config_.learnable_upsample) kgrad = st.up_kernel.ensure_grad();
          g_score = upsample_backward(g_up, rec.score.shape(), st.up_kernel, st.up_factor,
                                      kgrad, &rec.score);
        } else {
          g_score = g_up;
        }
        Tensor<T> g_sum = conv2d_backward(rec.side_sum, st.score, g_score);
        for (std::size_t j = 0; j < st.side.size(); ++j) {
          Tensor<T> g_f = g_sum;
          if (config_.side_nonlinearity) relu_backward_inplace(rec.side_out[j], g_f);
          const std::size_t src = st.side_sources[j];
          add_into(g_conv[src], conv2d_backward(rec.conv_out[src], st.side[j], g_f));
        }
      }

      for (std::size_t j = st.convs.size(); j-- > 0;) {
        relu_backward_inplace(rec.conv_out[j], g_conv[j]);
        const Tensor<T>& conv_in = j == 0 ? rec.input : rec.conv_out[j - 1];
        const bool need_in = j > 0 || s > 0;
        Tensor<T> g_in = conv2d_backward(conv_in, st.convs[j], g_conv[j], need_in);
        if (j > 0) {
          add_into(g_conv[j - 1], g_in);
        } else {
          g_next_input = std::move(g_in);
        }
      }
    }
  }

 private:
  static void add_into(Tensor<T>& acc, const Tensor<T>& g) {
    if (acc.shape() != g.shape()) {
      throw ShapeError(detail::concat("gradient shape ", g.shape().str(), " != ", acc.shape().str()));
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
  }

  NetworkConfig config_;
  std::vector<Stage<T>> stages_;
  ConvParams<T> fuse_;
};

}  // namespace rcf
