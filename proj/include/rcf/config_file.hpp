#pragma once

// Line-oriented run configuration:
//
//   # comment
//   [network]
//   preset = tiny            # tiny | vgg16, selects the stage list
//   side_channels = 21
//   [stage2]                 # overrides (or appends) stage 2
//   out_channels = 16
//   side_mode = last         # all | last | none
//   [train]
//   base_lr = 1e-6
//   [loss]
//   eta = 0.5
//   [inference]
//   scales = 0.5, 1.0, 1.5
//   [eval]
//   max_dist_frac = 0.0075
//
// Unknown sections and keys are errors.

#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rcf/error.hpp"
#include "rcf/evaluation.hpp"
#include "rcf/inference.hpp"
#include "rcf/model.hpp"
#include "rcf/trainer.hpp"

namespace rcf {

// Three VGG-style stages of widths 8/16/32 with 2, 2 and 3 convs; strides
// 1, 2 and 4 at the side outputs.
inline NetworkConfig tiny_rcf_config() {
  NetworkConfig cfg;
  const std::size_t convs[] = {2, 2, 3};
  const std::size_t widths[] = {8, 16, 32};
  for (std::size_t s = 0; s < 3; ++s) {
    StageSpec st;
    st.num_convs = convs[s];
    st.out_channels = widths[s];
    st.pool_after = s < 2;
    cfg.stages.push_back(st);
  }
  return cfg;
}

// Schedule for the tiny preset on 64x64 synthetic data. The summed
// per-pixel loss makes gradients large, hence the small base rate.
inline TrainConfig tiny_train_config() {
  TrainConfig c;
  c.base_lr = 2.5e-5;
  c.lr_decay_every = 100000;
  c.batch_size = 4;
  c.total_iters = 1000;
  return c;
}

struct RunConfig {
  std::string preset = "tiny";
  NetworkConfig network = [] {
    NetworkConfig n = tiny_rcf_config();
    n.backbone_init = BackboneInit::Msra;
    return n;
  }();
  TrainConfig train = tiny_train_config();
  InferenceConfig inference;
  MatchParams eval;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct ValueParser {
  std::string where;

  double real(const std::string& v) const {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw FormatError(where + ": expected a number, got '" + v + "'");
    }
  }
  long integer(const std::string& v) const {
    long out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
      throw FormatError(where + ": expected an integer, got '" + v + "'");
    }
    return out;
  }
  std::size_t count(const std::string& v) const {
    const long n = integer(v);
    if (n < 0) throw FormatError(where + ": expected a non-negative count");
    return static_cast<std::size_t>(n);
  }
  bool flag(const std::string& v) const {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw FormatError(where + ": expected true/false, got '" + v + "'");
  }
  std::vector<double> list(const std::string& v) const {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(real(trim(item)));
    return out;
  }
};

}  // namespace detail

inline std::vector<double> parse_scale_list(const std::string& text) {
  return detail::ValueParser{"scales"}.list(text);
}

inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
  using Entries = std::vector<std::pair<std::string, std::string>>;
  std::vector<std::pair<std::string, Entries>> sections;
  std::map<std::string, std::size_t> line_of;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw FormatError(detail::concat(source, ":", lineno, ": malformed section header"));
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      sections.emplace_back(section, Entries{});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(detail::concat(source, ":", lineno, ": expected key = value"));
    }
    if (sections.empty()) {
      throw FormatError(detail::concat(source, ":", lineno, ": key outside of a section"));
    }
    const std::string key = detail::trim(line.substr(0, eq));
    sections.back().second.emplace_back(key, detail::trim(line.substr(eq + 1)));
    line_of[section + "." + key] = lineno;
  }

  RunConfig rc;
  std::size_t pool4_stride = 1, dilation5 = 2;
  std::size_t num_stages = 0;
  // the preset decides the stage list before any [stageN] overrides apply
  for (const auto& [name, entries] : sections) {
    if (name != "network") continue;
    for (const auto& [k, v] : entries) {
      const detail::ValueParser vp{detail::concat(source, ":", line_of[name + "." + k], ": ", k)};
      if (k == "preset") {
        if (v != "tiny" && v != "vgg16") throw FormatError(vp.where + ": unknown preset '" + v + "'");
        rc.preset = v;
      } else if (k == "pool4_stride") {
        pool4_stride = vp.count(v);
      } else if (k == "dilation_stage5") {
        dilation5 = vp.count(v);
      } else if (k == "stages") {
        num_stages = vp.count(v);
        if (num_stages < 1) throw FormatError(vp.where + ": need at least one stage");
      }
    }
  }
  NetworkConfig base = rc.preset == "vgg16" ? vgg16_rcf_config(pool4_stride, dilation5)
                                            : tiny_rcf_config();
  rc.network.stages = base.stages;
  if (rc.preset == "vgg16") {
    rc.network.backbone_init = BackboneInit::Gaussian;
    rc.train = full_scale_train_config();
  }
  if (num_stages > 0) rc.network.stages.resize(num_stages);

  for (const auto& [name, entries] : sections) {
    for (const auto& [k, v] : entries) {
      const detail::ValueParser vp{detail::concat(source, ":", line_of[name + "." + k], ": [",
                                                  name, "] ", k)};
      auto unknown = [&]() { throw FormatError(vp.where + ": unknown key"); };
      NetworkConfig& net = rc.network;
      TrainConfig& tr = rc.train;
      if (name == "network") {
        if (k == "preset" || k == "pool4_stride" || k == "dilation_stage5" || k == "stages") {
        } else if (k == "in_channels") {
          net.in_channels = vp.count(v);
        } else if (k == "side_channels") {
          net.side_channels = vp.count(v);
        } else if (k == "fusion") {
          net.fusion_enabled = vp.flag(v);
        } else if (k == "side_nonlinearity") {
          net.side_nonlinearity = vp.flag(v);
        } else if (k == "learnable_upsample") {
          net.learnable_upsample = vp.flag(v);
        } else if (k == "backbone_init") {
          if (v == "gaussian") net.backbone_init = BackboneInit::Gaussian;
          else if (v == "msra") net.backbone_init = BackboneInit::Msra;
          else throw FormatError(vp.where + ": expected gaussian|msra");
        } else if (k == "init_std") {
          net.init_std = vp.real(v);
        } else {
          unknown();
        }
      } else if (name.rfind("stage", 0) == 0) {
        const std::size_t idx = detail::ValueParser{vp.where}.count(name.substr(5));
        if (idx < 1 || idx > net.stages.size() + 1) {
          throw FormatError(vp.where + ": stage sections must be numbered consecutively from 1");
        }
        if (idx == net.stages.size() + 1) net.stages.emplace_back();
        StageSpec& st = net.stages[idx - 1];
        if (k == "num_convs") st.num_convs = vp.count(v);
        else if (k == "out_channels") st.out_channels = vp.count(v);
        else if (k == "side_mode") {
          try {
            st.side_mode = side_mode_from_string(v);
          } catch (const ArgumentError& e) {
            throw FormatError(vp.where + ": " + e.what());
          }
        } else if (k == "pool_after") st.pool_after = vp.flag(v);
        else if (k == "pool_stride") st.pool_stride = vp.count(v);
        else if (k == "pool_kernel") st.pool_kernel = vp.count(v);
        else if (k == "dilation") st.dilation = vp.count(v);
        else unknown();
      } else if (name == "train") {
        if (k == "base_lr") tr.base_lr = vp.real(v);
        else if (k == "lr_decay_every") tr.lr_decay_every = vp.integer(v);
        else if (k == "lr_decay_factor") tr.lr_decay_factor = vp.real(v);
        else if (k == "momentum") tr.momentum = vp.real(v);
        else if (k == "weight_decay") tr.weight_decay = vp.real(v);
        else if (k == "batch_size") tr.batch_size = vp.count(v);
        else if (k == "total_iters") tr.total_iters = vp.integer(v);
        else if (k == "seed") tr.seed = vp.count(v);
        else if (k == "checkpoint_every") tr.checkpoint_every = vp.integer(v);
        else unknown();
      } else if (name == "loss") {
        if (k == "eta") tr.loss.eta = vp.real(v);
        else if (k == "lambda") tr.loss.lambda = vp.real(v);
        else unknown();
      } else if (name == "inference") {
        if (k == "mean_r") rc.inference.channel_means[0] = vp.real(v);
        else if (k == "mean_g") rc.inference.channel_means[1] = vp.real(v);
        else if (k == "mean_b") rc.inference.channel_means[2] = vp.real(v);
        else if (k == "scales") rc.inference.scales = vp.list(v);
        else unknown();
      } else if (name == "eval") {
        if (k == "max_dist_frac") rc.eval.max_dist_frac = vp.real(v);
        else if (k == "thresholds") rc.eval.thresholds = vp.count(v);
        else unknown();
      } else {
        throw FormatError(detail::concat(source, ": unknown section [", name, "]"));
      }
    }
  }
  // sections without keys still count
  for (const auto& [name, entries] : sections) {
    if (name.rfind("stage", 0) == 0 || name == "network" || name == "train" || name == "loss" ||
        name == "inference" || name == "eval") {
      continue;
    }
    throw FormatError(detail::concat(source, ": unknown section [", name, "]"));
  }
  try {
    rc.network.validate();
    rc.train.validate();
    validate_scales(rc.inference.scales);
    rc.eval.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(source + ": " + e.what());
  }
  return rc;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

// Writes every setting so that parse_config(format_config(c)) == c.
inline std::string format_config(const RunConfig& rc) {
  std::ostringstream o;
  o.precision(17);
  const NetworkConfig& n = rc.network;
  o << "[network]\n";
  o << "preset = " << rc.preset << "\n";
  o << "stages = " << n.stages.size() << "\n";
  o << "in_channels = " << n.in_channels << "\n";
  o << "side_channels = " << n.side_channels << "\n";
  o << "fusion = " << (n.fusion_enabled ? "true" : "false") << "\n";
  o << "side_nonlinearity = " << (n.side_nonlinearity ? "true" : "false") << "\n";
  o << "learnable_upsample = " << (n.learnable_upsample ? "true" : "false") << "\n";
  o << "backbone_init = " << (n.backbone_init == BackboneInit::Msra ? "msra" : "gaussian") << "\n";
  o << "init_std = " << n.init_std << "\n";
  for (std::size_t s = 0; s < n.stages.size(); ++s) {
    const StageSpec& st = n.stages[s];
    o << "\n[stage" << s + 1 << "]\n";
    o << "num_convs = " << st.num_convs << "\n";
    o << "out_channels = " << st.out_channels << "\n";
    o << "side_mode = " << to_string(st.side_mode) << "\n";
    o << "pool_after = " << (st.pool_after ? "true" : "false") << "\n";
    o << "pool_stride = " << st.pool_stride << "\n";
    o << "pool_kernel = " << st.pool_kernel << "\n";
    o << "dilation = " << st.dilation << "\n";
  }
  const TrainConfig& t = rc.train;
  o << "\n[train]\n";
  o << "base_lr = " << t.base_lr << "\n";
  o << "lr_decay_every = " << t.lr_decay_every << "\n";
  o << "lr_decay_factor = " << t.lr_decay_factor << "\n";
  o << "momentum = " << t.momentum << "\n";
  o << "weight_decay = " << t.weight_decay << "\n";
  o << "batch_size = " << t.batch_size << "\n";
  o << "total_iters = " << t.total_iters << "\n";
  o << "seed = " << t.seed << "\n";
  o << "checkpoint_every = " << t.checkpoint_every << "\n";
  o << "\n[loss]\neta = " << t.loss.eta << "\nlambda = " << t.loss.lambda << "\n";
  o << "\n[inference]\n";
  o << "mean_r = " << rc.inference.channel_means[0] << "\n";
  o << "mean_g = " << rc.inference.channel_means[1] << "\n";
  o << "mean_b = " << rc.inference.channel_means[2] << "\n";
  o << "scales = ";
  for (std::size_t i = 0; i < rc.inference.scales.size(); ++i) {
    o << (i ? ", " : "") << rc.inference.scales[i];
  }
  o << "\n\n[eval]\nmax_dist_frac = " << rc.eval.max_dist_frac
    << "\nthresholds = " << rc.eval.thresholds << "\n";
  return o.str();
}

}  // namespace rcf
