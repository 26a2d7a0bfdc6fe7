// rcf: command-line front end.
//
//   rcf rf-table [--standard-pool4]
//   rcf synth    --out DIR [--count N] [--seed S]
//   rcf train    --data DIR --out DIR [--iters N] [--config FILE]
//   rcf predict  --data DIR --weights FILE --out DIR [--scales a,b,c]
//   rcf eval     --data DIR --pred DIR [--out FILE]
//   rcf pr-curve --report FILE --out FILE.png
//
// Exit status: 0 success, 1 usage error, 2 data or model error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rcf/baseline.hpp"
#include "rcf/config_file.hpp"
#include "rcf/evaluation.hpp"
#include "rcf/image_io.hpp"
#include "rcf/inference.hpp"
#include "rcf/model.hpp"
#include "rcf/synthetic.hpp"
#include "rcf/trainer.hpp"
#include "rcf/weights_io.hpp"

namespace fs = std::filesystem;
using Real = float;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by several subcommands; unset optionals leave the config
// file (or built-in default) untouched.
struct Overrides {
  std::string config;
  std::optional<double> eta, lambda, max_dist_frac;
  std::optional<std::size_t> thresholds;
  std::optional<std::uint64_t> seed;
  std::optional<long> iters;
  std::string scales;

  rcf::RunConfig resolve() const {
    rcf::RunConfig rc = config.empty() ? rcf::RunConfig{} : rcf::load_config(config);
    if (eta) rc.train.loss.eta = *eta;
    if (lambda) rc.train.loss.lambda = *lambda;
    if (max_dist_frac) rc.eval.max_dist_frac = *max_dist_frac;
    if (thresholds) rc.eval.thresholds = *thresholds;
    if (seed) rc.train.seed = *seed;
    if (iters) rc.train.total_iters = *iters;
    if (!scales.empty()) rc.inference.scales = rcf::parse_scale_list(scales);
    try {
      rc.network.validate();
      rc.train.validate();
      rc.eval.validate();
      rcf::validate_scales(rc.inference.scales);
    } catch (const rcf::ArgumentError& e) {
      throw UsageError(e.what());
    }
    return rc;
  }
};

void add_config_flag(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "Run configuration file (flags override it)")
      ->check(CLI::ExistingFile);
}

void add_loss_flags(CLI::App* sub, Overrides& o) {
  sub->add_option("--eta", o.eta, "Annotator agreement threshold for positives (default: 0.5)");
  sub->add_option("--lambda", o.lambda, "Negative-class weight factor (default: 1.1)");
}

void add_eval_flags(CLI::App* sub, Overrides& o) {
  sub->add_option("--max-dist-frac", o.max_dist_frac,
                  "Match radius as a fraction of the image diagonal (default: 0.0075)");
  sub->add_option("--thresholds", o.thresholds, "Number of evaluation thresholds (default: 99)");
}

rcf::Model<Real> build_model(const rcf::RunConfig& rc, const std::string& weights) {
  auto model = rcf::Model<Real>::build(rc.network, rc.train.seed);
  if (!weights.empty()) rcf::load_weights(model, weights);
  return model;
}

std::vector<rcf::AnnotationSet<Real>> load_nonempty(const std::string& dir) {
  auto data = rcf::load_dataset<Real>(dir);
  if (data.empty()) throw rcf::FormatError(dir + ": index.txt lists no images");
  return data;
}

// ---------------------------------------------------------------------------

int cmd_rf_table(bool standard, const Overrides& o) {
  const rcf::RunConfig rc = o.resolve();
  const rcf::NetworkConfig net =
      o.config.empty() ? rcf::vgg16_rcf_config() : rc.network;
  std::printf("%-8s %6s %6s\n", "layer", "rf", "stride");
  for (const auto& row : rcf::receptive_field_table(net, standard)) {
    std::printf("%-8s %6zu %6zu\n", row.layer.c_str(), row.rf_size, row.stride);
  }
  return 0;
}

struct SynthArgs {
  std::string out;
  std::size_t count = 200, size = 64, annotators = 4, first_index = 0;
  double jitter = 1.0;
};

int cmd_synth(const SynthArgs& a, const Overrides& o) {
  rcf::SyntheticOptions opt;
  opt.count = a.count;
  opt.seed = o.seed.value_or(0);
  opt.height = opt.width = a.size;
  opt.annotators = a.annotators;
  opt.jitter = a.jitter;
  opt.first_index = a.first_index;
  const auto ds = rcf::generate_synthetic<Real>(opt);
  rcf::save_dataset(a.out, ds.samples);
  std::cout << "wrote " << ds.samples.size() << " images to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string data, out, weights;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::optional<long> checkpoint_every;
};

int cmd_train(const TrainArgs& a, const Overrides& o) {
  rcf::RunConfig rc = o.resolve();
  if (a.lr) rc.train.base_lr = *a.lr;
  if (a.batch) rc.train.batch_size = *a.batch;
  if (a.checkpoint_every) rc.train.checkpoint_every = *a.checkpoint_every;
  rc.train.checkpoint_dir = (fs::path(a.out) / "checkpoints").string();
  try {
    rc.train.validate();
  } catch (const rcf::ArgumentError& e) {
    throw UsageError(e.what());
  }

  const auto sets = load_nonempty(a.data);
  const auto samples = rcf::make_training_set<Real>(sets, rc.train.loss, &std::cerr);
  if (samples.empty()) throw rcf::FormatError(a.data + ": no usable training images");

  auto model = rcf::Model<Real>::build(rc.network, rc.train.seed);
  rcf::Trainer<Real> trainer(model, rc.train);
  if (!a.weights.empty()) {
    // a checkpoint resumes; a plain weight file only initializes
    bool has_state = false;
    for (const auto& t : rcf::read_tensor_file(a.weights)) has_state |= t.name == "opt/iteration";
    if (has_state) {
      trainer.load_checkpoint(a.weights);
    } else {
      rcf::load_weights(model, a.weights);
    }
  }

  fs::create_directories(a.out);
  std::ofstream log(fs::path(a.out) / "loss.txt", std::ios::app);
  rcf::TrainCallbacks cb;
  cb.on_iteration = [&](long it, double loss, double lr) {
    log << it << ' ' << loss << ' ' << lr << '\n';
  };
  cb.on_checkpoint = [](long it, const std::string& path) {
    std::cerr << "checkpoint " << it << ": " << path << "\n";
  };
  trainer.run(samples, cb);
  const std::string weights_path = (fs::path(a.out) / "weights.rcfw").string();
  rcf::save_weights(model, weights_path);
  std::ofstream(fs::path(a.out) / "config.ini") << rcf::format_config(rc);
  const auto& h = trainer.loss_history();
  if (!h.empty()) std::cout << "final loss " << h.back() << "\n";
  std::cout << "weights: " << weights_path << "\n";
  return 0;
}

struct PredictArgs {
  std::string data, weights, out;
  bool single_scale = false, side_outputs = false, raw = false;
};

int cmd_predict(const PredictArgs& a, const Overrides& o) {
  const rcf::RunConfig rc = o.resolve();
  const auto model = build_model(rc, a.weights);
  fs::create_directories(a.out);
  std::size_t n = 0;
  for (const auto& id : rcf::read_index(a.data)) {
    const auto image = rcf::read_png_rgb<Real>((fs::path(a.data) / "images" / (id + ".png")).string());
    const fs::path base = fs::path(a.out) / id;
    if (a.single_scale || a.side_outputs) {
      const auto out = rcf::predict(model, image, rc.inference);
      if (a.single_scale) rcf::save_prediction(out.fused_map, base.string() + ".png", a.raw);
      if (a.side_outputs) {
        for (std::size_t k = 0; k < out.stage_maps.size(); ++k) {
          rcf::save_prediction(out.stage_maps[k],
                               rcf::detail::concat(base.string(), "_side", k + 1, ".png"), a.raw);
        }
      }
    }
    if (!a.single_scale) {
      const auto fused = rcf::predict_multiscale(model, image, rc.inference.scales, rc.inference);
      rcf::save_prediction(fused, base.string() + ".png", a.raw);
    }
    ++n;
  }
  std::cout << "wrote " << n << " predictions to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string data, pred, out;
  bool sobel = false;
};

int cmd_eval(const EvalArgs& a, const Overrides& o) {
  const rcf::RunConfig rc = o.resolve();
  if (a.pred.empty() == !a.sobel) throw UsageError("eval: give exactly one of --pred and --sobel");
  std::vector<rcf::ImageCounts> counts;
  for (const auto& set : load_nonempty(a.data)) {
    const rcf::Tensor<Real> pred =
        a.sobel ? rcf::sobel_edge_map(set.image)
                : rcf::load_prediction<Real>((fs::path(a.pred) / (set.id + ".png")).string());
    counts.push_back(rcf::evaluate_image<Real>(pred, set.annotators, rc.eval));
  }
  const auto report = rcf::ods_ois(counts, rc.eval);
  if (a.out.empty()) {
    rcf::write_report(std::cout, report);
  } else {
    std::ofstream os(a.out);
    if (!os) throw rcf::FormatError(a.out + ": cannot open for writing");
    rcf::write_report(os, report);
    std::cout << "ODS " << report.ods_f << " OIS " << report.ois_f << "\n";
  }
  return 0;
}

// Plots recall (x) against precision (y) on a white canvas with the ODS
// point marked in red.
int cmd_pr_curve(const std::string& report_path, const std::string& out, std::size_t size) {
  std::ifstream is(report_path);
  if (!is) throw rcf::FormatError(report_path + ": cannot open");
  const rcf::ParsedReport r = rcf::parse_report(is);
  const std::size_t margin = size / 10, span = size - 2 * margin;
  rcf::Tensor<Real> img(rcf::Shape{1, 3, size, size}, Real{1});
  auto put = [&](long x, long y, Real red, Real green, Real blue) {
    if (x < 0 || y < 0 || x >= long(size) || y >= long(size)) return;
    img.at(0, 0, y, x) = red;
    img.at(0, 1, y, x) = green;
    img.at(0, 2, y, x) = blue;
  };
  auto to_px = [&](double rec, double prec) {
    return std::pair<long, long>{long(margin + std::lround(rec * span)),
                                 long(margin + span - std::lround(prec * span))};
  };
  for (std::size_t i = 0; i <= span; ++i) {
    put(long(margin + i), long(margin + span), 0, 0, 0);
    put(long(margin), long(margin + i), 0, 0, 0);
  }
  // iso-F contours at 0.5 and 0.8
  for (double f : {0.5, 0.8}) {
    for (std::size_t i = 0; i <= 4 * span; ++i) {
      const double rec = double(i) / (4 * span);
      if (2 * rec - f <= 0) continue;
      const double prec = f * rec / (2 * rec - f);
      if (prec > 1) continue;
      const auto [x, y] = to_px(rec, prec);
      put(x, y, 0.75, 0.75, 0.75);
    }
  }
  // skip thresholds with no predictions, whose precision is 0 by convention
  std::vector<std::size_t> pts;
  for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
    if (r.recall[k] > 0) pts.push_back(k);
  }
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const auto [x0, y0] = to_px(r.recall[pts[i]], r.precision[pts[i]]);
    const auto [x1, y1] = to_px(r.recall[pts[i + 1]], r.precision[pts[i + 1]]);
    const long steps = std::max({std::labs(x1 - x0), std::labs(y1 - y0), 1L});
    for (long s = 0; s <= steps; ++s) {
      put(x0 + (x1 - x0) * s / steps, y0 + (y1 - y0) * s / steps, 0, 0, 0.8f);
    }
  }
  for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
    if (std::abs(r.thresholds[k] - r.ods_threshold) > 5e-7) continue;
    const auto [x, y] = to_px(r.recall[k], r.precision[k]);
    for (long dy = -2; dy <= 2; ++dy)
      for (long dx = -2; dx <= 2; ++dx) put(x + dx, y + dy, 0.9f, 0, 0);
  }
  rcf::write_png_rgb(out, img);
  std::cout << "ODS " << r.ods_f << " OIS " << r.ois_f << " -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Richer convolutional features edge detector"};
  app.require_subcommand(1, 1);
  app.failure_message(CLI::FailureMessage::help);

  Overrides o;
  auto add_seed = [&](CLI::App* sub, const char* what) {
    sub->add_option("--seed", o.seed, what);
  };

  bool standard_pool4 = false;
  auto* rf = app.add_subcommand("rf-table", "Print receptive field size and stride per layer");
  rf->add_flag("--standard-pool4", standard_pool4,
               "Use the unmodified backbone (2x2/2 pools everywhere, no dilation)");
  add_config_flag(rf, o);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-annotator dataset");
  synth->add_option("--out", sa.out, "Output dataset directory")->required();
  synth->add_option("--count", sa.count, "Number of images")->capture_default_str();
  synth->add_option("--size", sa.size, "Image height and width")->capture_default_str();
  synth->add_option("--annotators", sa.annotators, "Annotators per image")->capture_default_str();
  synth->add_option("--jitter", sa.jitter, "Maximum annotator boundary displacement (pixels)")
      ->capture_default_str();
  synth->add_option("--first-index", sa.first_index, "Index of the first generated image")
      ->capture_default_str();
  add_seed(synth, "Dataset seed (default: 0)");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model on a dataset directory");
  train->add_option("--data", ta.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", ta.out, "Output directory (weights, loss log, checkpoints)")->required();
  train->add_option("--weights", ta.weights, "Initial weights or checkpoint to resume")
      ->check(CLI::ExistingFile);
  train->add_option("--iters", o.iters, "Total iterations (default: 1000 tiny, 40000 vgg16)");
  train->add_option("--lr", ta.lr, "Base learning rate (default: 2.5e-5 tiny, 1e-6 vgg16)");
  train->add_option("--batch", ta.batch, "Images per iteration (default: 4 tiny, 10 vgg16)");
  train->add_option("--checkpoint-every", ta.checkpoint_every,
                    "Checkpoint interval in iterations, 0 disables (default: 0)");
  add_seed(train, "Initialization and sampling seed (default: 0)");
  add_loss_flags(train, o);
  add_config_flag(train, o);

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Write edge maps for every image of a dataset");
  predict->add_option("--data", pa.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  predict->add_option("--weights", pa.weights, "Model weights")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", pa.out, "Output directory")->required();
  predict->add_option("--scales", o.scales, "Comma-separated image scales (default: 0.5,1.0,1.5)");
  predict->add_flag("--single-scale", pa.single_scale, "Forward once at the original size");
  predict->add_flag("--side-outputs", pa.side_outputs, "Also write every stage map");
  predict->add_flag("--raw", pa.raw, "Also write raw float maps (.rcfm)");
  add_seed(predict, "Seed for layers absent from the weight file (default: 0)");
  add_config_flag(predict, o);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate predictions against a dataset");
  eval->add_option("--data", ea.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--pred", ea.pred, "Prediction directory")->check(CLI::ExistingDirectory);
  eval->add_flag("--sobel", ea.sobel, "Evaluate the Sobel magnitude baseline instead");
  eval->add_option("--out", ea.out, "Report file (default: standard output)");
  add_eval_flags(eval, o);
  add_config_flag(eval, o);

  std::string report_path, curve_out;
  std::size_t curve_size = 400;
  auto* curve = app.add_subcommand("pr-curve", "Render a precision-recall curve from a report");
  curve->add_option("--report", report_path, "Evaluation report")->required()->check(CLI::ExistingFile);
  curve->add_option("--out", curve_out, "Output PNG")->required();
  curve->add_option("--size", curve_size, "Image side in pixels")->capture_default_str()
      ->check(CLI::Range(std::size_t{64}, std::size_t{4096}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*rf) return cmd_rf_table(standard_pool4, o);
    if (*synth) return cmd_synth(sa, o);
    if (*train) return cmd_train(ta, o);
    if (*predict) return cmd_predict(pa, o);
    if (*eval) return cmd_eval(ea, o);
    if (*curve) return cmd_pr_curve(report_path, curve_out, curve_size);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const rcf::ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
