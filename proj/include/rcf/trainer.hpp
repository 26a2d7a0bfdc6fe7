#pragma once

// Minibatch SGD over the summed side-output losses. Each iteration draws
// batch_size images uniformly with replacement from a generator seeded by
// (seed, iteration), so a run resumed from a checkpoint replays exactly the
// same batches as an uninterrupted one.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rcf/data.hpp"
#include "rcf/error.hpp"
#include "rcf/loss.hpp"
#include "rcf/model.hpp"
#include "rcf/ops.hpp"
#include "rcf/weights_io.hpp"

namespace rcf {

struct TrainConfig {
  double base_lr = 1e-6;
  long lr_decay_every = 10000;
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0002;
  std::size_t batch_size = 10;
  long total_iters = 40000;
  LossParams loss{0.5, 1.1};
  std::uint64_t seed = 0;
  long checkpoint_every = 0;  // 0 disables checkpoints
  std::string checkpoint_dir;

  void validate() const {
    if (!(base_lr >= 0.0)) throw ArgumentError("train: base_lr must be non-negative");
    if (lr_decay_every < 1) throw ArgumentError("train: lr_decay_every must be positive");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
      throw ArgumentError("train: lr_decay_factor must lie in (0, 1]");
    }
    if (momentum < 0.0 || weight_decay < 0.0) {
      throw ArgumentError("train: momentum and weight_decay must be non-negative");
    }
    if (batch_size < 1) throw ArgumentError("train: batch_size must be positive");
    if (total_iters < 0) throw ArgumentError("train: total_iters must be non-negative");
    if (checkpoint_every < 0) throw ArgumentError("train: checkpoint_every must be non-negative");
    loss.validate();
  }
};

inline TrainConfig full_scale_train_config() {
  TrainConfig c;
  c.base_lr = 1e-6;
  c.lr_decay_every = 10000;
  c.lr_decay_factor = 0.1;
  c.momentum = 0.9;
  c.weight_decay = 0.0002;
  c.batch_size = 10;
  c.total_iters = 40000;
  c.loss = {0.5, 1.1};
  return c;
}

// base_lr * factor^floor(iteration / decay_every)
inline double learning_rate(const TrainConfig& c, long iteration) {
  const long steps = iteration / c.lr_decay_every;
  return c.base_lr * std::pow(c.lr_decay_factor, static_cast<double>(steps));
}

template <typename T>
struct TrainSample {
  std::string id;
  Tensor<T> image;
  Tensor<T> gt;  // consensus probability map
};

// Consensus maps for every annotation set. Degenerate maps (no positive or no
// negative pixels) are dropped with a warning on `warn`.
template <typename T>
std::vector<TrainSample<T>> make_training_set(std::span<const AnnotationSet<T>> sets,
                                              const LossParams& loss, std::ostream* warn) {
  std::vector<TrainSample<T>> out;
  for (const auto& s : sets) {
    TrainSample<T> t{s.id, s.image, consensus(s).prob};
    if (is_degenerate(t.gt, loss)) {
      if (warn) *warn << "warning: skipping '" << s.id << "': no positive or no negative pixels\n";
      continue;
    }
    out.push_back(std::move(t));
  }
  return out;
}

struct TrainCallbacks {
  std::function<void(long iteration, double loss, double lr)> on_iteration;
  std::function<void(long iteration, const std::string& path)> on_checkpoint;
};

template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, TrainConfig cfg) : model_(model), cfg_(std::move(cfg)) {
    cfg_.validate();
    for (const auto& p : model_.parameters()) {
      params_.push_back(p.tensor);
      names_.push_back(p.name);
      velocity_.emplace_back(p.tensor->shape());
    }
    lr_multiplier_.assign(params_.size(), 1.0);
  }

  long iteration() const noexcept { return iteration_; }
  const std::vector<double>& loss_history() const noexcept { return history_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  std::vector<double>& lr_multipliers() noexcept { return lr_multiplier_; }

  // Forward + backward for one image; adds into parameter gradients and
  // returns its loss.
  double accumulate(const TrainSample<T>& sample) {
    ForwardTrace<T> trace;
    const SideOutputs<T> out = model_.forward(sample.image, &trace);
    TotalLoss<T> l = total_loss(out, sample.gt, cfg_.loss);
    if (!std::isfinite(l.loss)) {
      throw TrainingError(detail::concat("non-finite loss at iteration ", iteration_,
                                         " on image '", sample.id, "'"),
                          iteration_, sample.id);
    }
    model_.backward(trace, l.grads);
    return l.loss;
  }

  std::vector<std::size_t> batch_indices(long iteration, std::size_t dataset_size) const {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed),
                      static_cast<std::uint32_t>(cfg_.seed >> 32),
                      static_cast<std::uint32_t>(iteration),
                      static_cast<std::uint32_t>(static_cast<std::uint64_t>(iteration) >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, dataset_size - 1);
    std::vector<std::size_t> idx(cfg_.batch_size);
    for (auto& i : idx) i = pick(rng);
    return idx;
  }

  // One SGD iteration; returns the summed batch loss.
  double step(std::span<const TrainSample<T>> data) {
    if (data.empty()) throw ArgumentError("train: dataset is empty");
    for (auto* p : params_) {
      p->ensure_grad();
      p->zero_grad();
    }
    double loss = 0.0;
    for (std::size_t i : batch_indices(iteration_, data.size())) loss += accumulate(data[i]);
    const double lr = learning_rate(cfg_, iteration_);
    sgd_step<T>(std::span<Tensor<T>* const>(params_), std::span<Tensor<T>>(velocity_), lr,
                cfg_.momentum, cfg_.weight_decay, std::span<const double>(lr_multiplier_));
    history_.push_back(loss);
    ++iteration_;
    return loss;
  }

  // Runs until total_iters, writing checkpoints every checkpoint_every.
  void run(std::span<const TrainSample<T>> data, const TrainCallbacks& cb = {}) {
    run_until(data, cfg_.total_iters, cb);
  }

  void run_until(std::span<const TrainSample<T>> data, long until, const TrainCallbacks& cb = {}) {
    while (iteration_ < until) {
      const double lr = learning_rate(cfg_, iteration_);
      const double loss = step(data);
      if (cb.on_iteration) cb.on_iteration(iteration_ - 1, loss, lr);
      if (cfg_.checkpoint_every > 0 && iteration_ % cfg_.checkpoint_every == 0 &&
          !cfg_.checkpoint_dir.empty()) {
        std::filesystem::create_directories(cfg_.checkpoint_dir);
        const std::string path =
            (std::filesystem::path(cfg_.checkpoint_dir) /
             detail::concat("checkpoint_", iteration_, ".rcfw"))
                .string();
        save_checkpoint(path);
        if (cb.on_checkpoint) cb.on_checkpoint(iteration_, path);
      }
    }
  }

  // Model weights plus "opt/<param>" velocities and "opt/iteration".
  void save_checkpoint(const std::string& path) {
    std::vector<StoredTensor> tensors = model_tensors(model_);
    auto named = model_.parameters();
    for (std::size_t k = 0; k < velocity_.size(); ++k) {
      tensors.push_back(to_stored("opt/" + names_[k], velocity_[k], named[k].rank));
    }
    tensors.push_back({"opt/iteration", {1}, {static_cast<float>(iteration_)}});
    write_tensor_file(path, tensors);
  }

  void load_checkpoint(const std::string& path) {
    const auto stored = read_tensor_file(path);
    std::vector<Tensor<T>> vel;
    long iter = -1;
    for (std::size_t k = 0; k < names_.size(); ++k) {
      const std::string want = "opt/" + names_[k];
      const StoredTensor* found = nullptr;
      for (const auto& s : stored) {
        if (s.name == want) found = &s;
      }
      if (!found || found->values.size() != velocity_[k].size()) {
        throw FormatError(path + ": checkpoint lacks optimizer state for '" + names_[k] + "'");
      }
      Tensor<T> v(velocity_[k].shape());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(found->values[i]);
      vel.push_back(std::move(v));
    }
    for (const auto& s : stored) {
      if (s.name == "opt/iteration" && s.values.size() == 1) iter = static_cast<long>(s.values[0]);
    }
    if (iter < 0) throw FormatError(path + ": checkpoint lacks opt/iteration");
    assign_model_tensors(model_, stored, path);
    velocity_ = std::move(vel);
    iteration_ = iter;
  }

 private:
  Model<T>& model_;
  TrainConfig cfg_;
  std::vector<Tensor<T>*> params_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> velocity_;
  std::vector<double> lr_multiplier_;
  std::vector<double> history_;
  long iteration_ = 0;
};

template <typename T>
struct TrainResult {
  std::vector<double> loss_history;
};

template <typename T>
TrainResult<T> train(Model<T>& model, std::span<const TrainSample<T>> data,
                     const TrainConfig& cfg, const TrainCallbacks& cb = {}) {
  Trainer<T> trainer(model, cfg);
  trainer.run(data, cb);
  return {trainer.loss_history()};
}

}  // namespace rcf
