#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <random>
#include <sstream>

#include "rcf/config_file.hpp"
#include "rcf/synthetic.hpp"
#include "rcf/trainer.hpp"

using namespace rcf;

namespace {

template <typename T>
std::vector<TrainSample<T>> synthetic_samples(std::size_t count, std::size_t size = 32) {
  SyntheticOptions opt;
  opt.count = count;
  opt.seed = 1;
  opt.height = opt.width = size;
  const auto ds = generate_synthetic<T>(opt);
  return make_training_set<T>(ds.samples, LossParams{}, nullptr);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.base_lr = 1e-4;
  c.batch_size = 2;
  c.total_iters = 6;
  c.seed = 5;
  return c;
}

template <typename T>
std::vector<std::vector<T>> snapshot(Model<T>& m) {
  std::vector<std::vector<T>> out;
  for (auto& p : m.parameters()) out.emplace_back(p.tensor->values().begin(), p.tensor->values().end());
  return out;
}

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("rcf_trainer_" + name);
  std::filesystem::remove_all(p);
  return p.string();
}

}  // namespace

TEST(Schedule, FullScaleValues) {
  const auto c = full_scale_train_config();
  EXPECT_EQ(learning_rate(c, 0), 1e-6);
  EXPECT_EQ(learning_rate(c, 9999), 1e-6);
  EXPECT_NEAR(learning_rate(c, 10000), 1e-7, 1e-22);
  EXPECT_NEAR(learning_rate(c, 25000), 1e-8, 1e-23);
  EXPECT_EQ(c.momentum, 0.9);
  EXPECT_EQ(c.weight_decay, 0.0002);
  EXPECT_EQ(c.batch_size, 10u);
  EXPECT_EQ(c.total_iters, 40000);
  EXPECT_EQ(c.loss.eta, 0.5);
  EXPECT_EQ(c.loss.lambda, 1.1);
}

TEST(Schedule, StepFormulaExact) {
  TrainConfig c;
  c.base_lr = 0.3;
  c.lr_decay_every = 7;
  c.lr_decay_factor = 0.5;
  for (long i = 0; i < 50; ++i) EXPECT_EQ(learning_rate(c, i), 0.3 * std::pow(0.5, double(i / 7)));
}

TEST(Schedule, InvalidConfigsRejected) {
  TrainConfig c;
  c.lr_decay_factor = 1.5;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(Trainer, DegenerateImagesSkippedWithWarning) {
  AnnotationSet<float> blank;
  blank.id = "blank";
  blank.image = Tensor<float>(Shape{1, 3, 8, 8});
  blank.annotators.push_back(Tensor<float>(Shape{1, 1, 8, 8}));
  std::vector<AnnotationSet<float>> sets{blank};
  std::ostringstream warn;
  EXPECT_TRUE(make_training_set<float>(sets, LossParams{}, &warn).empty());
  EXPECT_NE(warn.str().find("blank"), std::string::npos);
}

TEST(Trainer, ZeroLearningRateLeavesParametersUntouched) {
  const auto data = synthetic_samples<float>(4);
  auto m = Model<float>::build(tiny_rcf_config(), 2);
  const auto before = snapshot(m);
  auto cfg = quick_config();
  cfg.base_lr = 0;
  train<float>(m, data, cfg);
  EXPECT_EQ(snapshot(m), before);
}

TEST(Trainer, FixedSeedIsBitIdentical) {
  const auto data = synthetic_samples<float>(6);
  auto a = Model<float>::build(tiny_rcf_config(), 2);
  auto b = Model<float>::build(tiny_rcf_config(), 2);
  const auto ha = train<float>(a, data, quick_config()).loss_history;
  const auto hb = train<float>(b, data, quick_config()).loss_history;
  EXPECT_EQ(ha, hb);
  EXPECT_EQ(snapshot(a), snapshot(b));
  EXPECT_EQ(ha.size(), 6u);
}

TEST(Trainer, BatchesSampledWithReplacementBySeed) {
  auto m = Model<float>::build(tiny_rcf_config(), 2);
  auto cfg = quick_config();
  cfg.batch_size = 50;
  Trainer<float> t(m, cfg);
  const auto a = t.batch_indices(3, 5);
  EXPECT_EQ(a, t.batch_indices(3, 5));
  EXPECT_NE(a, t.batch_indices(4, 5));
  std::vector<int> seen(5, 0);
  for (auto i : a) {
    ASSERT_LT(i, 5u);
    ++seen[i];
  }
  for (int s : seen) EXPECT_GT(s, 0);
}

TEST(Trainer, CheckpointResumeMatchesStraightRun) {
  const auto data = synthetic_samples<float>(6);
  auto cfg = quick_config();
  cfg.total_iters = 8;
  cfg.checkpoint_every = 3;
  cfg.checkpoint_dir = temp_dir("ckpt");

  auto straight = Model<float>::build(tiny_rcf_config(), 2);
  Trainer<float> full(straight, cfg);
  full.run(data);

  auto resumed = Model<float>::build(tiny_rcf_config(), 77);
  Trainer<float> part(resumed, cfg);
  part.load_checkpoint(cfg.checkpoint_dir + "/checkpoint_3.rcfw");
  EXPECT_EQ(part.iteration(), 3);
  part.run(data);
  EXPECT_EQ(snapshot(resumed), snapshot(straight));
  const auto& hf = full.loss_history();
  const auto& hp = part.loss_history();
  ASSERT_EQ(hp.size(), 5u);
  for (std::size_t i = 0; i < hp.size(); ++i) EXPECT_EQ(hp[i], hf[3 + i]);
  std::filesystem::remove_all(cfg.checkpoint_dir);
}

TEST(Trainer, CheckpointWithoutOptimizerStateRejected) {
  auto m = Model<float>::build(tiny_rcf_config(), 2);
  const std::string dir = temp_dir("plain");
  std::filesystem::create_directories(dir);
  save_weights(m, dir + "/w.rcfw");
  Trainer<float> t(m, quick_config());
  EXPECT_THROW(t.load_checkpoint(dir + "/w.rcfw"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST(Trainer, BatchGradientIsSumOfPerImageGradients) {
  const auto data = synthetic_samples<double>(2, 32);
  ASSERT_EQ(data.size(), 2u);
  auto m = Model<double>::build(tiny_rcf_config(), 3);
  Trainer<double> t(m, quick_config());
  auto grads = [&](std::vector<std::size_t> which) {
    for (auto& p : m.parameters()) {
      p.tensor->ensure_grad();
      p.tensor->zero_grad();
    }
    for (auto i : which) t.accumulate(data[i]);
    std::vector<std::vector<double>> g;
    for (auto& p : m.parameters()) g.emplace_back(p.tensor->grad().begin(), p.tensor->grad().end());
    return g;
  };
  const auto g0 = grads({0}), g1 = grads({1}), both = grads({0, 1});
  for (std::size_t k = 0; k < both.size(); ++k)
    for (std::size_t i = 0; i < both[k].size(); ++i) {
      EXPECT_NEAR(both[k][i], g0[k][i] + g1[k][i], 1e-12 * (1 + std::abs(both[k][i])));
    }
}

TEST(Trainer, NonFiniteLossAbortsWithContext) {
  auto data = synthetic_samples<float>(2);
  data[1].image[5] = std::numeric_limits<float>::quiet_NaN();
  data[0].image[5] = std::numeric_limits<float>::quiet_NaN();
  auto m = Model<float>::build(tiny_rcf_config(), 2);
  Trainer<float> t(m, quick_config());
  try {
    t.step(data);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.iteration(), 0);
    EXPECT_TRUE(e.image_id() == data[0].id || e.image_id() == data[1].id);
    EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos);
  }
}

TEST(Trainer, TinyModelLossHalvesOnSynthetic) {
  SyntheticOptions opt;
  opt.count = 200;
  opt.seed = 7;
  const auto ds = generate_synthetic<float>(opt);
  const auto data = make_training_set<float>(ds.samples, LossParams{}, nullptr);
  NetworkConfig net = tiny_rcf_config();
  net.backbone_init = BackboneInit::Msra;
  auto m = Model<float>::build(net, 1);
  TrainConfig cfg;
  cfg.base_lr = 2.5e-5;
  cfg.lr_decay_every = 100000;
  cfg.batch_size = 4;
  cfg.total_iters = 500;
  cfg.seed = 3;
  const auto h = train<float>(m, data, cfg).loss_history;
  const double first = std::accumulate(h.begin(), h.begin() + 50, 0.0) / 50;
  const double last = std::accumulate(h.end() - 50, h.end(), 0.0) / 50;
  EXPECT_LE(last, 0.5 * first) << "first " << first << " last " << last;
}
