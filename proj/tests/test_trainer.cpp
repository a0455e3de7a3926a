// Copyright 2026 The scalesep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "helpers.hpp"
#include "scalesep/errors.hpp"
#include "scalesep/trainer.hpp"

namespace scalesep {
namespace {

namespace fs = std::filesystem;

ModelConfig micro_model() {
  ModelConfig c = ModelConfig::tiny();
  c.channels = 4;
  c.heads = 2;
  c.ffn_expansion = 2;
  c.conv_kernel = 3;
  c.sep_repeats = 1;
  c.re_repeats = 2;
  return c;
}

Manifest micro_data(int train = 3, int val = 2) {
  MixtureParams p;
  p.duration = 0.1;
  return build_dataset({train, val, 1}, p);
}

TrainConfig quick_config() {
  TrainConfig t;
  t.base_lr = 3e-3;
  t.warmup_steps = 2;
  t.batch_size = 1;
  t.max_epochs = 2;
  t.seed = 1;
  t.average_top_k = 2;
  return t;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(LrSchedule, WarmupAndHalving) {
  TrainConfig c;  // base 1e-3, warmup 2000, factor 0.5
  EXPECT_DOUBLE_EQ(lr_at(1000, 0, c), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at(2000, 0, c), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(4000, 1, c), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at(4000, 2, c), 2.5e-4);
  EXPECT_DOUBLE_EQ(lr_at(0, 0, c), 0);
  EXPECT_THROW(lr_at(-1, 0, c), ConfigError);
}

TEST(LrSchedule, TraceOverFiveThousandSteps) {
  TrainConfig c;
  Real prev = -1;
  for (std::int64_t s = 1; s <= 5000; ++s) {
    const Real lr = lr_at(s, 0, c);
    if (s <= 2000) {
      EXPECT_NEAR(lr, 1e-3 * static_cast<Real>(s) / 2000, 1e-18);
      EXPECT_GT(lr, prev);
    } else {
      EXPECT_DOUBLE_EQ(lr, 1e-3);
    }
    prev = lr;
  }
  c.warmup_steps = 0;
  EXPECT_DOUBLE_EQ(lr_at(1, 0, c), 1e-3);
}

TEST(PlateauTracker, HalvingAndEarlyStop) {
  TrainConfig c;
  PlateauTracker t(c);
  EXPECT_TRUE(t.observe(1.0));
  int stopped_at = 0;
  for (int epoch = 1; epoch <= 12; ++epoch) {
    EXPECT_FALSE(t.observe(1.0));  // equal is not an improvement
    if (epoch % 3 == 0) {
      EXPECT_EQ(t.plateau_events(), epoch / 3);
    }
    if (t.should_stop()) {
      stopped_at = epoch;
      break;
    }
  }
  EXPECT_EQ(stopped_at, 10);
  EXPECT_TRUE(t.observe(0.5));
  EXPECT_EQ(t.epochs_since_improvement(), 0);
  EXPECT_FALSE(t.should_stop());
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.base_lr = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr_decay_factor = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.max_epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

ModelParams scalar_params(Real value, Real grad) {
  ModelParams p;
  p.tensors.emplace("w", parameter(Tensor({1}, value)));
  p.tensors.at("w").node()->grad = Tensor({1}, grad);
  return p;
}

TEST(AdamW, FirstStepClosedForm) {
  TrainConfig c;
  c.weight_decay = 0.1;
  AdamW opt(c);
  ModelParams p = scalar_params(2.0, -3.0);
  opt.update(p, 0.01);
  // Bias-corrected moments equal g and g^2 on step one.
  const Real expected = 2.0 * (1 - 0.01 * 0.1) - 0.01 * (-3.0) / (3.0 + 1e-8);
  EXPECT_NEAR(p.at("w").value()[0], expected, 1e-15);
  EXPECT_EQ(opt.state().step, 1);
}

TEST(ClipGradNorm, ScalesToBound) {
  ModelParams p;
  p.tensors.emplace("a", parameter(Tensor({2})));
  p.tensors.emplace("b", parameter(Tensor({1})));
  p.tensors.at("a").node()->grad = Tensor({2}, std::vector<Real>{3, 0});
  p.tensors.at("b").node()->grad = Tensor({1}, std::vector<Real>{4});
  EXPECT_DOUBLE_EQ(clip_grad_norm(p, 1.0), 5.0);
  EXPECT_NEAR(p.at("a").grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(p.at("b").grad()[0], 0.8, 1e-12);
  EXPECT_NEAR(clip_grad_norm(p, 10.0), 1.0, 1e-12);
  EXPECT_NEAR(p.at("b").grad()[0], 0.8, 1e-12);
}

Checkpoint make_checkpoint(const ModelConfig& c, Real fill, Real val_loss) {
  Checkpoint ck;
  ck.meta.model = c;
  ck.meta.val_loss = val_loss;
  ck.params = init_model(c, 0).snapshot();
  for (auto& [name, t] : ck.params) t.fill(fill);
  return ck;
}

TEST(AverageCheckpoints, Examples) {
  const ModelConfig c = micro_model();
  const auto same = average_checkpoints({make_checkpoint(c, 1.5, 0), make_checkpoint(c, 1.5, 1)}, 5);
  for (const auto& [name, t] : same.snapshot()) EXPECT_EQ(t[0], 1.5);

  const auto mid = average_checkpoints({make_checkpoint(c, 0, 0), make_checkpoint(c, 2, 1)}, 2);
  for (const auto& [name, t] : mid.snapshot()) EXPECT_EQ(t[t.size() - 1], 1);

  // Losses [3, 1, 2, 5, 4, 0.5] with fills 10^i: k = 5 drops index 3.
  const std::vector<Real> losses{3, 1, 2, 5, 4, 0.5};
  std::vector<Checkpoint> pool;
  Real want = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const Real fill = std::pow(10.0, static_cast<Real>(i));
    pool.push_back(make_checkpoint(c, fill, losses[i]));
    if (i != 3) want += fill / 5;
  }
  const auto sel = average_checkpoints(pool, 5);
  EXPECT_NEAR(sel.at("decoder.conv.bias").value()[0], want, 1e-9);
  const auto all = average_checkpoints(pool, 50);
  EXPECT_NEAR(all.at("decoder.conv.bias").value()[0], 111111.0 / 6, 1e-9);
  EXPECT_THROW(average_checkpoints({}, 3), Error);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const std::string dir = testing::scratch_dir("ckpt");
  const ModelConfig c = micro_model();
  Checkpoint ck;
  ck.meta.epoch = 4;
  ck.meta.step = 17;
  ck.meta.val_loss = -3.25;
  ck.meta.depths = {1, 2};
  ck.meta.loss_label = "l1+3";
  ck.meta.init_seed = 9;
  ck.meta.model = c;
  ck.meta.loss = LossConfig::from_label("l1+3");
  ck.meta.train = quick_config();
  ck.params = init_model(c, 9).snapshot();
  ck.optimizer.step = 17;
  for (const auto& [name, t] : ck.params) {
    ck.optimizer.m.emplace(name, testing::random_tensor(1, t.shape()));
    ck.optimizer.v.emplace(name, testing::random_tensor(2, t.shape(), 0.1));
  }
  save_checkpoint(ck, dir + "/a");
  const Checkpoint back = load_checkpoint(dir + "/a");
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.optimizer.m, ck.optimizer.m);
  EXPECT_EQ(back.optimizer.v, ck.optimizer.v);
  EXPECT_EQ(back.optimizer.step, 17);
  EXPECT_EQ(back.meta.epoch, 4);
  EXPECT_EQ(back.meta.val_loss, -3.25);
  EXPECT_EQ(back.meta.depths, (Depths{1, 2}));
  EXPECT_EQ(back.meta.loss.label(), "l1+3");
  EXPECT_EQ(back.meta.model.channels, 4);
  EXPECT_EQ(back.meta.train.base_lr, 3e-3);
  save_checkpoint(back, dir + "/b");
  EXPECT_EQ(slurp(dir + "/a/params.bin"), slurp(dir + "/b/params.bin"));
  EXPECT_EQ(slurp(dir + "/a/meta.json"), slurp(dir + "/b/meta.json"));
  EXPECT_THROW(load_checkpoint(dir + "/missing"), IoError);
}

TEST(Optimization, LossDropsWithinFiftySteps) {
  const ModelConfig c = micro_model();
  ModelParams p = init_model(c, 3);
  const MixtureExample ex = micro_data(1, 1).load(micro_data(1, 1).entries[0]);
  const LossConfig loss = LossConfig::from_label("l1+3");
  TrainConfig t = quick_config();
  t.warmup_steps = 5;
  t.base_lr = 1e-2;
  AdamW opt(t);
  auto step_loss = [&](bool update, std::int64_t step) {
    p.zero_grad();
    const ForwardTrace trace = forward_trace(p, ex.mixture, {1, 2}, loss.request());
    const GraphLoss g = trace_loss(trace, ex.source_tensor(), loss);
    if (update) {
      backward(g.total);
      clip_grad_norm(p, t.grad_clip);
      opt.update(p, lr_at(step, 0, t));
    }
    return g.breakdown.total;
  };
  const Real first = step_loss(false, 0);
  for (std::int64_t s = 1; s <= 50; ++s) step_loss(true, s);
  const Real last = step_loss(false, 0);
  EXPECT_LT(last, first - 1.0) << first << " -> " << last;
}

TEST(Train, SingleEpochWritesOneCheckpoint) {
  const std::string dir = testing::scratch_dir("train_one");
  TrainConfig t = quick_config();
  t.max_epochs = 1;
  TrainOptions opt;
  opt.run_dir = dir;
  int callbacks = 0;
  opt.on_epoch = [&](const EpochRecord&) { ++callbacks; };
  const TrainResult r =
      train(micro_model(), LossConfig::from_label("l1+3"), t, micro_data(), opt);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(callbacks, 1);
  ASSERT_EQ(r.checkpoint_dirs.size(), 1u);
  EXPECT_TRUE(fs::exists(dir + "/epoch_0001/meta.json"));
  EXPECT_TRUE(fs::exists(dir + "/final/params.bin"));
  std::ifstream log(dir + "/train_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) {
    if (!line.empty()) ++lines;
  }
  EXPECT_EQ(lines, 1);
  EXPECT_EQ(r.history[0].step, 3);  // three examples, batch 1
  const Checkpoint fin = load_checkpoint(r.final_dir);
  EXPECT_EQ(fin.params, r.final_params.snapshot());
}

TEST(Train, EarlyStopsAfterTenStaleEpochs) {
  const std::string dir = testing::scratch_dir("train_stop");
  TrainConfig t = quick_config();
  t.base_lr = 1e-300;  // updates vanish below rounding: validation never improves
  t.max_epochs = 14;
  t.keep_checkpoints = 2;
  TrainOptions opt;
  opt.run_dir = dir;
  const TrainResult r = train(micro_model(), LossConfig::from_label("l1"), t, micro_data(1, 1), opt);
  EXPECT_TRUE(r.early_stopped);
  ASSERT_EQ(r.history.size(), 11u);
  EXPECT_TRUE(r.history[0].improved);
  for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_FALSE(r.history[i].improved);
  EXPECT_EQ(r.checkpoint_dirs.size(), 2u);
  int on_disk = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename().string().rfind("epoch_", 0) == 0) ++on_disk;
  }
  EXPECT_EQ(on_disk, 2);
}

TEST(Train, RejectsBadInputs) {
  TrainOptions opt;
  EXPECT_THROW(train(micro_model(), LossConfig{}, quick_config(), micro_data(), opt), ConfigError);
  opt.run_dir = testing::scratch_dir("train_bad");
  ModelConfig three = micro_model();
  three.speakers = 3;
  EXPECT_THROW(train(three, LossConfig{}, quick_config(), micro_data(), opt), ConfigError);
}

TEST(Finetune, WarmStartAtDeeperReconstructor) {
  const std::string dir = testing::scratch_dir("finetune");
  ModelConfig c = micro_model();
  c.re_repeats = 3;
  TrainConfig t = quick_config();
  t.max_epochs = 1;
  TrainOptions opt;
  opt.run_dir = dir + "/base";
  const Manifest data = micro_data(2, 1);
  const TrainResult base = train(c, LossConfig::from_label("l1+3"), t, data, opt);
  const Checkpoint ck = load_checkpoint(base.final_dir);

  const ModelParams deeper = warm_start(ck, {1, 6});
  EXPECT_EQ(deeper.snapshot(), ck.params);
  EXPECT_EQ(deeper.config.re_repeats, 6);
  EXPECT_EQ(count_parameters(deeper), count_parameters(ck.model()));

  t.finetune_epochs = 1;
  TrainOptions ft_opt;
  ft_opt.run_dir = dir + "/ft";
  std::vector<Real> lrs;
  ft_opt.on_epoch = [&](const EpochRecord& r) { lrs.push_back(r.lr); };
  const TrainResult ft = finetune(ck, {1, 6}, LossConfig::from_label("l1+3"), t, data, ft_opt);
  ASSERT_EQ(ft.history.size(), 1u);
  EXPECT_DOUBLE_EQ(lrs[0], 1e-4);
  EXPECT_EQ(load_checkpoint(ft.final_dir).meta.depths, (Depths{1, 6}));
}

TEST(Finetune, UnsharedDepthChangeRejected) {
  ModelConfig c = micro_model();
  c.share_reconstructor = false;
  c.re_repeats = 2;
  Checkpoint ck;
  ck.meta.model = c;
  ck.params = init_model(c, 0).snapshot();
  EXPECT_NO_THROW(warm_start(ck, {1, 2}));
  EXPECT_THROW(warm_start(ck, {1, 3}), ConfigError);
  // Different block count in the stored tensors.
  ModelConfig more = c;
  more.re_blocks = 2;
  ck.params = init_model(more, 0).snapshot();
  EXPECT_THROW(warm_start(ck, {1, 2}), Error);
}

}  // namespace
}  // namespace scalesep
