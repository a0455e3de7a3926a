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

#include "scalesep/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json_codec.hpp"
#include "scalesep/errors.hpp"
#include "scalesep/random.hpp"

namespace scalesep {
namespace fs = std::filesystem;
namespace {

using codec::Json;

std::string epoch_dir_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04d", epoch);
  return buf;
}

std::vector<MixtureExample> load_split(const Manifest& manifest, Split split) {
  std::vector<MixtureExample> out;
  for (const auto& e : manifest.split(split)) out.push_back(manifest.load(e));
  return out;
}

Real mean_pit_si_snri(const Tensor& waves, const MixtureExample& ex) {
  const Tensor refs = ex.source_tensor();
  const PitResult pit = pit_assign(waves, refs);
  Real base = 0;
  for (const auto& s : ex.sources) base += si_snr(ex.mixture, s);
  return pit.mean_si_snr - base / static_cast<Real>(ex.sources.size());
}

Json meta_to_json(const CheckpointMeta& m) {
  return Json{{"epoch", m.epoch},
              {"step", m.step},
              {"val_loss", m.val_loss},
              {"n_sep", m.depths.n_sep},
              {"n_re", m.depths.n_re},
              {"loss_label", m.loss_label},
              {"init_seed", m.init_seed},
              {"plateau_events", m.plateau_events},
              {"model", codec::to_json(m.model)},
              {"loss", codec::to_json(m.loss)},
              {"train", codec::to_json(m.train)}};
}

CheckpointMeta meta_from_json(const Json& j, const std::string& where) {
  CheckpointMeta m;
  try {
    m.epoch = j.at("epoch").get<int>();
    m.step = j.at("step").get<std::int64_t>();
    m.val_loss = j.at("val_loss").get<Real>();
    m.depths.n_sep = j.at("n_sep").get<int>();
    m.depths.n_re = j.at("n_re").get<int>();
    m.loss_label = j.at("loss_label").get<std::string>();
    m.init_seed = j.at("init_seed").get<std::uint64_t>();
    m.plateau_events = j.at("plateau_events").get<int>();
    codec::from_json(j.at("model"), m.model, "model");
    codec::from_json(j.at("loss"), m.loss, "loss");
    codec::from_json(j.at("train"), m.train, "train");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where + ": bad checkpoint metadata: " + e.what());
  }
  if (!std::isfinite(m.val_loss)) throw IoError(where + ": non-finite val_loss");
  if (m.depths.n_sep < 1 || m.depths.n_re < 1) throw IoError(where + ": bad depths");
  return m;
}

void append_log(const std::string& path, const EpochRecord& r) {
  Json comps = Json::object();
  for (const auto& [k, v] : r.val_components) comps[k] = v;
  Json line{{"epoch", r.epoch},     {"step", r.step},
            {"lr", r.lr},           {"train_loss", r.train_loss},
            {"val_loss", r.val_loss}, {"val_si_snri", r.val_si_snri},
            {"val_components", comps}, {"improved", r.improved}};
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to '" + path + "'");
  out << line.dump() << '\n';
}

Tensor mean_tensor(const std::vector<const Tensor*>& parts) {
  Tensor out = Tensor::zeros_like(*parts.front());
  for (const Tensor* t : parts) out.add_(*t);
  const Real inv = 1 / static_cast<Real>(parts.size());
  for (auto& v : out.values()) v *= inv;
  return out;
}

std::vector<std::size_t> best_indices(const std::vector<Real>& losses, int k) {
  std::vector<std::size_t> idx(losses.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(k, 1))));
  return idx;
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](Real v) { return std::isfinite(v) && v > 0; };
  if (!positive(base_lr) || !positive(finetune_lr)) throw ConfigError("learning rates must be positive");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (plateau_patience_epochs < 1) throw ConfigError("plateau_patience_epochs must be >= 1");
  if (!(lr_decay_factor > 0 && lr_decay_factor < 1)) {
    throw ConfigError("lr_decay_factor must be in (0, 1)");
  }
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) {
    throw ConfigError("weight_decay must be >= 0");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (finetune_epochs < 0) throw ConfigError("finetune_epochs must be >= 0");
  if (!(finetune_fraction > 0) || !std::isfinite(finetune_fraction)) {
    throw ConfigError("finetune_fraction must be positive");
  }
  if (average_top_k < 1) throw ConfigError("average_top_k must be >= 1");
  if (!(grad_clip >= 0)) throw ConfigError("grad_clip must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!positive(adam_eps)) throw ConfigError("adam_eps must be positive");
  if (keep_checkpoints < 0) throw ConfigError("keep_checkpoints must be >= 0");
}

Real lr_at(std::int64_t step, int plateau_events, const TrainConfig& config) {
  if (step < 0) throw ConfigError("lr_at: step must be >= 0");
  Real warm = 1;
  if (config.warmup_steps > 0 && step < config.warmup_steps) {
    warm = static_cast<Real>(step) / static_cast<Real>(config.warmup_steps);
  }
  return config.base_lr * warm * std::pow(config.lr_decay_factor, plateau_events);
}

PlateauTracker::PlateauTracker(const TrainConfig& config)
    : patience_(config.plateau_patience_epochs),
      early_stop_patience_(config.early_stop_patience),
      best_(0) {}

bool PlateauTracker::observe(Real val_loss) {
  if (!has_best_ || val_loss < best_) {
    best_ = val_loss;
    has_best_ = true;
    since_best_ = 0;
    since_event_ = 0;
    return true;
  }
  ++since_best_;
  if (++since_event_ >= patience_) {
    ++events_;
    since_event_ = 0;
  }
  return false;
}

void AdamW::update(ModelParams& params, Real lr) {
  const Real b1 = config_.adam_beta1, b2 = config_.adam_beta2;
  ++state_.step;
  const Real c1 = 1 - std::pow(b1, static_cast<Real>(state_.step));
  const Real c2 = 1 - std::pow(b2, static_cast<Real>(state_.step));
  const Real decay = 1 - lr * config_.weight_decay;
  for (auto& [name, var] : params.tensors) {
    Tensor& p = var.mutable_value();
    auto m_it = state_.m.try_emplace(name, Tensor::zeros_like(p)).first;
    auto v_it = state_.v.try_emplace(name, Tensor::zeros_like(p)).first;
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    expect_shape(m, p.shape(), "optimizer state");
    const Tensor& g = var.grad();
    const bool has_grad = !g.empty();
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const Real gi = has_grad ? g[i] : 0;
      m[i] = b1 * m[i] + (1 - b1) * gi;
      v[i] = b2 * v[i] + (1 - b2) * gi * gi;
      p[i] = p[i] * decay - lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.adam_eps);
    }
  }
}

Real clip_grad_norm(ModelParams& params, Real max_norm) {
  Real sq = 0;
  for (const auto& [name, var] : params.tensors) {
    for (Real g : var.grad().values()) sq += g * g;
  }
  const Real norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const Real s = max_norm / (norm + 1e-12);
    for (auto& [name, var] : params.tensors) {
      if (var.grad().empty()) continue;
      for (Real& g : var.node()->grad.values()) g *= s;
    }
  }
  return norm;
}

ModelParams Checkpoint::model() const {
  return ModelParams::from_snapshot(meta.model, params, meta.init_seed);
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& dir) {
  fs::create_directories(dir);
  write_tensor_archive((fs::path(dir) / "params.bin").string(), checkpoint.params);
  if (checkpoint.optimizer.step > 0) {
    TensorMap opt;
    for (const auto& [k, t] : checkpoint.optimizer.m) opt.emplace("m/" + k, t);
    for (const auto& [k, t] : checkpoint.optimizer.v) opt.emplace("v/" + k, t);
    opt.emplace("step", Tensor({1}, static_cast<Real>(checkpoint.optimizer.step)));
    write_tensor_archive((fs::path(dir) / "optimizer.bin").string(), opt);
  }
  // Metadata last: its presence marks a complete checkpoint.
  const std::string meta_path = (fs::path(dir) / "meta.json").string();
  std::ofstream out(meta_path);
  if (!out) throw IoError("cannot write '" + meta_path + "'");
  out << meta_to_json(checkpoint.meta).dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + meta_path + "'");
}

Checkpoint load_checkpoint(const std::string& dir, bool with_optimizer) {
  const std::string meta_path = (fs::path(dir) / "meta.json").string();
  std::ifstream in(meta_path);
  if (!in) throw IoError("no checkpoint at '" + dir + "' (missing meta.json)");
  std::stringstream buf;
  buf << in.rdbuf();
  Checkpoint ck;
  ck.meta = meta_from_json(codec::parse(buf.str(), meta_path), meta_path);
  ck.params = read_tensor_archive((fs::path(dir) / "params.bin").string());
  const fs::path opt_path = fs::path(dir) / "optimizer.bin";
  if (with_optimizer && fs::exists(opt_path)) {
    TensorMap opt = read_tensor_archive(opt_path.string());
    for (auto& [k, t] : opt) {
      if (k.rfind("m/", 0) == 0) ck.optimizer.m.emplace(k.substr(2), std::move(t));
      else if (k.rfind("v/", 0) == 0) ck.optimizer.v.emplace(k.substr(2), std::move(t));
      else if (k == "step") ck.optimizer.step = static_cast<std::int64_t>(t[0]);
    }
  }
  // Validates names and shapes against the stored config.
  (void)ck.model();
  return ck;
}

ModelParams average_checkpoints(const std::vector<Checkpoint>& checkpoints, int k) {
  if (checkpoints.empty()) throw Error("average_checkpoints: empty checkpoint set");
  std::vector<Real> losses;
  for (const auto& c : checkpoints) losses.push_back(c.meta.val_loss);
  const auto chosen = best_indices(losses, k);
  ParamSnapshot avg;
  for (const auto& [name, t] : checkpoints[chosen.front()].params) {
    std::vector<const Tensor*> parts;
    for (auto i : chosen) {
      auto it = checkpoints[i].params.find(name);
      if (it == checkpoints[i].params.end() || it->second.shape() != t.shape()) {
        throw ShapeError("average_checkpoints: mismatched parameter '" + name + "'");
      }
      parts.push_back(&it->second);
    }
    avg.emplace(name, mean_tensor(parts));
  }
  const auto& first = checkpoints[chosen.front()].meta;
  return ModelParams::from_snapshot(first.model, avg, first.init_seed);
}

ValidationResult validate_model(const ModelParams& params, const LossConfig& loss,
                                const std::vector<MixtureExample>& examples,
                                Depths depths) {
  if (examples.empty()) throw Error("validation split is empty");
  NoGradGuard no_grad;
  ValidationResult out;
  for (const auto& ex : examples) {
    const ForwardTrace trace = forward_trace(params, ex.mixture, depths, loss.request());
    const GraphLoss g = trace_loss(trace, ex.source_tensor(), loss);
    out.loss += g.breakdown.total;
    for (const auto& [k, v] : g.breakdown.components) out.components[k] += v;
    out.si_snri += mean_pit_si_snri(trace.final.waves.value(), ex);
  }
  const Real n = static_cast<Real>(examples.size());
  out.loss /= n;
  out.si_snri /= n;
  for (auto& [k, v] : out.components) v /= n;
  return out;
}

TrainResult train(const ModelConfig& model, const LossConfig& loss,
                  const TrainConfig& config, const Manifest& manifest,
                  const TrainOptions& options) {
  model.validate();
  loss.validate();
  config.validate();
  if (options.run_dir.empty()) throw ConfigError("train: run_dir is required");
  const std::vector<MixtureExample> train_set = load_split(manifest, Split::kTrain);
  const std::vector<MixtureExample> val_set = load_split(manifest, Split::kVal);
  if (train_set.empty() || val_set.empty()) {
    throw ConfigError("train: manifest needs non-empty train and val splits");
  }
  for (const auto& ex : train_set) {
    if (static_cast<int>(ex.sources.size()) != model.speakers) {
      throw ConfigError("train: example speaker count does not match the model");
    }
  }

  ModelParams params = options.init_params
                           ? ModelParams::from_snapshot(model, *options.init_params, config.seed)
                           : init_model(model, config.seed);
  const Depths depths{model.sep_repeats, model.re_repeats};
  const std::string loss_label = loss.label();

  fs::create_directories(options.run_dir);
  const std::string log_path = (fs::path(options.run_dir) / "train_log.jsonl").string();
  { std::ofstream truncate(log_path, std::ios::trunc); }

  AdamW optimizer(config);
  PlateauTracker tracker(config);
  TrainResult result;
  struct Kept {
    std::string dir;
    Real val_loss;
    int epoch;
  };
  std::vector<Kept> kept;
  std::int64_t step = 0;
  const int keep = config.keep_checkpoints == 0
                       ? 0
                       : std::max(config.keep_checkpoints, config.average_top_k);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    Real epoch_loss = 0;
    Real lr = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const Real inv_batch = 1 / static_cast<Real>(stop - start);
      params.zero_grad();
      for (std::size_t b = start; b < stop; ++b) {
        const MixtureExample& ex = train_set[order[b]];
        try {
          const ForwardTrace trace = forward_trace(params, ex.mixture, depths, loss.request());
          const GraphLoss g = trace_loss(trace, ex.source_tensor(), loss);
          if (!std::isfinite(g.breakdown.total)) throw DivergenceError("non-finite loss");
          epoch_loss += g.breakdown.total;
          backward(g.total, inv_batch);
        } catch (const DivergenceError& e) {
          throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                "; last good checkpoint: " +
                                (kept.empty() ? std::string("none") : kept.back().dir));
        }
      }
      ++step;
      clip_grad_norm(params, config.grad_clip);
      lr = lr_at(step, tracker.plateau_events(), config);
      optimizer.update(params, lr);
      for (const auto& [name, var] : params.tensors) {
        if (!var.value().all_finite()) {
          throw DivergenceError("parameter '" + name + "' became non-finite at epoch " +
                                std::to_string(epoch) + "; last good checkpoint: " +
                                (kept.empty() ? std::string("none") : kept.back().dir));
        }
      }
    }
    params.zero_grad();

    const ValidationResult val = validate_model(params, loss, val_set, depths);
    if (!std::isfinite(val.loss)) {
      throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = step;
    rec.lr = lr;
    rec.train_loss = epoch_loss / static_cast<Real>(train_set.size());
    rec.val_loss = val.loss;
    rec.val_si_snri = val.si_snri;
    rec.val_components = val.components;
    rec.improved = tracker.observe(val.loss);

    Checkpoint ck;
    ck.meta = CheckpointMeta{epoch, step, val.loss, depths, loss_label, config.seed,
                             tracker.plateau_events(), model, loss, config};
    ck.params = params.snapshot();
    ck.optimizer = optimizer.state();
    const std::string dir = (fs::path(options.run_dir) / epoch_dir_name(epoch)).string();
    save_checkpoint(ck, dir);
    kept.push_back({dir, val.loss, epoch});
    if (keep > 0 && static_cast<int>(kept.size()) > keep) {
      // Drop the worst entry that is not the newest.
      auto worst = std::max_element(kept.begin(), kept.end() - 1,
                                    [](const Kept& a, const Kept& b) {
                                      return a.val_loss < b.val_loss ||
                                             (a.val_loss == b.val_loss && a.epoch > b.epoch);
                                    });
      fs::remove_all(worst->dir);
      kept.erase(worst);
    }

    append_log(log_path, rec);
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    if (tracker.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }

  std::vector<Checkpoint> pool;
  std::vector<Real> losses;
  for (const auto& k : kept) losses.push_back(k.val_loss);
  for (auto i : best_indices(losses, config.average_top_k)) {
    pool.push_back(load_checkpoint(kept[i].dir, false));
  }
  result.final_params = average_checkpoints(pool, config.average_top_k);
  const ValidationResult final_val = validate_model(result.final_params, loss, val_set, depths);
  Checkpoint final_ck;
  final_ck.meta = CheckpointMeta{result.history.back().epoch, step, final_val.loss, depths,
                                 loss_label, config.seed, tracker.plateau_events(),
                                 model, loss, config};
  final_ck.params = result.final_params.snapshot();
  result.final_dir = (fs::path(options.run_dir) / "final").string();
  save_checkpoint(final_ck, result.final_dir);
  for (const auto& k : kept) result.checkpoint_dirs.push_back(k.dir);
  return result;
}

ModelParams warm_start(const Checkpoint& base, Depths depths) {
  if (depths.n_sep < 1 || depths.n_re < 1) throw ConfigError("depths must be >= 1");
  ModelConfig cfg = base.meta.model;
  if (!cfg.share_separator && depths.n_sep != cfg.sep_repeats) {
    throw ConfigError("non-shared Separator cannot change its repeat count (" +
                      std::to_string(cfg.sep_repeats) + " -> " +
                      std::to_string(depths.n_sep) + ")");
  }
  if (!cfg.share_reconstructor && depths.n_re != cfg.re_repeats) {
    throw ConfigError("non-shared Reconstructor cannot change its repeat count (" +
                      std::to_string(cfg.re_repeats) + " -> " +
                      std::to_string(depths.n_re) + ")");
  }
  cfg.sep_repeats = depths.n_sep;
  cfg.re_repeats = depths.n_re;
  return ModelParams::from_snapshot(cfg, base.params, base.meta.init_seed);
}

TrainResult finetune(const Checkpoint& base, Depths depths, const LossConfig& loss,
                     const TrainConfig& config, const Manifest& manifest,
                     TrainOptions options) {
  ModelParams start = warm_start(base, depths);
  TrainConfig ft = config;
  ft.base_lr = config.finetune_lr;
  ft.warmup_steps = 0;
  ft.max_epochs = config.finetune_epochs > 0
                      ? config.finetune_epochs
                      : std::max(1, static_cast<int>(std::lround(
                                        config.finetune_fraction * config.max_epochs)));
  options.init_params = start.snapshot();
  options.finetune = true;
  return train(start.config, loss, ft, manifest, options);
}

}  // namespace scalesep
