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

#include "scalesep/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json_codec.hpp"
#include "scalesep/errors.hpp"

namespace scalesep {
namespace codec {
namespace {

using Handlers = std::map<std::string, std::function<void(const Json&, const std::string&)>>;

void apply(const Json& j, const Handlers& handlers, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto h = handlers.find(it.key());
    const std::string path = where + "." + it.key();
    if (h == handlers.end()) throw ConfigError("unknown config key '" + path + "'");
    h->second(it.value(), path);
  }
}

auto int_field(int& out) {
  return [&out](const Json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(path + ": out of range");
    out = static_cast<int>(x);
  };
}
auto i64_field(std::int64_t& out) {
  return [&out](const Json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
    out = v.get<std::int64_t>();
  };
}
auto u64_field(std::uint64_t& out) {
  return [&out](const Json& v, const std::string& path) {
    if (v.is_number_unsigned()) {
      out = v.get<std::uint64_t>();
    } else if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      out = static_cast<std::uint64_t>(v.get<std::int64_t>());
    } else {
      throw ConfigError(path + ": expected a nonnegative integer");
    }
  };
}
auto real_field(Real& out) {
  return [&out](const Json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
    out = v.get<Real>();
  };
}
auto bool_field(bool& out) {
  return [&out](const Json& v, const std::string& path) {
    if (!v.is_boolean()) throw ConfigError(path + ": expected true or false");
    out = v.get<bool>();
  };
}
std::string string_value(const Json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path + ": expected a string");
  return v.get<std::string>();
}

}  // namespace

Json to_json(const StftConfig& c) {
  return Json{{"window_size", c.window_size}, {"hop", c.hop}, {"window", to_string(c.window)}};
}

Json to_json(const ModelConfig& c) {
  return Json{{"channels", c.channels},
              {"speakers", c.speakers},
              {"sep_blocks", c.sep_blocks},
              {"sep_repeats", c.sep_repeats},
              {"re_blocks", c.re_blocks},
              {"re_repeats", c.re_repeats},
              {"heads", c.heads},
              {"ffn_expansion", c.ffn_expansion},
              {"conv_kernel", c.conv_kernel},
              {"splitter_kind", to_string(c.splitter_kind)},
              {"splitter_kernel", c.splitter_kernel},
              {"share_separator", c.share_separator},
              {"share_reconstructor", c.share_reconstructor},
              {"iteration_residual", c.iteration_residual},
              {"stft", to_json(c.stft)}};
}

Json to_json(const LossConfig& c) {
  Json activated = Json::array();
  for (auto t : c.activated) activated.push_back(to_string(t));
  return Json{{"activated", activated},
              {"weights",
               {{"last", c.weight_last},
                {"sep", c.weight_sep},
                {"split", c.weight_split},
                {"re", c.weight_re}}},
              {"pit_mode", to_string(c.pit_mode)}};
}

Json to_json(const TrainConfig& c) {
  return Json{{"base_lr", c.base_lr},
              {"warmup_steps", c.warmup_steps},
              {"plateau_patience_epochs", c.plateau_patience_epochs},
              {"lr_decay_factor", c.lr_decay_factor},
              {"max_epochs", c.max_epochs},
              {"early_stop_patience", c.early_stop_patience},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"finetune_lr", c.finetune_lr},
              {"finetune_epochs", c.finetune_epochs},
              {"finetune_fraction", c.finetune_fraction},
              {"average_top_k", c.average_top_k},
              {"grad_clip", c.grad_clip},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"keep_checkpoints", c.keep_checkpoints}};
}

Json data_to_json(const MixtureParams& p, const SplitCounts& counts,
                  const SeedBases& seeds) {
  return Json{{"speakers", p.speakers},
              {"duration", p.duration},
              {"snr_low", p.snr_low},
              {"snr_high", p.snr_high},
              {"noise_on", p.noise_on},
              {"noise_snr_db", p.noise_snr_db},
              {"kind", to_string(p.kind)},
              {"f0_low", p.f0_low},
              {"f0_high", p.f0_high},
              {"sample_rate", p.sample_rate},
              {"train_count", counts.train},
              {"val_count", counts.val},
              {"test_count", counts.test},
              {"train_seed_base", seeds.train},
              {"val_seed_base", seeds.val},
              {"test_seed_base", seeds.test}};
}

void from_json(const Json& j, StftConfig& out, const std::string& where) {
  apply(j,
        {{"window_size", int_field(out.window_size)},
         {"hop", int_field(out.hop)},
         {"window",
          [&out](const Json& v, const std::string& p) {
            out.window = parse_window_kind(string_value(v, p));
          }}},
        where);
}

void from_json(const Json& j, ModelConfig& out, const std::string& where) {
  apply(j,
        {{"channels", int_field(out.channels)},
         {"speakers", int_field(out.speakers)},
         {"sep_blocks", int_field(out.sep_blocks)},
         {"sep_repeats", int_field(out.sep_repeats)},
         {"re_blocks", int_field(out.re_blocks)},
         {"re_repeats", int_field(out.re_repeats)},
         {"heads", int_field(out.heads)},
         {"ffn_expansion", int_field(out.ffn_expansion)},
         {"conv_kernel", int_field(out.conv_kernel)},
         {"splitter_kind",
          [&out](const Json& v, const std::string& p) {
            out.splitter_kind = parse_splitter_kind(string_value(v, p));
          }},
         {"splitter_kernel", int_field(out.splitter_kernel)},
         {"share_separator", bool_field(out.share_separator)},
         {"share_reconstructor", bool_field(out.share_reconstructor)},
         {"iteration_residual", bool_field(out.iteration_residual)},
         {"stft",
          [&out](const Json& v, const std::string& p) { from_json(v, out.stft, p); }}},
        where);
}

void from_json(const Json& j, LossConfig& out, const std::string& where) {
  apply(j,
        {{"label",
          [&out](const Json& v, const std::string& p) {
            const LossConfig parsed = LossConfig::from_label(string_value(v, p));
            out.activated = parsed.activated;
          }},
         {"activated",
          [&out](const Json& v, const std::string& p) {
            if (!v.is_array()) throw ConfigError(p + ": expected an array of terms");
            out.activated.clear();
            for (const auto& t : v) out.activated.insert(parse_loss_term(string_value(t, p)));
          }},
         {"weights",
          [&out](const Json& v, const std::string& p) {
            apply(v,
                  {{"last", real_field(out.weight_last)},
                   {"sep", real_field(out.weight_sep)},
                   {"split", real_field(out.weight_split)},
                   {"re", real_field(out.weight_re)}},
                  p);
          }},
         {"pit_mode",
          [&out](const Json& v, const std::string& p) {
            out.pit_mode = parse_pit_mode(string_value(v, p));
          }}},
        where);
}

void from_json(const Json& j, TrainConfig& out, const std::string& where) {
  apply(j,
        {{"base_lr", real_field(out.base_lr)},
         {"warmup_steps", i64_field(out.warmup_steps)},
         {"plateau_patience_epochs", int_field(out.plateau_patience_epochs)},
         {"lr_decay_factor", real_field(out.lr_decay_factor)},
         {"max_epochs", int_field(out.max_epochs)},
         {"early_stop_patience", int_field(out.early_stop_patience)},
         {"weight_decay", real_field(out.weight_decay)},
         {"batch_size", int_field(out.batch_size)},
         {"seed", u64_field(out.seed)},
         {"finetune_lr", real_field(out.finetune_lr)},
         {"finetune_epochs", int_field(out.finetune_epochs)},
         {"finetune_fraction", real_field(out.finetune_fraction)},
         {"average_top_k", int_field(out.average_top_k)},
         {"grad_clip", real_field(out.grad_clip)},
         {"adam_beta1", real_field(out.adam_beta1)},
         {"adam_beta2", real_field(out.adam_beta2)},
         {"adam_eps", real_field(out.adam_eps)},
         {"keep_checkpoints", int_field(out.keep_checkpoints)}},
        where);
}

void data_from_json(const Json& j, MixtureParams& p, SplitCounts& counts,
                    SeedBases& seeds, const std::string& where) {
  apply(j,
        {{"speakers", int_field(p.speakers)},
         {"duration", real_field(p.duration)},
         {"snr_low", real_field(p.snr_low)},
         {"snr_high", real_field(p.snr_high)},
         {"noise_on", bool_field(p.noise_on)},
         {"noise_snr_db", real_field(p.noise_snr_db)},
         {"kind",
          [&p](const Json& v, const std::string& path) {
            p.kind = parse_source_kind(string_value(v, path));
          }},
         {"f0_low", real_field(p.f0_low)},
         {"f0_high", real_field(p.f0_high)},
         {"sample_rate", int_field(p.sample_rate)},
         {"train_count", int_field(counts.train)},
         {"val_count", int_field(counts.val)},
         {"test_count", int_field(counts.test)},
         {"train_seed_base", u64_field(seeds.train)},
         {"val_seed_base", u64_field(seeds.val)},
         {"test_seed_base", u64_field(seeds.test)}},
        where);
}

Json parse(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(where + ": malformed JSON: " + e.what());
  }
}

}  // namespace codec

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  train.validate();
  data.validate();
  if (data.speakers != model.speakers) {
    throw ConfigError("data.speakers (" + std::to_string(data.speakers) +
                      ") must equal model.speakers (" +
                      std::to_string(model.speakers) + ")");
  }
  if (data.sample_rate != kDefaultSampleRate) {
    throw ConfigError("data.sample_rate must be 8000");
  }
}

RunConfig parse_run_config(const std::string& json_text) {
  const codec::Json j = codec::parse(json_text, "config");
  RunConfig cfg;
  try {
    if (!j.is_object()) throw ConfigError("config: expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      if (key == "model") {
        codec::from_json(it.value(), cfg.model, "model");
      } else if (key == "loss") {
        codec::from_json(it.value(), cfg.loss, "loss");
      } else if (key == "train") {
        codec::from_json(it.value(), cfg.train, "train");
      } else if (key == "data") {
        codec::data_from_json(it.value(), cfg.data, cfg.counts, cfg.seeds, "data");
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string dump_run_config(const RunConfig& config) {
  codec::Json j{{"model", codec::to_json(config.model)},
                {"loss", codec::to_json(config.loss)},
                {"train", codec::to_json(config.train)},
                {"data", codec::data_to_json(config.data, config.counts, config.seeds)}};
  return j.dump(2) + "\n";
}

}  // namespace scalesep
