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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scalesep/config.hpp"
#include "scalesep/errors.hpp"
#include "scalesep/eval.hpp"
#include "scalesep/naming.hpp"
#include "scalesep/plot.hpp"
#include "scalesep/trainer.hpp"
#include "scalesep/wav.hpp"

namespace fs = std::filesystem;
using namespace scalesep;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// "3", "1:8" or "1,2,4".
std::vector<int> parse_depth_list(const std::string& text) {
  std::vector<int> out;
  auto to_int = [&](const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || v < 1) {
      throw ConfigError("bad depth '" + text + "' (integer >= 1, a:b or a,b,c)");
    }
    return v;
  };
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const int a = to_int(text.substr(0, colon)), b = to_int(text.substr(colon + 1));
    if (b < a) throw ConfigError("bad depth range '" + text + "'");
    for (int i = a; i <= b; ++i) out.push_back(i);
    return out;
  }
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(to_int(part));
  if (out.empty()) throw ConfigError("empty depth list");
  return out;
}

int single_depth(const std::string& text) {
  const auto v = parse_depth_list(text);
  if (v.size() != 1) throw ConfigError("expected a single depth, got '" + text + "'");
  return v.front();
}

std::string model_label(const CheckpointMeta& meta, std::optional<int> inference_n_re) {
  ModelName name;
  name.m_sep = meta.model.sep_blocks;
  name.n_sep = meta.depths.n_sep;
  name.m_re = meta.model.re_blocks;
  name.n_re = meta.depths.n_re;
  std::string label = meta.loss_label;
  if (!label.empty() && label[0] == 'l') label.erase(0, 1);
  name.loss_label = label;
  name.inference_n_re = inference_n_re;
  return format_model_name(name);
}

void print_epoch(const EpochRecord& r) {
  std::printf("epoch %d step %lld lr %.3e train_loss %.4f val_loss %.4f val_si_snri %.3f%s\n",
              r.epoch, static_cast<long long>(r.step), r.lr, r.train_loss, r.val_loss,
              r.val_si_snri, r.improved ? " *" : "");
  std::fflush(stdout);
}

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scalesep: iterative speech separation with runtime-adjustable depth"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, ckpt, from, out, format = "csv", plot_path;
  std::string n_sep_text, n_re_text, split_name = "test", encoding = "float32";
  std::string input_wav;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  bool persist = false, no_rtf = false;
  double rtf_duration = 2.0;
  int rtf_repeats = 3;

  auto* gen = app.add_subcommand("gen", "Write a synthetic-mixture manifest");
  gen->add_option("--config", config_path, "JSON run config");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_flag("--persist", persist, "Also write every example as WAV files");

  auto* train_cmd = app.add_subcommand("train", "Train from scratch");
  train_cmd->add_option("--config", config_path, "JSON run config");
  train_cmd->add_option("--manifest", manifest_path, "Manifest (default: generate from config)");
  train_cmd->add_option("--out", out, "Run directory")->required();
  train_cmd->add_option("--seed", seed, "Override train.seed");
  train_cmd->add_option("--n-sep", n_sep_text, "Training N_sep");
  train_cmd->add_option("--n-re", n_re_text, "Training N_re");

  auto* ft_cmd = app.add_subcommand("finetune", "Continue a trained model at new depths");
  ft_cmd->add_option("--from", from, "Base checkpoint directory")->required();
  ft_cmd->add_option("--config", config_path, "JSON run config (train/loss/data sections)");
  ft_cmd->add_option("--manifest", manifest_path, "Manifest (default: generate from config)");
  ft_cmd->add_option("--out", out, "Run directory")->required();
  ft_cmd->add_option("--seed", seed, "Override train.seed");
  ft_cmd->add_option("--n-sep", n_sep_text, "New training N_sep");
  ft_cmd->add_option("--n-re", n_re_text, "New training N_re")->required();
  ft_cmd->add_option("--epochs", epochs, "Fine-tune epochs");

  auto* sep_cmd = app.add_subcommand("separate", "Separate one WAV file");
  sep_cmd->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  sep_cmd->add_option("--n-sep", n_sep_text, "Inference N_sep");
  sep_cmd->add_option("--n-re", n_re_text, "Inference N_re");
  sep_cmd->add_option("--out", out, "Output directory (default: next to input)");
  sep_cmd->add_option("--encoding", encoding, "pcm16 or float32");
  sep_cmd->add_option("input", input_wav, "Mono 8 kHz WAV")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "SI-SNRi / SDRi on a manifest split");
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  eval_cmd->add_option("--manifest", manifest_path, "Manifest")->required();
  eval_cmd->add_option("--split", split_name, "train, val or test");
  eval_cmd->add_option("--n-sep", n_sep_text, "Inference N_sep");
  eval_cmd->add_option("--n-re", n_re_text, "Inference N_re");
  eval_cmd->add_option("--out", out, "Write the report here instead of stdout");
  eval_cmd->add_option("--format", format, "csv or text");
  eval_cmd->add_flag("--no-rtf", no_rtf, "Skip latency measurement");

  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate across inference depths");
  sweep_cmd->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  sweep_cmd->add_option("--manifest", manifest_path, "Manifest")->required();
  sweep_cmd->add_option("--split", split_name, "train, val or test");
  sweep_cmd->add_option("--n-sep", n_sep_text, "Inference N_sep");
  sweep_cmd->add_option("--n-re", n_re_text, "Depths: a:b, a,b,c or a single value")->required();
  sweep_cmd->add_option("--out", out, "Write the report here instead of stdout");
  sweep_cmd->add_option("--format", format, "csv or text");
  sweep_cmd->add_option("--plot", plot_path, "Also write an SVG plot");
  sweep_cmd->add_flag("--no-rtf", no_rtf, "Skip latency measurement");
  sweep_cmd->add_option("--rtf-duration", rtf_duration, "Seconds of audio per RTF run");
  sweep_cmd->add_option("--rtf-repeats", rtf_repeats, "Timed RTF repeats (>= 3)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = config_or_default(config_path);
      fs::create_directories(out);
      const Manifest m =
          build_dataset(cfg.counts, cfg.data, cfg.seeds,
                        persist ? std::optional<std::string>((fs::path(out) / "audio").string())
                                : std::nullopt);
      const std::string path = (fs::path(out) / "manifest.tsv").string();
      m.write(path);
      std::printf("wrote %s (%zu entries)\n", path.c_str(), m.entries.size());
      return 0;
    }

    if (train_cmd->parsed() || ft_cmd->parsed()) {
      RunConfig cfg = config_or_default(config_path);
      if (seed) cfg.train.seed = *seed;
      const Manifest manifest = manifest_path.empty()
                                    ? build_dataset(cfg.counts, cfg.data, cfg.seeds)
                                    : Manifest::read(manifest_path);
      TrainOptions options;
      options.run_dir = out;
      options.on_epoch = print_epoch;
      fs::create_directories(out);
      if (train_cmd->parsed()) {
        if (!n_sep_text.empty()) cfg.model.sep_repeats = single_depth(n_sep_text);
        if (!n_re_text.empty()) cfg.model.re_repeats = single_depth(n_re_text);
        std::ofstream(fs::path(out) / "config.json") << dump_run_config(cfg);
        const TrainResult r = train(cfg.model, cfg.loss, cfg.train, manifest, options);
        std::printf("final model: %s\n", r.final_dir.c_str());
        return 0;
      }
      const Checkpoint base = load_checkpoint(from, false);
      Depths depths = base.meta.depths;
      depths.n_re = single_depth(n_re_text);
      if (!n_sep_text.empty()) depths.n_sep = single_depth(n_sep_text);
      if (depths.n_sep < base.meta.depths.n_sep || depths.n_re < base.meta.depths.n_re) {
        std::fprintf(stderr, "warning: fine-tune depths are shallower than the base model's\n");
      }
      if (epochs) cfg.train.finetune_epochs = *epochs;
      std::ofstream(fs::path(out) / "config.json") << dump_run_config(cfg);
      const LossConfig loss = config_path.empty() ? base.meta.loss : cfg.loss;
      const TrainResult r = finetune(base, depths, loss, cfg.train, manifest, options);
      std::printf("final model: %s\n", r.final_dir.c_str());
      return 0;
    }

    if (sep_cmd->parsed()) {
      const Checkpoint ck = load_checkpoint(ckpt, false);
      const ModelParams params = ck.model();
      const int n_sep = n_sep_text.empty() ? ck.meta.depths.n_sep : single_depth(n_sep_text);
      const int n_re = n_re_text.empty() ? ck.meta.depths.n_re : single_depth(n_re_text);
      const Waveform input = read_wav(input_wav);
      const SeparationOutput result = forward(params, input, n_sep, n_re, false);
      const fs::path in_path(input_wav);
      const fs::path dir = out.empty() ? in_path.parent_path() : fs::path(out);
      if (!dir.empty()) fs::create_directories(dir);
      const WavEncoding enc = parse_wav_encoding(encoding);
      for (std::size_t j = 0; j < result.waves.size(); ++j) {
        const fs::path target =
            dir / (in_path.stem().string() + ".spk" + std::to_string(j + 1) + ".wav");
        write_wav(target.string(), result.waves[j], enc);
        std::printf("%s\n", target.string().c_str());
      }
      return 0;
    }

    if (eval_cmd->parsed() || sweep_cmd->parsed()) {
      const ReportFormat fmt = parse_report_format(format);
      const Checkpoint ck = load_checkpoint(ckpt, false);
      const ModelParams params = ck.model();
      const Manifest manifest = Manifest::read(manifest_path);
      std::vector<MixtureExample> examples;
      for (const auto& e : manifest.split(parse_split(split_name))) {
        examples.push_back(manifest.load(e));
      }
      if (examples.empty()) throw ConfigError("split '" + split_name + "' is empty");
      const int n_sep = n_sep_text.empty() ? ck.meta.depths.n_sep : single_depth(n_sep_text);
      std::vector<int> n_re_list;
      if (eval_cmd->parsed()) {
        n_re_list = {n_re_text.empty() ? ck.meta.depths.n_re : single_depth(n_re_text)};
      } else {
        n_re_list = parse_depth_list(n_re_text);
      }
      RtfOptions rtf;
      rtf.enabled = !no_rtf;
      rtf.duration = rtf_duration;
      rtf.repeats = rtf_repeats;
      const std::optional<int> shown =
          n_re_list.size() == 1 && n_re_list.front() != ck.meta.depths.n_re
              ? std::optional<int>(n_re_list.front())
              : std::nullopt;
      const SweepReport report =
          sweep(params, examples, n_re_list, n_sep, model_label(ck.meta, shown),
                manifest_path + ":" + split_name, rtf);
      if (out.empty()) {
        std::cout << format_report(report, fmt);
      } else {
        emit_report(report, out, fmt);
      }
      if (!plot_path.empty()) write_sweep_svg({report}, plot_path);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
