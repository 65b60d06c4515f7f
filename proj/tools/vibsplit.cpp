// Copyright 2026 The vibsplit Authors
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

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "vibsplit/commands.hpp"
#include "vibsplit/error.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<int> stage;
  std::optional<std::string> task;
  std::optional<std::string> layer;
  bool sweep = false;
  std::optional<int> d;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<std::string> manifest;
  std::optional<std::string> lexicon;
  std::optional<std::string> stage1;
  std::vector<std::string> stage2;
  bool verbose = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Run configuration file (TOML-style key = value)");
  cmd->add_option("--seed", f.seed, "Base random seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--manifest", f.manifest, "Corpus manifest (JSONL); default: synthesize");
  cmd->add_option("--workers", f.workers, "Parallel per-layer jobs in sweep mode");
}

void add_model(CLI::App* cmd, Flags& f) {
  cmd->add_option("--task", f.task, "Stage-2 task: emotion, speaker or gender");
  cmd->add_option("--layer", f.layer, "Layer index, or 'weighted' for the learned average");
  cmd->add_flag("--sweep", f.sweep, "One run per layer");
  cmd->add_option("--d", f.d, "Bottleneck width for both stages");
}

vibsplit::RunConfig resolve(const Flags& f) {
  vibsplit::KeyValueFile kv =
      f.config.empty() ? vibsplit::KeyValueFile{} : vibsplit::KeyValueFile::load(f.config);
  if (f.seed) kv.set("run.seed", std::to_string(*f.seed));
  if (f.out) kv.set("run.out", *f.out);
  if (f.layer) kv.set("run.layer", *f.layer);
  if (f.sweep) kv.set("run.sweep", "true");
  if (f.workers) kv.set("run.workers", std::to_string(*f.workers));
  if (f.manifest) kv.set("corpus.manifest", *f.manifest);
  if (f.lexicon) kv.set("attribution.lexicon", *f.lexicon);
  if (f.task) kv.set("stage2.task", *f.task);
  if (f.d) {
    kv.set("stage1.d", std::to_string(*f.d));
    kv.set("stage2.d", std::to_string(*f.d));
  }
  vibsplit::RunConfig cfg = vibsplit::RunConfig::from(kv);
  if (cfg.sweep && cfg.layer) throw vibsplit::ConfigError("--sweep and --layer are exclusive");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vibsplit: two-stage variational information bottleneck toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_flag("-v,--verbose", f.verbose, "Debug logging");
  app.add_flag("-q,--quiet", f.quiet, "Warnings and errors only");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus under <out>/corpus");
  add_common(synth, f);

  auto* train = app.add_subcommand("train", "Train stage 1 or stage 2");
  add_common(train, f);
  add_model(train, f);
  train->add_option("--stage", f.stage, "1 or 2")->required();
  train->add_option("--stage1", f.stage1, "Stage-1 checkpoint (sweep: directory of per-layer ones)");

  auto* probe = app.add_subcommand("probe", "Run the probing suite");
  add_common(probe, f);
  add_model(probe, f);
  probe->add_option("--stage1", f.stage1, "Stage-1 checkpoint (sweep: checkpoint directory)");
  probe->add_option("--stage2", f.stage2, "Stage-2 checkpoint(s) (sweep: checkpoint directory)");

  auto* attribute = app.add_subcommand("attribute", "Attention and IG attribution");
  add_common(attribute, f);
  attribute->add_option("--stage2", f.stage2, "Stage-2 checkpoint")->expected(1);
  attribute->add_option("--lexicon", f.lexicon, "Polarity lexicon (word<TAB>polarity)");

  auto* export_latents =
      app.add_subcommand("export-latents", "Utterance-mean textual and acoustic latents as CSV");
  add_common(export_latents, f);
  export_latents->add_option("--stage2", f.stage2, "Stage-2 checkpoint")->expected(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(f.verbose ? spdlog::level::debug
                              : f.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    const vibsplit::RunConfig cfg = resolve(f);
    auto stage2_paths = [&](bool allow_default) {
      std::vector<std::filesystem::path> out(f.stage2.begin(), f.stage2.end());
      if (out.empty() && allow_default)
        out.push_back(cfg.sweep ? vibsplit::checkpoints_dir(cfg)
                                : vibsplit::default_stage2_path(cfg, cfg.stage2.task, cfg.layer));
      return out;
    };
    if (synth->parsed()) {
      vibsplit::cmd_synth(cfg);
    } else if (train->parsed()) {
      std::optional<std::filesystem::path> s1;
      if (f.stage1) s1 = *f.stage1;
      vibsplit::cmd_train(cfg, *f.stage, s1);
    } else if (probe->parsed()) {
      const std::filesystem::path s1 =
          f.stage1 ? std::filesystem::path(*f.stage1)
                   : (cfg.sweep ? vibsplit::checkpoints_dir(cfg)
                                : vibsplit::default_stage1_path(cfg, cfg.layer));
      vibsplit::cmd_probe(cfg, s1, stage2_paths(true));
    } else if (attribute->parsed()) {
      vibsplit::cmd_attribute(cfg, stage2_paths(true).front());
    } else if (export_latents->parsed()) {
      vibsplit::cmd_export_latents(cfg, stage2_paths(true).front());
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return vibsplit::exit_code(e);
  }
  return 0;
}
