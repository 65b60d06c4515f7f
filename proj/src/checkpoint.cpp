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

#include "vibsplit/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "vibsplit/error.hpp"
#include "vibsplit/tensor_io.hpp"

namespace vibsplit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "vibsplit-checkpoint";
constexpr int kVersion = 1;

json optim_json(const OptimConfig& c) {
  return {{"lr", c.lr},           {"warmup_ratio", c.warmup_ratio}, {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip}, {"beta1", c.beta1},            {"beta2", c.beta2},
          {"eps", c.eps}};
}

OptimConfig optim_from(const json& j) {
  OptimConfig c;
  c.lr = j.at("lr").get<double>();
  c.warmup_ratio = j.at("warmup_ratio").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  return c;
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

json stage1_config_json(const Stage1Config& c) {
  return {{"d", c.d},
          {"epochs", c.epochs},
          {"optim", optim_json(c.optim)},
          {"beta_start", c.beta_start},
          {"beta_end", c.beta_end},
          {"beta_constant", optional_json(c.beta_constant)},
          {"init_gain", c.init_gain},
          {"blank_bias", c.blank_bias},
          {"fixed_layer", optional_json(c.fixed_layer)},
          {"seed", c.seed},
          {"allowed_d", c.allowed_d}};
}

Stage1Config stage1_config_from(const json& j) {
  Stage1Config c;
  c.d = j.at("d").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.optim = optim_from(j.at("optim"));
  c.beta_start = j.at("beta_start").get<double>();
  c.beta_end = j.at("beta_end").get<double>();
  c.beta_constant = optional_from<double>(j.at("beta_constant"));
  c.init_gain = j.at("init_gain").get<double>();
  c.blank_bias = j.at("blank_bias").get<double>();
  c.fixed_layer = optional_from<int>(j.at("fixed_layer"));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.allowed_d = j.at("allowed_d").get<std::vector<int>>();
  return c;
}

json stage2_config_json(const Stage2Config& c) {
  return {{"task", task_name(c.task)},
          {"d", c.d},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"optim", optim_json(c.optim)},
          {"beta_start", c.beta_start},
          {"beta_end", c.beta_end},
          {"beta_constant", optional_json(c.beta_constant)},
          {"init_gain", c.init_gain},
          {"fixed_layer", optional_json(c.fixed_layer)},
          {"undersample", optional_json(c.undersample)},
          {"use_textual_conditioning", c.use_textual_conditioning},
          {"seed", c.seed},
          {"allowed_d", c.allowed_d}};
}

Stage2Config stage2_config_from(const json& j) {
  Stage2Config c;
  c.task = parse_task(j.at("task").get<std::string>());
  c.d = j.at("d").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.optim = optim_from(j.at("optim"));
  c.beta_start = j.at("beta_start").get<double>();
  c.beta_end = j.at("beta_end").get<double>();
  c.beta_constant = optional_from<double>(j.at("beta_constant"));
  c.init_gain = j.at("init_gain").get<double>();
  c.fixed_layer = optional_from<int>(j.at("fixed_layer"));
  c.undersample = optional_from<bool>(j.at("undersample"));
  c.use_textual_conditioning = j.at("use_textual_conditioning").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.allowed_d = j.at("allowed_d").get<std::vector<int>>();
  return c;
}

json fingerprint_json(const CorpusFingerprint& fp) {
  return {{"source", fp.source},
          {"layers", fp.layers},
          {"width", fp.width},
          {"content", fp.content},
          {"representation_key", fp.representation_key()}};
}

CorpusFingerprint fingerprint_from(const json& j) {
  CorpusFingerprint fp;
  fp.source = j.at("source").get<std::string>();
  fp.layers = j.at("layers").get<std::uint32_t>();
  fp.width = j.at("width").get<std::uint32_t>();
  fp.content = j.at("content").get<std::uint64_t>();
  return fp;
}

json vocab_json(const Vocabulary& v) {
  return {{"symbols", v.symbols()},
          {"blank", v.blank_index()},
          {"delimiter", std::string(1, v.word_delimiter())}};
}

Vocabulary vocab_from(const json& j) {
  const std::string delim = j.at("delimiter").get<std::string>();
  if (delim.size() != 1) throw FormatError("checkpoint: word delimiter must be one character");
  return Vocabulary(j.at("symbols").get<std::vector<std::string>>(), j.at("blank").get<int>(),
                    delim[0]);
}

std::string tensor_file(const std::string& name) { return "tensors/" + name + ".hsd"; }

json save_tensors(const ConstParamRefs& params, const fs::path& dir) {
  fs::create_directories(dir / "tensors");
  json list = json::array();
  for (const Param* p : params) {
    const std::string file = tensor_file(p->name);
    write_matrix_f64(dir / file, p->value);
    list.push_back({{"name", p->name},
                    {"file", file},
                    {"rows", p->value.rows()},
                    {"cols", p->value.cols()}});
  }
  return list;
}

void load_tensors(const ParamRefs& params, const json& list, const fs::path& dir) {
  for (Param* p : params) {
    const json* entry = nullptr;
    for (const auto& e : list)
      if (e.at("name").get<std::string>() == p->name) entry = &e;
    if (!entry) throw FormatError("checkpoint: tensor '" + p->name + "' missing from index");
    Matrix m = read_matrix_f64(dir / entry->at("file").get<std::string>());
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw FormatError("checkpoint: tensor '" + p->name + "' has shape " +
                        std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
                        std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    p->value = std::move(m);
    p->zero_grad();
  }
}

ParamRefs mutable_refs(const ConstParamRefs& refs) {
  ParamRefs out;
  for (const Param* p : refs) out.push_back(const_cast<Param*>(p));
  return out;
}

void write_index(const json& index, const fs::path& dir) {
  std::ofstream out(dir / "index.json");
  if (!out) throw Error("checkpoint: cannot write " + (dir / "index.json").string());
  out << index.dump(2) << '\n';
}

json read_index(const fs::path& dir, const std::string& kind) {
  const fs::path path = dir / "index.json";
  std::ifstream in(path);
  if (!in) throw FormatError("checkpoint: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint: " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kFormat || j.value("version", 0) != kVersion)
    throw FormatError("checkpoint: " + path.string() + " is not a version-1 checkpoint");
  if (!kind.empty() && j.value("kind", "") != kind)
    throw FormatError("checkpoint: " + dir.string() + " holds a " + j.value("kind", "?") +
                      " model, expected " + kind);
  return j;
}

void verify_checksum(const json& index, const ConstParamRefs& params, const fs::path& dir) {
  if (index.at("checksum").get<std::uint64_t>() != checksum(params))
    throw FormatError("checkpoint: parameter checksum mismatch in " + dir.string());
}

}  // namespace

void save_stage1(const Stage1Model& model, const fs::path& dir) {
  fs::create_directories(dir);
  const ConstParamRefs params = model.parameters();
  json index{{"format", kFormat},
             {"version", kVersion},
             {"kind", "stage1"},
             {"config", stage1_config_json(model.config)},
             {"fingerprint", fingerprint_json(model.corpus)},
             {"vocab", vocab_json(model.vocab)},
             {"checksum", checksum(params)}};
  index["tensors"] = save_tensors(params, dir);
  write_index(index, dir);
}

Stage1Model load_stage1(const fs::path& dir) {
  try {
    const json index = read_index(dir, "stage1");
    const CorpusFingerprint fp = fingerprint_from(index.at("fingerprint"));
    Stage1Model model = init_stage1(fp.layers, fp.width, vocab_from(index.at("vocab")),
                                    stage1_config_from(index.at("config")));
    model.corpus = fp;
    load_tensors(mutable_refs(model.parameters()), index.at("tensors"), dir);
    verify_checksum(index, model.parameters(), dir);
    return model;
  } catch (const json::exception& e) {
    throw FormatError("checkpoint: " + dir.string() + ": " + e.what());
  }
}

void save_stage2(const Stage2Model& model, const fs::path& dir) {
  if (!model.stage1) throw InvalidInput("stage2 checkpoint: model has no stage-1 reference");
  fs::create_directories(dir);
  save_stage1(*model.stage1, dir / "stage1");
  const ConstParamRefs params = model.parameters();
  json index{{"format", kFormat},
             {"version", kVersion},
             {"kind", "stage2"},
             {"config", stage2_config_json(model.config)},
             {"class_count", model.class_count},
             {"fingerprint", fingerprint_json(model.corpus)},
             {"stage1_fingerprint", fingerprint_json(model.stage1->corpus)},
             {"stage1_checksum", model.stage1_checksum},
             {"checksum", checksum(params)}};
  index["tensors"] = save_tensors(params, dir);
  write_index(index, dir);
}

Stage2Model load_stage2(const fs::path& dir) {
  try {
    const json index = read_index(dir, "stage2");
    auto stage1 = std::make_shared<const Stage1Model>(load_stage1(dir / "stage1"));
    if (checksum(stage1->parameters()) != index.at("stage1_checksum").get<std::uint64_t>())
      throw FormatError("checkpoint: " + dir.string() +
                        " was conditioned on a different stage-1 model");
    const CorpusFingerprint fp = fingerprint_from(index.at("fingerprint"));
    Stage2Model model = init_stage2(stage1, fp.layers, fp.width, index.at("class_count").get<int>(),
                                    stage2_config_from(index.at("config")));
    model.corpus = fp;
    load_tensors(mutable_refs(model.parameters()), index.at("tensors"), dir);
    verify_checksum(index, model.parameters(), dir);
    return model;
  } catch (const json::exception& e) {
    throw FormatError("checkpoint: " + dir.string() + ": " + e.what());
  }
}

std::string checkpoint_kind(const fs::path& dir) {
  return read_index(dir, "").at("kind").get<std::string>();
}

}  // namespace vibsplit
