#include "samct/experiment.hpp"

#include "samct/errors.hpp"

#include <fstream>
#include <set>

namespace samct {
using nlohmann::json;

std::filesystem::path DataConfig::resolved_root() const {
  if (!root.empty()) return root;
  return std::filesystem::path(manifest).parent_path();
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError((path.empty() ? key : path + "." + key) + ": unknown field");
}

template <class T>
T section(const json& j, const std::string& key, const std::set<std::string>& allowed, T fallback) {
  if (!j.contains(key)) return fallback;
  check_keys(j.at(key), allowed, key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

const std::set<std::string> kScheduleKeys = {"epochs", "batch_size", "lr", "lr_final", "step_fraction", "max_steps"};
const std::set<std::string> kAugmentKeys = {"enabled",      "rotation_deg", "scale_min", "scale_max", "crop_min",
                                            "crop_max",     "contrast_min", "contrast_max", "gamma_min", "gamma_max"};
const std::set<std::string> kLossKeys = {"dice", "bce", "classifier"};

void check_nested(const json& j, const std::string& path) {
  if (j.contains("schedule")) check_keys(j.at("schedule"), kScheduleKeys, path + ".schedule");
  if (j.contains("augment")) check_keys(j.at("augment"), kAugmentKeys, path + ".augment");
  if (j.contains("loss")) check_keys(j.at("loss"), kLossKeys, path + ".loss");
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  switches.validate();
  prompt.validate();
  pretrain.validate();
  train.validate();
  indicator.validate();
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  pretrain.seed = s;
  train.seed = s;
  indicator.seed = s;
  prompt.rng_seed = s;
}

json ExperimentConfig::to_json() const {
  return {{"model", model},
          {"switches", switches},
          {"prompt", prompt},
          {"data", {{"manifest", data.manifest}, {"root", data.root}, {"objects", data.objects}, {"task_id", data.task_id}}},
          {"pretrain", pretrain},
          {"train", train},
          {"indicator", indicator},
          {"backbone", backbone},
          {"seed", seed},
          {"output_dir", output_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j, {"model", "switches", "prompt", "data", "pretrain", "train", "indicator", "backbone", "seed", "output_dir"}, "");
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.backbone = j.value("backbone", c.backbone);
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("top level: ") + e.what());
  }
  c.set_seed(c.seed);
  if (j.contains("model")) {
    check_keys(j.at("model"),
               {"profile_name", "input_size", "patch_size", "embed_dim", "depth", "heads", "mlp_ratio", "neck_dim", "adapter_ratio",
                "cnn_channels", "stem", "interaction_sites", "cnn_grad_through_vit", "decoder_depth", "decoder_heads", "decoder_mlp_dim",
                "decoder_attention_downsample", "fusion_channels", "indicator_hidden"},
               "model");
    try {
      c.model = j.at("model").get<ModelConfig>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("model: ") + e.what());
    }
  }
  c.switches = section<AblationSwitches>(j, "switches", {"cnn_branch", "cross_branch", "adapters"}, c.switches);
  auto seeded = [&](const char* key) {
    json s = j.contains(key) ? j.at(key) : json::object();
    if (!s.is_object()) throw ConfigError(std::string(key) + ": expected an object");
    if (!s.contains("seed") && std::string(key) != "prompt") s["seed"] = c.seed;
    return s;
  };
  {
    json p = j.contains("prompt") ? j.at("prompt") : json::object();
    check_keys(p, {"mode", "shift_fraction", "rng_seed"}, "prompt");
    if (!p.contains("rng_seed")) p["rng_seed"] = c.seed;
    try {
      c.prompt = p.get<synthesis::PromptSpec>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("prompt: ") + e.what());
    }
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, {"manifest", "root", "objects", "task_id"}, "data");
    try {
      c.data.manifest = d.value("manifest", std::string());
      c.data.root = d.value("root", std::string());
      c.data.objects = d.value("objects", std::vector<std::string>{});
      c.data.task_id = d.value("task_id", std::string());
    } catch (const json::exception& e) {
      throw ConfigError(std::string("data: ") + e.what());
    }
  }
  auto parse = [&](const char* key, const std::set<std::string>& allowed, auto& target) {
    json s = seeded(key);
    check_keys(s, allowed, key);
    check_nested(s, key);
    try {
      target = s.get<std::decay_t<decltype(target)>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string(key) + ": " + e.what());
    }
  };
  parse("pretrain", {"scenes", "schedule", "loss", "empty_fraction", "seed"}, c.pretrain);
  parse("train", {"schedule", "loss", "shift_fraction", "background_fraction", "background_cap", "augment", "seed"}, c.train);
  parse("indicator", {"schedule", "loss", "subsample_background", "teacher_forcing", "augment", "seed"}, c.indicator);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace samct
