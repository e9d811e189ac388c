#pragma once

#include "samct/config.hpp"
#include "samct/model.hpp"
#include "samct/prompt_synthesis.hpp"
#include "samct/train.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace samct {

struct DataConfig {
  std::string manifest;            // manifest.jsonl
  std::string root;                // defaults to the manifest's directory
  std::vector<std::string> objects;  // empty: every object
  std::string task_id;             // object of the task indicator

  std::filesystem::path resolved_root() const;
  bool operator==(const DataConfig&) const = default;
};

/// Everything a run needs. Section seeds default to `seed`.
struct ExperimentConfig {
  ModelConfig model = toy_profile();
  AblationSwitches switches;
  synthesis::PromptSpec prompt;
  DataConfig data;
  train::PretrainConfig pretrain;
  train::TrainConfig train;
  train::IndicatorTrainConfig indicator;
  std::string backbone;  // pretrained plain-SAM checkpoint
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";

  void validate() const;
  /// Sets every section seed.
  void set_seed(std::uint64_t s);
  nlohmann::json to_json() const;
  /// Unknown keys and type errors raise ConfigError with the field path.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

}  // namespace samct
