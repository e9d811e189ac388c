#pragma once

#include "samct/model.hpp"
#include "samct/prompt.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>

namespace samct::checkpoint {

/// Lowercase hex SHA-256.
std::string sha256_hex(const void* data, size_t size);
/// Digest of dtype, shape and raw bytes.
std::string tensor_digest(const torch::Tensor& t);
/// Digest over the tensors of a group in name order.
std::string group_digest(const NamedTensors& tensors);
/// name -> tensor digest.
std::map<std::string, std::string> parameter_digests(const NamedTensors& tensors);

struct Checkpoint {
  nlohmann::json metadata;
  std::map<std::string, NamedTensors> groups;
};

/// Binary container: magic "SAMCTCKP", u32 version, u64 header length, JSON
/// header (metadata, groups with digests and tensor offsets), raw tensor data.
void save(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Verifies every group digest; throws DataError on corruption.
Checkpoint load(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, SamCtImpl& model, nlohmann::json metadata = nlohmann::json::object());
/// Builds the model from the stored config and switches and loads all groups
/// strictly.
SamCt load_model(const std::filesystem::path& path);
/// Copies the listed groups into `model`; names and shapes must match exactly.
void load_groups(SamCtImpl& model, const Checkpoint& ckpt, const std::vector<std::string>& groups);

void save_indicator(const std::filesystem::path& path, prompt::TaskIndicatorImpl& indicator, const ModelConfig& main_config,
                    nlohmann::json metadata = nlohmann::json::object());
/// Rejects indicators whose dimensions do not match `main_config`.
prompt::TaskIndicator load_indicator(const std::filesystem::path& path, const ModelConfig& main_config, nlohmann::json* metadata = nullptr);

}  // namespace samct::checkpoint
