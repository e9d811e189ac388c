#pragma once

#include "samct/cnn.hpp"
#include "samct/config.hpp"
#include "samct/decoder.hpp"
#include "samct/grid.hpp"
#include "samct/interaction.hpp"
#include "samct/prompt.hpp"
#include "samct/vit.hpp"

#include <torch/torch.h>

#include <map>
#include <string>
#include <vector>

namespace samct {

/// Component switches for ablation. With everything off the model is plain
/// SAM.
struct AblationSwitches {
  bool cnn_branch = true;
  bool cross_branch = true;
  bool adapters = true;

  /// Throws ConfigError when cross_branch is on without cnn_branch.
  void validate() const;
  /// Comma-separated list of enabled components from {cnn, cbi, adapter};
  /// "none" or "" disables all, "all" enables all.
  static AblationSwitches parse(const std::string& text);
  std::string to_string() const;
  static AblationSwitches plain_sam() { return {false, false, false}; }

  bool operator==(const AblationSwitches&) const = default;
};

void to_json(nlohmann::json& j, const AblationSwitches& s);
void from_json(const nlohmann::json& j, AblationSwitches& s);

/// Checkpoint groups. The first four are inherited from SAM and stay frozen.
inline const std::vector<std::string> kFrozenGroups = {"frozen_backbone", "neck", "decoder", "prompt_encoder"};
inline const std::vector<std::string> kTrainableGroups = {"adapters", "cnn_encoder", "interaction", "fusion"};

/// Group of a fully qualified parameter or buffer name.
std::string group_of(const std::string& name);

struct ImageFeatures {
  torch::Tensor vit;               // N x neck_dim x G x G
  cnn::MultiScaleFeatures cnn;     // empty when the CNN branch is off
  std::map<int, torch::Tensor> taps;

  ImageFeatures select(const torch::Tensor& index) const;
  int64_t batch() const { return vit.size(0); }
};

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

struct SamCtImpl : torch::nn::Module {
  SamCtImpl(const ModelConfig& config, const AblationSwitches& switches);

  /// uint8 gray images -> N x 3 x S x S floats, each pixel (v/255 - 0.5) / 0.25.
  torch::Tensor preprocess(const std::vector<const Image8*>& images) const;

  ImageFeatures encode(const torch::Tensor& images);
  decoder::DecodeOutput decode(const ImageFeatures& features, const prompt::PromptBundle& bundle);
  /// Encodes manual prompts and decodes; samples are grouped by prompt layout
  /// and the results scattered back in input order. Returns N x 1 x H x W.
  torch::Tensor segment(const ImageFeatures& features, const std::vector<prompt::PromptSet>& prompts);

  /// Parameters and buffers by group.
  std::map<std::string, NamedTensors> groups();
  NamedTensors group(const std::string& name);
  /// requires_grad on every trainable group, off on every frozen one.
  void apply_freeze();
  std::vector<torch::Tensor> trainable_parameters();
  int64_t parameter_count(const std::string& group);
  /// Copies every tensor of `groups_to_copy` from `source` by name; both
  /// sides must hold the same names and shapes for those groups.
  void copy_groups_from(SamCtImpl& source, const std::vector<std::string>& groups_to_copy);

  ModelConfig config;
  AblationSwitches switches;
  vit::ViTEncoder vit{nullptr};
  cnn::UNetEncoder cnn{nullptr};
  torch::nn::ModuleList interactions{nullptr};
  prompt::PromptEncoder prompt_encoder{nullptr};
  decoder::MaskDecoder decoder{nullptr};
};
TORCH_MODULE(SamCt);

}  // namespace samct
