#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace samct {

/// Which half of the U-shaped CNN a site attaches to.
enum class CnnSide { kEncoder, kDecoder };

/// Stem used in front of the CNN encoding blocks.
enum class StemKind { kHybridAttention, kDoubleConv };

/// One place where the ViT and CNN branches exchange information.
///
/// `block` is the transformer block whose output is interacted with. `stride`
/// is the downsampling factor of the CNN map at that site (1, 2, 4, 8 or 16),
/// taken from the encoder or decoder half according to `side`.
struct InteractionSite {
  int block = 0;
  CnnSide side = CnnSide::kEncoder;
  int stride = 2;

  /// Position of the attached CNN map in the stem -> encoder -> decoder
  /// execution order (stem = 0, encode blocks 1..4, decode blocks 5..8).
  int cnn_step() const;
  std::string describe() const;

  bool operator==(const InteractionSite&) const = default;
};

struct ModelConfig {
  std::string profile_name = "toy";

  int input_size = 64;
  int patch_size = 8;
  int embed_dim = 64;  // d_p
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
  int neck_dim = 64;  // decoder / prompt dimension
  int adapter_ratio = 4;

  int cnn_channels = 8;  // d_c
  StemKind stem = StemKind::kHybridAttention;
  std::vector<InteractionSite> interaction_sites;
  /// When false the CNN is trained only through fusion and the
  /// Transformer -> CNN path; CNN -> Transformer reads a detached map.
  bool cnn_grad_through_vit = false;

  int decoder_depth = 2;
  int decoder_heads = 4;
  int decoder_mlp_dim = 256;
  int decoder_attention_downsample = 2;
  int fusion_channels = 32;

  /// Hidden width of the task indicator output heads.
  int indicator_hidden = 64;

  int grid_side() const { return input_size / patch_size; }
  int adapter_dim() const { return embed_dim / adapter_ratio; }

  /// Throws ConfigError naming the offending field or site.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Named profiles. `toy` trains on a single CPU core; `base` mirrors ViT-B at
/// 256x256 input.
ModelConfig toy_profile();
ModelConfig base_profile();
ModelConfig profile_by_name(const std::string& name);

void to_json(nlohmann::json& j, const InteractionSite& s);
void from_json(const nlohmann::json& j, InteractionSite& s);
void to_json(nlohmann::json& j, const ModelConfig& c);
/// Missing keys fall back to the named profile's value (`profile_name` first).
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace samct
