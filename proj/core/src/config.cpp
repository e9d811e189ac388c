#include "samct/config.hpp"

#include "samct/errors.hpp"

#include <algorithm>
#include <bit>

namespace samct {
namespace {

bool is_stride(int s) { return s == 1 || s == 2 || s == 4 || s == 8 || s == 16; }

int log2_exact(int v) { return std::countr_zero(static_cast<unsigned>(v)); }

std::string side_name(CnnSide side) { return side == CnnSide::kEncoder ? "encoder" : "decoder"; }

CnnSide parse_side(const std::string& s) {
  if (s == "encoder") return CnnSide::kEncoder;
  if (s == "decoder") return CnnSide::kDecoder;
  throw ConfigError("interaction_sites[].side: expected encoder|decoder, got '" + s + "'");
}

std::string stem_name(StemKind k) { return k == StemKind::kHybridAttention ? "hybrid_attention" : "double_conv"; }

StemKind parse_stem(const std::string& s) {
  if (s == "hybrid_attention") return StemKind::kHybridAttention;
  if (s == "double_conv") return StemKind::kDoubleConv;
  throw ConfigError("model.stem: expected hybrid_attention|double_conv, got '" + s + "'");
}

}  // namespace

int InteractionSite::cnn_step() const {
  // Decoder outputs have strides 8, 4, 2, 1 at steps 5..8; stride 16 only
  // exists on the encoder side.
  if (side == CnnSide::kEncoder) return log2_exact(stride);
  return 4 + (4 - log2_exact(stride));
}

std::string InteractionSite::describe() const {
  return "site(block=" + std::to_string(block) + ", " + side_name(side) + ", stride=" + std::to_string(stride) + ")";
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError("model." + field + ": " + why); };
  if (input_size <= 0 || patch_size <= 0) fail("input_size", "must be positive");
  if (input_size % patch_size != 0) fail("input_size", "must be divisible by patch_size");
  if (input_size % 16 != 0) fail("input_size", "must be divisible by 16 for the CNN branch");
  if (embed_dim <= 0 || depth <= 0 || heads <= 0) fail("embed_dim", "dimensions must be positive");
  if (embed_dim % heads != 0) fail("heads", "must divide embed_dim");
  if (adapter_ratio <= 0 || embed_dim % adapter_ratio != 0) fail("adapter_ratio", "must divide embed_dim");
  if (neck_dim <= 0 || neck_dim % 4 != 0) fail("neck_dim", "must be a positive multiple of 4");
  if (decoder_heads <= 0 || (neck_dim / decoder_attention_downsample) % decoder_heads != 0)
    fail("decoder_heads", "must divide neck_dim / decoder_attention_downsample");
  if (cnn_channels <= 0) fail("cnn_channels", "must be positive");
  if (fusion_channels <= 0) fail("fusion_channels", "must be positive");
  if (indicator_hidden <= 0) fail("indicator_hidden", "must be positive");

  const int grid = grid_side();
  int last_block = -1;
  int last_step = -1;
  for (const auto& site : interaction_sites) {
    const std::string where = "interaction_sites " + site.describe();
    if (site.block < 0 || site.block >= depth) throw ConfigError(where + ": block out of range [0, " + std::to_string(depth) + ")");
    if (!is_stride(site.stride)) throw ConfigError(where + ": stride must be one of 1,2,4,8,16");
    if (site.side == CnnSide::kDecoder && site.stride == 16)
      throw ConfigError(where + ": the decoder half has no stride-16 map");
    const int side_px = input_size / site.stride;
    if (side_px < grid || side_px % grid != 0)
      throw ConfigError(where + ": CNN map side " + std::to_string(side_px) + " is not an integer multiple of the ViT grid side " +
                        std::to_string(grid));
    if (site.block <= last_block || site.cnn_step() <= last_step)
      throw ConfigError(where + ": sites must be strictly increasing in both block and CNN stage");
    last_block = site.block;
    last_step = site.cnn_step();
  }
}

ModelConfig toy_profile() {
  ModelConfig c;
  c.profile_name = "toy";
  c.interaction_sites = {{1, CnnSide::kEncoder, 2}, {2, CnnSide::kEncoder, 4}, {3, CnnSide::kEncoder, 8}};
  return c;
}

ModelConfig base_profile() {
  ModelConfig c;
  c.profile_name = "base";
  c.input_size = 256;
  c.patch_size = 16;
  c.embed_dim = 768;
  c.depth = 12;
  c.heads = 12;
  c.mlp_ratio = 4;
  c.neck_dim = 256;
  c.adapter_ratio = 4;
  c.cnn_channels = 16;
  c.decoder_depth = 2;
  c.decoder_heads = 8;
  c.decoder_mlp_dim = 2048;
  c.indicator_hidden = 512;
  // k = 8, 4, 2, 1 against the 16x16 patch grid.
  c.interaction_sites = {{2, CnnSide::kEncoder, 2}, {5, CnnSide::kEncoder, 4}, {8, CnnSide::kEncoder, 8}, {11, CnnSide::kEncoder, 16}};
  return c;
}

ModelConfig profile_by_name(const std::string& name) {
  if (name == "toy") return toy_profile();
  if (name == "base") return base_profile();
  throw ConfigError("model.profile_name: unknown profile '" + name + "' (expected toy|base)");
}

void to_json(nlohmann::json& j, const InteractionSite& s) {
  j = {{"block", s.block}, {"side", side_name(s.side)}, {"stride", s.stride}};
}

void from_json(const nlohmann::json& j, InteractionSite& s) {
  try {
    s.block = j.at("block").get<int>();
    s.side = parse_side(j.value("side", std::string("encoder")));
    s.stride = j.at("stride").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("interaction_sites[]: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"profile_name", c.profile_name},
       {"input_size", c.input_size},
       {"patch_size", c.patch_size},
       {"embed_dim", c.embed_dim},
       {"depth", c.depth},
       {"heads", c.heads},
       {"mlp_ratio", c.mlp_ratio},
       {"neck_dim", c.neck_dim},
       {"adapter_ratio", c.adapter_ratio},
       {"cnn_channels", c.cnn_channels},
       {"stem", stem_name(c.stem)},
       {"interaction_sites", c.interaction_sites},
       {"cnn_grad_through_vit", c.cnn_grad_through_vit},
       {"decoder_depth", c.decoder_depth},
       {"decoder_heads", c.decoder_heads},
       {"decoder_mlp_dim", c.decoder_mlp_dim},
       {"decoder_attention_downsample", c.decoder_attention_downsample},
       {"fusion_channels", c.fusion_channels},
       {"indicator_hidden", c.indicator_hidden}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw ConfigError("model: expected an object");
  c = profile_by_name(j.value("profile_name", std::string("toy")));
  auto read_int = [&](const char* key, int& field) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number_integer()) throw ConfigError(std::string("model.") + key + ": expected an integer");
    field = j.at(key).get<int>();
  };
  read_int("input_size", c.input_size);
  read_int("patch_size", c.patch_size);
  read_int("embed_dim", c.embed_dim);
  read_int("depth", c.depth);
  read_int("heads", c.heads);
  read_int("mlp_ratio", c.mlp_ratio);
  read_int("neck_dim", c.neck_dim);
  read_int("adapter_ratio", c.adapter_ratio);
  read_int("cnn_channels", c.cnn_channels);
  read_int("decoder_depth", c.decoder_depth);
  read_int("decoder_heads", c.decoder_heads);
  read_int("decoder_mlp_dim", c.decoder_mlp_dim);
  read_int("decoder_attention_downsample", c.decoder_attention_downsample);
  read_int("fusion_channels", c.fusion_channels);
  read_int("indicator_hidden", c.indicator_hidden);
  if (j.contains("cnn_grad_through_vit")) {
    if (!j.at("cnn_grad_through_vit").is_boolean()) throw ConfigError("model.cnn_grad_through_vit: expected a boolean");
    c.cnn_grad_through_vit = j.at("cnn_grad_through_vit").get<bool>();
  }
  if (j.contains("stem")) c.stem = parse_stem(j.at("stem").get<std::string>());
  if (j.contains("interaction_sites")) {
    if (!j.at("interaction_sites").is_array()) throw ConfigError("model.interaction_sites: expected an array");
    c.interaction_sites = j.at("interaction_sites").get<std::vector<InteractionSite>>();
  }
}

}  // namespace samct
