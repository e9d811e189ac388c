#pragma once

#include "samct/config.hpp"

namespace fixture {

/// 32x32 model small enough for a few optimizer steps inside a unit test.
inline samct::ModelConfig tiny_config() {
  auto cfg = samct::toy_profile();
  cfg.input_size = 32;
  cfg.patch_size = 4;
  cfg.embed_dim = 16;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.neck_dim = 16;
  cfg.cnn_channels = 4;
  cfg.decoder_mlp_dim = 32;
  cfg.indicator_hidden = 16;
  cfg.interaction_sites = {{0, samct::CnnSide::kEncoder, 2}, {1, samct::CnnSide::kEncoder, 4}};
  return cfg;
}

}  // namespace fixture
