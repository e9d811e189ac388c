#pragma once

#include "samct/config.hpp"
#include "samct/layers.hpp"

#include <torch/torch.h>

#include <array>

namespace samct::cnn {

/// Pyramid produced by the U-shaped CNN branch, all N x C x h x w.
struct MultiScaleFeatures {
  torch::Tensor f16;         // 16 d_c x H/16 x W/16
  torch::Tensor f32;         //  8 d_c x H/8  x W/8
  torch::Tensor f64;         //  4 d_c x H/4  x W/4
  torch::Tensor f128;        //  2 d_c x H/2  x W/2
  torch::Tensor f256;        //    d_c x H    x W
  torch::Tensor full_res32;  //     32 x H    x W

  bool defined() const { return f16.defined(); }
};

/// 3x3 convolution, layer norm over channels, GELU.
struct ClgImpl : torch::nn::Module {
  ClgImpl(int64_t in, int64_t out, torch::nn::detail::conv_padding_mode_t padding = torch::kZeros);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  LayerNorm2d norm{nullptr};
};
TORCH_MODULE(Clg);

/// Parallel 3x3 and 5x5 convolutions blended per channel by a softmax
/// attention over the two branches (computed from global average pooling),
/// followed by layer norm and GELU. Replicate padding keeps a constant image
/// constant.
struct HybridAttentionStemImpl : torch::nn::Module {
  HybridAttentionStemImpl(int64_t in, int64_t out);
  torch::Tensor forward(const torch::Tensor& x);
  /// Blended conv output before normalization.
  torch::Tensor fused(const torch::Tensor& x);

  torch::nn::Conv2d conv3{nullptr};
  torch::nn::Conv2d conv5{nullptr};
  torch::nn::Linear squeeze{nullptr};
  torch::nn::Linear excite{nullptr};
  LayerNorm2d norm{nullptr};
  int64_t out_channels;
};
TORCH_MODULE(HybridAttentionStem);

struct DoubleConvStemImpl : torch::nn::Module {
  DoubleConvStemImpl(int64_t in, int64_t out);
  torch::Tensor forward(const torch::Tensor& x);

  Clg first{nullptr};
  Clg second{nullptr};
};
TORCH_MODULE(DoubleConvStem);

/// Max pool, then two CLGs; the first doubles the channels.
struct EncodeBlockImpl : torch::nn::Module {
  explicit EncodeBlockImpl(int64_t in);
  torch::Tensor forward(const torch::Tensor& x);

  Clg first{nullptr};
  Clg second{nullptr};
};
TORCH_MODULE(EncodeBlock);

/// Transposed conv (k=2, s=2) halving the channels, concatenation with the
/// skip map, then two CLGs at the halved width.
struct DecodeBlockImpl : torch::nn::Module {
  explicit DecodeBlockImpl(int64_t in);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& skip);

  torch::nn::ConvTranspose2d up{nullptr};
  Clg first{nullptr};
  Clg second{nullptr};
};
TORCH_MODULE(DecodeBlock);

/// Lazily evaluated CNN forward so interaction sites can rewrite a stage's
/// output before later stages consume it. Step 0 is the stem, 1..4 the
/// encoding blocks, 5..8 the decoding blocks.
struct StagedForward {
  torch::Tensor input;
  std::array<torch::Tensor, 9> maps;
  int computed = -1;
};

struct UNetEncoderImpl : torch::nn::Module {
  explicit UNetEncoderImpl(const ModelConfig& config);

  torch::Tensor stem_forward(const torch::Tensor& x);
  StagedForward begin(const torch::Tensor& x);
  /// Computes every step up to and including `step`.
  torch::Tensor& advance(StagedForward& state, int step);
  MultiScaleFeatures finish(StagedForward& state);

  MultiScaleFeatures encode(const torch::Tensor& x);

  ModelConfig config;
  HybridAttentionStem hybrid_stem{nullptr};
  DoubleConvStem plain_stem{nullptr};
  torch::nn::ModuleList encoders;
  torch::nn::ModuleList decoders;
  /// 1x1 projection of F256 to the fusion width.
  torch::nn::Conv2d fusion_proj{nullptr};
};
TORCH_MODULE(UNetEncoder);

/// Channel count at a CNN step for d_c base channels.
int64_t channels_at_step(int64_t base_channels, int step);
/// Downsampling factor at a CNN step.
int stride_at_step(int step);

}  // namespace samct::cnn
