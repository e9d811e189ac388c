#pragma once

#include "samct/config.hpp"
#include "samct/layers.hpp"
#include "samct/prompt.hpp"

#include <torch/torch.h>

namespace samct::decoder {

/// Multi-head attention with an optional internal width reduction.
struct AttentionImpl : torch::nn::Module {
  AttentionImpl(int64_t dim, int64_t heads, int64_t downsample = 1);
  /// q: N x Nq x dim, k and v: N x Nk x dim.
  torch::Tensor forward(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v);

  torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};
  int64_t heads;
  int64_t internal_dim;
};
TORCH_MODULE(Attention);

/// Token self-attention, token-to-image, MLP, image-to-token.
struct TwoWayBlockImpl : torch::nn::Module {
  TwoWayBlockImpl(int64_t dim, int64_t heads, int64_t mlp_dim, int64_t downsample, bool skip_first_layer_pe);
  std::pair<torch::Tensor, torch::Tensor> forward(torch::Tensor queries, torch::Tensor keys, const torch::Tensor& query_pe,
                                                  const torch::Tensor& key_pe);

  Attention self_attn{nullptr};
  torch::nn::LayerNorm norm1{nullptr};
  Attention cross_token_to_image{nullptr};
  torch::nn::LayerNorm norm2{nullptr};
  torch::nn::Linear mlp_in{nullptr}, mlp_out{nullptr};
  torch::nn::LayerNorm norm3{nullptr};
  Attention cross_image_to_token{nullptr};
  torch::nn::LayerNorm norm4{nullptr};
  bool skip_first_layer_pe;
};
TORCH_MODULE(TwoWayBlock);

struct TwoWayTransformerImpl : torch::nn::Module {
  TwoWayTransformerImpl(int64_t depth, int64_t dim, int64_t heads, int64_t mlp_dim, int64_t downsample);
  /// image N x D x G x G, image_pe 1 x D x G x G, tokens N x T x D.
  /// Returns (tokens N x T x D, image tokens N x G^2 x D).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& image, const torch::Tensor& image_pe, const torch::Tensor& tokens);

  torch::nn::ModuleList layers;
  Attention final_attn{nullptr};
  torch::nn::LayerNorm norm_final{nullptr};
};
TORCH_MODULE(TwoWayTransformer);

struct DecodeOutput {
  torch::Tensor logits;       // N x 1 x H x W
  torch::Tensor iou;          // N
  torch::Tensor token_state;  // N x D
};

/// Single-mask decoder. The upscaled ViT embedding is resized to the input
/// resolution and summed with the CNN's 32-channel map before the dot product
/// with the hypernetwork output of the mask token.
struct MaskDecoderImpl : torch::nn::Module {
  explicit MaskDecoderImpl(const ModelConfig& config);

  /// image_embedding N x D x G x G; image_pe 1 x D x G x G; full_res N x 32 x H x W
  /// or undefined (no fusion).
  DecodeOutput forward(const torch::Tensor& image_embedding, const torch::Tensor& image_pe, const prompt::PromptBundle& bundle,
                       const torch::Tensor& full_res);

  /// Upscaled image map N x 32 x H x W before fusion, from transformer output.
  torch::Tensor upscale(const torch::Tensor& image_tokens, int64_t grid);

  ModelConfig config;
  torch::Tensor iou_token;   // 1 x D
  torch::Tensor mask_token;  // 1 x D
  TwoWayTransformer transformer{nullptr};
  torch::nn::ConvTranspose2d up1{nullptr};
  LayerNorm2d up_norm{nullptr};
  torch::nn::ConvTranspose2d up2{nullptr};
  Mlp hypernet{nullptr};
  Mlp iou_head{nullptr};
};
TORCH_MODULE(MaskDecoder);

/// logits > threshold, as a uint8 tensor of the same shape.
torch::Tensor binarize(const torch::Tensor& logits, double threshold = 0.0);

}  // namespace samct::decoder
