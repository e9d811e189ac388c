#pragma once

#include "samct/config.hpp"
#include "samct/layers.hpp"

#include <torch/torch.h>

#include <functional>
#include <map>
#include <set>

namespace samct::vit {

/// Bottleneck beside the feed-forward layer: down-projection by
/// `ratio`, GELU, up-projection. The up-projection starts at zero.
struct AdapterImpl : torch::nn::Module {
  AdapterImpl(int64_t dim, int64_t ratio);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear down{nullptr};
  torch::nn::Linear up{nullptr};
};
TORCH_MODULE(Adapter);

struct AttentionImpl : torch::nn::Module {
  AttentionImpl(int64_t dim, int64_t heads);
  /// x: N x G x G x dim, global attention over all G*G tokens.
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear qkv{nullptr};
  torch::nn::Linear proj{nullptr};
  int64_t heads;
};
TORCH_MODULE(Attention);

struct FeedForwardImpl : torch::nn::Module {
  FeedForwardImpl(int64_t dim, int64_t hidden);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear fc1{nullptr};
  torch::nn::Linear fc2{nullptr};
};
TORCH_MODULE(FeedForward);

/// Pre-norm transformer block. With an adapter the second residual branch is
/// feed_forward(h) + adapter(h) where h = norm2(x).
struct BlockImpl : torch::nn::Module {
  BlockImpl(int64_t dim, int64_t heads, int64_t mlp_ratio, int64_t adapter_ratio, bool with_adapter);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor adapted_feed_forward(const torch::Tensor& h);

  torch::nn::LayerNorm norm1{nullptr};
  Attention attn{nullptr};
  torch::nn::LayerNorm norm2{nullptr};
  FeedForward mlp{nullptr};
  Adapter adapter{nullptr};
};
TORCH_MODULE(Block);

/// Channel reduction from the ViT width to the decoder width.
struct NeckImpl : torch::nn::Module {
  NeckImpl(int64_t in, int64_t out);
  /// tokens N x G x G x in -> N x out x G x G
  torch::Tensor forward(const torch::Tensor& tokens);

  torch::nn::Conv2d conv1{nullptr};
  LayerNorm2d norm1{nullptr};
  torch::nn::Conv2d conv2{nullptr};
  LayerNorm2d norm2{nullptr};
};
TORCH_MODULE(Neck);

/// Called after a hooked block with its output tokens; returns the tokens the
/// next block should see.
using BlockHook = std::function<torch::Tensor(int block, const torch::Tensor& tokens)>;

struct EncodeResult {
  torch::Tensor embedding;              // N x neck_dim x G x G, after the neck
  std::map<int, torch::Tensor> taps;    // block -> N x G x G x embed_dim, post-hook
};

struct ViTEncoderImpl : torch::nn::Module {
  ViTEncoderImpl(const ModelConfig& config, bool with_adapters);

  /// image N x 3 x S x S with S = input_size -> tokens N x G x G x embed_dim,
  /// positional embedding added.
  torch::Tensor patchify(const torch::Tensor& image);

  /// Runs every block; at each block listed in `hooked` the hook replaces the
  /// running tokens before the next block.
  EncodeResult encode(const torch::Tensor& image, const std::set<int>& hooked = {}, const BlockHook& hook = {});

  ModelConfig config;
  torch::nn::Conv2d patch_embed{nullptr};
  torch::Tensor pos_embed;
  torch::nn::ModuleList blocks;
  Neck neck{nullptr};
};
TORCH_MODULE(ViTEncoder);

}  // namespace samct::vit
