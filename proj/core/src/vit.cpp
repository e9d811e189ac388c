#include "samct/vit.hpp"

#include "samct/errors.hpp"

#include <cmath>

namespace samct::vit {
namespace nn = torch::nn;

AdapterImpl::AdapterImpl(int64_t dim, int64_t ratio) {
  if (ratio <= 0 || dim % ratio != 0) throw ConfigError("adapter: ratio must divide the embedding dimension");
  down = register_module("down", nn::Linear(dim, dim / ratio));
  up = register_module("up", nn::Linear(dim / ratio, dim));
  torch::NoGradGuard no_grad;
  up->weight.zero_();
  up->bias.zero_();
}

torch::Tensor AdapterImpl::forward(const torch::Tensor& x) { return up(torch::gelu(down(x))); }

AttentionImpl::AttentionImpl(int64_t dim, int64_t heads_) : heads(heads_) {
  qkv = register_module("qkv", nn::Linear(dim, 3 * dim));
  proj = register_module("proj", nn::Linear(dim, dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& x) {
  const auto n = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
  const auto head_dim = c / heads;
  // N x L x 3 x heads x hd -> 3 x N x heads x L x hd
  auto qkv_t = qkv(x.reshape({n, h * w, c})).reshape({n, h * w, 3, heads, head_dim}).permute({2, 0, 3, 1, 4});
  auto q = qkv_t[0], k = qkv_t[1], v = qkv_t[2];
  auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim)), -1);
  auto out = torch::matmul(attn, v).permute({0, 2, 1, 3}).reshape({n, h, w, c});
  return proj(out);
}

FeedForwardImpl::FeedForwardImpl(int64_t dim, int64_t hidden) {
  fc1 = register_module("fc1", nn::Linear(dim, hidden));
  fc2 = register_module("fc2", nn::Linear(hidden, dim));
}

torch::Tensor FeedForwardImpl::forward(const torch::Tensor& x) { return fc2(torch::gelu(fc1(x))); }

BlockImpl::BlockImpl(int64_t dim, int64_t heads, int64_t mlp_ratio, int64_t adapter_ratio, bool with_adapter) {
  norm1 = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({dim}).eps(1e-6)));
  attn = register_module("attn", Attention(dim, heads));
  norm2 = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({dim}).eps(1e-6)));
  mlp = register_module("mlp", FeedForward(dim, dim * mlp_ratio));
  if (with_adapter) adapter = register_module("adapter", Adapter(dim, adapter_ratio));
}

torch::Tensor BlockImpl::adapted_feed_forward(const torch::Tensor& h) {
  auto out = mlp(h);
  if (!adapter.is_empty()) out = out + adapter(h);
  return out;
}

torch::Tensor BlockImpl::forward(const torch::Tensor& x) {
  auto y = x + attn(norm1(x));
  return y + adapted_feed_forward(norm2(y));
}

NeckImpl::NeckImpl(int64_t in, int64_t out) {
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 1).bias(false)));
  norm1 = register_module("norm1", LayerNorm2d(out));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1).bias(false)));
  norm2 = register_module("norm2", LayerNorm2d(out));
}

torch::Tensor NeckImpl::forward(const torch::Tensor& tokens) {
  auto x = tokens.permute({0, 3, 1, 2});
  return norm2(conv2(norm1(conv1(x))));
}

ViTEncoderImpl::ViTEncoderImpl(const ModelConfig& cfg, bool with_adapters) : config(cfg) {
  config.validate();
  const int64_t d = config.embed_dim;
  const int64_t g = config.grid_side();
  patch_embed = register_module("patch_embed", nn::Conv2d(nn::Conv2dOptions(3, d, config.patch_size).stride(config.patch_size)));
  pos_embed = register_parameter("pos_embed", torch::randn({1, g, g, d}) * 0.02);
  for (int i = 0; i < config.depth; ++i)
    blocks->push_back(Block(d, config.heads, config.mlp_ratio, config.adapter_ratio, with_adapters));
  register_module("blocks", blocks);
  neck = register_module("neck", Neck(d, config.neck_dim));
}

torch::Tensor ViTEncoderImpl::patchify(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3 || image.size(2) != config.input_size || image.size(3) != config.input_size)
    throw std::invalid_argument("patchify: expected N x 3 x " + std::to_string(config.input_size) + " x " +
                                std::to_string(config.input_size) + " input, got " + c10::str(image.sizes()));
  return patch_embed(image).permute({0, 2, 3, 1}) + pos_embed;
}

EncodeResult ViTEncoderImpl::encode(const torch::Tensor& image, const std::set<int>& hooked, const BlockHook& hook) {
  for (int b : hooked)
    if (b < 0 || b >= config.depth) throw ConfigError("vit.encode: interaction site at block " + std::to_string(b) + " is out of range");
  EncodeResult result;
  auto x = patchify(image);
  for (int i = 0; i < config.depth; ++i) {
    x = blocks[i]->as<Block>()->forward(x);
    if (hooked.contains(i)) {
      if (hook) x = hook(i, x);
      result.taps[i] = x;
    }
  }
  result.embedding = neck(x);
  return result;
}

}  // namespace samct::vit
