#include "samct/decoder.hpp"

#include "samct/errors.hpp"

#include <cmath>

namespace samct::decoder {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

AttentionImpl::AttentionImpl(int64_t dim, int64_t heads_, int64_t downsample) : heads(heads_), internal_dim(dim / downsample) {
  if (internal_dim % heads != 0) throw ConfigError("decoder attention: internal width must be divisible by the head count");
  q_proj = register_module("q_proj", nn::Linear(dim, internal_dim));
  k_proj = register_module("k_proj", nn::Linear(dim, internal_dim));
  v_proj = register_module("v_proj", nn::Linear(dim, internal_dim));
  out_proj = register_module("out_proj", nn::Linear(internal_dim, dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& q_in, const torch::Tensor& k_in, const torch::Tensor& v_in) {
  auto split = [this](const torch::Tensor& x) {
    return x.view({x.size(0), x.size(1), heads, internal_dim / heads}).transpose(1, 2);
  };
  auto q = split(q_proj(q_in));
  auto k = split(k_proj(k_in));
  auto v = split(v_proj(v_in));
  auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(q.size(-1))), -1);
  auto out = torch::matmul(attn, v).transpose(1, 2).reshape({q_in.size(0), q_in.size(1), internal_dim});
  return out_proj(out);
}

TwoWayBlockImpl::TwoWayBlockImpl(int64_t dim, int64_t heads, int64_t mlp_dim, int64_t downsample, bool skip_pe)
    : skip_first_layer_pe(skip_pe) {
  self_attn = register_module("self_attn", Attention(dim, heads));
  norm1 = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({dim})));
  cross_token_to_image = register_module("cross_token_to_image", Attention(dim, heads, downsample));
  norm2 = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({dim})));
  mlp_in = register_module("mlp_in", nn::Linear(dim, mlp_dim));
  mlp_out = register_module("mlp_out", nn::Linear(mlp_dim, dim));
  norm3 = register_module("norm3", nn::LayerNorm(nn::LayerNormOptions({dim})));
  cross_image_to_token = register_module("cross_image_to_token", Attention(dim, heads, downsample));
  norm4 = register_module("norm4", nn::LayerNorm(nn::LayerNormOptions({dim})));
}

std::pair<torch::Tensor, torch::Tensor> TwoWayBlockImpl::forward(torch::Tensor queries, torch::Tensor keys, const torch::Tensor& query_pe,
                                                                 const torch::Tensor& key_pe) {
  if (skip_first_layer_pe) {
    queries = self_attn(queries, queries, queries);
  } else {
    auto q = queries + query_pe;
    queries = queries + self_attn(q, q, queries);
  }
  queries = norm1(queries);

  auto q = queries + query_pe;
  auto k = keys + key_pe;
  queries = norm2(queries + cross_token_to_image(q, k, keys));

  queries = norm3(queries + mlp_out(torch::relu(mlp_in(queries))));

  q = queries + query_pe;
  k = keys + key_pe;
  keys = norm4(keys + cross_image_to_token(k, q, queries));
  return {queries, keys};
}

TwoWayTransformerImpl::TwoWayTransformerImpl(int64_t depth, int64_t dim, int64_t heads, int64_t mlp_dim, int64_t downsample) {
  for (int64_t i = 0; i < depth; ++i) layers->push_back(TwoWayBlock(dim, heads, mlp_dim, downsample, i == 0));
  register_module("layers", layers);
  final_attn = register_module("final_attn", Attention(dim, heads, downsample));
  norm_final = register_module("norm_final", nn::LayerNorm(nn::LayerNormOptions({dim})));
}

std::pair<torch::Tensor, torch::Tensor> TwoWayTransformerImpl::forward(const torch::Tensor& image, const torch::Tensor& image_pe,
                                                                       const torch::Tensor& tokens) {
  auto keys = image.flatten(2).permute({0, 2, 1});
  auto key_pe = image_pe.flatten(2).permute({0, 2, 1});
  auto queries = tokens;
  for (auto& layer : *layers) std::tie(queries, keys) = layer->as<TwoWayBlock>()->forward(queries, keys, tokens, key_pe);
  auto q = queries + tokens;
  auto k = keys + key_pe;
  queries = norm_final(queries + final_attn(q, k, keys));
  return {queries, keys};
}

MaskDecoderImpl::MaskDecoderImpl(const ModelConfig& cfg) : config(cfg) {
  const int64_t d = config.neck_dim;
  if (d % 4 != 0) throw ConfigError("neck_dim must be divisible by 4 for the decoder upscaler");
  iou_token = register_parameter("iou_token", torch::randn({1, d}));
  mask_token = register_parameter("mask_token", torch::randn({1, d}));
  transformer = register_module("transformer", TwoWayTransformer(config.decoder_depth, d, config.decoder_heads, config.decoder_mlp_dim,
                                                                 config.decoder_attention_downsample));
  up1 = register_module("up1", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(d, d / 4, 2).stride(2)));
  up_norm = register_module("up_norm", LayerNorm2d(d / 4));
  up2 = register_module("up2", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(d / 4, config.fusion_channels, 2).stride(2)));
  hypernet = register_module("hypernet", Mlp(d, d, config.fusion_channels, 3));
  iou_head = register_module("iou_head", Mlp(d, d, 1, 3));
}

torch::Tensor MaskDecoderImpl::upscale(const torch::Tensor& image_tokens, int64_t grid) {
  auto src = image_tokens.transpose(1, 2).reshape({image_tokens.size(0), image_tokens.size(2), grid, grid});
  auto up = torch::gelu(up2(torch::gelu(up_norm(up1(src)))));
  const int64_t s = config.input_size;
  if (up.size(2) == s) return up;
  return F::interpolate(up, F::InterpolateFuncOptions().size(std::vector<int64_t>{s, s}).mode(torch::kBilinear).align_corners(false));
}

DecodeOutput MaskDecoderImpl::forward(const torch::Tensor& image_embedding, const torch::Tensor& image_pe, const prompt::PromptBundle& bundle,
                                      const torch::Tensor& full_res) {
  if (!bundle.sparse.defined() || bundle.tokens() == 0) throw std::invalid_argument("mask decoder: empty prompt bundle");
  bundle.validate();
  const int64_t n = image_embedding.size(0), d = config.neck_dim, g = config.grid_side();
  if (image_embedding.dim() != 4 || image_embedding.size(1) != d || image_embedding.size(2) != g || image_embedding.size(3) != g)
    throw std::invalid_argument("mask decoder: image embedding must be N x " + std::to_string(d) + " x " + std::to_string(g) + " x " +
                                std::to_string(g) + ", got " + c10::str(image_embedding.sizes()));
  if (bundle.batch() != n || bundle.sparse.size(2) != d)
    throw std::invalid_argument("mask decoder: prompt bundle " + c10::str(bundle.sparse.sizes()) + " does not match embedding batch " +
                                std::to_string(n) + " and width " + std::to_string(d));
  if (full_res.defined() && (full_res.size(0) != n || full_res.size(1) != config.fusion_channels || full_res.size(2) != config.input_size ||
                             full_res.size(3) != config.input_size))
    throw std::invalid_argument("mask decoder: full-resolution map must be N x " + std::to_string(config.fusion_channels) + " x H x W, got " +
                                c10::str(full_res.sizes()));

  auto output_tokens = torch::cat({iou_token, mask_token}, 0).unsqueeze(0).expand({n, -1, -1}).to(bundle.sparse.dtype());
  auto tokens = torch::cat({output_tokens, bundle.sparse}, 1);
  auto src = image_embedding;
  if (bundle.dense) src = src + *bundle.dense;
  auto [hs, image_tokens] = transformer(src, image_pe.to(src.dtype()), tokens);

  auto iou_out = hs.select(1, 0);
  auto mask_out = hs.select(1, 1);
  auto up = upscale(image_tokens, g);
  if (full_res.defined()) up = up + full_res;
  auto hyper = hypernet(mask_out);  // N x 32
  DecodeOutput out;
  out.logits = torch::einsum("nc,nchw->nhw", {hyper, up}).unsqueeze(1);
  out.iou = iou_head(iou_out).squeeze(-1);
  out.token_state = mask_out;
  return out;
}

torch::Tensor binarize(const torch::Tensor& logits, double threshold) { return (logits > threshold).to(torch::kUInt8); }

}  // namespace samct::decoder
