#include "samct/interaction.hpp"

#include "samct/errors.hpp"

#include <cmath>

namespace samct::interaction {
namespace nn = torch::nn;

WindowAlignment align(const torch::Tensor& f_cnn, const torch::Tensor& f_trans, const std::string& site) {
  if (f_cnn.dim() != 4 || f_trans.dim() != 4)
    throw std::invalid_argument(site + ": expected f_cnn N x C x h x w and f_trans N x G x G x d_p");
  const auto h = f_cnn.size(2), w = f_cnn.size(3);
  const auto g = f_trans.size(1);
  if (f_trans.size(2) != g) throw ConfigError(site + ": ViT grid must be square, got " + c10::str(f_trans.sizes()));
  if (h != w) throw ConfigError(site + ": CNN map must be square, got " + std::to_string(h) + "x" + std::to_string(w));
  if (h < g || h % g != 0)
    throw ConfigError(site + ": CNN map side " + std::to_string(h) + " is not an integer multiple of the ViT grid side " +
                      std::to_string(g));
  if (f_cnn.size(0) != f_trans.size(0)) throw std::invalid_argument(site + ": batch sizes differ");
  WindowAlignment a;
  a.k = static_cast<int>(h / g);
  a.grid = static_cast<int>(g);
  a.cnn_channels = f_cnn.size(1);
  a.patch_dim = f_trans.size(3);
  return a;
}

torch::Tensor to_windows(const torch::Tensor& f_cnn, int k) {
  const auto n = f_cnn.size(0), c = f_cnn.size(1), g = f_cnn.size(2) / k;
  return f_cnn.reshape({n, c, g, k, g, k}).permute({0, 2, 4, 3, 5, 1}).reshape({n, g, g, k * k, c});
}

torch::Tensor from_windows(const torch::Tensor& windows, int k) {
  const auto n = windows.size(0), g = windows.size(1), c = windows.size(4);
  return windows.reshape({n, g, g, k, k, c}).permute({0, 5, 1, 3, 2, 4}).reshape({n, c, g * k, g * k});
}

torch::Tensor rescale_fine_attention(const torch::Tensor& a_w, int k) {
  return torch::sigmoid(a_w - 1.0 / static_cast<double>(k * k)) + 0.5;
}

CrossBranchImpl::CrossBranchImpl(int64_t d_p, int64_t d_w) : patch_dim(d_p), cnn_channels(d_w) {
  query = register_module("query", nn::Linear(nn::LinearOptions(d_p, d_p).bias(false)));
  key = register_module("key", nn::Linear(nn::LinearOptions(d_w, d_p).bias(false)));
  value = register_module("value", nn::Linear(nn::LinearOptions(d_w, d_p).bias(false)));
  out_proj = register_module("out_proj", nn::Linear(d_p, d_p));
  window_proj = register_module("window_proj", nn::Linear(nn::LinearOptions(d_w, d_p).bias(false)));
  coarse_scale = register_parameter("coarse_scale", torch::zeros({1}));
  coarse_bias = register_parameter("coarse_bias", torch::zeros({1}));
  torch::NoGradGuard no_grad;
  out_proj->weight.zero_();
  out_proj->bias.zero_();
  window_proj->weight.zero_();
}

torch::Tensor CrossBranchImpl::window_attention_weights(const torch::Tensor& f_trans, const torch::Tensor& f_cnn) {
  const auto a = align(f_cnn, f_trans);
  auto windows = to_windows(f_cnn, a.k);                    // N G G k2 d_w
  auto q = query(f_trans).unsqueeze(-1);                    // N G G d_p 1
  auto keys = key(windows);                                 // N G G k2 d_p
  auto scores = torch::matmul(keys, q).squeeze(-1) / std::sqrt(static_cast<double>(patch_dim));
  return torch::softmax(scores, -1);
}

torch::Tensor CrossBranchImpl::window_attention(const torch::Tensor& f_trans, const torch::Tensor& f_cnn) {
  const auto a = align(f_cnn, f_trans);
  auto weights = window_attention_weights(f_trans, f_cnn).unsqueeze(-2);  // N G G 1 k2
  auto values = value(to_windows(f_cnn, a.k));                            // N G G k2 d_p
  return torch::matmul(weights, values).squeeze(-2);
}

torch::Tensor CrossBranchImpl::cnn_to_transformer(const torch::Tensor& f_trans, const torch::Tensor& f_cnn) {
  return f_trans + out_proj(window_attention(f_trans, f_cnn));
}

torch::Tensor CrossBranchImpl::fine_softmax(const torch::Tensor& f_trans, const torch::Tensor& f_cnn) {
  const auto a = align(f_cnn, f_trans);
  auto projected = window_proj(to_windows(f_cnn, a.k));  // N G G k2 d_p
  auto scores = torch::matmul(projected, f_trans.unsqueeze(-1)).squeeze(-1) / std::sqrt(static_cast<double>(patch_dim));
  return torch::softmax(scores, -1);
}

torch::Tensor CrossBranchImpl::fine_attention(const torch::Tensor& f_trans, const torch::Tensor& f_cnn) {
  const auto a = align(f_cnn, f_trans);
  return rescale_fine_attention(fine_softmax(f_trans, f_cnn), a.k);
}

torch::Tensor CrossBranchImpl::coarse_attention(const torch::Tensor& f_trans) {
  auto pooled = 0.5 * (std::get<0>(f_trans.max(-1)) + f_trans.mean(-1));  // N G G
  return torch::sigmoid(pooled * coarse_scale + coarse_bias) + 0.5;
}

torch::Tensor CrossBranchImpl::transformer_to_cnn(const torch::Tensor& f_trans, const torch::Tensor& f_cnn) {
  const auto a = align(f_cnn, f_trans);
  auto refined = fine_attention(f_trans, f_cnn) * coarse_attention(f_trans).unsqueeze(-1);  // N G G k2
  auto windows = to_windows(f_cnn, a.k) * refined.unsqueeze(-1);
  return from_windows(windows, a.k);
}

std::pair<torch::Tensor, torch::Tensor> CrossBranchImpl::forward(const torch::Tensor& f_cnn, const torch::Tensor& f_trans) {
  auto new_trans = cnn_to_transformer(f_trans, detach_cnn_input ? f_cnn.detach() : f_cnn);
  auto new_cnn = transformer_to_cnn(f_trans, f_cnn);
  return {new_cnn, new_trans};
}

}  // namespace samct::interaction
