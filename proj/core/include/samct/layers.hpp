#pragma once

#include <torch/torch.h>

namespace samct {

/// Layer normalization over the channel axis of an N x C x H x W map, applied
/// independently at each spatial site.
struct LayerNorm2dImpl : torch::nn::Module {
  explicit LayerNorm2dImpl(int64_t channels, double eps = 1e-6);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight;
  torch::Tensor bias;
  double eps;
};
TORCH_MODULE(LayerNorm2d);

/// Plain multilayer perceptron; ReLU between layers, none after the last.
struct MlpImpl : torch::nn::Module {
  MlpImpl(int64_t in, int64_t hidden, int64_t out, int layers);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::ModuleList linears;
};
TORCH_MODULE(Mlp);


}  // namespace samct
