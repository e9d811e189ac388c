#include "samct/layers.hpp"

namespace samct {

LayerNorm2dImpl::LayerNorm2dImpl(int64_t channels, double eps_) : eps(eps_) {
  weight = register_parameter("weight", torch::ones({channels}));
  bias = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor LayerNorm2dImpl::forward(const torch::Tensor& x) {
  const auto mean = x.mean(1, /*keepdim=*/true);
  const auto var = (x - mean).pow(2).mean(1, /*keepdim=*/true);
  const auto normed = (x - mean) / torch::sqrt(var + eps);
  return normed * weight.view({1, -1, 1, 1}) + bias.view({1, -1, 1, 1});
}

MlpImpl::MlpImpl(int64_t in, int64_t hidden, int64_t out, int layers) {
  for (int i = 0; i < layers; ++i) {
    const int64_t a = i == 0 ? in : hidden;
    const int64_t b = i == layers - 1 ? out : hidden;
    linears->push_back(torch::nn::Linear(a, b));
  }
  register_module("layers", linears);
}

torch::Tensor MlpImpl::forward(torch::Tensor x) {
  const size_t n = linears->size();
  for (size_t i = 0; i < n; ++i) {
    x = linears[i]->as<torch::nn::Linear>()->forward(x);
    if (i + 1 < n) x = torch::relu(x);
  }
  return x;
}

}  // namespace samct
