#pragma once

#include <torch/torch.h>

#include <string>
#include <utility>

namespace samct::interaction {

/// Patch (gy, gx) of the ViT grid owns the k x k block of CNN pixels
/// rows [gy*k, gy*k+k) and columns [gx*k, gx*k+k). Patches are numbered
/// row-major.
struct WindowAlignment {
  int k = 1;
  int grid = 1;
  int64_t cnn_channels = 0;  // d_w
  int64_t patch_dim = 0;     // d_p

  int patch_of_pixel(int y, int x) const { return (y / k) * grid + (x / k); }
  int window_count() const { return grid * grid; }
};

/// f_cnn: N x d_w x h x w, f_trans: N x G x G x d_p. Throws ConfigError,
/// naming `site`, unless h == w == k * G for an integer k >= 1.
WindowAlignment align(const torch::Tensor& f_cnn, const torch::Tensor& f_trans, const std::string& site = "interaction");

/// N x d_w x (kG) x (kG) -> N x G x G x k^2 x d_w, window positions row-major.
torch::Tensor to_windows(const torch::Tensor& f_cnn, int k);
/// Inverse of to_windows.
torch::Tensor from_windows(const torch::Tensor& windows, int k);

/// sigmoid(a - 1/k^2) + 0.5 applied elementwise to the window softmax.
torch::Tensor rescale_fine_attention(const torch::Tensor& a_w, int k);

/// One interaction site. Both flows read the pre-update inputs.
struct CrossBranchImpl : torch::nn::Module {
  CrossBranchImpl(int64_t patch_dim, int64_t cnn_channels);

  /// forward() feeds the CNN -> Transformer path a detached CNN map.
  bool detach_cnn_input = false;

  /// CNN -> Transformer: per patch, cross-attention from the patch to its
  /// window, added back through a zero-initialised projection.
  torch::Tensor cnn_to_transformer(const torch::Tensor& f_trans, const torch::Tensor& f_cnn);
  /// Window cross-attention result before projection, N x G x G x d_p.
  torch::Tensor window_attention(const torch::Tensor& f_trans, const torch::Tensor& f_cnn);
  /// Softmax weights of the cross-attention, N x G x G x k^2.
  torch::Tensor window_attention_weights(const torch::Tensor& f_trans, const torch::Tensor& f_cnn);

  /// Transformer -> CNN: each window is scaled by fine(A*_w) x coarse(A*_p).
  torch::Tensor transformer_to_cnn(const torch::Tensor& f_trans, const torch::Tensor& f_cnn);
  /// A_w, N x G x G x k^2.
  torch::Tensor fine_softmax(const torch::Tensor& f_trans, const torch::Tensor& f_cnn);
  /// A*_w in (0.5, 1.5), N x G x G x k^2.
  torch::Tensor fine_attention(const torch::Tensor& f_trans, const torch::Tensor& f_cnn);
  /// A*_p in (0.5, 1.5), N x G x G: mean of channel max and channel average
  /// of each patch, through a learned scalar affine and a shifted sigmoid.
  torch::Tensor coarse_attention(const torch::Tensor& f_trans);

  /// Returns (f_cnn', f_trans').
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& f_cnn, const torch::Tensor& f_trans);

  torch::nn::Linear query{nullptr};      // E_q, d_p -> d_p
  torch::nn::Linear key{nullptr};        // E_k, d_w -> d_p
  torch::nn::Linear value{nullptr};      // E_v, d_w -> d_p
  torch::nn::Linear out_proj{nullptr};   // F_c -> patch update, zero init
  torch::nn::Linear window_proj{nullptr};  // E_w, d_w -> d_p
  torch::Tensor coarse_scale;
  torch::Tensor coarse_bias;
  int64_t patch_dim;
  int64_t cnn_channels;
};
TORCH_MODULE(CrossBranch);

}  // namespace samct::interaction
