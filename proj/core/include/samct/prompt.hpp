#pragma once

#include "samct/cnn.hpp"
#include "samct/config.hpp"
#include "samct/grid.hpp"

#include <torch/torch.h>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace samct::prompt {

enum class PromptRole { kPositivePoint, kNegativePoint, kBoxCornerA, kBoxCornerB, kNotAPoint };
enum class PromptOrigin { kManual, kSynthesized, kTaskIndicator };

std::string to_string(PromptRole r);

/// Sparse and dense prompt embeddings for a batch whose samples share one
/// token layout.
struct PromptBundle {
  torch::Tensor sparse;              // N x T x D
  std::vector<PromptRole> roles;     // length T
  std::optional<torch::Tensor> dense;  // N x D x G x G
  PromptOrigin origin = PromptOrigin::kManual;

  int64_t batch() const { return sparse.size(0); }
  int64_t tokens() const { return sparse.size(1); }
  bool has_positive() const;
  /// Throws std::invalid_argument when not_a_point is mixed with positive
  /// roles, box corners are unpaired, or tensor shapes disagree with roles.
  void validate() const;
};

/// Manual prompts for one sample, in pixel index coordinates.
struct PromptSet {
  std::vector<Point> positive;
  std::vector<Point> negative;
  std::optional<Box> box;

  /// Token layout signature; sets with equal layouts can share a bundle.
  std::string layout() const;
  size_t element_count() const { return positive.size() + negative.size() + (box ? 1 : 0); }
};

/// Random Fourier features of coordinates normalised to [0, 1].
struct PositionEmbeddingRandomImpl : torch::nn::Module {
  explicit PositionEmbeddingRandomImpl(int64_t dim);
  /// coords ... x 2 in [0, 1] -> ... x dim
  torch::Tensor encode(const torch::Tensor& coords);
  /// 1 x dim x g x g, sampled at cell centres.
  torch::Tensor grid(int64_t g);

  torch::Tensor gaussian;  // 2 x dim/2, buffer
};
TORCH_MODULE(PositionEmbeddingRandom);

/// Manual prompt encoder: positional encoding plus a learned label vector.
struct PromptEncoderImpl : torch::nn::Module {
  PromptEncoderImpl(int64_t dim, int image_size, int grid);

  /// Pixel (x, y) maps to (x / W, y / H).
  std::array<double, 2> normalize(Point p) const;
  torch::Tensor encode_point(Point p, bool positive);
  /// 2 x D, corners (x0, y0) and (x1, y1).
  torch::Tensor encode_box(const Box& box);
  /// Sets must share one layout; tokens are positives, negatives, then box
  /// corners.
  PromptBundle encode(const std::vector<PromptSet>& sets);

  torch::Tensor not_a_point() const { return not_a_point_embed; }
  torch::Tensor corner_offset(bool second) const { return second ? box_corner_b : box_corner_a; }
  torch::Tensor dense_no_mask(int64_t n) const;
  torch::Tensor image_pe();

  PositionEmbeddingRandom pe{nullptr};
  torch::Tensor positive_label;
  torch::Tensor negative_label;
  torch::Tensor box_corner_a;
  torch::Tensor box_corner_b;
  torch::Tensor not_a_point_embed;
  torch::Tensor no_mask_embed;
  int64_t dim;
  int image_size;
  int grid_side;

 private:
  torch::Tensor pe_of(Point p);
  void check_bounds(Point p, const char* what) const;
};
TORCH_MODULE(PromptEncoder);

// ---------------------------------------------------------------------------
// Task indicator

struct IndicatorDims {
  int64_t dim = 64;      // prompt / decoder dimension
  int64_t hidden = 64;   // width of the output heads
  /// Input channels for F16, F32, F64, F128, F256 and F_vit.
  std::array<int64_t, 6> scale_channels{};

  static IndicatorDims from_config(const ModelConfig& config);
  /// Parameter count implied by the dimensions.
  int64_t parameter_count() const;
  bool operator==(const IndicatorDims&) const = default;
};

/// The six image embeddings consumed by the indicator.
struct IndicatorFeatures {
  cnn::MultiScaleFeatures cnn;
  torch::Tensor vit;  // N x D x G x G, after the neck
};

struct IndicatorOutput {
  torch::Tensor pe_plus;       // N x D
  torch::Tensor be_plus;       // N x D
  torch::Tensor pe_minus;      // N x D
  torch::Tensor class_logits;  // N x 2, (foreground, background)
  torch::Tensor p;             // softmax of class_logits
  torch::Tensor attn_plus;     // N x 12
  torch::Tensor attn_minus;    // N x 12
};

/// Max and average pooled tokens per projected embedding. F+ lists the max
/// tokens first, F- the average tokens first. Each is N x 12 x D.
std::pair<torch::Tensor, torch::Tensor> pool_embeddings(const std::vector<torch::Tensor>& projected);

struct TaskIndicatorImpl : torch::nn::Module {
  TaskIndicatorImpl(const IndicatorDims& dims, std::string task_id);

  /// Linear maps into the task space; channel-last N x h x w x D each.
  std::vector<torch::Tensor> project(const IndicatorFeatures& features);
  IndicatorOutput forward(const IndicatorFeatures& features);
  IndicatorOutput forward_pooled(const torch::Tensor& f_plus, const torch::Tensor& f_minus);

  IndicatorDims dims;
  std::string task_id;
  torch::Tensor indicator_plus;   // P+, 1 x D
  torch::Tensor indicator_minus;  // P-, 1 x D
  torch::nn::ModuleList projections;
  // Negative flow.
  torch::nn::Linear q_minus{nullptr}, k_minus{nullptr}, v_minus{nullptr}, e_minus{nullptr};
  torch::nn::Linear neg_hidden{nullptr}, neg_out{nullptr};
  // Positive flow; point and box heads share the attention.
  torch::nn::Linear q_plus{nullptr}, k_plus{nullptr}, v_plus{nullptr}, e_plus{nullptr};
  torch::nn::Linear pos_hidden{nullptr}, pos_out{nullptr};
  torch::nn::Linear box_hidden{nullptr}, box_out{nullptr};
  torch::nn::Linear classifier{nullptr};  // E_c, D -> 2
};
TORCH_MODULE(TaskIndicator);

/// p = (foreground, background); ties go to background.
bool indicates_foreground(const torch::Tensor& p);

/// Bundle for a single sample (all tensors unbatched, D-dimensional).
/// Foreground: Pe+ positive, Be+ as the corner pair (plus the frozen corner
/// offsets), Pe- negative. Background: Ne then Pe-.
PromptBundle gate_and_bundle(const torch::Tensor& pe_plus, const torch::Tensor& be_plus, const torch::Tensor& pe_minus,
                             const torch::Tensor& p, PromptEncoderImpl& manual);

/// Batched gating. Samples are split by decision; `as_foreground` overrides
/// the classifier (used for teacher-forced training).
struct GatedBundles {
  std::vector<int64_t> foreground_index;
  std::vector<int64_t> background_index;
  std::optional<PromptBundle> foreground;
  std::optional<PromptBundle> background;
};
GatedBundles gate_batch(const IndicatorOutput& out, PromptEncoderImpl& manual, const std::optional<std::vector<bool>>& as_foreground = {});

}  // namespace samct::prompt
