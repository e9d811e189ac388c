#include "samct/prompt.hpp"

#include "samct/errors.hpp"
#include "samct/layers.hpp"

#include <cmath>
#include <numbers>

namespace samct::prompt {
namespace nn = torch::nn;

std::string to_string(PromptRole r) {
  switch (r) {
    case PromptRole::kPositivePoint: return "positive_point";
    case PromptRole::kNegativePoint: return "negative_point";
    case PromptRole::kBoxCornerA: return "box_corner_a";
    case PromptRole::kBoxCornerB: return "box_corner_b";
    case PromptRole::kNotAPoint: return "not_a_point";
  }
  return "?";
}

bool PromptBundle::has_positive() const {
  for (auto r : roles)
    if (r == PromptRole::kPositivePoint || r == PromptRole::kBoxCornerA || r == PromptRole::kBoxCornerB) return true;
  return false;
}

void PromptBundle::validate() const {
  if (!sparse.defined() || sparse.dim() != 3) throw std::invalid_argument("PromptBundle: sparse must be N x T x D");
  if (sparse.size(1) != static_cast<int64_t>(roles.size()))
    throw std::invalid_argument("PromptBundle: " + std::to_string(roles.size()) + " roles for " + std::to_string(sparse.size(1)) + " tokens");
  bool not_a_point = false;
  for (size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] == PromptRole::kNotAPoint) not_a_point = true;
    if (roles[i] == PromptRole::kBoxCornerA && (i + 1 >= roles.size() || roles[i + 1] != PromptRole::kBoxCornerB))
      throw std::invalid_argument("PromptBundle: box_corner_a without a following box_corner_b");
    if (roles[i] == PromptRole::kBoxCornerB && (i == 0 || roles[i - 1] != PromptRole::kBoxCornerA))
      throw std::invalid_argument("PromptBundle: box_corner_b without a preceding box_corner_a");
  }
  if (not_a_point && has_positive()) throw std::invalid_argument("PromptBundle: not_a_point mixed with positive prompts");
  if (dense && (dense->dim() != 4 || dense->size(0) != sparse.size(0) || dense->size(1) != sparse.size(2)))
    throw std::invalid_argument("PromptBundle: dense embedding must be N x D x G x G");
}

std::string PromptSet::layout() const {
  return "p" + std::to_string(positive.size()) + "n" + std::to_string(negative.size()) + (box ? "b" : "");
}

PositionEmbeddingRandomImpl::PositionEmbeddingRandomImpl(int64_t dim) {
  gaussian = register_buffer("gaussian", torch::randn({2, dim / 2}));
}

torch::Tensor PositionEmbeddingRandomImpl::encode(const torch::Tensor& coords) {
  auto c = (2.0 * coords - 1.0).matmul(gaussian.to(coords.dtype())) * (2.0 * std::numbers::pi);
  return torch::cat({torch::sin(c), torch::cos(c)}, -1);
}

torch::Tensor PositionEmbeddingRandomImpl::grid(int64_t g) {
  auto opts = torch::TensorOptions().dtype(gaussian.dtype());
  auto centers = (torch::arange(g, opts) + 0.5) / static_cast<double>(g);
  auto ys = centers.view({g, 1}).expand({g, g});
  auto xs = centers.view({1, g}).expand({g, g});
  auto pe = encode(torch::stack({xs, ys}, -1));  // g x g x dim
  return pe.permute({2, 0, 1}).unsqueeze(0);
}

PromptEncoderImpl::PromptEncoderImpl(int64_t dim_, int image_size_, int grid_) : dim(dim_), image_size(image_size_), grid_side(grid_) {
  if (dim % 2 != 0) throw ConfigError("prompt encoder: dimension must be even");
  pe = register_module("pe", PositionEmbeddingRandom(dim));
  negative_label = register_parameter("negative_label", torch::randn({dim}));
  positive_label = register_parameter("positive_label", torch::randn({dim}));
  box_corner_a = register_parameter("box_corner_a", torch::randn({dim}));
  box_corner_b = register_parameter("box_corner_b", torch::randn({dim}));
  not_a_point_embed = register_parameter("not_a_point", torch::randn({dim}));
  no_mask_embed = register_parameter("no_mask", torch::randn({dim}));
}

void PromptEncoderImpl::check_bounds(Point p, const char* what) const {
  if (p.x < 0 || p.y < 0 || p.x >= image_size || p.y >= image_size)
    throw std::invalid_argument(std::string(what) + ": (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside the " +
                                std::to_string(image_size) + "x" + std::to_string(image_size) + " image");
}

std::array<double, 2> PromptEncoderImpl::normalize(Point p) const {
  return {static_cast<double>(p.x) / image_size, static_cast<double>(p.y) / image_size};
}

torch::Tensor PromptEncoderImpl::pe_of(Point p) {
  const auto xy = normalize(p);
  auto coords = torch::tensor({xy[0], xy[1]}, torch::TensorOptions().dtype(pe->gaussian.dtype()));
  return pe->encode(coords);
}

torch::Tensor PromptEncoderImpl::encode_point(Point p, bool positive) {
  check_bounds(p, "encode_point");
  return pe_of(p) + (positive ? positive_label : negative_label);
}

torch::Tensor PromptEncoderImpl::encode_box(const Box& box) {
  check_bounds({box.x0, box.y0}, "encode_box");
  check_bounds({box.x1, box.y1}, "encode_box");
  if (box.x0 >= box.x1 || box.y0 >= box.y1)
    throw std::invalid_argument("encode_box: corners must satisfy x0 < x1 and y0 < y1, got (" + std::to_string(box.x0) + ", " +
                                std::to_string(box.y0) + ", " + std::to_string(box.x1) + ", " + std::to_string(box.y1) + ")");
  return torch::stack({pe_of({box.x0, box.y0}) + box_corner_a, pe_of({box.x1, box.y1}) + box_corner_b});
}

PromptBundle PromptEncoderImpl::encode(const std::vector<PromptSet>& sets) {
  if (sets.empty()) throw std::invalid_argument("PromptEncoder::encode: no prompt sets");
  const std::string layout = sets.front().layout();
  if (sets.front().element_count() == 0) throw std::invalid_argument("PromptEncoder::encode: empty prompt set");
  PromptBundle bundle;
  const auto& first = sets.front();
  bundle.roles.insert(bundle.roles.end(), first.positive.size(), PromptRole::kPositivePoint);
  bundle.roles.insert(bundle.roles.end(), first.negative.size(), PromptRole::kNegativePoint);
  if (first.box) {
    bundle.roles.push_back(PromptRole::kBoxCornerA);
    bundle.roles.push_back(PromptRole::kBoxCornerB);
  }
  std::vector<torch::Tensor> rows;
  rows.reserve(sets.size());
  for (const auto& s : sets) {
    if (s.layout() != layout) throw std::invalid_argument("PromptEncoder::encode: mixed layouts " + layout + " and " + s.layout());
    std::vector<torch::Tensor> tokens;
    for (const auto& p : s.positive) tokens.push_back(encode_point(p, true));
    for (const auto& p : s.negative) tokens.push_back(encode_point(p, false));
    if (s.box) {
      auto corners = encode_box(*s.box);
      tokens.push_back(corners[0]);
      tokens.push_back(corners[1]);
    }
    rows.push_back(torch::stack(tokens));
  }
  bundle.sparse = torch::stack(rows);
  bundle.dense = dense_no_mask(static_cast<int64_t>(sets.size()));
  bundle.origin = PromptOrigin::kManual;
  bundle.validate();
  return bundle;
}

torch::Tensor PromptEncoderImpl::dense_no_mask(int64_t n) const {
  return no_mask_embed.view({1, dim, 1, 1}).expand({n, dim, grid_side, grid_side});
}

torch::Tensor PromptEncoderImpl::image_pe() { return pe->grid(grid_side); }

// ---------------------------------------------------------------------------

IndicatorDims IndicatorDims::from_config(const ModelConfig& c) {
  IndicatorDims d;
  d.dim = c.neck_dim;
  d.hidden = c.indicator_hidden;
  const int64_t b = c.cnn_channels;
  d.scale_channels = {16 * b, 8 * b, 4 * b, 2 * b, b, c.neck_dim};
  return d;
}

int64_t IndicatorDims::parameter_count() const {
  int64_t n = 2 * dim;                                    // P+ and P-
  for (auto c : scale_channels) n += c * dim + dim;       // projections
  n += 8 * dim * dim;                                     // E_q, E_k, E_v, E_+/- for both flows
  n += 3 * (dim * hidden + hidden * dim);                 // Pe-, Pe+, Be+ heads
  n += dim * 2;                                           // E_c
  return n;
}

std::pair<torch::Tensor, torch::Tensor> pool_embeddings(const std::vector<torch::Tensor>& projected) {
  if (projected.size() != 6) throw std::invalid_argument("pool_embeddings: expected 6 embeddings, got " + std::to_string(projected.size()));
  std::vector<torch::Tensor> max_tokens, avg_tokens;
  for (size_t i = 0; i < projected.size(); ++i) {
    const auto& f = projected[i];
    if (!f.defined() || f.dim() != 4) throw std::invalid_argument("pool_embeddings: embedding " + std::to_string(i) + " missing or not N x h x w x D");
    auto flat = f.flatten(1, 2);  // N x hw x D
    max_tokens.push_back(std::get<0>(flat.max(1)));
    avg_tokens.push_back(flat.mean(1));
  }
  auto maxes = torch::stack(max_tokens, 1);
  auto avgs = torch::stack(avg_tokens, 1);
  return {torch::cat({maxes, avgs}, 1), torch::cat({avgs, maxes}, 1)};
}

TaskIndicatorImpl::TaskIndicatorImpl(const IndicatorDims& d, std::string id) : dims(d), task_id(std::move(id)) {
  const int64_t D = dims.dim;
  const int64_t H = dims.hidden;
  auto lin = [](int64_t a, int64_t b) { return nn::Linear(nn::LinearOptions(a, b).bias(false)); };
  indicator_plus = register_parameter("indicator_plus", torch::randn({1, D}) * 0.02);
  indicator_minus = register_parameter("indicator_minus", torch::randn({1, D}) * 0.02);
  for (auto c : dims.scale_channels) projections->push_back(nn::Linear(c, D));
  register_module("projections", projections);
  q_minus = register_module("q_minus", lin(D, D));
  k_minus = register_module("k_minus", lin(D, D));
  v_minus = register_module("v_minus", lin(D, D));
  e_minus = register_module("e_minus", lin(D, D));
  neg_hidden = register_module("neg_hidden", lin(D, H));
  neg_out = register_module("neg_out", lin(H, D));
  q_plus = register_module("q_plus", lin(D, D));
  k_plus = register_module("k_plus", lin(D, D));
  v_plus = register_module("v_plus", lin(D, D));
  e_plus = register_module("e_plus", lin(D, D));
  pos_hidden = register_module("pos_hidden", lin(D, H));
  pos_out = register_module("pos_out", lin(H, D));
  box_hidden = register_module("box_hidden", lin(D, H));
  box_out = register_module("box_out", lin(H, D));
  classifier = register_module("classifier", lin(D, 2));
}

std::vector<torch::Tensor> TaskIndicatorImpl::project(const IndicatorFeatures& f) {
  if (!f.cnn.defined() || !f.vit.defined()) throw std::invalid_argument("task indicator: CNN pyramid and ViT embedding are required");
  const std::array<torch::Tensor, 6> maps = {f.cnn.f16, f.cnn.f32, f.cnn.f64, f.cnn.f128, f.cnn.f256, f.vit};
  std::vector<torch::Tensor> out;
  for (size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].size(1) != dims.scale_channels[i])
      throw std::invalid_argument("task indicator: embedding " + std::to_string(i) + " has " + std::to_string(maps[i].size(1)) +
                                  " channels, expected " + std::to_string(dims.scale_channels[i]));
    out.push_back(projections[i]->as<nn::Linear>()->forward(maps[i].permute({0, 2, 3, 1})));
  }
  return out;
}

IndicatorOutput TaskIndicatorImpl::forward_pooled(const torch::Tensor& f_plus, const torch::Tensor& f_minus) {
  const double scale = std::sqrt(static_cast<double>(dims.dim));
  IndicatorOutput out;
  // Negative flow.
  auto qm = q_minus(indicator_minus).unsqueeze(0);                                           // 1 x 1 x D
  auto a_minus = torch::softmax(torch::matmul(qm, k_minus(f_minus).transpose(1, 2)) / scale, -1);  // N x 1 x 12
  auto ctx_minus = torch::matmul(a_minus, v_minus(f_minus)).squeeze(1);                     // N x D
  out.pe_minus = neg_out(torch::gelu(neg_hidden(e_minus(ctx_minus))));
  // Positive flow.
  auto qp = q_plus(indicator_plus).unsqueeze(0);
  auto a_plus = torch::softmax(torch::matmul(qp, k_plus(f_plus).transpose(1, 2)) / scale, -1);
  auto ctx_plus = e_plus(torch::matmul(a_plus, v_plus(f_plus)).squeeze(1));
  out.pe_plus = pos_out(torch::gelu(pos_hidden(ctx_plus)));
  out.be_plus = box_out(torch::gelu(box_hidden(ctx_plus)));
  out.class_logits = classifier(ctx_plus);
  out.p = torch::softmax(out.class_logits, -1);
  out.attn_plus = a_plus.squeeze(1);
  out.attn_minus = a_minus.squeeze(1);
  return out;
}

IndicatorOutput TaskIndicatorImpl::forward(const IndicatorFeatures& features) {
  auto [f_plus, f_minus] = pool_embeddings(project(features));
  return forward_pooled(f_plus, f_minus);
}

bool indicates_foreground(const torch::Tensor& p) {
  auto v = p.to(torch::kDouble).contiguous();
  if (v.numel() != 2) throw std::invalid_argument("indicates_foreground: p must be a 2-class distribution");
  return v[0].item<double>() > v[1].item<double>();
}

namespace {

PromptBundle foreground_bundle(const torch::Tensor& pe_plus, const torch::Tensor& be_plus, const torch::Tensor& pe_minus,
                               PromptEncoderImpl& manual) {
  PromptBundle b;
  auto a = be_plus + manual.corner_offset(false).to(be_plus.dtype());
  auto c = be_plus + manual.corner_offset(true).to(be_plus.dtype());
  b.sparse = torch::stack({pe_plus, a, c, pe_minus}, 1);
  b.roles = {PromptRole::kPositivePoint, PromptRole::kBoxCornerA, PromptRole::kBoxCornerB, PromptRole::kNegativePoint};
  b.dense = manual.dense_no_mask(pe_plus.size(0)).to(pe_plus.dtype());
  b.origin = PromptOrigin::kTaskIndicator;
  b.validate();
  return b;
}

PromptBundle background_bundle(const torch::Tensor& pe_minus, PromptEncoderImpl& manual) {
  PromptBundle b;
  auto ne = manual.not_a_point().to(pe_minus.dtype()).unsqueeze(0).expand({pe_minus.size(0), -1});
  b.sparse = torch::stack({ne, pe_minus}, 1);
  b.roles = {PromptRole::kNotAPoint, PromptRole::kNegativePoint};
  b.dense = manual.dense_no_mask(pe_minus.size(0)).to(pe_minus.dtype());
  b.origin = PromptOrigin::kTaskIndicator;
  b.validate();
  return b;
}

}  // namespace

PromptBundle gate_and_bundle(const torch::Tensor& pe_plus, const torch::Tensor& be_plus, const torch::Tensor& pe_minus,
                             const torch::Tensor& p, PromptEncoderImpl& manual) {
  if (indicates_foreground(p)) return foreground_bundle(pe_plus.unsqueeze(0), be_plus.unsqueeze(0), pe_minus.unsqueeze(0), manual);
  return background_bundle(pe_minus.unsqueeze(0), manual);
}

GatedBundles gate_batch(const IndicatorOutput& out, PromptEncoderImpl& manual, const std::optional<std::vector<bool>>& as_foreground) {
  const int64_t n = out.p.size(0);
  if (as_foreground && static_cast<int64_t>(as_foreground->size()) != n) throw std::invalid_argument("gate_batch: override size mismatch");
  GatedBundles g;
  auto p = out.p.detach().to(torch::kDouble).contiguous();
  auto acc = p.accessor<double, 2>();
  for (int64_t i = 0; i < n; ++i) {
    const bool fg = as_foreground ? (*as_foreground)[static_cast<size_t>(i)] : acc[i][0] > acc[i][1];
    (fg ? g.foreground_index : g.background_index).push_back(i);
  }
  auto take = [](const torch::Tensor& t, const std::vector<int64_t>& idx) {
    return t.index_select(0, torch::tensor(idx, torch::kLong));
  };
  if (!g.foreground_index.empty())
    g.foreground = foreground_bundle(take(out.pe_plus, g.foreground_index), take(out.be_plus, g.foreground_index),
                                     take(out.pe_minus, g.foreground_index), manual);
  if (!g.background_index.empty()) g.background = background_bundle(take(out.pe_minus, g.background_index), manual);
  return g;
}

}  // namespace samct::prompt
