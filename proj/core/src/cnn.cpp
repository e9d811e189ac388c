#include "samct/cnn.hpp"

#include "samct/errors.hpp"

namespace samct::cnn {
namespace nn = torch::nn;

namespace {

void require_spatial(const torch::Tensor& x, int64_t multiple, const char* what) {
  if (x.dim() != 4) throw std::invalid_argument(std::string(what) + ": expected an N x C x H x W tensor, got " + c10::str(x.sizes()));
  if (x.size(2) % multiple != 0 || x.size(3) % multiple != 0)
    throw std::invalid_argument(std::string(what) + ": spatial size " + c10::str(x.sizes().slice(2)) + " must be divisible by " +
                                std::to_string(multiple));
}

}  // namespace

int64_t channels_at_step(int64_t base, int step) {
  if (step <= 4) return base << step;
  return base << (8 - step);
}

int stride_at_step(int step) {
  if (step <= 4) return 1 << step;
  return 1 << (8 - step);
}

ClgImpl::ClgImpl(int64_t in, int64_t out, nn::detail::conv_padding_mode_t padding) {
  conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).padding_mode(padding)));
  norm = register_module("norm", LayerNorm2d(out));
}

torch::Tensor ClgImpl::forward(const torch::Tensor& x) { return torch::gelu(norm(conv(x))); }

HybridAttentionStemImpl::HybridAttentionStemImpl(int64_t in, int64_t out) : out_channels(out) {
  conv3 = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).padding_mode(torch::kReplicate)));
  conv5 = register_module("conv5", nn::Conv2d(nn::Conv2dOptions(in, out, 5).padding(2).padding_mode(torch::kReplicate)));
  const int64_t hidden = std::max<int64_t>(out / 2, 4);
  squeeze = register_module("squeeze", nn::Linear(out, hidden));
  excite = register_module("excite", nn::Linear(hidden, 2 * out));
  norm = register_module("norm", LayerNorm2d(out));
}

torch::Tensor HybridAttentionStemImpl::fused(const torch::Tensor& x) {
  auto a = conv3(x);
  auto b = conv5(x);
  auto pooled = (a + b).mean({2, 3});                                         // N x C
  auto logits = excite(torch::gelu(squeeze(pooled))).view({-1, 2, out_channels});    // N x 2 x C
  auto weights = torch::softmax(logits, 1).unsqueeze(-1).unsqueeze(-1);       // N x 2 x C x 1 x 1
  return a * weights.select(1, 0) + b * weights.select(1, 1);
}

torch::Tensor HybridAttentionStemImpl::forward(const torch::Tensor& x) { return torch::gelu(norm(fused(x))); }

DoubleConvStemImpl::DoubleConvStemImpl(int64_t in, int64_t out) {
  first = register_module("first", Clg(in, out, torch::kReplicate));
  second = register_module("second", Clg(out, out, torch::kReplicate));
}

torch::Tensor DoubleConvStemImpl::forward(const torch::Tensor& x) { return second(first(x)); }

EncodeBlockImpl::EncodeBlockImpl(int64_t in) {
  first = register_module("first", Clg(in, 2 * in));
  second = register_module("second", Clg(2 * in, 2 * in));
}

torch::Tensor EncodeBlockImpl::forward(const torch::Tensor& x) {
  require_spatial(x, 2, "encode_block");
  return second(first(torch::max_pool2d(x, 2)));
}

DecodeBlockImpl::DecodeBlockImpl(int64_t in) {
  if (in % 2 != 0) throw ConfigError("decode_block: input channels must be even");
  up = register_module("up", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, in / 2, 2).stride(2)));
  first = register_module("first", Clg(in, in / 2));
  second = register_module("second", Clg(in / 2, in / 2));
}

torch::Tensor DecodeBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& skip) {
  const auto c = x.size(1);
  if (skip.dim() != 4 || skip.size(0) != x.size(0) || skip.size(1) != c / 2 || skip.size(2) != 2 * x.size(2) ||
      skip.size(3) != 2 * x.size(3))
    throw std::invalid_argument("decode_block: skip must be N x " + std::to_string(c / 2) + " x " + std::to_string(2 * x.size(2)) + " x " +
                                std::to_string(2 * x.size(3)) + ", got " + c10::str(skip.sizes()));
  auto y = up(x);
  return second(first(torch::cat({y, skip}, 1)));
}

UNetEncoderImpl::UNetEncoderImpl(const ModelConfig& cfg) : config(cfg) {
  const int64_t c = config.cnn_channels;
  if (config.stem == StemKind::kHybridAttention)
    hybrid_stem = register_module("stem", HybridAttentionStem(3, c));
  else
    plain_stem = register_module("stem", DoubleConvStem(3, c));
  for (int i = 0; i < 4; ++i) encoders->push_back(EncodeBlock(c << i));
  for (int i = 0; i < 4; ++i) decoders->push_back(DecodeBlock(c << (4 - i)));
  register_module("encoders", encoders);
  register_module("decoders", decoders);
  fusion_proj = register_module("fusion_proj", nn::Conv2d(nn::Conv2dOptions(c, config.fusion_channels, 1)));
}

torch::Tensor UNetEncoderImpl::stem_forward(const torch::Tensor& x) {
  require_spatial(x, 16, "cnn.stem");
  return hybrid_stem.is_empty() ? plain_stem(x) : hybrid_stem(x);
}

StagedForward UNetEncoderImpl::begin(const torch::Tensor& x) {
  require_spatial(x, 16, "cnn.encode");
  StagedForward state;
  state.input = x;
  return state;
}

torch::Tensor& UNetEncoderImpl::advance(StagedForward& state, int step) {
  if (step < 0 || step > 8) throw std::invalid_argument("cnn.advance: step must be in [0, 8]");
  while (state.computed < step) {
    const int s = state.computed + 1;
    if (s == 0) {
      state.maps[0] = stem_forward(state.input);
    } else if (s <= 4) {
      state.maps[s] = encoders[s - 1]->as<EncodeBlock>()->forward(state.maps[s - 1]);
    } else {
      // Decoder j consumes the previous map and the encoder map with the
      // matching stride: step 5 <-> 3, 6 <-> 2, 7 <-> 1, 8 <-> 0.
      const int j = s - 5;
      state.maps[s] = decoders[j]->as<DecodeBlock>()->forward(state.maps[s - 1], state.maps[3 - j]);
    }
    state.computed = s;
  }
  return state.maps[step];
}

MultiScaleFeatures UNetEncoderImpl::finish(StagedForward& state) {
  advance(state, 8);
  MultiScaleFeatures f;
  f.f16 = state.maps[4];
  f.f32 = state.maps[5];
  f.f64 = state.maps[6];
  f.f128 = state.maps[7];
  f.f256 = state.maps[8];
  f.full_res32 = fusion_proj(f.f256);
  return f;
}

MultiScaleFeatures UNetEncoderImpl::encode(const torch::Tensor& x) {
  auto state = begin(x);
  return finish(state);
}

}  // namespace samct::cnn
