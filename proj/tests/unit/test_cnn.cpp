#include "samct/cnn.hpp"
#include "samct/config.hpp"

#undef CHECK  // c10 logging macro
#include <doctest.h>

using namespace samct;
using namespace samct::cnn;

namespace {

ModelConfig with_channels(int dc, int size) {
  auto c = toy_profile();
  c.cnn_channels = dc;
  c.input_size = size;
  c.interaction_sites = {};
  return c;
}

std::vector<int64_t> shape(int64_t c, int64_t h) { return {1, c, h, h}; }

}  // namespace

TEST_CASE("scale relations for every size and base width") {
  torch::NoGradGuard g;
  for (int dc : {4, 8, 16})
    for (int h : {32, 64, 128, 256}) {
      CAPTURE(dc);
      CAPTURE(h);
      torch::manual_seed(dc * 1000 + h);
      UNetEncoder enc(with_channels(dc, h));
      auto f = enc->encode(torch::randn({1, 3, h, h}));
      CHECK((f.f16.sizes().vec() == shape(16 * dc, h / 16)));
      CHECK((f.f32.sizes().vec() == shape(8 * dc, h / 8)));
      CHECK((f.f64.sizes().vec() == shape(4 * dc, h / 4)));
      CHECK((f.f128.sizes().vec() == shape(2 * dc, h / 2)));
      CHECK((f.f256.sizes().vec() == shape(dc, h)));
      CHECK((f.full_res32.sizes().vec() == shape(32, h)));
      for (auto* t : {&f.f16, &f.f32, &f.f64, &f.f128, &f.f256, &f.full_res32}) CHECK(torch::isfinite(*t).all().item<bool>());
    }
}

TEST_CASE("step tables") {
  const int strides[9] = {1, 2, 4, 8, 16, 8, 4, 2, 1};
  for (int s = 0; s <= 8; ++s) {
    CHECK(stride_at_step(s) == strides[s]);
    CHECK(channels_at_step(8, s) == 8 * strides[s]);
  }
}

TEST_CASE("skip connections join equal resolutions") {
  torch::NoGradGuard g;
  torch::manual_seed(0);
  UNetEncoder enc(with_channels(4, 64));
  auto state = enc->begin(torch::randn({1, 3, 64, 64}));
  enc->advance(state, 8);
  for (int s = 5; s <= 8; ++s) {
    const int partner = 8 - s;
    CHECK(state.maps[static_cast<size_t>(s)].sizes() == state.maps[static_cast<size_t>(partner)].sizes());
  }
}

TEST_CASE("stem keeps resolution and maps a constant image to a constant map") {
  torch::NoGradGuard g;
  torch::manual_seed(1);
  HybridAttentionStem stem(3, 8);
  auto x = torch::full({1, 3, 32, 32}, 0.7);
  auto fused = stem->fused(x);
  CHECK(fused.sizes() == torch::IntArrayRef({1, 8, 32, 32}));
  auto per_channel = fused.amax({2, 3}) - fused.amin({2, 3});
  CHECK(per_channel.abs().max().item<double>() < 1e-5);
  DoubleConvStem plain(3, 8);
  auto p = plain(x);
  CHECK((p.amax({2, 3}) - p.amin({2, 3})).abs().max().item<double>() < 1e-5);
  UNetEncoder enc(with_channels(8, 32));
  CHECK_THROWS_AS(enc->stem_forward(torch::randn({1, 3, 24, 24})), std::invalid_argument);
}

TEST_CASE("encode and decode blocks") {
  torch::NoGradGuard g;
  torch::manual_seed(2);
  EncodeBlock down(4);
  CHECK(down(torch::randn({2, 4, 16, 16})).sizes() == torch::IntArrayRef({2, 8, 8, 8}));
  CHECK_THROWS_AS(down(torch::randn({1, 4, 15, 15})), std::invalid_argument);
  auto constant = torch::full({1, 4, 8, 8}, 3.0);
  CHECK(torch::equal(torch::max_pool2d(constant, 2), torch::full({1, 4, 4, 4}, 3.0)));

  DecodeBlock up(8);
  CHECK(up->forward(torch::randn({1, 8, 4, 4}), torch::randn({1, 4, 8, 8})).sizes() == torch::IntArrayRef({1, 4, 8, 8}));
  CHECK_THROWS_AS(up->forward(torch::randn({1, 8, 4, 4}), torch::randn({1, 4, 6, 6})), std::invalid_argument);
  CHECK_THROWS_AS(up->forward(torch::randn({1, 8, 4, 4}), torch::randn({1, 8, 8, 8})), std::invalid_argument);
  auto zeros = torch::zeros({1, 8, 4, 4});
  auto t = up->up(zeros) - up->up->bias.view({1, -1, 1, 1});
  CHECK(torch::count_nonzero(t).item<int64_t>() == 0);
}

TEST_CASE("every CNN parameter receives gradient") {
  torch::manual_seed(3);
  UNetEncoder enc(with_channels(4, 32));
  auto f = enc->encode(torch::randn({2, 3, 32, 32}));
  auto loss = (f.full_res32 * torch::randn_like(f.full_res32)).sum() + (f.f16 * torch::randn_like(f.f16)).sum() +
              (f.f32.sin()).sum() + f.f64.pow(2).mean() + f.f128.mean();
  loss.backward();
  for (auto& p : enc->named_parameters()) {
    CAPTURE(p.key());
    REQUIRE(p.value().grad().defined());
    CHECK(p.value().grad().abs().sum().item<double>() > 0);
  }
}
