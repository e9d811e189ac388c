#include "samct/config.hpp"
#include "samct/decoder.hpp"
#include "samct/errors.hpp"
#include "samct/prompt.hpp"

#undef CHECK  // c10 logging macro
#include <doctest.h>

using namespace samct;
using namespace samct::decoder;
using samct::prompt::PromptSet;

namespace {

struct Rig {
  ModelConfig cfg = toy_profile();
  MaskDecoder dec{nullptr};
  prompt::PromptEncoder enc{nullptr};
  torch::Tensor embedding;

  explicit Rig(uint64_t seed, int64_t n = 2) {
    torch::manual_seed(seed);
    dec = MaskDecoder(cfg);
    enc = prompt::PromptEncoder(cfg.neck_dim, cfg.input_size, cfg.grid_side());
    dec->eval();
    embedding = torch::randn({n, cfg.neck_dim, cfg.grid_side(), cfg.grid_side()});
  }
  prompt::PromptBundle bundle(const std::vector<PromptSet>& sets) { return enc->encode(sets); }
};

std::vector<PromptSet> two_sets() {
  return {PromptSet{{{10, 12}, {30, 40}}, {{50, 5}}, samct::Box{3, 4, 40, 44}}, PromptSet{{{60, 60}, {1, 2}}, {{20, 20}}, samct::Box{0, 0, 63, 63}}};
}

}  // namespace

TEST_CASE("output shapes at the input resolution") {
  torch::NoGradGuard g;
  Rig r(0);
  auto out = r.dec->forward(r.embedding, r.enc->image_pe(), r.bundle(two_sets()), {});
  CHECK(out.logits.sizes() == torch::IntArrayRef({2, 1, 64, 64}));
  CHECK(out.iou.sizes() == torch::IntArrayRef({2}));
  CHECK(out.token_state.sizes() == torch::IntArrayRef({2, r.cfg.neck_dim}));
  auto grid = torch::randn({2, r.cfg.grid_side() * r.cfg.grid_side(), r.cfg.neck_dim});
  CHECK(r.dec->upscale(grid, r.cfg.grid_side()).sizes() == torch::IntArrayRef({2, r.cfg.fusion_channels, 64, 64}));
}

TEST_CASE("fusion is additive before the hypernetwork product") {
  torch::NoGradGuard g;
  Rig r(1);
  auto b = r.bundle(two_sets());
  auto pe = r.enc->image_pe();
  auto plain = r.dec->forward(r.embedding, pe, b, {});
  auto zero = r.dec->forward(r.embedding, pe, b, torch::zeros({2, r.cfg.fusion_channels, 64, 64}));
  CHECK(torch::allclose(plain.logits, zero.logits, 0, 1e-6));
  auto extra = torch::randn({2, r.cfg.fusion_channels, 64, 64});
  auto fused = r.dec->forward(r.embedding, pe, b, extra);
  auto hyper = r.dec->hypernet(fused.token_state);
  auto expected = plain.logits + torch::einsum("nc,nchw->nhw", {hyper, extra}).unsqueeze(1);
  CHECK(torch::allclose(fused.logits, expected, 1e-4, 1e-4));
  CHECK(torch::equal(plain.token_state, fused.token_state));
  CHECK_THROWS_AS(r.dec->forward(r.embedding, pe, b, torch::zeros({2, 8, 64, 64})), std::invalid_argument);
}

TEST_CASE("decoding is deterministic and independent across the batch") {
  torch::NoGradGuard g;
  Rig r(2);
  auto sets = two_sets();
  auto pe = r.enc->image_pe();
  auto a = r.dec->forward(r.embedding, pe, r.bundle(sets), {});
  auto b = r.dec->forward(r.embedding, pe, r.bundle(sets), {});
  CHECK(torch::equal(a.logits, b.logits));
  auto single = r.dec->forward(r.embedding.slice(0, 1, 2), pe, r.bundle({sets[1]}), {});
  CHECK(torch::allclose(single.logits[0], a.logits[1], 1e-4, 1e-5));
}

TEST_CASE("reordering same-role tokens leaves the mask unchanged") {
  torch::NoGradGuard g;
  Rig r(3, 1);
  auto pe = r.enc->image_pe();
  auto a = r.dec->forward(r.embedding, pe, r.bundle({PromptSet{{{10, 12}, {30, 40}}, {}, {}}}), {});
  auto b = r.dec->forward(r.embedding, pe, r.bundle({PromptSet{{{30, 40}, {10, 12}}, {}, {}}}), {});
  CHECK(torch::allclose(a.logits, b.logits, 1e-4, 1e-5));
  auto c = r.dec->forward(r.embedding, pe, r.bundle({PromptSet{{{30, 41}, {10, 12}}, {}, {}}}), {});
  CHECK_FALSE(torch::allclose(a.logits, c.logits, 1e-6, 1e-7));
}

TEST_CASE("input validation") {
  Rig r(4);
  auto pe = r.enc->image_pe();
  prompt::PromptBundle empty;
  CHECK_THROWS_AS(r.dec->forward(r.embedding, pe, empty, {}), std::invalid_argument);
  CHECK_THROWS_AS(r.dec->forward(r.embedding.slice(0, 0, 1), pe, r.bundle(two_sets()), {}), std::invalid_argument);
  CHECK_THROWS_AS(r.dec->forward(torch::randn({2, r.cfg.neck_dim, 4, 4}), pe, r.bundle(two_sets()), {}), std::invalid_argument);
}

TEST_CASE("binarize") {
  auto logits = torch::tensor({-1.0, 0.0, 1e-9, 0.3, 2.0});
  CHECK(torch::equal(binarize(logits), torch::tensor({0, 0, 1, 1, 1}, torch::kUInt8)));
  CHECK(torch::equal(binarize(logits, 0.3), torch::tensor({0, 0, 0, 0, 1}, torch::kUInt8)));
  CHECK((binarize(torch::randn({2, 1, 5, 5})).scalar_type() == torch::kUInt8));
}

TEST_CASE("attention width reduction") {
  torch::NoGradGuard g;
  torch::manual_seed(5);
  Attention a(16, 4, 2);
  CHECK(a->internal_dim == 8);
  auto q = torch::randn({2, 3, 16}), kv = torch::randn({2, 7, 16});
  CHECK(a->forward(q, kv, kv).sizes() == torch::IntArrayRef({2, 3, 16}));
  CHECK_THROWS_AS(Attention(16, 3, 1), samct::ConfigError);
}
