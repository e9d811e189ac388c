#include "oracles.hpp"
#include "samct/errors.hpp"
#include "samct/interaction.hpp"

#undef CHECK  // c10 logging macro
#include <doctest.h>

#include <numeric>

using namespace samct::interaction;

namespace {

struct Case {
  CrossBranch site{nullptr};
  torch::Tensor f_cnn, f_trans;
  int k;
};

Case random_case(int64_t d_p, int64_t d_w, int g, int k, int64_t n = 2, uint64_t seed = 0) {
  torch::manual_seed(seed);
  Case c;
  c.site = CrossBranch(d_p, d_w);
  oracle::randomized_parameters(*c.site, 0.7);
  c.f_cnn = torch::randn({n, d_w, g * k, g * k}, torch::kDouble);
  c.f_trans = torch::randn({n, g, g, d_p}, torch::kDouble);
  c.k = k;
  return c;
}

}  // namespace

TEST_CASE("alignment") {
  auto t = torch::zeros({1, 16, 16, 4});
  CHECK(align(torch::zeros({1, 3, 32, 32}), t).k == 2);
  auto a = align(torch::zeros({1, 3, 16, 16}), t);
  CHECK(a.k == 1);
  CHECK(a.window_count() == 256);
  CHECK(a.patch_of_pixel(5, 7) == 5 * 16 + 7);
  CHECK_THROWS_AS(align(torch::zeros({1, 3, 24, 24}), t, "site 2"), samct::ConfigError);
  CHECK_THROWS_AS(align(torch::zeros({1, 3, 8, 8}), t), samct::ConfigError);
  auto b = align(torch::zeros({1, 3, 12, 12}), torch::zeros({1, 3, 3, 4}));
  std::vector<int> owners(144, 0);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) owners[static_cast<size_t>(b.patch_of_pixel(y, x))]++;
  for (int p = 0; p < 9; ++p) CHECK(owners[static_cast<size_t>(p)] == 16);
  try {
    align(torch::zeros({1, 3, 24, 24}), t, "site 2");
  } catch (const samct::ConfigError& e) {
    CHECK(std::string(e.what()).find("site 2") != std::string::npos);
  }
}

TEST_CASE("window reshaping round trip and row-major layout") {
  auto x = torch::arange(2 * 3 * 6 * 6, torch::kDouble).reshape({2, 3, 6, 6});
  auto w = to_windows(x, 2);
  CHECK(w.sizes() == torch::IntArrayRef({2, 3, 3, 4, 3}));
  CHECK(torch::equal(from_windows(w, 2), x));
  // Window (1, 2), position (1, 0) is pixel (3, 4).
  CHECK(w[1][1][2][2][1].item<double>() == x[1][1][3][4].item<double>());
}

TEST_CASE("CNN to transformer flow matches the per-patch loop oracle") {
  for (int k : {1, 2, 3}) {
    auto c = random_case(4, 4, 3, k, 2, static_cast<uint64_t>(k));
    auto got = c.site->cnn_to_transformer(c.f_trans, c.f_cnn);
    auto& s = *c.site;
    double worst = 0;
    for (int64_t n = 0; n < 2; ++n)
      for (int gy = 0; gy < 3; ++gy)
        for (int gx = 0; gx < 3; ++gx) {
          auto fp = oracle::patch_row(c.f_trans, n, gy, gx);
          auto rows = oracle::window_rows(c.f_cnn, n, gy, gx, k);
          auto q = oracle::affine(s.query->weight, fp);
          std::vector<double> scores;
          std::vector<oracle::Vec> values;
          for (auto& r : rows) {
            scores.push_back(oracle::dot(q, oracle::affine(s.key->weight, r)) / 2.0);
            values.push_back(oracle::affine(s.value->weight, r));
          }
          auto fc = oracle::weighted_sum(values, oracle::softmax(scores));
          auto upd = oracle::affine(s.out_proj->weight, fc, s.out_proj->bias);
          for (int64_t d = 0; d < 4; ++d)
            worst = std::max(worst, std::abs(got[n][gy][gx][d].item<double>() - (fp[static_cast<size_t>(d)] + upd[static_cast<size_t>(d)])));
        }
    CAPTURE(k);
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("transformer to CNN flow matches the per-patch loop oracle") {
  for (int k : {1, 2, 4}) {
    auto c = random_case(4, 3, 2, k, 2, 10 + static_cast<uint64_t>(k));
    auto got = c.site->transformer_to_cnn(c.f_trans, c.f_cnn);
    auto& s = *c.site;
    const double scale = s.coarse_scale.item<double>(), bias = s.coarse_bias.item<double>();
    double worst = 0;
    for (int64_t n = 0; n < 2; ++n)
      for (int gy = 0; gy < 2; ++gy)
        for (int gx = 0; gx < 2; ++gx) {
          auto fp = oracle::patch_row(c.f_trans, n, gy, gx);
          auto rows = oracle::window_rows(c.f_cnn, n, gy, gx, k);
          std::vector<double> scores;
          for (auto& r : rows) scores.push_back(oracle::dot(fp, oracle::affine(s.window_proj->weight, r)) / 2.0);
          auto aw = oracle::softmax(scores);
          const double mx = *std::max_element(fp.begin(), fp.end());
          const double mean = std::accumulate(fp.begin(), fp.end(), 0.0) / 4.0;
          const double ap = oracle::sigmoid(0.5 * (mx + mean) * scale + bias) + 0.5;
          for (int wy = 0; wy < k; ++wy)
            for (int wx = 0; wx < k; ++wx) {
              const size_t i = static_cast<size_t>(wy * k + wx);
              const double fine = oracle::sigmoid(aw[i] - 1.0 / (k * k)) + 0.5;
              for (int64_t ch = 0; ch < 3; ++ch) {
                const double want = rows[i][static_cast<size_t>(ch)] * fine * ap;
                worst = std::max(worst, std::abs(got[n][ch][gy * k + wy][gx * k + wx].item<double>() - want));
              }
            }
        }
    CAPTURE(k);
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("single-key and identical-row windows") {
  auto c = random_case(4, 4, 3, 1);
  auto ctx = c.site->window_attention(c.f_trans, c.f_cnn);
  auto direct = c.site->value(to_windows(c.f_cnn, 1)).squeeze(3);
  CHECK(torch::allclose(ctx, direct, 0, 1e-12));

  auto same = random_case(4, 4, 2, 3);
  auto row = torch::randn({1, 4, 1, 1}, torch::kDouble);
  auto f_cnn = row.expand({2, 4, 6, 6}).contiguous();
  auto ctx2 = same.site->window_attention(same.f_trans, f_cnn);
  auto v = same.site->value(row.view({1, 4}));
  CHECK(torch::allclose(ctx2, v.view({1, 1, 1, 4}).expand_as(ctx2), 0, 1e-12));
}

TEST_CASE("attention rows sum to one") {
  auto c = random_case(4, 5, 3, 2);
  auto w1 = c.site->window_attention_weights(c.f_trans, c.f_cnn);
  auto w2 = c.site->fine_softmax(c.f_trans, c.f_cnn);
  CHECK((w1.sum(-1) - 1).abs().max().item<double>() < 1e-6);
  CHECK((w2.sum(-1) - 1).abs().max().item<double>() < 1e-6);
}

TEST_CASE("bounded and neutral multipliers") {
  for (int k : {1, 2, 3, 4, 8}) {
    auto a = torch::full({1, 1, 1, k * k}, 1.0 / (k * k), torch::kDouble);
    CHECK((rescale_fine_attention(a, k) - 1.0).abs().max().item<double>() < 1e-12);
    auto lo = rescale_fine_attention(torch::zeros({1}, torch::kDouble), k).item<double>();
    auto hi = rescale_fine_attention(torch::ones({1}, torch::kDouble), k).item<double>();
    CHECK(lo > 0.5);
    CHECK(hi < 1.5);
  }
  auto c = random_case(4, 4, 2, 2);
  for (double mag : {1e-3, 1.0, 30.0, 1e3}) {
    auto fine = c.site->fine_attention(c.f_trans * mag, c.f_cnn * mag);
    auto coarse = c.site->coarse_attention(c.f_trans * mag);
    CHECK(fine.min().item<double>() > 0.5);
    CHECK(fine.max().item<double>() < 1.5);
    CHECK(coarse.min().item<double>() > 0.5);
    CHECK(coarse.max().item<double>() < 1.5);
  }
}

TEST_CASE("neutral attention leaves the CNN map unchanged") {
  auto c = random_case(4, 4, 2, 2);
  {
    torch::NoGradGuard g;
    c.site->window_proj->weight.zero_();   // uniform fine attention
    c.site->coarse_scale.zero_();
    c.site->coarse_bias.zero_();  // sigmoid(0) + 0.5 = 1
  }
  auto out = c.site->transformer_to_cnn(c.f_trans, c.f_cnn);
  CHECK(torch::allclose(out, c.f_cnn, 0, 1e-12));
}

TEST_CASE("fresh sites start as the identity on both sides") {
  torch::manual_seed(5);
  CrossBranch site(4, 4);
  auto f_trans = torch::randn({1, 2, 2, 4}, torch::kDouble), f_cnn = torch::randn({1, 4, 4, 4}, torch::kDouble);
  site->to(torch::kDouble);
  auto [cnn, trans] = site->forward(f_cnn, f_trans);
  CHECK(torch::equal(trans, f_trans));
  CHECK(torch::allclose(cnn, f_cnn, 0, 1e-12));
}

TEST_CASE("a detached CNN input blocks gradient through the transformer path only") {
  for (bool detach : {false, true}) {
    CAPTURE(detach);
    auto c = random_case(4, 4, 2, 2, 1, 8);
    c.site->detach_cnn_input = detach;
    auto f_cnn = c.f_cnn.clone().requires_grad_(true);
    auto [cnn, trans] = c.site->forward(f_cnn, c.f_trans);
    auto g_trans = torch::autograd::grad({trans.sum()}, {f_cnn}, {}, true, false, true)[0];
    CHECK(g_trans.defined() != detach);
    auto g_cnn = torch::autograd::grad({cnn.sum()}, {f_cnn})[0];
    CHECK(g_cnn.abs().sum().item<double>() > 0);
    auto value_grad = torch::autograd::grad({c.site->forward(f_cnn, c.f_trans).second.sum()}, {c.site->value->weight})[0];
    CHECK(value_grad.abs().sum().item<double>() > 0);
  }
}

TEST_CASE("both flows read the pre-update inputs") {
  auto c = random_case(4, 4, 2, 2);
  auto [cnn, trans] = c.site->forward(c.f_cnn, c.f_trans);
  CHECK(torch::allclose(cnn, c.site->transformer_to_cnn(c.f_trans, c.f_cnn), 0, 0));
  CHECK(torch::allclose(trans, c.site->cnn_to_transformer(c.f_trans, c.f_cnn), 0, 0));
}

TEST_CASE("independent sites give different outputs") {
  auto a = random_case(4, 4, 2, 2, 1, 1);
  auto b = random_case(4, 4, 2, 2, 1, 2);
  auto [ca, ta] = a.site->forward(a.f_cnn, a.f_trans);
  auto [cb, tb] = b.site->forward(a.f_cnn, a.f_trans);
  CHECK_FALSE(torch::allclose(ta, tb));
  CHECK_FALSE(torch::allclose(ca, cb));
}

TEST_CASE("interaction gradients match central differences") {
  auto c = random_case(4, 4, 2, 2, 1, 21);
  auto params = oracle::randomized_parameters(*c.site, 0.7);
  auto f_cnn = c.f_cnn.clone().requires_grad_(true);
  auto f_trans = c.f_trans.clone().requires_grad_(true);
  auto w1 = torch::randn_like(c.f_trans), w2 = torch::randn_like(c.f_cnn);
  std::vector<std::pair<std::string, torch::Tensor>> eq1, eq2;
  for (auto& [n, p] : params) {
    if (n.rfind("query", 0) == 0 || n.rfind("key", 0) == 0 || n.rfind("value", 0) == 0 || n.rfind("out_proj", 0) == 0) eq1.emplace_back(n, p);
    if (n.rfind("window_proj", 0) == 0 || n.rfind("coarse", 0) == 0) eq2.emplace_back(n, p);
  }
  eq1.emplace_back("f_trans", f_trans);
  eq1.emplace_back("f_cnn", f_cnn);
  eq2.emplace_back("f_trans", f_trans);
  eq2.emplace_back("f_cnn", f_cnn);
  auto r1 = oracle::finite_difference(eq1, [&] { return (c.site->cnn_to_transformer(f_trans, f_cnn) * w1).sum(); });
  INFO(r1.worst);
  CHECK(r1.max_rel < 1e-4);
  auto r2 = oracle::finite_difference(eq2, [&] { return (c.site->transformer_to_cnn(f_trans, f_cnn) * w2).sum(); });
  INFO(r2.worst);
  CHECK(r2.max_rel < 1e-4);
}
