#include "fixtures.hpp"
#include "oracles.hpp"
#include "samct/augment.hpp"
#include "samct/checkpoint.hpp"
#include "samct/dataset.hpp"
#include "samct/errors.hpp"
#include "samct/losses.hpp"
#include "samct/metrics.hpp"
#include "samct/train.hpp"

#undef CHECK  // c10 logging macro
#include <doctest.h>

#include <numbers>

using namespace samct;

namespace {

Mask random_mask(Rng& rng, int h, int w, double density) {
  Mask m(h, w);
  for (auto& v : m.data) v = rng.bernoulli(density) ? 1 : 0;
  return m;
}

Mask rect(int h, int w, int y0, int x0, int y1, int x1) {
  Mask m(h, w);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) m(y, x) = 1;
  return m;
}

}  // namespace

TEST_CASE("metrics agree with set arithmetic and all-pairs distances") {
  Rng rng(1);
  double worst = 0;
  for (int t = 0; t < 300; ++t) {
    const int h = static_cast<int>(rng.uniform_int(1, 14)), w = static_cast<int>(rng.uniform_int(1, 14));
    auto p = random_mask(rng, h, w, rng.uniform(0, 0.8));
    auto g = random_mask(rng, h, w, rng.uniform(0, 0.8));
    auto got = metrics::evaluate(p, g);
    auto want = oracle::set_metrics(p, g);
    worst = std::max({worst, std::abs(got.dice - want.dice), std::abs(got.iou - want.iou), std::abs(got.hd95 - want.hd95)});
    CHECK(got.iou <= got.dice + 1e-12);
    auto swapped = metrics::evaluate(g, p);
    CHECK(swapped.dice == doctest::Approx(got.dice));
    CHECK(swapped.hd95 == doctest::Approx(got.hd95));
  }
  CHECK(worst < 1e-9);
  auto empty = metrics::evaluate(Mask(5, 5), Mask(5, 5));
  CHECK(empty.dice == 100.0);
  CHECK(empty.hd95 == 0.0);
  auto one = metrics::evaluate(Mask(3, 4), rect(3, 4, 0, 0, 0, 0));
  CHECK(one.dice == 0.0);
  CHECK(one.hd95 == doctest::Approx(5.0));
  CHECK_THROWS_AS(metrics::evaluate(Mask(3, 3), Mask(3, 4)), std::invalid_argument);
}

TEST_CASE("distance transform and boundary") {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    auto m = random_mask(rng, 11, 9, 0.1);
    if (oracle::pixels(m).empty()) m(3, 3) = 1;
    auto d = metrics::squared_distance_to(m);
    const auto feats = oracle::pixels(m);
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 9; ++x) {
        double best = 1e300;
        for (auto [fy, fx] : feats) best = std::min(best, static_cast<double>((y - fy) * (y - fy) + (x - fx) * (x - fx)));
        CHECK(d(y, x) == best);
      }
    auto b = metrics::boundary(m);
    Mask want(11, 9);
    for (auto [y, x] : oracle::boundary_pixels(m)) want(y, x) = 1;
    CHECK((b == want));
  }
  CHECK(std::isinf(metrics::squared_distance_to(Mask(2, 2))(0, 0)));
}

TEST_CASE("percentile and summary") {
  Rng rng(3);
  for (int t = 0; t < 40; ++t) {
    std::vector<double> v(static_cast<size_t>(rng.uniform_int(1, 30)));
    for (auto& x : v) x = rng.uniform(0, 10);
    const double q = rng.uniform(0, 100);
    CHECK(metrics::percentile(v, q) == doctest::Approx(oracle::linear_percentile(v, q)).epsilon(1e-12));
  }
  auto s = metrics::summarize({{80, 70, 2}, {60, 50, 4}, {90, 85, 1}}, {"a", "b", "a"});
  CHECK(s.count == 3);
  CHECK(s.dice == doctest::Approx(230.0 / 3));
  CHECK(s.per_object.at("a").dice == doctest::Approx(85));
  CHECK(s.per_object.at("a").hd95 == doctest::Approx(1.5));
  CHECK(s.per_object_count.at("b") == 1);
}

TEST_CASE("segmentation loss matches the elementwise formula") {
  torch::manual_seed(4);
  auto logits = torch::randn({3, 1, 5, 5}, torch::kDouble) * 2;
  auto target = (torch::rand({3, 1, 5, 5}, torch::kDouble) > 0.6).to(torch::kDouble);
  auto terms = losses::seg_loss(logits, target);
  double dice = 0, bce = 0;
  for (int64_t n = 0; n < 3; ++n) {
    double inter = 0, ps = 0, gs = 0;
    for (int64_t i = 0; i < 25; ++i) {
      const double z = logits[n].view(-1)[i].item<double>(), g = target[n].view(-1)[i].item<double>();
      const double p = oracle::sigmoid(z);
      inter += p * g, ps += p, gs += g;
      bce += -(g * std::log(p) + (1 - g) * std::log(1 - p));
    }
    dice += 1 - (2 * inter + 1) / (ps + gs + 1);
  }
  CHECK(terms.dice.item<double>() == doctest::Approx(dice / 3).epsilon(1e-12));
  CHECK(terms.bce.item<double>() == doctest::Approx(bce / 75).epsilon(1e-12));
  CHECK(terms.total.item<double>() == doctest::Approx(dice / 3 + bce / 75).epsilon(1e-12));
  auto weighted = losses::seg_loss(logits, target, {0.5, 2.0, 1.0});
  CHECK(weighted.total.item<double>() == doctest::Approx(0.5 * dice / 3 + 2 * bce / 75).epsilon(1e-12));

  auto zero = losses::seg_loss(torch::zeros({2, 1, 4, 4}), torch::ones({2, 1, 4, 4}));
  CHECK(zero.bce.item<double>() == doctest::Approx(std::numbers::ln2));
  CHECK(losses::seg_loss(torch::full({1, 1, 4, 4}, 40.0), torch::ones({1, 1, 4, 4})).dice.item<double>() < 1e-6);
  CHECK_THROWS_AS(losses::seg_loss(torch::zeros({1, 1, 4, 4}), torch::zeros({1, 1, 4, 5})), std::invalid_argument);

  auto cls = losses::with_classifier(terms, torch::tensor({{2.0, -1.0}, {0.5, 0.5}}, torch::kDouble), torch::tensor({1, 0}, torch::kLong));
  const double ce = 0.5 * ((std::log(std::exp(2.0) + std::exp(-1.0)) + 1.0) + std::numbers::ln2);
  CHECK(cls.classifier.item<double>() == doctest::Approx(ce).epsilon(1e-12));
  auto r = losses::report(cls);
  REQUIRE(r.classifier_ce.has_value());
  CHECK(r.total == doctest::Approx(dice / 3 + bce / 75 + ce).epsilon(1e-12));
  CHECK_FALSE(losses::report(terms).classifier_ce.has_value());
}

TEST_CASE("segmentation loss gradient matches central differences") {
  torch::manual_seed(5);
  auto logits = (torch::randn({2, 1, 4, 4}, torch::kDouble) * 1.5).requires_grad_(true);
  auto target = (torch::rand({2, 1, 4, 4}, torch::kDouble) > 0.5).to(torch::kDouble);
  auto r = oracle::finite_difference({{"logits", logits}}, [&] { return losses::seg_loss(logits, target).total; });
  INFO(r.worst);
  CHECK(r.checked == 32);
  CHECK(r.max_rel < 1e-6);
}

TEST_CASE("augmentation geometry") {
  Rng rng(6);
  Image8 img(12, 12);
  for (auto& v : img.data) v = static_cast<uint8_t>(rng.uniform_int(0, 255));
  auto m = rect(12, 12, 2, 3, 6, 9);
  auto [i0, m0] = augment::apply(img, m, augment::AugmentParams::identity());
  CHECK((i0 == img));
  CHECK((m0 == m));

  augment::AugmentParams quarter;
  quarter.angle_deg = 90;
  auto [i90, m90] = augment::apply(img, m, quarter);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      CHECK(m90(y, x) == m(11 - x, y));
      CHECK(i90(y, x) == img(11 - x, y));
    }
  // Rows 2..6, columns 3..9 of the source become rows 3..9, columns 5..9.
  CHECK(oracle::scanline_box(m90) == Box{5, 3, 9, 9});

  auto c = augment::AugmentConfig{};
  for (int t = 0; t < 100; ++t) {
    auto p = augment::AugmentParams::draw(c, 32, 32, rng);
    CHECK(std::abs(p.angle_deg) <= c.rotation_deg);
    CHECK(p.scale >= c.scale_min);
    CHECK(p.scale <= c.scale_max);
    CHECK(p.crop >= c.crop_min);
    CHECK(std::abs(p.crop_dx) <= 0.5 * (1 - p.crop) * 32);
    CHECK(p.gamma >= c.gamma_min);
    auto [ai, am] = augment::apply(random_mask(rng, 32, 32, 0.5), random_mask(rng, 32, 32, 0.3), p);
    CHECK(std::all_of(am.data.begin(), am.data.end(), [](uint8_t v) { return v <= 1; }));
  }
  augment::AugmentParams tone;
  tone.gamma = 2.0;
  tone.contrast = 1.2;
  auto [it, mt] = augment::apply(img, m, tone);
  CHECK((mt == m));
  auto [sy, sx] = augment::source_of(augment::AugmentParams::identity(), 12, 12, 4, 7);
  CHECK(sy == doctest::Approx(4));
  CHECK(sx == doctest::Approx(7));
  CHECK_THROWS_AS((augment::AugmentConfig{true, 10, 1.2, 1.1}.validate()), ConfigError);
}

TEST_CASE("two-phase learning rate") {
  train::Schedule s;
  for (int e = 0; e < 10; ++e) CHECK(s.lr_at(e) == (e < 2 ? 6e-4 : 1e-4));
  train::Schedule p{6, 16, 1e-3, 2e-4, 0.6, 0};
  CHECK(p.lr_at(3) == 1e-3);
  CHECK(p.lr_at(4) == 2e-4);
  train::Schedule bad;
  bad.epochs = -1;
  CHECK_THROWS_AS(bad.validate("train"), ConfigError);
}

TEST_CASE("freeze guard names the changed tensor") {
  torch::manual_seed(7);
  SamCt model(fixture::tiny_config(), AblationSwitches{});
  train::FreezeGuard guard(*model, kFrozenGroups);
  CHECK_NOTHROW(guard.check());
  {
    torch::NoGradGuard g;
    model->group("adapters").begin()->second.add_(1.0);
  }
  CHECK_NOTHROW(guard.check());
  const auto victim = model->group("decoder").begin()->first;
  {
    torch::NoGradGuard g;
    model->group("decoder").begin()->second.view(-1)[0].add_(1e-3);
  }
  try {
    guard.check();
    FAIL("no violation reported");
  } catch (const InvariantError& e) {
    CHECK(std::string(e.what()).find(victim) != std::string::npos);
  }
}

TEST_CASE("seeded training is reproducible and respects the freeze") {
  auto cfg = fixture::tiny_config();
  auto data = data::ct_like_set(12, 32, 3);
  train::TrainConfig tc;
  tc.schedule.epochs = 1;
  tc.schedule.batch_size = 4;
  tc.schedule.max_steps = 3;
  tc.seed = 11;
  auto run = [&] {
    torch::manual_seed(0);
    SamCt m(cfg, AblationSwitches{});
    auto before = checkpoint::parameter_digests(m->group("decoder"));
    auto r = train::train_main(*m, data, tc);
    CHECK(r.steps == 3);
    CHECK(checkpoint::parameter_digests(m->group("decoder")) == before);
    return std::make_pair(checkpoint::parameter_digests(m->group("cnn_encoder")), r.epochs.at(0).loss.total);
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("evaluation on foreground records") {
  torch::manual_seed(8);
  SamCt m(fixture::tiny_config(), AblationSwitches{});
  auto data = data::ct_like_set(6, 32, 4);
  train::EvalOptions opt;
  auto r = train::evaluate(*m, data, opt);
  CHECK(r.summary.count == train::foreground_only(data).size());
  CHECK(r.summary.dice >= 0);
  CHECK(r.summary.dice <= 100);
  CHECK(r.accuracy == -1);
  opt.spec.mode = synthesis::PromptMode::kTaskIndicator;
  CHECK_THROWS(train::evaluate(*m, data, opt));
}
