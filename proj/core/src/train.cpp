#include "samct/train.hpp"

#include "samct/checkpoint.hpp"
#include "samct/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace samct::train {
using nlohmann::json;

double Schedule::lr_at(int epoch) const {
  const int step = static_cast<int>(std::ceil(step_fraction * epochs - 1e-9));
  return epoch < step ? lr : lr_final;
}

void Schedule::validate(const std::string& where) const {
  if (epochs < 0) throw ConfigError(where + ".epochs: must be non-negative");
  if (batch_size <= 0) throw ConfigError(where + ".batch_size: must be positive");
  if (!(lr > 0) || !(lr_final > 0)) throw ConfigError(where + ".lr: learning rates must be positive");
  if (!(step_fraction >= 0 && step_fraction <= 1)) throw ConfigError(where + ".step_fraction: must be in [0, 1]");
  if (max_steps < 0) throw ConfigError(where + ".max_steps: must be non-negative");
}

void TrainConfig::validate() const {
  schedule.validate("train");
  if (!(shift_fraction >= 0 && shift_fraction < 0.5)) throw ConfigError("train.shift_fraction: must be in [0, 0.5)");
  if (!(background_fraction >= 0 && background_fraction <= 1)) throw ConfigError("train.background_fraction: must be in [0, 1]");
  augment.validate();
}

void IndicatorTrainConfig::validate() const {
  schedule.validate("indicator");
  augment.validate();
}

void PretrainConfig::validate() const {
  schedule.validate("pretrain");
  if (scenes <= 0) throw ConfigError("pretrain.scenes: must be positive");
}

void to_json(json& j, const Schedule& s) {
  j = {{"epochs", s.epochs},   {"batch_size", s.batch_size},       {"lr", s.lr},
       {"lr_final", s.lr_final}, {"step_fraction", s.step_fraction}, {"max_steps", s.max_steps}};
}

namespace {

Schedule schedule_from(const json& j, Schedule d) {
  d.epochs = j.value("epochs", d.epochs);
  d.batch_size = j.value("batch_size", d.batch_size);
  d.lr = j.value("lr", d.lr);
  d.lr_final = j.value("lr_final", d.lr_final);
  d.step_fraction = j.value("step_fraction", d.step_fraction);
  d.max_steps = j.value("max_steps", d.max_steps);
  return d;
}

json weights_json(const losses::LossWeights& w) { return {{"dice", w.dice}, {"bce", w.bce}, {"classifier", w.classifier}}; }

losses::LossWeights weights_from(const json& j) {
  losses::LossWeights w;
  if (!j.is_object()) return w;
  w.dice = j.value("dice", w.dice);
  w.bce = j.value("bce", w.bce);
  w.classifier = j.value("classifier", w.classifier);
  return w;
}

}  // namespace

void from_json(const json& j, Schedule& s) { s = schedule_from(j, Schedule{}); }

void to_json(json& j, const TrainConfig& c) {
  j = {{"schedule", c.schedule},
       {"loss", weights_json(c.loss)},
       {"shift_fraction", c.shift_fraction},
       {"background_fraction", c.background_fraction},
       {"background_cap", c.background_cap},
       {"augment", c.augment},
       {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.schedule = schedule_from(j.value("schedule", json::object()), d.schedule);
  c.loss = weights_from(j.value("loss", json::object()));
  c.shift_fraction = j.value("shift_fraction", d.shift_fraction);
  c.background_fraction = j.value("background_fraction", d.background_fraction);
  c.background_cap = j.value("background_cap", d.background_cap);
  c.augment = j.value("augment", json::object()).get<augment::AugmentConfig>();
  c.seed = j.value("seed", d.seed);
  c.validate();
}

void to_json(json& j, const IndicatorTrainConfig& c) {
  j = {{"schedule", c.schedule},
       {"loss", weights_json(c.loss)},
       {"subsample_background", c.subsample_background},
       {"teacher_forcing", c.teacher_forcing},
       {"augment", c.augment},
       {"seed", c.seed}};
}

void from_json(const json& j, IndicatorTrainConfig& c) {
  IndicatorTrainConfig d;
  c.schedule = schedule_from(j.value("schedule", json::object()), d.schedule);
  c.loss = weights_from(j.value("loss", json::object()));
  c.subsample_background = j.value("subsample_background", d.subsample_background);
  c.teacher_forcing = j.value("teacher_forcing", d.teacher_forcing);
  c.augment = j.value("augment", json::object()).get<augment::AugmentConfig>();
  c.seed = j.value("seed", d.seed);
  c.validate();
}

void to_json(json& j, const PretrainConfig& c) {
  j = {{"scenes", c.scenes}, {"schedule", c.schedule}, {"loss", weights_json(c.loss)}, {"empty_fraction", c.empty_fraction}, {"seed", c.seed}};
}

void from_json(const json& j, PretrainConfig& c) {
  PretrainConfig d;
  c.scenes = j.value("scenes", d.scenes);
  c.schedule = schedule_from(j.value("schedule", json::object()), d.schedule);
  c.loss = weights_from(j.value("loss", json::object()));
  c.empty_fraction = j.value("empty_fraction", d.empty_fraction);
  c.seed = j.value("seed", d.seed);
  c.validate();
}

FreezeGuard::FreezeGuard(SamCtImpl& model, const std::vector<std::string>& groups) : model_(&model), groups_(groups) {
  auto all = model.groups();
  for (const auto& g : groups_)
    for (const auto& [name, t] : all.at(g)) digests_[name] = checkpoint::tensor_digest(t);
}

void FreezeGuard::check() const {
  auto all = model_->groups();
  for (const auto& g : groups_)
    for (const auto& [name, t] : all.at(g)) {
      auto it = digests_.find(name);
      if (it == digests_.end() || it->second != checkpoint::tensor_digest(t))
        throw InvariantError("freeze violation: frozen parameter '" + name + "' (group " + g + ") changed during training");
    }
}

std::map<std::string, std::string> FreezeGuard::group_digests() const {
  std::map<std::string, std::string> out;
  auto all = model_->groups();
  for (const auto& g : groups_) out[g] = checkpoint::group_digest(all.at(g));
  return out;
}

void deterministic_setup(std::uint64_t seed) {
  torch::set_num_threads(1);
  torch::manual_seed(seed);
}

namespace {

using Clock = std::chrono::steady_clock;

torch::Tensor mask_tensor(const std::vector<Mask>& masks) {
  const int h = masks.front().height, w = masks.front().width;
  auto t = torch::empty({static_cast<int64_t>(masks.size()), 1, h, w});
  auto acc = t.accessor<float, 4>();
  for (size_t i = 0; i < masks.size(); ++i)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) acc[i][0][y][x] = masks[i](y, x) ? 1.0f : 0.0f;
  return t;
}

std::vector<Mask> to_masks(const torch::Tensor& logits) {
  auto bin = decoder::binarize(logits.detach()).cpu().contiguous();
  const auto n = bin.size(0);
  const int h = static_cast<int>(bin.size(2)), w = static_cast<int>(bin.size(3));
  std::vector<Mask> out;
  const uint8_t* p = bin.data_ptr<uint8_t>();
  for (int64_t i = 0; i < n; ++i) {
    Mask m(h, w);
    std::copy(p + i * h * w, p + (i + 1) * h * w, m.data.begin());
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<const Image8*> pointers(const std::vector<Image8>& images) {
  std::vector<const Image8*> out;
  for (const auto& im : images) out.push_back(&im);
  return out;
}

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
}

struct LossAccumulator {
  double dice = 0, bce = 0, ce = 0, total = 0;
  bool has_ce = false;
  size_t n = 0;
  void add(const losses::LossReport& r, size_t count) {
    dice += r.dice_loss * count;
    bce += r.bce_loss * count;
    total += r.total * count;
    if (r.classifier_ce) {
      ce += *r.classifier_ce * count;
      has_ce = true;
    }
    n += count;
  }
  losses::LossReport mean() const {
    losses::LossReport r;
    if (!n) return r;
    r.dice_loss = dice / n;
    r.bce_loss = bce / n;
    r.total = total / n;
    if (has_ce) r.classifier_ce = ce / n;
    return r;
  }
};

using PromptMaker = std::function<prompt::PromptSet(const Mask&, Rng&)>;

struct SegmentationLoop {
  SamCtImpl* model;
  std::vector<torch::Tensor> parameters;
  const std::vector<data::Sample>* samples;
  Schedule schedule;
  losses::LossWeights weights;
  std::optional<augment::AugmentConfig> augment;
  std::uint64_t seed = 0;
  PromptMaker make_prompts;
  bool subsample = false;
  double background_fraction = 0.1;
  size_t background_cap = 1000;
  const FreezeGuard* guard = nullptr;

  TrainReport run(const EpochCallback& on_epoch) {
    TrainReport report;
    if (guard) guard->check();
    if (schedule.epochs == 0 || samples->empty()) return report;
    torch::optim::Adam opt(parameters, torch::optim::AdamOptions(schedule.lr));
    const auto records = data::records_of(*samples);
    model->train();
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
      const auto start = Clock::now();
      Rng epoch_rng(Rng::mix(seed, static_cast<std::uint64_t>(epoch)));
      std::vector<size_t> order;
      if (subsample) {
        order = synthesis::subsample_background(records, epoch_rng, background_fraction, background_cap);
      } else {
        order.resize(samples->size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      }
      epoch_rng.shuffle(order);
      const double lr = schedule.lr_at(epoch);
      set_lr(opt, lr);
      LossAccumulator acc;
      EpochLog log;
      log.epoch = epoch;
      log.lr = lr;
      for (size_t b = 0; b < order.size(); b += static_cast<size_t>(schedule.batch_size)) {
        const size_t e = std::min(order.size(), b + static_cast<size_t>(schedule.batch_size));
        std::vector<Image8> images;
        std::vector<Mask> masks;
        std::vector<prompt::PromptSet> prompts;
        for (size_t k = b; k < e; ++k) {
          const auto& s = (*samples)[order[k]];
          Rng rng(Rng::mix(Rng::mix(seed, 0x5eed + static_cast<std::uint64_t>(epoch)), order[k]));
          if (augment && augment->enabled) {
            auto [im, m] = augment::apply(s.image, s.mask, augment::AugmentParams::draw(*augment, s.image.height, s.image.width, rng));
            images.push_back(std::move(im));
            masks.push_back(std::move(m));
          } else {
            images.push_back(s.image);
            masks.push_back(s.mask);
          }
          prompts.push_back(make_prompts(masks.back(), rng));
        }
        auto x = model->preprocess(pointers(images));
        auto features = model->encode(x);
        auto logits = model->segment(features, prompts);
        auto terms = losses::seg_loss(logits, mask_tensor(masks), weights);
        opt.zero_grad();
        terms.total.backward();
        opt.step();
        acc.add(losses::report(terms), e - b);
        ++log.steps;
        ++report.steps;
        if (schedule.max_steps > 0 && report.steps >= schedule.max_steps) break;
      }
      log.samples = acc.n;
      log.loss = acc.mean();
      log.seconds = std::chrono::duration<double>(Clock::now() - start).count();
      if (guard) guard->check();
      report.epochs.push_back(log);
      if (on_epoch) on_epoch(log);
      if (schedule.max_steps > 0 && report.steps >= schedule.max_steps) break;
    }
    model->eval();
    return report;
  }
};

}  // namespace

TrainReport pretrain_backbone(SamCtImpl& plain, const std::vector<data::Sample>& scenes, const PretrainConfig& config,
                              const EpochCallback& on_epoch) {
  config.validate();
  if (plain.switches.cnn_branch || plain.switches.adapters) throw ConfigError("pretrain: the backbone must be built with switches 'none'");
  SegmentationLoop loop;
  loop.model = &plain;
  for (auto& p : plain.parameters()) {
    p.set_requires_grad(true);
    loop.parameters.push_back(p);
  }
  loop.samples = &scenes;
  loop.schedule = config.schedule;
  loop.weights = config.loss;
  loop.seed = config.seed;
  loop.make_prompts = [](const Mask& mask, Rng& rng) {
    prompt::PromptSet s;
    if (count_foreground(mask) == 0) {
      s.negative = {synthesis::sample_negative_point(mask, rng)};
      if (rng.bernoulli(0.5)) s.negative.push_back(synthesis::sample_negative_point(mask, rng));
      return s;
    }
    // Mix of the layouts a promptable model is queried with.
    const auto layout = rng.uniform_int(0, 5);
    auto box = [&](double shift) {
      Box b = synthesis::shifted_bbox(mask, shift, rng);
      if (b.x0 == b.x1) b.x1 < mask.width - 1 ? ++b.x1 : --b.x0;
      if (b.y0 == b.y1) b.y1 < mask.height - 1 ? ++b.y1 : --b.y0;
      return b;
    };
    const auto mode = rng.bernoulli(0.5) ? synthesis::PointMode::kRandom : synthesis::PointMode::kCenter;
    if (layout != 2) s.positive = {synthesis::sample_positive_point(mask, mode, rng)};
    if (layout == 1 || layout == 4) s.negative = {synthesis::sample_negative_point(mask, rng)};
    if (layout >= 2) s.box = box(layout == 5 ? 0.0 : 0.05);
    return s;
  };
  auto report = loop.run(on_epoch);
  report.metadata = {{"kind", "pretrain"}, {"config", config}};
  return report;
}

TrainReport train_main(SamCtImpl& model, const std::vector<data::Sample>& train_set, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  model.apply_freeze();
  FreezeGuard guard(model, kFrozenGroups);
  SegmentationLoop loop;
  loop.model = &model;
  loop.parameters = model.trainable_parameters();
  loop.samples = &train_set;
  loop.schedule = config.schedule;
  loop.weights = config.loss;
  loop.augment = config.augment;
  loop.seed = config.seed;
  const double shift = config.shift_fraction;
  loop.make_prompts = [shift](const Mask& mask, Rng& rng) { return synthesis::build_training_prompts(mask, shift, rng); };
  loop.subsample = true;
  loop.background_fraction = config.background_fraction;
  loop.background_cap = config.background_cap;
  loop.guard = &guard;
  auto report = loop.run(on_epoch);
  report.metadata = {{"kind", "train_main"}, {"config", config}, {"switches", model.switches}, {"frozen_digests", guard.group_digests()}};
  return report;
}

namespace {

// Decodes each gate group and scatters the logits back into batch order.
torch::Tensor decode_gated(SamCtImpl& model, const ImageFeatures& features, const prompt::GatedBundles& gates) {
  torch::Tensor out;
  auto place = [&](const std::vector<int64_t>& idx, const std::optional<prompt::PromptBundle>& bundle) {
    if (idx.empty()) return;
    auto index = torch::tensor(idx, torch::kLong);
    auto logits = model.decode(features.select(index), *bundle).logits;
    if (!out.defined()) out = torch::zeros({features.batch(), 1, logits.size(2), logits.size(3)}, logits.options());
    out = out.index_copy(0, index, logits);
  };
  place(gates.foreground_index, gates.foreground);
  place(gates.background_index, gates.background);
  return out;
}

}  // namespace

TrainReport train_indicator(SamCtImpl& model, prompt::TaskIndicatorImpl& indicator, const std::vector<data::Sample>& train_set,
                            const IndicatorTrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (!model.switches.cnn_branch) throw ConfigError("train-indicator: the main model needs the CNN branch for the indicator embeddings");
  for (auto& p : model.parameters()) p.set_requires_grad(false);
  std::vector<std::string> all_groups = kFrozenGroups;
  all_groups.insert(all_groups.end(), kTrainableGroups.begin(), kTrainableGroups.end());
  FreezeGuard guard(model, all_groups);
  guard.check();
  TrainReport report;
  const auto& sched = config.schedule;
  if (sched.epochs == 0 || train_set.empty()) return report;
  torch::optim::Adam opt(indicator.parameters(), torch::optim::AdamOptions(sched.lr));
  const auto records = data::records_of(train_set);
  model.eval();
  indicator.train();
  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    const auto start = Clock::now();
    Rng epoch_rng(Rng::mix(config.seed, static_cast<std::uint64_t>(epoch)));
    std::vector<size_t> order;
    if (config.subsample_background) {
      order = synthesis::subsample_background(records, epoch_rng);
    } else {
      order.resize(train_set.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    }
    epoch_rng.shuffle(order);
    const double lr = sched.lr_at(epoch);
    set_lr(opt, lr);
    LossAccumulator acc;
    size_t correct = 0;
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    for (size_t b = 0; b < order.size(); b += static_cast<size_t>(sched.batch_size)) {
      const size_t e = std::min(order.size(), b + static_cast<size_t>(sched.batch_size));
      std::vector<Image8> images;
      std::vector<Mask> masks;
      std::vector<bool> fg;
      for (size_t k = b; k < e; ++k) {
        const auto& s = train_set[order[k]];
        Rng rng(Rng::mix(Rng::mix(config.seed, 0x1d + static_cast<std::uint64_t>(epoch)), order[k]));
        if (config.augment.enabled) {
          auto [im, m] = augment::apply(s.image, s.mask, augment::AugmentParams::draw(config.augment, s.image.height, s.image.width, rng));
          images.push_back(std::move(im));
          masks.push_back(std::move(m));
        } else {
          images.push_back(s.image);
          masks.push_back(s.mask);
        }
        fg.push_back(count_foreground(masks.back()) > 0);
      }
      ImageFeatures features;
      {
        torch::NoGradGuard no_grad;
        features = model.encode(model.preprocess(pointers(images)));
      }
      auto out = indicator.forward({features.cnn, features.vit});
      auto gates = prompt::gate_batch(out, *model.prompt_encoder, config.teacher_forcing ? std::optional(fg) : std::nullopt);
      auto logits = decode_gated(model, features, gates);
      std::vector<int64_t> labels;
      for (bool f : fg) labels.push_back(f ? 0 : 1);
      auto label_t = torch::tensor(labels, torch::kLong);
      auto terms = losses::with_classifier(losses::seg_loss(logits, mask_tensor(masks), config.loss), out.class_logits, label_t, config.loss);
      opt.zero_grad();
      terms.total.backward();
      opt.step();
      auto pred = out.p.detach();
      for (size_t i = 0; i < fg.size(); ++i) correct += prompt::indicates_foreground(pred[static_cast<int64_t>(i)]) == fg[i];
      acc.add(losses::report(terms), e - b);
      ++log.steps;
      ++report.steps;
      if (sched.max_steps > 0 && report.steps >= sched.max_steps) break;
    }
    log.samples = acc.n;
    log.loss = acc.mean();
    log.accuracy = acc.n ? static_cast<double>(correct) / static_cast<double>(acc.n) : 0.0;
    log.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    guard.check();
    report.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (sched.max_steps > 0 && report.steps >= sched.max_steps) break;
  }
  indicator.eval();
  report.metadata = {{"kind", "train_indicator"},
                     {"task_id", indicator.task_id},
                     {"lr", sched.lr},
                     {"batch_size", sched.batch_size},
                     {"config", config},
                     {"main_digests", guard.group_digests()}};
  return report;
}

std::vector<data::Sample> foreground_only(const std::vector<data::Sample>& samples) {
  std::vector<data::Sample> out;
  for (const auto& s : samples)
    if (s.record.has_foreground) out.push_back(s);
  return out;
}

EvalResult evaluate(SamCtImpl& model, const std::vector<data::Sample>& samples, const EvalOptions& options) {
  options.spec.validate();
  const bool indicator_mode = options.spec.mode == synthesis::PromptMode::kTaskIndicator;
  if (indicator_mode && !options.indicator) throw ConfigError("prompt.mode: task_indicator requires a trained indicator checkpoint");
  torch::NoGradGuard no_grad;
  model.eval();
  if (options.indicator) options.indicator->eval();
  EvalResult result;
  std::vector<std::string> ids;
  size_t correct = 0;
  std::vector<size_t> todo;
  for (size_t i = 0; i < samples.size(); ++i)
    if (indicator_mode || samples[i].record.has_foreground) todo.push_back(i);
  for (size_t b = 0; b < todo.size(); b += static_cast<size_t>(options.batch_size)) {
    const size_t e = std::min(todo.size(), b + static_cast<size_t>(options.batch_size));
    std::vector<const Image8*> images;
    for (size_t k = b; k < e; ++k) images.push_back(&samples[todo[k]].image);
    auto features = model.encode(model.preprocess(images));
    torch::Tensor logits;
    if (indicator_mode) {
      auto out = options.indicator->forward({features.cnn, features.vit});
      auto gates = prompt::gate_batch(out, *model.prompt_encoder);
      logits = decode_gated(model, features, gates);
      for (size_t k = b; k < e; ++k)
        correct += prompt::indicates_foreground(out.p[static_cast<int64_t>(k - b)]) == samples[todo[k]].record.has_foreground;
    } else {
      std::vector<prompt::PromptSet> prompts;
      for (size_t k = b; k < e; ++k) {
        Rng rng(Rng::mix(options.spec.rng_seed, todo[k]));
        prompts.push_back(synthesis::prompts_for_mode(samples[todo[k]].mask, options.spec, rng));
      }
      logits = model.segment(features, prompts);
    }
    auto preds = to_masks(logits);
    for (size_t k = b; k < e; ++k) {
      const auto& s = samples[todo[k]];
      if (!s.record.has_foreground) continue;
      result.per_sample.push_back(metrics::evaluate(preds[k - b], s.mask));
      ids.push_back(s.record.object_id);
    }
  }
  result.summary = metrics::summarize(result.per_sample, ids);
  if (indicator_mode) {
    result.classified = todo.size();
    result.accuracy = todo.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(todo.size());
  }
  return result;
}

std::vector<ModeRow> prompt_mode_benchmark(SamCtImpl& model, const std::vector<data::Sample>& samples,
                                           const std::vector<synthesis::PromptMode>& modes, std::uint64_t seed,
                                           prompt::TaskIndicatorImpl* indicator, double shift_fraction) {
  for (auto m : modes)
    if (m == synthesis::PromptMode::kTaskIndicator && !indicator)
      throw ConfigError("prompt-bench: task_indicator mode requested without an indicator checkpoint");
  std::vector<ModeRow> rows;
  for (auto m : modes) {
    EvalOptions o;
    o.spec.mode = m;
    o.spec.rng_seed = seed;
    o.spec.shift_fraction = shift_fraction;
    o.indicator = indicator;
    rows.push_back({m, evaluate(model, samples, o)});
  }
  return rows;
}

AblationResult ablation_run(const AblationSwitches& switches, const ModelConfig& config, SamCtImpl& backbone,
                            const std::vector<data::Sample>& train_set, const std::vector<data::Sample>& test_set, const TrainConfig& train,
                            const synthesis::PromptSpec& spec, const EpochCallback& on_epoch) {
  switches.validate();
  deterministic_setup(train.seed);
  SamCt model(config, switches);
  model->copy_groups_from(backbone, kFrozenGroups);
  AblationResult r;
  r.switches = switches;
  for (const auto& g : kTrainableGroups) r.trainable_parameters += model->parameter_count(g);
  r.train = train_main(*model, train_set, train, on_epoch);
  EvalOptions o;
  o.spec = spec;
  r.eval = evaluate(*model, test_set, o);
  return r;
}

json summary_json(const metrics::Summary& s) {
  json per = json::object();
  for (const auto& [id, m] : s.per_object)
    per[id] = {{"dice", m.dice}, {"iou", m.iou}, {"hd95", m.hd95}, {"count", s.per_object_count.at(id)}};
  return {{"dice", s.dice}, {"iou", s.iou}, {"hd95", s.hd95}, {"count", s.count}, {"per_object", per}};
}

std::string format_mode_table(const std::vector<ModeRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(24) << "mode" << std::right << std::setw(9) << "dice" << std::setw(9) << "iou" << std::setw(9) << "HD95"
     << std::setw(8) << "n" << std::setw(10) << "acc" << "\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    os << std::left << std::setw(24) << synthesis::to_string(r.mode) << std::right << std::setw(9) << r.result.summary.dice << std::setw(9)
       << r.result.summary.iou << std::setw(9) << r.result.summary.hd95 << std::setw(8) << r.result.summary.count;
    if (r.result.accuracy >= 0)
      os << std::setw(10) << 100.0 * r.result.accuracy;
    else
      os << std::setw(10) << "-";
    os << "\n";
  }
  return os.str();
}

json mode_rows_json(const std::vector<ModeRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json row = {{"mode", synthesis::to_string(r.mode)}, {"metrics", summary_json(r.result.summary)}};
    if (r.result.accuracy >= 0) row["classification_accuracy"] = r.result.accuracy;
    out.push_back(row);
  }
  return out;
}

std::string format_ablation_table(const std::vector<AblationResult>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(6) << "CNN" << std::setw(6) << "CBI" << std::setw(9) << "Adapter" << std::right << std::setw(12) << "trainable"
     << std::setw(9) << "dice" << std::setw(9) << "iou" << std::setw(9) << "HD95" << "\n";
  os << std::fixed << std::setprecision(2);
  auto mark = [](bool b) { return b ? "yes" : "no"; };
  for (const auto& r : rows) {
    os << std::left << std::setw(6) << mark(r.switches.cnn_branch) << std::setw(6) << mark(r.switches.cross_branch) << std::setw(9)
       << mark(r.switches.adapters) << std::right << std::setw(12) << r.trainable_parameters << std::setw(9) << r.eval.summary.dice
       << std::setw(9) << r.eval.summary.iou << std::setw(9) << r.eval.summary.hd95 << "\n";
  }
  return os.str();
}

json ablation_rows_json(const std::vector<AblationResult>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"switches", r.switches}, {"trainable_parameters", r.trainable_parameters}, {"metrics", summary_json(r.eval.summary)}});
  return out;
}

}  // namespace samct::train
