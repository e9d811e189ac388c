#pragma once

#include "samct/augment.hpp"
#include "samct/dataset.hpp"
#include "samct/losses.hpp"
#include "samct/metrics.hpp"
#include "samct/model.hpp"
#include "samct/prompt.hpp"
#include "samct/prompt_synthesis.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace samct::train {

/// Two-phase step schedule: `lr` for the first ceil(step_fraction * epochs)
/// epochs, `lr_final` afterwards.
struct Schedule {
  int epochs = 10;
  int batch_size = 16;
  double lr = 6e-4;
  double lr_final = 1e-4;
  double step_fraction = 0.2;
  /// Stop after this many optimizer steps; 0 means no limit.
  int max_steps = 0;

  double lr_at(int epoch) const;
  void validate(const std::string& where) const;
  bool operator==(const Schedule&) const = default;
};

struct TrainConfig {
  Schedule schedule;
  losses::LossWeights loss;
  double shift_fraction = 0.05;
  double background_fraction = 0.1;
  size_t background_cap = 1000;
  augment::AugmentConfig augment;
  std::uint64_t seed = 0;

  void validate() const;
};

struct IndicatorTrainConfig {
  Schedule schedule{12, 12, 1e-3, 5e-5, 0.5, 0};
  losses::LossWeights loss;
  /// The classifier sees every background record, so foreground and
  /// background stay balanced; set to subsample like the main model.
  bool subsample_background = false;
  /// Gate by the label rather than the classifier while training.
  bool teacher_forcing = true;
  augment::AugmentConfig augment;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PretrainConfig {
  int scenes = 3000;
  Schedule schedule{6, 16, 1e-3, 2e-4, 0.6, 0};
  losses::LossWeights loss;
  double empty_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const Schedule& s);
void from_json(const nlohmann::json& j, Schedule& s);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const IndicatorTrainConfig& c);
void from_json(const nlohmann::json& j, IndicatorTrainConfig& c);
void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

/// Records a digest per tensor of the given groups; check() throws
/// InvariantError naming the first changed tensor.
class FreezeGuard {
 public:
  FreezeGuard(SamCtImpl& model, const std::vector<std::string>& groups);
  void check() const;
  std::map<std::string, std::string> group_digests() const;

 private:
  SamCtImpl* model_;
  std::vector<std::string> groups_;
  std::map<std::string, std::string> digests_;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  int steps = 0;
  size_t samples = 0;
  losses::LossReport loss;  // sample-weighted mean over the epoch
  double accuracy = -1;     // indicator training only
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  int steps = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Single-thread, seeded libtorch state.
void deterministic_setup(std::uint64_t seed);

/// Plain SAM stand-in trained end to end on natural scenes. Every parameter
/// is trained; the result is the frozen backbone of later models.
TrainReport pretrain_backbone(SamCtImpl& plain, const std::vector<data::Sample>& scenes, const PretrainConfig& config,
                              const EpochCallback& on_epoch = {});

/// Trains the adapter, CNN, interaction and fusion groups. Frozen groups are
/// hashed before training and after every epoch.
TrainReport train_main(SamCtImpl& model, const std::vector<data::Sample>& train_set, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});

/// Trains only `indicator`; the whole main model is hashed every epoch.
TrainReport train_indicator(SamCtImpl& model, prompt::TaskIndicatorImpl& indicator, const std::vector<data::Sample>& train_set,
                            const IndicatorTrainConfig& config, const EpochCallback& on_epoch = {});

struct EvalOptions {
  synthesis::PromptSpec spec;
  int batch_size = 32;
  prompt::TaskIndicatorImpl* indicator = nullptr;
};

struct EvalResult {
  metrics::Summary summary;  // foreground records
  std::vector<metrics::MetricReport> per_sample;
  /// Classifier accuracy over every record (task_indicator mode), else -1.
  double accuracy = -1;
  size_t classified = 0;
};

/// Manual modes score the foreground records; task_indicator also classifies
/// every record. Prompt draws are seeded per record by spec.rng_seed.
EvalResult evaluate(SamCtImpl& model, const std::vector<data::Sample>& samples, const EvalOptions& options);

struct ModeRow {
  synthesis::PromptMode mode;
  EvalResult result;
};

/// One evaluation per mode. task_indicator requires an indicator.
std::vector<ModeRow> prompt_mode_benchmark(SamCtImpl& model, const std::vector<data::Sample>& samples,
                                           const std::vector<synthesis::PromptMode>& modes, std::uint64_t seed,
                                           prompt::TaskIndicatorImpl* indicator = nullptr, double shift_fraction = 0.05);

/// Builds the switched variant with `backbone`'s frozen groups, trains it
/// and evaluates it with `spec`.
struct AblationResult {
  AblationSwitches switches;
  int64_t trainable_parameters = 0;
  TrainReport train;
  EvalResult eval;
};
AblationResult ablation_run(const AblationSwitches& switches, const ModelConfig& config, SamCtImpl& backbone,
                            const std::vector<data::Sample>& train_set, const std::vector<data::Sample>& test_set, const TrainConfig& train,
                            const synthesis::PromptSpec& spec, const EpochCallback& on_epoch = {});

std::vector<data::Sample> foreground_only(const std::vector<data::Sample>& samples);

/// Fixed-width text table and JSON rows.
std::string format_mode_table(const std::vector<ModeRow>& rows);
nlohmann::json mode_rows_json(const std::vector<ModeRow>& rows);
std::string format_ablation_table(const std::vector<AblationResult>& rows);
nlohmann::json ablation_rows_json(const std::vector<AblationResult>& rows);
nlohmann::json summary_json(const metrics::Summary& s);

}  // namespace samct::train
