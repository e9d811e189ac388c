#include "cli.hpp"

#include "samct/checkpoint.hpp"
#include "samct/dataset.hpp"
#include "samct/errors.hpp"
#include "samct/experiment.hpp"
#include "samct/ingest.hpp"
#include "samct/synthetic.hpp"
#include "samct/train.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace samct::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::string switches;
  std::string prompt_mode;
  std::string task;
  std::string checkpoint;
  std::string indicator;
  std::string modes;
  std::int64_t seed = -1;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig::from_json(json::object()) : ExperimentConfig::load(c.config);
  if (c.seed >= 0) cfg.set_seed(static_cast<std::uint64_t>(c.seed));
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (!c.switches.empty()) cfg.switches = AblationSwitches::parse(c.switches);
  if (!c.prompt_mode.empty()) cfg.prompt.mode = synthesis::parse_mode(c.prompt_mode);
  if (!c.task.empty()) cfg.data.task_id = c.task;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw DataError("cannot write " + p.string());
  os << text;
}

void snapshot(const ExperimentConfig& cfg, const std::string& command) {
  fs::create_directories(cfg.output_dir);
  json j = cfg.to_json();
  j["command"] = command;
  write_text(fs::path(cfg.output_dir) / "resolved_config.json", j.dump(2) + "\n");
}

ingest::Manifest manifest_of(const ExperimentConfig& cfg) {
  if (cfg.data.manifest.empty()) throw ConfigError("data.manifest: required for this command");
  if (!fs::exists(cfg.data.manifest)) throw DataError("data.manifest: " + cfg.data.manifest + " does not exist");
  return ingest::Manifest::load(cfg.data.manifest);
}

std::vector<data::Sample> split_of(const ExperimentConfig& cfg, ingest::Split split, const std::vector<std::string>& objects) {
  auto samples = data::load(manifest_of(cfg), cfg.data.resolved_root(), split, objects);
  if (samples.empty()) throw DataError("no " + ingest::to_string(split) + " records in " + cfg.data.manifest);
  return samples;
}

std::string epoch_line(const train::EpochLog& e) {
  std::ostringstream os;
  os << "epoch " << e.epoch << " lr " << e.lr << " steps " << e.steps << " loss " << e.loss.total << " (dice " << e.loss.dice_loss
     << ", bce " << e.loss.bce_loss;
  if (e.loss.classifier_ce) os << ", ce " << *e.loss.classifier_ce;
  os << ")";
  if (e.accuracy >= 0) os << " acc " << e.accuracy;
  os << " " << e.seconds << "s";
  return os.str();
}

json epoch_json(const train::EpochLog& e) {
  json j = {{"epoch", e.epoch}, {"lr", e.lr},           {"steps", e.steps}, {"samples", e.samples},
            {"dice_loss", e.loss.dice_loss}, {"bce_loss", e.loss.bce_loss}, {"total", e.loss.total}, {"seconds", e.seconds}};
  if (e.loss.classifier_ce) j["classifier_ce"] = *e.loss.classifier_ce;
  if (e.accuracy >= 0) j["accuracy"] = e.accuracy;
  return j;
}

train::EpochCallback logger(std::ofstream& log) {
  return [&log](const train::EpochLog& e) {
    std::cout << epoch_line(e) << std::endl;
    log << epoch_json(e).dump() << "\n" << std::flush;
  };
}

SamCt backbone_of(const ExperimentConfig& cfg) {
  if (cfg.backbone.empty()) throw ConfigError("backbone: a pretrained backbone checkpoint is required (run `samct pretrain`)");
  if (!fs::exists(cfg.backbone)) throw DataError("backbone: " + cfg.backbone + " does not exist");
  auto b = checkpoint::load_model(cfg.backbone);
  if (!(b->config == cfg.model)) throw ConfigError("backbone: checkpoint model dimensions differ from the config's model section");
  return b;
}

SamCt model_from(const ExperimentConfig& cfg, const std::string& path) {
  if (!path.empty()) {
    if (!fs::exists(path)) throw DataError("checkpoint " + path + " does not exist");
    return checkpoint::load_model(path);
  }
  train::deterministic_setup(cfg.seed);
  SamCt m(cfg.model, cfg.switches);
  if (!cfg.backbone.empty()) m->copy_groups_from(*backbone_of(cfg), kFrozenGroups);
  return m;
}

int cmd_synth(const std::string& out, int count, int size, std::int64_t seed) {
  synthetic::write_ct_like_dataset(out, count, size, static_cast<std::uint64_t>(std::max<std::int64_t>(seed, 0)));
  std::cout << "wrote " << count << " slices to " << out << std::endl;
  return 0;
}

int cmd_ingest(const std::string& input, const std::string& out, const std::string& window, const std::string& plane, std::int64_t seed,
               const std::string& ratios) {
  ingest::IngestOptions o;
  o.input = input;
  o.output = out.empty() ? fs::path(input) / "ingested" : fs::path(out);
  if (!window.empty()) o.default_window = ingest::DensityWindow::parse(window);
  if (!plane.empty()) o.plane = ingest::parse_plane(plane);
  o.seed = static_cast<std::uint64_t>(std::max<std::int64_t>(seed, 0));
  if (!ratios.empty()) o.ratios = ingest::SplitRatios::parse(ratios);
  const auto m = ingest::run_ingest(o);
  std::map<std::string, size_t> counts;
  for (const auto& r : m.records) ++counts[ingest::to_string(r.split)];
  std::cout << "manifest " << (o.output / "manifest.jsonl").string() << ": " << m.records.size() << " records";
  for (const auto& [s, n] : counts) std::cout << ", " << s << " " << n;
  std::cout << std::endl;
  return 0;
}

int cmd_pretrain(const Common& c) {
  auto cfg = resolve(c);
  snapshot(cfg, "pretrain");
  train::deterministic_setup(cfg.pretrain.seed);
  SamCt plain(cfg.model, AblationSwitches::plain_sam());
  const auto scenes = data::natural_set(cfg.pretrain.scenes, cfg.model.input_size, cfg.pretrain.seed, cfg.pretrain.empty_fraction);
  std::ofstream log(fs::path(cfg.output_dir) / "pretrain_log.jsonl");
  auto report = train::pretrain_backbone(*plain, scenes, cfg.pretrain, logger(log));
  const auto path = fs::path(cfg.output_dir) / "backbone.ckpt";
  checkpoint::save_model(path, *plain, report.metadata);
  std::cout << "backbone " << path.string() << std::endl;
  return 0;
}

int cmd_train(const Common& c) {
  auto cfg = resolve(c);
  snapshot(cfg, "train");
  auto train_set = split_of(cfg, ingest::Split::kTrain, cfg.data.objects);
  auto backbone = backbone_of(cfg);
  train::deterministic_setup(cfg.train.seed);
  SamCt model(cfg.model, cfg.switches);
  model->copy_groups_from(*backbone, kFrozenGroups);
  std::ofstream log(fs::path(cfg.output_dir) / "train_log.jsonl");
  auto report = train::train_main(*model, train_set, cfg.train, logger(log));
  const auto path = fs::path(cfg.output_dir) / "model.ckpt";
  checkpoint::save_model(path, *model, report.metadata);
  std::cout << "model " << path.string() << " after " << report.steps << " steps" << std::endl;
  return 0;
}

int cmd_train_indicator(const Common& c) {
  auto cfg = resolve(c);
  if (cfg.data.task_id.empty()) throw ConfigError("data.task_id: required for train-indicator (or pass --task)");
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint: the frozen main model is required");
  snapshot(cfg, "train-indicator");
  auto model = model_from(cfg, c.checkpoint);
  auto train_set = split_of(cfg, ingest::Split::kTrain, {cfg.data.task_id});
  train::deterministic_setup(cfg.indicator.seed);
  prompt::TaskIndicator ind(prompt::IndicatorDims::from_config(model->config), cfg.data.task_id);
  std::ofstream log(fs::path(cfg.output_dir) / "indicator_log.jsonl");
  auto report = train::train_indicator(*model, *ind, train_set, cfg.indicator, logger(log));
  const auto path = fs::path(cfg.output_dir) / ("indicator_" + cfg.data.task_id + ".ckpt");
  checkpoint::save_indicator(path, *ind, model->config, report.metadata);
  std::cout << "indicator " << path.string() << " (" << ind->dims.parameter_count() << " parameters)" << std::endl;
  return 0;
}

int cmd_eval(const Common& c) {
  auto cfg = resolve(c);
  snapshot(cfg, "eval");
  auto model = model_from(cfg, c.checkpoint);
  std::optional<prompt::TaskIndicator> ind;
  std::vector<std::string> objects = cfg.data.objects;
  if (cfg.prompt.mode == synthesis::PromptMode::kTaskIndicator) {
    if (c.indicator.empty()) throw ConfigError("--indicator: task_indicator mode requires an indicator checkpoint");
    json meta;
    ind = checkpoint::load_indicator(c.indicator, model->config, &meta);
    objects = {(*ind)->task_id};
  }
  auto test_set = split_of(cfg, ingest::Split::kTest, objects);
  train::EvalOptions o;
  o.spec = cfg.prompt;
  o.indicator = ind ? ind->get() : nullptr;
  auto r = train::evaluate(*model, test_set, o);
  std::vector<train::ModeRow> rows = {{cfg.prompt.mode, r}};
  const auto table = train::format_mode_table(rows);
  std::cout << table;
  write_text(fs::path(cfg.output_dir) / "eval.txt", table);
  write_text(fs::path(cfg.output_dir) / "eval.json", train::mode_rows_json(rows).dump(2) + "\n");
  return 0;
}

int cmd_prompt_bench(const Common& c) {
  auto cfg = resolve(c);
  snapshot(cfg, "prompt-bench");
  auto model = model_from(cfg, c.checkpoint);
  std::vector<synthesis::PromptMode> modes;
  if (c.modes.empty()) {
    modes = synthesis::all_modes();
    if (c.indicator.empty()) modes.pop_back();
  } else {
    std::stringstream ss(c.modes);
    std::string m;
    while (std::getline(ss, m, ',')) modes.push_back(synthesis::parse_mode(m));
  }
  std::optional<prompt::TaskIndicator> ind;
  if (!c.indicator.empty()) ind = checkpoint::load_indicator(c.indicator, model->config);
  std::vector<std::string> objects = cfg.data.objects;
  if (ind) objects = {(*ind)->task_id};
  auto test_set = split_of(cfg, ingest::Split::kTest, objects);
  auto rows = train::prompt_mode_benchmark(*model, test_set, modes, cfg.prompt.rng_seed, ind ? ind->get() : nullptr, cfg.prompt.shift_fraction);
  const auto table = train::format_mode_table(rows);
  std::cout << table;
  write_text(fs::path(cfg.output_dir) / "prompt_bench.txt", table);
  write_text(fs::path(cfg.output_dir) / "prompt_bench.json", train::mode_rows_json(rows).dump(2) + "\n");
  return 0;
}

int cmd_ablate(const Common& c) {
  Common base = c;
  base.switches.clear();
  auto cfg = resolve(base);
  snapshot(cfg, "ablate");
  auto backbone = backbone_of(cfg);
  auto train_set = split_of(cfg, ingest::Split::kTrain, cfg.data.objects);
  auto test_set = split_of(cfg, ingest::Split::kTest, cfg.data.objects);
  std::vector<AblationSwitches> grid;
  if (!c.switches.empty()) {
    grid.push_back(AblationSwitches::parse(c.switches));
  } else {
    grid = {AblationSwitches::parse("cnn,cbi,adapter"), AblationSwitches::parse("adapter"), AblationSwitches::parse("cnn,adapter"),
            AblationSwitches::parse("cnn,cbi")};
  }
  std::vector<train::AblationResult> rows;
  for (const auto& sw : grid) {
    std::cout << "variant " << sw.to_string() << std::endl;
    std::ofstream log(fs::path(cfg.output_dir) / ("train_log_" + sw.to_string() + ".jsonl"));
    rows.push_back(train::ablation_run(sw, cfg.model, *backbone, train_set, test_set, cfg.train, cfg.prompt, logger(log)));
  }
  const auto table = train::format_ablation_table(rows);
  std::cout << table;
  write_text(fs::path(cfg.output_dir) / "ablation.txt", table);
  write_text(fs::path(cfg.output_dir) / "ablation.json", train::ablation_rows_json(rows).dump(2) + "\n");
  return 0;
}

void add_common(CLI::App* app, Common& c, bool needs_checkpoint = false) {
  app->add_option("--config", c.config, "experiment config (JSON)");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "seed for every stage");
  app->add_option("--switches", c.switches, "enabled components, e.g. cnn,cbi,adapter or none");
  app->add_option("--prompt-mode", c.prompt_mode, "evaluation prompt mode");
  app->add_option("--task", c.task, "task indicator object id");
  if (needs_checkpoint) {
    app->add_option("--checkpoint", c.checkpoint, "main model checkpoint");
    app->add_option("--indicator", c.indicator, "task indicator checkpoint");
  }
}

int dispatch(CLI::App& app, int argc, char** argv) {
  Common c;
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "write a synthetic ct-like raw dataset");
  std::string synth_out;
  int count = 2000, size = 64;
  std::int64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "dataset directory")->required();
  synth->add_option("--count", count, "number of slices");
  synth->add_option("--size", size, "slice side in pixels");
  synth->add_option("--seed", synth_seed, "seed");

  auto* ingest_cmd = app.add_subcommand("ingest", "standardize a raw dataset into rasters and a manifest");
  std::string input, ingest_out, window, plane, ratios;
  std::int64_t ingest_seed = 0;
  ingest_cmd->add_option("--input", input, "raw dataset directory")->required();
  ingest_cmd->add_option("--out", ingest_out, "output directory (default INPUT/ingested)");
  ingest_cmd->add_option("--window", window, "lung|bone|tissue|hemorrhage|L,U");
  ingest_cmd->add_option("--plane", plane, "axial|coronal|sagittal");
  ingest_cmd->add_option("--seed", ingest_seed, "split seed");
  ingest_cmd->add_option("--ratios", ratios, "train,val,test ratios");

  auto* pretrain = app.add_subcommand("pretrain", "train the plain backbone that later stays frozen");
  add_common(pretrain, c);
  auto* train_cmd = app.add_subcommand("train", "train adapters, CNN, interaction and fusion");
  add_common(train_cmd, c);
  auto* train_ind = app.add_subcommand("train-indicator", "train a task indicator on the frozen model");
  add_common(train_ind, c, true);
  auto* eval = app.add_subcommand("eval", "evaluate on the test split");
  add_common(eval, c, true);
  auto* ablate = app.add_subcommand("ablate", "train and evaluate the ablation grid");
  add_common(ablate, c);
  auto* bench = app.add_subcommand("prompt-bench", "evaluate every prompt mode");
  add_common(bench, c, true);
  bench->add_option("--modes", c.modes, "comma-separated modes (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (*synth) return cmd_synth(synth_out, count, size, synth_seed);
  if (*ingest_cmd) return cmd_ingest(input, ingest_out, window, plane, ingest_seed, ratios);
  if (*pretrain) return cmd_pretrain(c);
  if (*train_cmd) return cmd_train(c);
  if (*train_ind) return cmd_train_indicator(c);
  if (*eval) return cmd_eval(c);
  if (*ablate) return cmd_ablate(c);
  if (*bench) return cmd_prompt_bench(c);
  return 2;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"samct: CT segmentation with a frozen promptable backbone"};
  try {
    return dispatch(app, argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return 3;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << std::endl;
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> storage = args;
  storage.insert(storage.begin(), "samct");
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace samct::cli
