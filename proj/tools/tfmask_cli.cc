// Command-line front end: simulate, messl, train, enhance, evaluate, experiment.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tfmask/enhancer.h"
#include "tfmask/error.h"
#include "tfmask/masks.h"
#include "tfmask/messl.h"
#include "tfmask/metrics.h"
#include "tfmask/pipeline.h"
#include "tfmask/scene.h"
#include "tfmask/wav.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tfmask;

namespace {

struct Flags {
  std::string config;
  std::string input;
  std::string model;
  std::string combine;
  std::optional<std::size_t> ref_channel;
  std::string out;
  std::string dump_masks;
  std::string scene;  // evaluate: reference scene manifest
};

PipelineConfig PipelineFromFlags(const Flags& f) {
  PipelineConfig cfg = f.config.empty() ? PipelineConfig{} : LoadPipelineConfig(f.config);
  if (!f.model.empty()) cfg.model_path = f.model;
  if (!f.combine.empty()) cfg.combine_mode = ParseCombine(f.combine);
  if (f.ref_channel) cfg.reference_channel = *f.ref_channel;
  if (!f.out.empty()) cfg.output_path = f.out;
  if (!f.dump_masks.empty()) cfg.dump_masks_dir = f.dump_masks;
  return cfg;
}

void Require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required flag ") + flag);
}

std::optional<EnhancerModel> MaybeLoadModel(const std::string& path) {
  if (path.empty()) return std::nullopt;
  if (!fs::exists(path)) throw ConfigError("model file not found: " + path);
  return LoadModel(path);
}

int CmdSimulate(const Flags& f) {
  Require(f.config, "--config");
  Require(f.out, "--out");
  SceneSpec spec = LoadSceneSpec(f.config);
  SceneRender render = RenderScene(spec);
  std::ifstream in(f.config, std::ios::binary);
  WriteSceneRender(f.out, render, HashHex(std::string(std::istreambuf_iterator<char>(in), {})));
  std::cout << "wrote " << (fs::path(f.out) / "manifest.json").string() << "\n";
  return 0;
}

int CmdMessl(const Flags& f) {
  Require(f.input, "--input");
  Require(f.out, "--out");
  PipelineConfig cfg = PipelineFromFlags(f);
  MultichannelWaveform wave = ReadWav(f.input);
  MesslConfig mc = cfg.messl;
  mc.reference_channel = cfg.reference_channel;
  MesslResult r = RunEm(Stft(wave, cfg.stft), mc);
  const std::string hash = cfg.Hash();
  WriteMaskFile(f.out, r.target_mask(), hash);
  if (!cfg.dump_masks_dir.empty()) {
    PipelineArtifacts art;
    art.messl = r;
    art.final_mask = r.target_mask();
    DumpMasks(cfg.dump_masks_dir, art, hash);
  }
  std::cout << "target source " << r.target << ", delays";
  for (Eigen::Index p = 0; p < r.params.delays.cols(); ++p)
    std::cout << " " << r.params.delays(r.target, p);
  std::cout << ", " << r.loglik_trace.size() - 1 << " iterations\n";
  return 0;
}

// Training settings live under "train" in the pipeline config:
//   {"layer_sizes": [64], "merge": "average", "activation": "sigmoid",
//    "target": "ia", "max_epochs": 50, "patience": 5, "learning_rate": 1e-3,
//    "batch_size": 1, "seed": 0, "channels": "reference" | "all",
//    "history": "history.csv"}
int CmdTrain(const Flags& f) {
  Require(f.input, "--input");
  Require(f.out, "--out");
  PipelineConfig cfg = PipelineFromFlags(f);
  json t = json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    try {
      json j = json::parse(std::string(std::istreambuf_iterator<char>(in), {}));
      if (j.contains("train")) t = j["train"];
    } catch (const json::exception& e) {
      throw ConfigError(std::string("train config: ") + e.what());
    }
  }
  EnhancerConfig ec;
  TrainOptions opts;
  std::string channels_mode, history;
  std::uint64_t seed = 0;
  try {
    ec.layer_sizes = t.value("layer_sizes", ec.layer_sizes);
    if (t.contains("merge")) ec.merge = ParseMerge(t["merge"].get<std::string>());
    if (t.contains("activation"))
      ec.activation = ParseActivation(t["activation"].get<std::string>());
    if (t.contains("target")) ec.target_kind = ParseTarget(t["target"].get<std::string>());
    opts.max_epochs = t.value("max_epochs", opts.max_epochs);
    opts.patience = t.value("patience", opts.patience);
    opts.adam.learning_rate = t.value("learning_rate", opts.adam.learning_rate);
    opts.batch_size = t.value("batch_size", opts.batch_size);
    seed = t.value("seed", seed);
    channels_mode = t.value("channels", std::string("reference"));
    history = t.value("history", std::string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (channels_mode != "reference" && channels_mode != "all")
    throw ConfigError("train.channels must be 'reference' or 'all'");
  opts.seed = seed;
  ec.n_bins = cfg.stft.num_bins();

  std::vector<TrainingExample> train_ex, valid_ex;
  for (const auto& e : LoadTrainingManifest(f.input)) {
    SceneRender render = LoadSceneRender(e.scene_manifest);
    std::vector<std::size_t> chans;
    if (channels_mode == "all") {
      for (std::size_t c = 0; c < render.mixture.num_channels(); ++c) chans.push_back(c);
    } else {
      chans.push_back(cfg.reference_channel);
    }
    std::optional<MaskGrid> mask;
    if (!e.mask_path.empty()) mask = ReadMaskFile(e.mask_path).mask;
    auto ex = ExamplesFromScene(render, cfg, chans, mask ? &*mask : nullptr);
    auto& dst = e.validation ? valid_ex : train_ex;
    std::move(ex.begin(), ex.end(), std::back_inserter(dst));
  }
  if (train_ex.empty()) throw DataError("training manifest has no training scenes");
  FeatureStats stats = StatsFromExamples(train_ex);
  auto train = MakeBatches(train_ex, stats, ec.target_kind);
  auto valid = MakeBatches(valid_ex, stats, ec.target_kind);
  TrainResult r = Train(EnhancerModel::Create(ec, stats, seed), train, valid, opts);
  SaveModel(f.out, r.model);
  if (!history.empty()) WriteHistoryCsv(history, r.history);
  std::cout << "best epoch " << r.best_epoch << ", validation loss " << r.best_valid_loss << "\n";
  return 0;
}

int CmdEnhance(const Flags& f) {
  Require(f.input, "--input");
  PipelineConfig cfg = PipelineFromFlags(f);
  Require(cfg.output_path, "--out");
  auto model = MaybeLoadModel(cfg.model_path);
  MultichannelWaveform wave = ReadWav(f.input);
  EnhanceOutput out = Enhance(wave, cfg, model ? &*model : nullptr);
  WriteWav(cfg.output_path, out.audio);
  if (!cfg.dump_masks_dir.empty()) DumpMasks(cfg.dump_masks_dir, out.artifacts, cfg.Hash());
  std::cout << "wrote " << cfg.output_path << " (config " << cfg.Hash() << ")\n";
  return 0;
}

int CmdEvaluate(const Flags& f) {
  Require(f.input, "--input");
  Require(f.scene, "--scene");
  PipelineConfig cfg = PipelineFromFlags(f);
  MultichannelWaveform est = ReadWav(f.input);
  SceneRender render = LoadSceneRender(f.scene);
  SceneReferences refs = ReferencesAt(render, cfg.reference_channel, 0);
  EvalScores s = Evaluate(est.channels.at(0), refs.speech, refs.noise);
  std::string text = ScoresCsvHeader() + "\n" + ScoresCsvRow(f.input, s, cfg.Hash()) + "\n";
  if (cfg.output_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(cfg.output_path);
    if (!out) throw DataError("cannot write " + cfg.output_path);
    out << text;
  }
  return 0;
}

int CmdExperiment(const Flags& f) {
  Require(f.input, "--input");
  PipelineConfig cfg = PipelineFromFlags(f);
  ExperimentManifest m = LoadExperimentManifest(f.input);
  if (!f.model.empty()) m.model_path = f.model;
  if (!m.model_path.empty()) cfg.model_path = m.model_path;
  std::optional<EnhancerModel> model;
  if (!m.modes.empty()) model = MaybeLoadModel(cfg.model_path);
  auto rows = RunExperiment(m, cfg, model ? &*model : nullptr);
  const std::string hash = cfg.Hash();
  std::ofstream file;
  if (!cfg.output_path.empty()) {
    file.open(cfg.output_path);
    if (!file) throw DataError("cannot write " + cfg.output_path);
  }
  std::ostream& out = cfg.output_path.empty() ? std::cout : file;
  out << ExperimentCsvHeader() << "\n";
  for (const auto& r : rows) out << ExperimentCsvRow(r, hash) << "\n";
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.status != "ok";
  if (failed) std::cerr << failed << " of " << rows.size() << " rows failed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multichannel mask estimation and beamforming"};
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file");
    sub->add_option("--input", f.input, "input file");
    sub->add_option("--model", f.model, "enhancer model file");
    sub->add_option("--combine", f.combine, "mask combination")
        ->check(CLI::IsMember({"avg", "min", "max", "lstm"}));
    sub->add_option("--ref-channel", f.ref_channel, "reference channel");
    sub->add_option("--out", f.out, "output path");
    sub->add_option("--dump-masks", f.dump_masks, "directory for intermediate masks");
  };

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Flags&);
  };
  const Command commands[] = {
      {"simulate", "render a scene config (--config) into --out", CmdSimulate},
      {"messl", "spatial clustering of --input, target mask to --out", CmdMessl},
      {"train", "train an enhancer from a training manifest (--input)", CmdTrain},
      {"enhance", "run the full pipeline on --input", CmdEnhance},
      {"evaluate", "score --input against a rendered --scene", CmdEvaluate},
      {"experiment", "score every scene x mode in a manifest (--input)", CmdExperiment},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Flags&)>> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    if (std::string(c.name) == "evaluate")
      sub->add_option("--scene", f.scene, "scene manifest with references");
    subs.emplace_back(sub, c.run);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    for (auto& [sub, run] : subs)
      if (sub->parsed()) return run(f);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
