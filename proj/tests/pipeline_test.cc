#include "tfmask/pipeline.h"

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "tfmask/error.h"

namespace tfmask {
namespace {

namespace fs = std::filesystem;

PipelineConfig SmallConfig() {
  PipelineConfig cfg;
  cfg.stft = StftConfig{256, 64, WindowType::kSqrtHann};
  return cfg;
}

SceneSpec TwoTalkers(std::uint64_t seed) {
  SpeechLikeOptions a, b;
  a.duration_s = b.duration_s = 1.0;
  a.seed = seed;
  b.seed = seed + 1;
  b.f0 = 210.0;
  SceneSpec spec;
  spec.n_channels = 2;
  spec.seed = seed + 2;
  spec.diffuse_noise_level = 0.01;
  spec.sources.push_back({SpeechLikeSignal(a), {0.0, 0.0}, {1.0, 1.0}});
  spec.sources.push_back({SpeechLikeSignal(b), {0.0, 4.0}, {1.0, 1.0}});
  return spec;
}

EnhancerModel SmallModel(std::uint64_t seed) {
  EnhancerConfig ec;
  ec.n_bins = 129;
  ec.layer_sizes = {4};
  return EnhancerModel::Create(
      ec, {Eigen::VectorXd::Constant(129, -40.0), Eigen::VectorXd::Constant(129, 20.0)}, seed);
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

TEST(Enhance, DeterministicOutput) {
  const auto mix = RenderScene(TwoTalkers(1)).mixture;
  const auto model = SmallModel(3);
  const auto cfg = SmallConfig();
  auto a = Enhance(mix, cfg, &model), b = Enhance(mix, cfg, &model);
  EXPECT_EQ(a.audio.samples, b.audio.samples);
  EXPECT_EQ(a.audio.size(), mix.num_samples());
  EXPECT_EQ(a.artifacts.enhanced.size(), 2u);
}

TEST(Enhance, LstmOnlyWithZeroModelHalvesTheBeamformer) {
  const auto mix = RenderScene(TwoTalkers(4)).mixture;
  auto model = SmallModel(5);
  model.network.SetZero();
  auto cfg = SmallConfig();
  cfg.combine_mode = CombineMode::kLstmOnly;
  auto out = Enhance(mix, cfg, &model);
  EXPECT_EQ((out.artifacts.final_mask.values.array() - 0.5).abs().maxCoeff(), 0.0);
  Spectrogram half = out.artifacts.beamformed;
  half.bins *= 0.5;
  EXPECT_EQ(out.audio.samples, Istft(half).samples);
}

TEST(Enhance, WithoutModelTheSpatialMaskIsFinal) {
  const auto mix = RenderScene(TwoTalkers(6)).mixture;
  auto cfg = SmallConfig();
  auto a = Enhance(mix, cfg, nullptr);
  EXPECT_TRUE(a.artifacts.enhanced.empty());
  EXPECT_EQ(a.artifacts.final_mask.values, a.artifacts.messl.target_mask().values);
  cfg.model_path = "/nonexistent/model.bin";
  cfg.combine_mode = CombineMode::kMin;
  EXPECT_EQ(Enhance(mix, cfg, nullptr).audio.samples, a.audio.samples);
}

TEST(Enhance, ErrorsNameTheStage) {
  const auto mix = RenderScene(TwoTalkers(7)).mixture;
  MultichannelWaveform mono{{mix.channels[0]}};
  try {
    Enhance(mono, SmallConfig(), nullptr);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("input: ", 0), 0u) << e.what();
  }
  EnhancerConfig ec;
  ec.n_bins = 513;
  ec.layer_sizes = {2};
  auto wrong = EnhancerModel::Create(ec, {Eigen::VectorXd::Zero(513), Eigen::VectorXd::Ones(513)}, 1);
  try {
    Enhance(mix, SmallConfig(), &wrong);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("enhance_channels: ", 0), 0u) << e.what();
  }
  MultichannelWaveform tiny = mix;
  for (auto& c : tiny.channels) c.samples.resize(100);
  EXPECT_THROW(Enhance(tiny, SmallConfig(), nullptr), DataError);
}

TEST(Enhance, MasksAreDumped) {
  TempDir dir("tfmask_dump_test");
  const auto model = SmallModel(8);
  const auto cfg = SmallConfig();
  auto out = Enhance(RenderScene(TwoTalkers(9)).mixture, cfg, &model);
  DumpMasks(dir.str(), out.artifacts, cfg.Hash());
  for (const char* leaf : {"fused.mask", "final.mask", "enhanced_ch0.mask", "enhanced_ch1.mask"})
    EXPECT_TRUE(fs::exists(dir / leaf)) << leaf;
  auto back = ReadMaskFile(dir / "final.mask");
  EXPECT_EQ(back.config_hash, cfg.Hash());
  EXPECT_LT((back.mask.values - out.artifacts.final_mask.values).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Config, ParsesKeysAndKeepsDefaults) {
  auto cfg = ParsePipelineConfig(R"({"stft": {"window_size": 512, "hop_size": 128},
      "messl": {"n_sources": 2, "garbage_source": false, "delay_min": -4, "delay_max": 4,
                "delay_step": 0.5, "target_delays": [1.5]},
      "combine": "max", "reference_channel": 1, "out": "x.wav"})");
  EXPECT_EQ(cfg.stft.window_size, 512u);
  EXPECT_EQ(cfg.stft.window, WindowType::kSqrtHann);
  EXPECT_EQ(cfg.messl.n_sources, 2u);
  EXPECT_FALSE(cfg.messl.garbage_source);
  EXPECT_EQ(cfg.messl.delay_grid.size(), 17u);
  EXPECT_EQ(cfg.messl.n_iterations, 16u);
  EXPECT_EQ(*cfg.messl.target_delays, std::vector<double>{1.5});
  EXPECT_EQ(cfg.combine_mode, CombineMode::kMax);
  EXPECT_EQ(cfg.reference_channel, 1u);
  EXPECT_EQ(cfg.output_path, "x.wav");
  EXPECT_TRUE(cfg.model_path.empty());
}

TEST(Config, HashCoversSettingsButNotPaths) {
  PipelineConfig a = SmallConfig(), b = a;
  b.output_path = "elsewhere.wav";
  b.dump_masks_dir = "masks";
  EXPECT_EQ(a.Hash(), b.Hash());
  b.combine_mode = CombineMode::kMin;
  EXPECT_NE(a.Hash(), b.Hash());
  b = a;
  b.messl.n_iterations = 17;
  EXPECT_NE(a.Hash(), b.Hash());
}

TEST(Config, Errors) {
  EXPECT_THROW(ParsePipelineConfig("{"), ConfigError);
  EXPECT_THROW(ParsePipelineConfig(R"({"combine": "median"})"), ConfigError);
  EXPECT_THROW(ParsePipelineConfig(R"({"stft": {"window_size": 512, "hop_size": 0}})"), ConfigError);
  EXPECT_THROW(ParsePipelineConfig(R"({"messl": {"n_sources": 0}})"), ConfigError);
  EXPECT_THROW(ParsePipelineConfig(R"({"stft": {"window_size": "big"}})"), ConfigError);
  EXPECT_THROW(LoadPipelineConfig("/nonexistent/cfg.json"), ConfigError);
}

TEST(Config, ModelPathResolvesAgainstConfigDirectory) {
  TempDir dir("tfmask_cfg_test");
  std::ofstream(dir / "cfg.json") << R"({"model": "m.bin"})";
  EXPECT_EQ(LoadPipelineConfig(dir / "cfg.json").model_path, dir / "m.bin");
}

TEST(References, TargetImageAndInterferers) {
  auto render = RenderScene(TwoTalkers(10));
  auto refs = ReferencesAt(render, 1);
  EXPECT_EQ(refs.speech.samples, render.per_source_images[0].channels[1].samples);
  ASSERT_EQ(refs.noise.size(), 2u);
  EXPECT_EQ(refs.noise[0].samples, render.per_source_images[1].channels[1].samples);
  auto swapped = ReferencesAt(render, 0, 1);
  EXPECT_EQ(swapped.speech.samples, render.per_source_images[1].channels[0].samples);
  auto spec = TwoTalkers(10);
  spec.diffuse_noise_level = 0.0;
  EXPECT_EQ(ReferencesAt(RenderScene(spec), 0).noise.size(), 1u);
  EXPECT_THROW(ReferencesAt(render, 2), DataError);
  EXPECT_THROW(ReferencesAt(render, 0, 2), DataError);
}

TEST(Training, ExamplesAndBatches) {
  auto render = RenderScene(TwoTalkers(11));
  auto cfg = SmallConfig();
  auto examples = ExamplesFromScene(render, cfg, {0, 1});
  ASSERT_EQ(examples.size(), 2u);
  EXPECT_EQ(examples[0].spatial.values, examples[1].spatial.values);
  EXPECT_EQ(examples[1].noisy.bins, Stft(render.mixture.channels[1], cfg.stft).bins);
  auto stats = StatsFromExamples(examples);
  auto batches = MakeBatches(examples, stats, TargetKind::kPS);
  ASSERT_EQ(batches.size(), 2u);
  EXPECT_EQ(batches[0].inputs.rows(), 258);
  EXPECT_EQ(batches[0].targets.rows(), 129);
  EXPECT_EQ(batches[0].inputs.cols(), examples[0].noisy.num_frames());
  MaskGrid bad{Eigen::MatrixXd::Zero(3, 3)};
  EXPECT_THROW(ExamplesFromScene(render, cfg, {0}, &bad), DataError);
  EXPECT_THROW(ExamplesFromScene(render, cfg, {2}), DataError);
}

TEST(Training, ManifestParsing) {
  TempDir dir("tfmask_train_manifest");
  std::ofstream(dir / "list.txt") << "# comment\n\ntrain a/manifest.json\n"
                                     "valid /abs/manifest.json b.mask\n";
  auto entries = LoadTrainingManifest(dir / "list.txt");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_FALSE(entries[0].validation);
  EXPECT_EQ(entries[0].scene_manifest, dir / "a/manifest.json");
  EXPECT_TRUE(entries[0].mask_path.empty());
  EXPECT_TRUE(entries[1].validation);
  EXPECT_EQ(entries[1].scene_manifest, "/abs/manifest.json");
  EXPECT_EQ(entries[1].mask_path, dir / "b.mask");
  std::ofstream(dir / "bad.txt") << "test x.json\n";
  EXPECT_THROW(LoadTrainingManifest(dir / "bad.txt"), ConfigError);
  std::ofstream(dir / "short.txt") << "train\n";
  EXPECT_THROW(LoadTrainingManifest(dir / "short.txt"), ConfigError);
  EXPECT_THROW(LoadTrainingManifest(dir / "missing.txt"), DataError);
}

TEST(Experiment, ManifestParsing) {
  auto m = ParseExperimentManifest(
      R"({"model": "m.bin", "modes": ["avg", "lstm"], "scenes": ["s/manifest.json"]})", "/base");
  EXPECT_EQ(m.model_path, "/base/m.bin");
  EXPECT_EQ(m.modes, (std::vector<CombineMode>{CombineMode::kAvg, CombineMode::kLstmOnly}));
  EXPECT_EQ(m.scenes, std::vector<std::string>{"/base/s/manifest.json"});
  EXPECT_FALSE(m.include_references);
  EXPECT_THROW(ParseExperimentManifest(R"({"modes": ["best"]})", ""), ConfigError);
  EXPECT_THROW(ParseExperimentManifest("[", ""), ConfigError);
}

TEST(Experiment, RowsPerSceneAndMode) {
  TempDir dir("tfmask_experiment_test");
  WriteSceneRender(dir / "s0", RenderScene(TwoTalkers(12)), "h");
  const auto model = SmallModel(13);
  const auto cfg = SmallConfig();

  ExperimentManifest m;
  m.modes = {CombineMode::kAvg, CombineMode::kMin, CombineMode::kMax, CombineMode::kLstmOnly};
  m.scenes = {dir / "s0/manifest.json", dir / "missing/manifest.json"};
  m.include_references = true;
  auto rows = RunExperiment(m, cfg, &model);
  ASSERT_EQ(rows.size(), 12u);
  const std::vector<std::string> modes = {"noisy", "oracle", "avg", "min", "max", "lstm"};
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(rows[i].mode, modes[i]);
    EXPECT_EQ(rows[i].status, "ok");
    EXPECT_EQ(rows[i].scene, m.scenes[0]);
    EXPECT_EQ(rows[6 + i].mode, modes[i]);
    EXPECT_NE(rows[6 + i].status, "ok");
  }
  EXPECT_GT(rows[1].scores.sdr, rows[0].scores.sdr);

  // Combine modes without a model fail per row; reference rows still score.
  auto no_model = RunExperiment(m, cfg, nullptr);
  EXPECT_EQ(no_model[1].status, "ok");
  EXPECT_NE(no_model[2].status.find("needs a model"), std::string::npos);

  m.scenes.clear();
  EXPECT_TRUE(RunExperiment(m, cfg, &model).empty());
}

TEST(Experiment, CsvLayout) {
  EXPECT_EQ(ExperimentCsvHeader(), "scene,mode,sdr,sir,sar,seg_snr,status,config_hash");
  ExperimentRow row{"a,b", "avg", {1.0, 2.0, 3.0, 4.0}, "bad \"x\""};
  EXPECT_EQ(ExperimentCsvRow(row, "ff"),
            "\"a,b\",avg,1.000000,2.000000,3.000000,4.000000,\"bad \"\"x\"\"\",ff");
}

}  // namespace
}  // namespace tfmask
