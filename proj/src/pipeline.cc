#include "tfmask/pipeline.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "tfmask/error.h"

namespace tfmask {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Runs fn, re-raising library errors with the stage name prefixed.
template <typename Fn>
auto RunStage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(stage) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string(stage) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(stage) + ": " + e.what());
  } catch (const Error& e) {
    throw Error(std::string(stage) + ": " + e.what());
  }
}

std::string Resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).string();
}

}  // namespace

std::string PipelineConfig::Canonical() const {
  std::ostringstream s;
  s.precision(17);
  s << "stft " << stft.window_size << " " << stft.hop_size << " " << WindowName(stft.window)
    << "\nmessl " << messl.n_sources << " " << messl.garbage_source << " "
    << messl.n_iterations << " " << messl.convergence_tol << " " << messl.var_floor;
  s << "\ngrid";
  for (double d : messl.delay_grid) s << " " << d;
  if (messl.target_index) s << "\ntarget_index " << *messl.target_index;
  if (messl.target_delays) {
    s << "\ntarget_delays";
    for (double d : *messl.target_delays) s << " " << d;
  }
  s << "\ncombine " << CombineName(combine_mode) << "\nref " << reference_channel
    << "\ncov " << covariance.load_factor << " " << covariance.weight_floor;
  if (!model_path.empty()) {
    std::ifstream in(model_path, std::ios::binary);
    s << "\nmodel "
      << (in ? HashHex(std::string(std::istreambuf_iterator<char>(in), {})) : "missing");
  }
  return s.str();
}

std::string PipelineConfig::Hash() const { return HashHex(Canonical()); }

PipelineConfig ParsePipelineConfig(const std::string& json_text) {
  PipelineConfig cfg;
  try {
    json j = json::parse(json_text);
    if (j.contains("stft")) {
      const json& s = j["stft"];
      cfg.stft.window_size = s.value("window_size", cfg.stft.window_size);
      cfg.stft.hop_size = s.value("hop_size", cfg.stft.hop_size);
      if (s.contains("window")) cfg.stft.window = ParseWindow(s["window"].get<std::string>());
    }
    if (j.contains("messl")) {
      const json& m = j["messl"];
      cfg.messl.n_sources = m.value("n_sources", cfg.messl.n_sources);
      cfg.messl.garbage_source = m.value("garbage_source", cfg.messl.garbage_source);
      cfg.messl.n_iterations = m.value("n_iterations", cfg.messl.n_iterations);
      cfg.messl.convergence_tol = m.value("convergence_tol", cfg.messl.convergence_tol);
      cfg.messl.var_floor = m.value("var_floor", cfg.messl.var_floor);
      if (m.contains("delay_min") || m.contains("delay_max") || m.contains("delay_step")) {
        cfg.messl.delay_grid = MesslConfig::UniformGrid(
            m.value("delay_min", -8.0), m.value("delay_max", 8.0), m.value("delay_step", 0.25));
      }
      if (m.contains("target_index"))
        cfg.messl.target_index = m["target_index"].get<std::size_t>();
      if (m.contains("target_delays"))
        cfg.messl.target_delays = m["target_delays"].get<std::vector<double>>();
    }
    cfg.model_path = j.value("model", cfg.model_path);
    if (j.contains("combine")) cfg.combine_mode = ParseCombine(j["combine"].get<std::string>());
    cfg.reference_channel = j.value("reference_channel", cfg.reference_channel);
    if (j.contains("covariance")) {
      const json& c = j["covariance"];
      cfg.covariance.load_factor = c.value("load_factor", cfg.covariance.load_factor);
      cfg.covariance.weight_floor = c.value("weight_floor", cfg.covariance.weight_floor);
    }
    cfg.output_path = j.value("out", cfg.output_path);
    cfg.dump_masks_dir = j.value("dump_masks", cfg.dump_masks_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  cfg.stft.Validate();
  cfg.messl.Validate();
  return cfg;
}

PipelineConfig LoadPipelineConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  PipelineConfig cfg = ParsePipelineConfig(std::string(std::istreambuf_iterator<char>(in), {}));
  cfg.model_path = Resolve(cfg.model_path, fs::path(path).parent_path().string());
  return cfg;
}

Spectrogram MaskDrivenBeamform(const std::vector<Spectrogram>& specs, const MaskGrid& mask,
                               std::size_t ref_channel, const CovarianceOptions& cov,
                               BeamformerWeights* weights_out) {
  CovarianceField field =
      RunStage("estimate_covariances", [&] { return EstimateCovariances(specs, mask, cov); });
  BeamformerWeights w = RunStage("mvdr_weights", [&] { return MvdrWeights(field, ref_channel); });
  Spectrogram out = RunStage("beamform", [&] { return Beamform(specs, w); });
  if (weights_out) *weights_out = std::move(w);
  return out;
}

EnhanceOutput Enhance(const MultichannelWaveform& input, const PipelineConfig& cfg,
                      const EnhancerModel* model) {
  RunStage("input", [&] {
    input.Validate();
    if (input.num_channels() < 2) throw DataError("enhancement needs at least two channels");
    if (cfg.reference_channel >= input.num_channels())
      throw ConfigError("reference channel out of range");
  });
  EnhanceOutput out;
  PipelineArtifacts& art = out.artifacts;
  std::vector<Spectrogram> specs = RunStage("stft", [&] { return Stft(input, cfg.stft); });

  MesslConfig mc = cfg.messl;
  mc.reference_channel = cfg.reference_channel;
  art.messl = RunStage("run_em", [&] { return RunEm(specs, mc); });
  const MaskGrid& spatial = art.messl.target_mask();

  if (model) {
    art.enhanced = RunStage("enhance_channels", [&] {
      if (model->config.n_bins != cfg.stft.num_bins())
        throw ConfigError("model frequency size does not match the STFT");
      return EnhanceChannels(*model, specs, spatial);
    });
    art.fused = RunStage("fuse_channels", [&] { return FuseChannels(art.enhanced); });
    art.final_mask =
        RunStage("combine_masks", [&] { return CombineMasks(art.fused, spatial, cfg.combine_mode); });
  } else {
    art.final_mask = spatial;
  }

  art.beamformed = MaskDrivenBeamform(specs, art.final_mask, cfg.reference_channel,
                                      cfg.covariance, &art.weights);
  Spectrogram post = RunStage("apply_mask", [&] { return ApplyMask(art.final_mask, art.beamformed); });
  out.audio = RunStage("istft", [&] { return Istft(post); });
  return out;
}

void DumpMasks(const std::string& dir, const PipelineArtifacts& art,
               const std::string& config_hash) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir);
  const fs::path base(dir);
  for (std::size_t k = 0; k < art.messl.masks.size(); ++k)
    WriteMaskFile((base / ("messl_" + std::to_string(k) + ".mask")).string(), art.messl.masks[k],
                  config_hash);
  for (std::size_t c = 0; c < art.enhanced.size(); ++c)
    WriteMaskFile((base / ("enhanced_ch" + std::to_string(c) + ".mask")).string(),
                  art.enhanced[c], config_hash);
  if (art.fused.rows() > 0)
    WriteMaskFile((base / "fused.mask").string(), art.fused, config_hash);
  WriteMaskFile((base / "final.mask").string(), art.final_mask, config_hash);
}

SceneReferences ReferencesAt(const SceneRender& render, std::size_t channel,
                             std::size_t target_index) {
  if (target_index >= render.per_source_images.size())
    throw DataError("scene has no source " + std::to_string(target_index));
  if (channel >= render.mixture.num_channels()) throw DataError("channel out of range");
  SceneReferences refs;
  refs.speech = render.per_source_images[target_index].channels[channel];
  for (std::size_t k = 0; k < render.per_source_images.size(); ++k)
    if (k != target_index) refs.noise.push_back(render.per_source_images[k].channels[channel]);
  if (channel < render.noise_image.num_channels()) {
    const Waveform& n = render.noise_image.channels[channel];
    bool has_energy = std::any_of(n.samples.begin(), n.samples.end(),
                                  [](double v) { return v != 0.0; });
    if (has_energy) refs.noise.push_back(n);
  }
  return refs;
}

std::vector<TrainingExample> ExamplesFromScene(const SceneRender& render,
                                               const PipelineConfig& cfg,
                                               const std::vector<std::size_t>& channels,
                                               const MaskGrid* spatial_mask) {
  if (render.per_source_images.empty()) throw DataError("training scene has no target source");
  std::vector<Spectrogram> specs = Stft(render.mixture, cfg.stft);
  MaskGrid spatial;
  if (spatial_mask) {
    spatial = *spatial_mask;
  } else {
    MesslConfig mc = cfg.messl;
    mc.reference_channel = cfg.reference_channel;
    spatial = RunEm(specs, mc).target_mask();
  }
  if (spatial.rows() != specs.front().num_bins() || spatial.cols() != specs.front().num_frames())
    throw DataError("spatial mask shape does not match the scene");
  std::vector<TrainingExample> out;
  for (std::size_t c : channels) {
    if (c >= specs.size()) throw DataError("channel out of range");
    TrainingExample ex;
    ex.noisy = specs[c];
    ex.clean = Stft(render.per_source_images.front().channels[c], cfg.stft);
    ex.spatial = spatial;
    out.push_back(std::move(ex));
  }
  return out;
}

FeatureStats StatsFromExamples(const std::vector<TrainingExample>& examples) {
  std::vector<Spectrogram> specs;
  specs.reserve(examples.size());
  for (const auto& ex : examples) specs.push_back(ex.noisy);
  return ComputeFeatureStats(specs);
}

std::vector<TrainBatch> MakeBatches(const std::vector<TrainingExample>& examples,
                                    const FeatureStats& stats, TargetKind kind) {
  std::vector<TrainBatch> out;
  out.reserve(examples.size());
  for (const auto& ex : examples)
    out.push_back(MakeTrainBatch(ex.noisy, ex.clean, ex.spatial, stats, kind));
  return out;
}

std::vector<TrainingManifestEntry> LoadTrainingManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  const std::string base = fs::path(path).parent_path().string();
  std::vector<TrainingManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string split;
    if (!(ls >> split) || split[0] == '#') continue;
    TrainingManifestEntry e;
    if (split == "valid") e.validation = true;
    else if (split != "train")
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected train or valid");
    if (!(ls >> e.scene_manifest))
      throw ConfigError(path + ":" + std::to_string(lineno) + ": missing scene manifest");
    ls >> e.mask_path;
    e.scene_manifest = Resolve(e.scene_manifest, base);
    e.mask_path = Resolve(e.mask_path, base);
    out.push_back(std::move(e));
  }
  return out;
}

ExperimentManifest ParseExperimentManifest(const std::string& json_text,
                                           const std::string& base_dir) {
  ExperimentManifest m;
  try {
    json j = json::parse(json_text);
    m.model_path = Resolve(j.value("model", std::string()), base_dir);
    for (const auto& name : j.value("modes", std::vector<std::string>{}))
      m.modes.push_back(ParseCombine(name));
    for (const auto& s : j.value("scenes", std::vector<std::string>{}))
      m.scenes.push_back(Resolve(s, base_dir));
    m.include_references = j.value("include_references", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment manifest: ") + e.what());
  }
  return m;
}

ExperimentManifest LoadExperimentManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path);
  return ParseExperimentManifest(std::string(std::istreambuf_iterator<char>(in), {}),
                                 fs::path(path).parent_path().string());
}

namespace {

std::vector<ExperimentRow> RunScene(const std::string& scene, const ExperimentManifest& manifest,
                                    const PipelineConfig& cfg, const EnhancerModel* model) {
  std::vector<std::string> modes;
  if (manifest.include_references) {
    modes.push_back("noisy");
    modes.push_back("oracle");
  }
  for (CombineMode m : manifest.modes) modes.push_back(CombineName(m));

  std::vector<ExperimentRow> rows;
  auto fail_all = [&](const std::string& what) {
    rows.clear();
    for (const auto& m : modes) rows.push_back({scene, m, {}, what});
  };

  SceneRender render;
  SceneReferences refs;
  std::vector<Spectrogram> specs;
  MaskGrid spatial, fused;
  try {
    render = LoadSceneRender(scene);
    refs = ReferencesAt(render, cfg.reference_channel, 0);
    specs = RunStage("stft", [&] { return Stft(render.mixture, cfg.stft); });
    if (!manifest.modes.empty()) {
      MesslConfig mc = cfg.messl;
      mc.reference_channel = cfg.reference_channel;
      spatial = RunStage("run_em", [&] { return RunEm(specs, mc).target_mask(); });
      if (model) {
        fused = RunStage("enhance_channels", [&] {
          if (model->config.n_bins != cfg.stft.num_bins())
            throw ConfigError("model frequency size does not match the STFT");
          return FuseChannels(EnhanceChannels(*model, specs, spatial));
        });
      }
    }
  } catch (const std::exception& e) {
    fail_all(e.what());
    return rows;
  }

  auto score_mask = [&](const MaskGrid& mask) {
    Spectrogram bf = MaskDrivenBeamform(specs, mask, cfg.reference_channel, cfg.covariance);
    Waveform est = Istft(ApplyMask(mask, bf));
    return Evaluate(est, refs.speech, refs.noise);
  };

  for (const auto& mode : modes) {
    ExperimentRow row{scene, mode, {}, "ok"};
    try {
      if (mode == "noisy") {
        row.scores = Evaluate(render.mixture.channels[cfg.reference_channel], refs.speech,
                              refs.noise);
      } else if (mode == "oracle") {
        auto ideal = IdealMasks(render, cfg.stft, 0);
        row.scores = score_mask(ideal.at(cfg.reference_channel).ia);
      } else {
        if (!model) throw ConfigError("combine mode " + mode + " needs a model");
        row.scores = score_mask(CombineMasks(fused, spatial, ParseCombine(mode)));
      }
    } catch (const std::exception& e) {
      row.status = e.what();
      row.scores = {};
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<ExperimentRow> RunExperiment(const ExperimentManifest& manifest,
                                         const PipelineConfig& cfg,
                                         const EnhancerModel* model) {
  const std::size_t n = manifest.scenes.size();
  std::vector<std::vector<ExperimentRow>> per_scene(n);
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  std::mutex mu;
  std::size_t next = 0;
  auto work = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= n) return;
        i = next++;
      }
      per_scene[i] = RunScene(manifest.scenes[i], manifest, cfg, model);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  std::vector<ExperimentRow> rows;
  for (auto& r : per_scene) std::move(r.begin(), r.end(), std::back_inserter(rows));
  return rows;
}

std::string ExperimentCsvHeader() { return "scene,mode,sdr,sir,sar,seg_snr,status,config_hash"; }

std::string ExperimentCsvRow(const ExperimentRow& row, const std::string& config_hash) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += (c == '\n') ? ' ' : c;
    }
    return q + "\"";
  };
  std::ostringstream s;
  s.precision(6);
  s << std::fixed << quote(row.scene) << "," << row.mode << "," << row.scores.sdr << ","
    << row.scores.sir << "," << row.scores.sar << "," << row.scores.seg_snr << ","
    << quote(row.status) << "," << config_hash;
  return s.str();
}

}  // namespace tfmask
