#ifndef TFMASK_PIPELINE_H_
#define TFMASK_PIPELINE_H_

#include <optional>
#include <string>
#include <vector>

#include "tfmask/beamformer.h"
#include "tfmask/enhancer.h"
#include "tfmask/fusion.h"
#include "tfmask/messl.h"
#include "tfmask/metrics.h"
#include "tfmask/scene.h"
#include "tfmask/stft.h"

namespace tfmask {

struct PipelineConfig {
  StftConfig stft;
  MesslConfig messl;
  std::string model_path;  // empty: spatial mask only, no enhancer
  CombineMode combine_mode = CombineMode::kAvg;
  std::size_t reference_channel = 0;
  CovarianceOptions covariance;
  std::string output_path;
  std::string dump_masks_dir;

  // Hash over every setting that affects the output (not the output paths).
  std::string Hash() const;
  std::string Canonical() const;
};

// JSON config:
//   {"stft": {"window_size": 1024, "hop_size": 256, "window": "sqrt_hann"},
//    "messl": {"n_sources": 2, "garbage_source": true, "n_iterations": 16,
//              "delay_min": -8, "delay_max": 8, "delay_step": 0.25,
//              "convergence_tol": 1e-5, "target_index": 0},
//    "model": "model.bin", "combine": "avg", "reference_channel": 0,
//    "out": "enhanced.wav", "dump_masks": "masks/"}
// Missing keys keep their defaults.
PipelineConfig ParsePipelineConfig(const std::string& json_text);
PipelineConfig LoadPipelineConfig(const std::string& path);

struct PipelineArtifacts {
  MesslResult messl;
  std::vector<MaskGrid> enhanced;  // per channel, empty without a model
  MaskGrid fused;
  MaskGrid final_mask;
  BeamformerWeights weights;
  Spectrogram beamformed;  // before the post-filter
};

struct EnhanceOutput {
  Waveform audio;
  PipelineArtifacts artifacts;
};

// Spatial clustering -> per-channel enhancement -> channel max -> combination
// -> mask-driven MVDR -> mask post-filter -> inverse STFT. `model` may be
// null, in which case the spatial mask is the final mask. Errors carry the
// failing stage name.
EnhanceOutput Enhance(const MultichannelWaveform& input, const PipelineConfig& cfg,
                      const EnhancerModel* model);

// MVDR driven by an externally supplied final mask, then post-filtered.
Spectrogram MaskDrivenBeamform(const std::vector<Spectrogram>& specs, const MaskGrid& mask,
                               std::size_t ref_channel, const CovarianceOptions& cov,
                               BeamformerWeights* weights_out = nullptr);

// Writes each artifact as a mask grid file into dir.
void DumpMasks(const std::string& dir, const PipelineArtifacts& artifacts,
               const std::string& config_hash);

// Reference signals for scoring a rendered scene at one channel: the target
// image, and every interferer image plus the noise image that has energy.
struct SceneReferences {
  Waveform speech;
  std::vector<Waveform> noise;
};
SceneReferences ReferencesAt(const SceneRender& render, std::size_t channel,
                             std::size_t target_index = 0);

// One (noisy, clean, spatial mask) triple per scene channel.
struct TrainingExample {
  Spectrogram noisy;
  Spectrogram clean;
  MaskGrid spatial;
};
std::vector<TrainingExample> ExamplesFromScene(const SceneRender& render,
                                               const PipelineConfig& cfg,
                                               const std::vector<std::size_t>& channels,
                                               const MaskGrid* spatial_mask = nullptr);
std::vector<TrainBatch> MakeBatches(const std::vector<TrainingExample>& examples,
                                    const FeatureStats& stats, TargetKind kind);
FeatureStats StatsFromExamples(const std::vector<TrainingExample>& examples);

// Text manifest, one entry per line: "<train|valid> <scene manifest> [mask]".
// Blank lines and lines starting with '#' are ignored; relative paths
// resolve against the manifest's directory.
struct TrainingManifestEntry {
  bool validation = false;
  std::string scene_manifest;
  std::string mask_path;
};
std::vector<TrainingManifestEntry> LoadTrainingManifest(const std::string& path);

// Experiment manifest (JSON):
//   {"model": "model.bin", "modes": ["avg", "min", "max", "lstm"],
//    "scenes": ["scene0/manifest.json", ...], "include_references": false}
// include_references adds "noisy" (unprocessed reference channel) and
// "oracle" (IA oracle mask through the same beamformer) rows per scene.
struct ExperimentManifest {
  std::string model_path;
  std::vector<CombineMode> modes;
  std::vector<std::string> scenes;
  bool include_references = false;
};
ExperimentManifest ParseExperimentManifest(const std::string& json_text,
                                           const std::string& base_dir);
ExperimentManifest LoadExperimentManifest(const std::string& path);

struct ExperimentRow {
  std::string scene;
  std::string mode;
  EvalScores scores;
  std::string status = "ok";  // or the error message for this row
};

// Rows for scenes that fail to load carry the error and the run continues.
std::vector<ExperimentRow> RunExperiment(const ExperimentManifest& manifest,
                                         const PipelineConfig& cfg,
                                         const EnhancerModel* model);

std::string ExperimentCsvHeader();
std::string ExperimentCsvRow(const ExperimentRow& row, const std::string& config_hash);

}  // namespace tfmask

#endif  // TFMASK_PIPELINE_H_
