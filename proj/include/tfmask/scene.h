#ifndef TFMASK_SCENE_H_
#define TFMASK_SCENE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "tfmask/mask_targets.h"
#include "tfmask/masks.h"
#include "tfmask/stft.h"
#include "tfmask/wav.h"

namespace tfmask {

// A dry source and how it reaches each microphone: channel c receives
// gains[c] * signal delayed by delays[c] samples.
struct SourceSpec {
  Waveform signal;
  std::vector<double> delays;
  std::vector<double> gains;
};

// Anechoic point sources plus spatially independent Gaussian noise.
// sources.front() is the target talker.
struct SceneSpec {
  std::vector<SourceSpec> sources;
  double diffuse_noise_level = 0.0;  // per-channel RMS
  std::size_t n_channels = 2;
  int sample_rate = 16000;
  std::uint64_t seed = 0;
  // Render length; 0 means the longest source signal.
  std::size_t num_samples = 0;

  void Validate() const;
};

struct SceneRender {
  MultichannelWaveform mixture;
  std::vector<MultichannelWaveform> per_source_images;
  MultichannelWaveform noise_image;
  int sample_rate() const { return mixture.sample_rate(); }
};

// Band-limited delay by a real number of samples using a 32-tap
// Kaiser-windowed sinc. Output has the input's length; integer delays are
// exact shifts.
std::vector<double> FractionalDelay(const std::vector<double>& x, double delay);

struct SpeechLikeOptions {
  double duration_s = 2.0;
  int sample_rate = 16000;
  double f0 = 130.0;        // mean fundamental, Hz
  double level = 0.1;       // output RMS
  double max_freq_fraction = 0.35;  // content kept below this fraction of fs
  std::uint64_t seed = 0;
};

// Syllable-like bursts of amplitude-modulated harmonic tones with a gliding
// fundamental, interleaved with low-passed noise bursts and short pauses.
Waveform SpeechLikeSignal(const SpeechLikeOptions& opts);

// Throws DataError when source sample rates disagree.
SceneRender RenderScene(const SceneSpec& spec);

// Per-channel IA/PS/MA/PA targets computed from the target image (source 0)
// and the mixture.
struct ChannelTargets {
  MaskGrid ia, ps, ma, pa;
};
std::vector<ChannelTargets> IdealMasks(const SceneRender& render,
                                       const StftConfig& cfg,
                                       std::size_t target_index = 0);

// JSON scene description:
//   {"sample_rate": 16000, "n_channels": 4, "duration": 2.0, "seed": 1,
//    "diffuse_noise_level": 0.01,
//    "sources": [{"signal": {"type": "speech_like", "f0": 120, "level": 0.1,
//                            "seed": 3},
//                 "delays": [0, 1, 2, 3], "gains": [1, 1, 1, 1]},
//                {"signal": {"type": "wav", "path": "talker.wav",
//                            "channel": 0}, ...}]}
// Relative WAV paths resolve against the config file's directory.
SceneSpec LoadSceneSpec(const std::string& path);
SceneSpec ParseSceneSpec(const std::string& json_text, const std::string& base_dir);

// Writes mixture.wav, source_<k>.wav, noise.wav and manifest.json into dir.
void WriteSceneRender(const std::string& dir, const SceneRender& render,
                      const std::string& config_hash);
// Reads a render back from the manifest written above.
SceneRender LoadSceneRender(const std::string& manifest_path);

}  // namespace tfmask

#endif  // TFMASK_SCENE_H_
