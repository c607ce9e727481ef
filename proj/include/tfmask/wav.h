#ifndef TFMASK_WAV_H_
#define TFMASK_WAV_H_

#include <cstddef>
#include <string>
#include <vector>

namespace tfmask {

// Mono real-valued signal. Samples nominally lie in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  // Throws DataError when the rate is not positive or a sample is not finite.
  void Validate() const;
};

// Channels share length and rate.
struct MultichannelWaveform {
  std::vector<Waveform> channels;

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_samples() const {
    return channels.empty() ? 0 : channels.front().size();
  }
  int sample_rate() const {
    return channels.empty() ? 0 : channels.front().sample_rate;
  }
  void Validate() const;
};

enum class WavEncoding { kPcm16, kFloat32 };

// RIFF/WAVE reader. Accepts PCM16 and IEEE float32 (plain or
// WAVE_FORMAT_EXTENSIBLE); multichannel data is de-interleaved.
MultichannelWaveform ReadWav(const std::string& path);

void WriteWav(const std::string& path, const MultichannelWaveform& wave,
              WavEncoding encoding = WavEncoding::kFloat32);
void WriteWav(const std::string& path, const Waveform& wave,
              WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace tfmask

#endif  // TFMASK_WAV_H_
