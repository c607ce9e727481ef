#ifndef TFMASK_STFT_H_
#define TFMASK_STFT_H_

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfmask/wav.h"

namespace tfmask {

enum class WindowType { kSqrtHann, kHann, kRectangular };

std::string WindowName(WindowType type);
WindowType ParseWindow(const std::string& name);

struct StftConfig {
  std::size_t window_size = 1024;
  std::size_t hop_size = 256;
  WindowType window = WindowType::kSqrtHann;

  std::size_t num_bins() const { return window_size / 2 + 1; }
  // Throws ConfigError unless 0 < hop <= window, the window is even-length
  // and analysis*synthesis windows overlap-add to a constant at this hop.
  void Validate() const;
  bool operator==(const StftConfig&) const = default;
};

// Periodic analysis window; synthesis uses the same window.
std::vector<double> MakeWindow(const StftConfig& cfg);

// Bins are (num_bins x num_frames), frequency along rows. Frame j covers
// input samples [j*hop - (window - hop), j*hop + hop) so every input sample
// is covered by window/hop frames and istft reconstructs the whole signal.
struct Spectrogram {
  Eigen::MatrixXcd bins;
  StftConfig config;
  int sample_rate = 16000;
  std::size_t num_samples = 0;

  Eigen::Index num_bins() const { return bins.rows(); }
  Eigen::Index num_frames() const { return bins.cols(); }
};

std::size_t NumFrames(std::size_t num_samples, const StftConfig& cfg);

// Throws DataError("insufficient samples") when the input is shorter than
// one window.
Spectrogram Stft(const Waveform& wave, const StftConfig& cfg);
std::vector<Spectrogram> Stft(const MultichannelWaveform& wave,
                              const StftConfig& cfg);

// Weighted overlap-add inverse; returns spec.num_samples samples.
Waveform Istft(const Spectrogram& spec);

}  // namespace tfmask

#endif  // TFMASK_STFT_H_
