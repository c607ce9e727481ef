#include "tfmask/stft.h"

#include <cmath>
#include <numbers>

#include "tfmask/error.h"
#include "tfmask/fft.h"

namespace tfmask {

std::string WindowName(WindowType type) {
  switch (type) {
    case WindowType::kSqrtHann: return "sqrt_hann";
    case WindowType::kHann: return "hann";
    case WindowType::kRectangular: return "rectangular";
  }
  return "unknown";
}

WindowType ParseWindow(const std::string& name) {
  if (name == "sqrt_hann") return WindowType::kSqrtHann;
  if (name == "hann") return WindowType::kHann;
  if (name == "rectangular") return WindowType::kRectangular;
  throw ConfigError("unknown window '" + name + "'");
}

std::vector<double> MakeWindow(const StftConfig& cfg) {
  const std::size_t n = cfg.window_size;
  std::vector<double> w(n, 1.0);
  if (cfg.window == WindowType::kRectangular) return w;
  for (std::size_t i = 0; i < n; ++i) {
    double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    w[i] = cfg.window == WindowType::kSqrtHann ? std::sqrt(hann) : hann;
  }
  return w;
}

namespace {

// Overlap-added product of analysis and synthesis windows; constant for a
// COLA-valid configuration.
std::vector<double> OverlapSum(const StftConfig& cfg) {
  auto w = MakeWindow(cfg);
  std::vector<double> sum(cfg.hop_size, 0.0);
  for (std::size_t i = 0; i < cfg.window_size; ++i)
    sum[i % cfg.hop_size] += w[i] * w[i];
  return sum;
}

double OverlapGain(const StftConfig& cfg) { return OverlapSum(cfg)[0]; }

}  // namespace

void StftConfig::Validate() const {
  if (window_size < 2 || window_size % 2 != 0)
    throw ConfigError("window_size must be even and >= 2");
  if (hop_size == 0 || hop_size > window_size)
    throw ConfigError("hop_size must satisfy 0 < hop <= window_size");
  if (window_size % hop_size != 0)
    throw ConfigError("window_size must be a multiple of hop_size");
  auto sum = OverlapSum(*this);
  for (double v : sum) {
    if (std::abs(v - sum[0]) > 1e-9 * std::abs(sum[0]) || sum[0] <= 0.0)
      throw ConfigError("window " + WindowName(window) +
                        " does not satisfy constant overlap-add at hop " +
                        std::to_string(hop_size));
  }
}

std::size_t NumFrames(std::size_t num_samples, const StftConfig& cfg) {
  return (num_samples - 1) / cfg.hop_size + cfg.window_size / cfg.hop_size;
}

Spectrogram Stft(const Waveform& wave, const StftConfig& cfg) {
  cfg.Validate();
  wave.Validate();
  const std::size_t n = wave.size();
  if (n < cfg.window_size) throw DataError("insufficient samples");

  const auto window = MakeWindow(cfg);
  const std::size_t frames = NumFrames(n, cfg);
  const std::ptrdiff_t offset =
      static_cast<std::ptrdiff_t>(cfg.window_size - cfg.hop_size);

  Spectrogram spec;
  spec.config = cfg;
  spec.sample_rate = wave.sample_rate;
  spec.num_samples = n;
  spec.bins.resize(static_cast<Eigen::Index>(cfg.num_bins()),
                   static_cast<Eigen::Index>(frames));

  RealFft fft(cfg.window_size);
  std::vector<double> frame(cfg.window_size);
  std::vector<std::complex<double>> out(cfg.num_bins());
  for (std::size_t j = 0; j < frames; ++j) {
    std::ptrdiff_t start = static_cast<std::ptrdiff_t>(j * cfg.hop_size) - offset;
    for (std::size_t i = 0; i < cfg.window_size; ++i) {
      std::ptrdiff_t t = start + static_cast<std::ptrdiff_t>(i);
      double x = (t >= 0 && t < static_cast<std::ptrdiff_t>(n))
                     ? wave.samples[static_cast<std::size_t>(t)]
                     : 0.0;
      frame[i] = x * window[i];
    }
    fft.Forward(frame, out);
    for (std::size_t k = 0; k < out.size(); ++k)
      spec.bins(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = out[k];
  }
  return spec;
}

std::vector<Spectrogram> Stft(const MultichannelWaveform& wave,
                              const StftConfig& cfg) {
  wave.Validate();
  std::vector<Spectrogram> specs;
  specs.reserve(wave.num_channels());
  for (const auto& ch : wave.channels) specs.push_back(Stft(ch, cfg));
  return specs;
}

Waveform Istft(const Spectrogram& spec) {
  const StftConfig& cfg = spec.config;
  cfg.Validate();
  if (spec.num_samples == 0 ||
      spec.num_bins() != static_cast<Eigen::Index>(cfg.num_bins()) ||
      spec.num_frames() !=
          static_cast<Eigen::Index>(NumFrames(spec.num_samples, cfg)))
    throw DataError("spectrogram shape inconsistent with its STFT config");

  const auto window = MakeWindow(cfg);
  const double scale = 1.0 / (OverlapGain(cfg) * cfg.window_size);
  const std::ptrdiff_t offset =
      static_cast<std::ptrdiff_t>(cfg.window_size - cfg.hop_size);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(spec.num_samples);

  Waveform out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(spec.num_samples, 0.0);

  RealFft fft(cfg.window_size);
  std::vector<std::complex<double>> bins(cfg.num_bins());
  std::vector<double> frame(cfg.window_size);
  for (Eigen::Index j = 0; j < spec.num_frames(); ++j) {
    for (std::size_t k = 0; k < bins.size(); ++k)
      bins[k] = spec.bins(static_cast<Eigen::Index>(k), j);
    fft.Inverse(bins, frame);
    std::ptrdiff_t start = j * static_cast<std::ptrdiff_t>(cfg.hop_size) - offset;
    for (std::size_t i = 0; i < cfg.window_size; ++i) {
      std::ptrdiff_t t = start + static_cast<std::ptrdiff_t>(i);
      if (t >= 0 && t < n)
        out.samples[static_cast<std::size_t>(t)] += frame[i] * window[i] * scale;
    }
  }
  return out;
}

}  // namespace tfmask
