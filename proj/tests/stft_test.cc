#include "tfmask/stft.h"

#include <cmath>
#include <complex>
#include <random>

#include <gtest/gtest.h>

#include "tfmask/error.h"
#include "tfmask/fft.h"

namespace tfmask {
namespace {

Waveform Noise(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Waveform w;
  w.samples.resize(n);
  for (auto& v : w.samples) v = g(rng);
  return w;
}

double InteriorError(const Waveform& a, const Waveform& b, std::size_t margin) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = margin; i + margin < a.size(); ++i) {
    num += (a.samples[i] - b.samples[i]) * (a.samples[i] - b.samples[i]);
    den += a.samples[i] * a.samples[i];
  }
  return std::sqrt(num / den);
}

TEST(Fft, MatchesDirectDft) {
  const std::size_t n = 48;
  Waveform x = Noise(n, 3);
  RealFft fft(n);
  std::vector<std::complex<double>> out(fft.num_bins());
  fft.Forward(x.samples, out);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> want = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      want += x.samples[t] * std::polar(1.0, -2.0 * M_PI * double(k * t) / double(n));
    EXPECT_NEAR(std::abs(out[k] - want), 0.0, 1e-10);
  }
  std::vector<double> back(n);
  fft.Inverse(out, back);
  for (std::size_t t = 0; t < n; ++t) EXPECT_NEAR(back[t], n * x.samples[t], 1e-9);
}

TEST(Fft, CrossCorrelationLagConvention) {
  std::vector<double> a = {0, 0, 1, 2, 3, 0, 0};
  std::vector<double> b = {1, 2, 3};
  auto r = CrossCorrelate(a, b);
  ASSERT_EQ(r.size(), a.size() + b.size() - 1);
  for (std::ptrdiff_t k = -2; k <= 6; ++k) {
    double want = 0.0;
    for (std::ptrdiff_t t = 0; t < 3; ++t)
      if (t + k >= 0 && t + k < 7) want += a[t + k] * b[t];
    EXPECT_NEAR(r[k + 2], want, 1e-12) << "lag " << k;
  }
  auto c = Convolve(b, b);
  std::vector<double> want = {1, 4, 10, 12, 9};
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(c[i], want[i], 1e-12);
  EXPECT_EQ(NextPow2(1000), 1024u);
  EXPECT_EQ(NextPow2(1024), 1024u);
}

TEST(Stft, ShapeAndFrameDuration) {
  StftConfig cfg;
  EXPECT_EQ(cfg.num_bins(), 513u);
  EXPECT_DOUBLE_EQ(cfg.window_size / 16000.0, 0.064);
  Spectrogram s = Stft(Noise(16000, 1), cfg);
  EXPECT_EQ(s.num_bins(), 513);
  EXPECT_EQ(static_cast<std::size_t>(s.num_frames()), NumFrames(16000, cfg));
}

TEST(Stft, SinePeaksAtExpectedBinInInteriorFrames) {
  StftConfig cfg;
  Waveform w;
  w.samples.resize(16000);
  for (std::size_t i = 0; i < w.size(); ++i) w.samples[i] = std::sin(2 * M_PI * 1000.0 * i / 16000.0);
  Spectrogram s = Stft(w, cfg);
  for (Eigen::Index j = 4; j + 4 < s.num_frames(); ++j) {
    Eigen::Index peak;
    s.bins.col(j).cwiseAbs().maxCoeff(&peak);
    EXPECT_EQ(peak, 64) << "frame " << j;
  }
  // Oracle: direct DFT of one windowed frame.
  const auto win = MakeWindow(cfg);
  const Eigen::Index j = 10;
  const std::ptrdiff_t start = j * 256 - 768;
  std::complex<double> want = 0.0;
  for (std::size_t t = 0; t < 1024; ++t)
    want += w.samples[start + t] * win[t] * std::polar(1.0, -2.0 * M_PI * 64.0 * t / 1024.0);
  EXPECT_NEAR(std::abs(s.bins(64, j) - want), 0.0, 1e-9);
}

TEST(Stft, ZeroInLinearAndZeroOut) {
  StftConfig cfg;
  Waveform z;
  z.samples.assign(5000, 0.0);
  Spectrogram s = Stft(z, cfg);
  EXPECT_EQ(s.bins.cwiseAbs().maxCoeff(), 0.0);
  Waveform back = Istft(s);
  for (double v : back.samples) EXPECT_EQ(v, 0.0);

  Waveform x = Noise(5000, 2), y = x;
  for (auto& v : y.samples) v *= -2.5;
  EXPECT_LT((Stft(y, cfg).bins + 2.5 * Stft(x, cfg).bins).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Stft, ParsevalPerFrame) {
  StftConfig cfg;
  Waveform x = Noise(8000, 4);
  Spectrogram s = Stft(x, cfg);
  const auto win = MakeWindow(cfg);
  for (Eigen::Index j = 0; j < s.num_frames(); ++j) {
    double time = 0.0;
    const std::ptrdiff_t start = j * 256 - 768;
    for (std::ptrdiff_t t = 0; t < 1024; ++t) {
      std::ptrdiff_t n = start + t;
      if (n >= 0 && n < 8000) time += std::pow(x.samples[n] * win[t], 2);
    }
    double freq = std::norm(s.bins(0, j)) + std::norm(s.bins(512, j));
    for (Eigen::Index k = 1; k < 512; ++k) freq += 2.0 * std::norm(s.bins(k, j));
    EXPECT_NEAR(freq / 1024.0, time, 1e-9 * time) << "frame " << j;
  }
}

// Property: round trip over random lengths, windows and hops.
TEST(Stft, RoundTripProperty) {
  std::mt19937 rng(11);
  const std::vector<StftConfig> configs = {
      {1024, 256, WindowType::kSqrtHann}, {512, 128, WindowType::kSqrtHann},
      {256, 128, WindowType::kSqrtHann},  {512, 128, WindowType::kHann},
      {64, 64, WindowType::kRectangular}, {128, 32, WindowType::kRectangular}};
  for (int trial = 0; trial < 30; ++trial) {
    const StftConfig& cfg = configs[trial % configs.size()];
    std::uniform_int_distribution<std::size_t> len(4 * cfg.window_size, 12 * cfg.window_size);
    Waveform x = Noise(len(rng), 100 + trial);
    Waveform back = Istft(Stft(x, cfg));
    ASSERT_EQ(back.size(), x.size());
    EXPECT_LT(InteriorError(x, back, cfg.window_size), 1e-6) << "trial " << trial;
    // Whole-signal reconstruction holds too with this padding.
    EXPECT_LT(InteriorError(x, back, 0), 1e-6) << "trial " << trial;
  }
}

TEST(Stft, ChirpRoundTrip) {
  StftConfig cfg;
  Waveform x;
  x.samples.resize(20000);
  for (std::size_t i = 0; i < x.size(); ++i)
    x.samples[i] = std::sin(2 * M_PI * (100.0 + 0.2 * i) * i / 16000.0);
  EXPECT_LT(InteriorError(x, Istft(Stft(x, cfg)), 1024), 1e-6);
}

TEST(Stft, Errors) {
  StftConfig cfg;
  Waveform shortw;
  shortw.samples.assign(1023, 0.1);
  try {
    Stft(shortw, cfg);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_STREQ(e.what(), "insufficient samples");
  }
  EXPECT_NO_THROW((StftConfig{1024, 512, WindowType::kSqrtHann}.Validate()));
  EXPECT_THROW((StftConfig{1024, 512, WindowType::kHann}.Validate()), ConfigError);
  EXPECT_THROW((StftConfig{1024, 300, WindowType::kSqrtHann}.Validate()), ConfigError);
  EXPECT_THROW((StftConfig{1024, 0, WindowType::kSqrtHann}.Validate()), ConfigError);
  EXPECT_NO_THROW((StftConfig{1024, 256, WindowType::kHann}.Validate()));
  EXPECT_THROW(ParseWindow("kaiser"), ConfigError);
  EXPECT_EQ(ParseWindow(WindowName(WindowType::kSqrtHann)), WindowType::kSqrtHann);

  Spectrogram s = Stft(Noise(4096, 5), cfg);
  s.bins.conservativeResize(s.num_bins(), s.num_frames() - 1);
  EXPECT_THROW(Istft(s), DataError);
}

}  // namespace
}  // namespace tfmask
