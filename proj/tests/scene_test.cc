#include "tfmask/scene.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "tfmask/error.h"
#include "tfmask/fft.h"
#include "tfmask/metrics.h"

namespace tfmask {
namespace {

namespace fs = std::filesystem;

Waveform Speech(std::uint64_t seed, double seconds = 1.0, double level = 0.1) {
  SpeechLikeOptions o;
  o.duration_s = seconds;
  o.level = level;
  o.seed = seed;
  return SpeechLikeSignal(o);
}

SourceSpec Source(Waveform w, std::vector<double> delays) {
  SourceSpec s{std::move(w), std::move(delays), {}};
  s.gains.assign(s.delays.size(), 1.0);
  return s;
}

TEST(Scene, UndelayedSourceAppearsOnEveryChannel) {
  SceneSpec spec;
  spec.n_channels = 3;
  spec.sources.push_back(Source(Speech(1), {0.0, 0.0, 0.0}));
  SceneRender r = RenderScene(spec);
  for (const auto& ch : r.mixture.channels) EXPECT_EQ(ch.samples, spec.sources[0].signal.samples);
}

TEST(Scene, CrossCorrelationPeaksAtDelay) {
  SceneSpec spec;
  spec.sources.push_back(Source(Speech(2), {0.0, 2.0}));
  SceneRender r = RenderScene(spec);
  const auto& a = r.mixture.channels[1].samples;
  const auto& b = r.mixture.channels[0].samples;
  auto xc = CrossCorrelate(a, b);
  auto peak = std::max_element(xc.begin(), xc.end()) - xc.begin();
  EXPECT_EQ(peak - static_cast<std::ptrdiff_t>(b.size() - 1), 2);
}

TEST(Scene, NoiseOnlyLevel) {
  SceneSpec spec;
  spec.n_channels = 4;
  spec.diffuse_noise_level = 0.05;
  spec.num_samples = 16000;
  spec.seed = 9;
  SceneRender r = RenderScene(spec);
  ASSERT_EQ(r.mixture.num_samples(), 16000u);
  for (const auto& ch : r.mixture.channels) {
    double e = 0.0;
    for (double v : ch.samples) e += v * v;
    EXPECT_NEAR(std::sqrt(e / 16000.0), 0.05, 0.02 * 0.05);
  }
}

// Property: mixture decomposes into its images, and rendering is a pure
// function of the scene description.
TEST(Scene, AdditivityAndDeterminism) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-5.0, 5.0), g(0.3, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    SceneSpec spec;
    spec.n_channels = 2 + trial % 4;
    spec.seed = trial;
    spec.diffuse_noise_level = 0.01 * trial;
    for (int k = 0; k < 1 + trial % 3; ++k) {
      SourceSpec s;
      s.signal = Speech(100 * trial + k, 0.5);
      for (std::size_t c = 0; c < spec.n_channels; ++c) {
        s.delays.push_back(d(rng));
        s.gains.push_back(g(rng));
      }
      spec.sources.push_back(s);
    }
    SceneRender r = RenderScene(spec);
    for (std::size_t c = 0; c < spec.n_channels; ++c) {
      for (std::size_t t = 0; t < r.mixture.num_samples(); ++t) {
        double sum = r.noise_image.channels[c].samples[t];
        for (const auto& img : r.per_source_images) sum += img.channels[c].samples[t];
        ASSERT_NEAR(r.mixture.channels[c].samples[t], sum, 1e-9);
      }
    }
    SceneRender again = RenderScene(spec);
    for (std::size_t c = 0; c < spec.n_channels; ++c)
      EXPECT_EQ(again.mixture.channels[c].samples, r.mixture.channels[c].samples);
  }
}

TEST(FractionalDelay, IntegerShiftsAreExact) {
  std::vector<double> x(200);
  std::iota(x.begin(), x.end(), 1.0);
  for (int d : {-7, 0, 3, 12}) {
    auto y = FractionalDelay(x, d);
    ASSERT_EQ(y.size(), x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
      std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) - d;
      double want = (src >= 0 && src < 200) ? x[src] : 0.0;
      EXPECT_EQ(y[t], want);
    }
  }
}

// Oracle: a sum of sinusoids below 0.35 fs shifted analytically.
TEST(FractionalDelay, MatchesAnalyticShiftOfBandlimitedSignal) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> f(0.01, 0.35), ph(0.0, 2 * M_PI), dd(-6.0, 6.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::pair<double, double>> tones(8);
    for (auto& t : tones) t = {f(rng), ph(rng)};
    const double delay = dd(rng);
    auto signal = [&](double t) {
      double v = 0.0;
      for (auto [fr, p] : tones) v += std::sin(2 * M_PI * fr * t + p);
      return v;
    };
    std::vector<double> x(4000);
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = signal(static_cast<double>(t));
    auto y = FractionalDelay(x, delay);
    double num = 0.0, den = 0.0;
    for (std::size_t t = 64; t + 64 < x.size(); ++t) {
      double want = signal(static_cast<double>(t) - delay);
      num += (y[t] - want) * (y[t] - want);
      den += want * want;
    }
    EXPECT_LT(std::sqrt(num / den), 1e-3) << "delay " << delay;
  }
}

TEST(IdealMasks, NoiseFreeAndSpeechFreeLimits) {
  StftConfig cfg;
  SceneSpec spec;
  spec.sources.push_back(Source(Speech(5), {0.0, 1.5}));
  SceneRender clean = RenderScene(spec);
  auto masks = IdealMasks(clean, cfg);
  ASSERT_EQ(masks.size(), 2u);
  Spectrogram y = Stft(clean.mixture.channels[1], cfg);
  for (Eigen::Index i = 0; i < y.bins.size(); ++i)
    if (std::abs(y.bins.data()[i]) > kAmpFloor) {
      EXPECT_NEAR(masks[1].ia.values.data()[i], 1.0, 1e-12);
    }

  // Silent target plus noise.
  SceneRender noisy = clean;
  for (auto& ch : noisy.per_source_images[0].channels) std::fill(ch.samples.begin(), ch.samples.end(), 0.0);
  std::mt19937 rng(6);
  std::normal_distribution<double> g(0.0, 0.1);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < noisy.mixture.num_samples(); ++t)
      noisy.mixture.channels[c].samples[t] = noisy.noise_image.channels[c].samples[t] = g(rng);
  auto zero = IdealMasks(noisy, cfg);
  EXPECT_EQ(zero[0].ia.values.maxCoeff(), 0.0);
  EXPECT_EQ(zero[0].ps.values.maxCoeff(), 0.0);
  EXPECT_THROW(IdealMasks(noisy, cfg, 3), DataError);
}

TEST(IdealMasks, OracleMaskingImprovesSdrAtZeroDb) {
  StftConfig cfg;
  SceneSpec spec;
  spec.sources.push_back(Source(Speech(7, 2.0), {0.0, 0.0}));
  spec.diffuse_noise_level = 0.1;  // equal to the speech RMS
  spec.seed = 7;
  SceneRender r = RenderScene(spec);
  Spectrogram y = Stft(r.mixture.channels[0], cfg);
  Waveform masked = Istft(ApplyMask(IdealMasks(r, cfg)[0].ia, y));
  const Waveform& s = r.per_source_images[0].channels[0];
  const Waveform& n = r.noise_image.channels[0];
  double before = BssEval(r.mixture.channels[0], s, {n}).sdr;
  double after = BssEval(masked, s, {n}).sdr;
  EXPECT_GE(after - before, 5.0) << before << " -> " << after;
}

TEST(SceneSpec, ValidationErrors) {
  SceneSpec spec;
  spec.sources.push_back(Source(Speech(8), {0.0, 0.0}));
  spec.n_channels = 1;
  EXPECT_THROW(spec.Validate(), DataError);
  spec.n_channels = 2;
  spec.sources[0].gains = {1.0, 0.0};
  EXPECT_THROW(spec.Validate(), DataError);
  spec.sources[0].gains = {1.0, 1.0};
  spec.sources[0].signal.sample_rate = 8000;
  EXPECT_THROW(RenderScene(spec), DataError);
  SceneSpec empty;
  EXPECT_THROW(empty.Validate(), DataError);  // no sources and no length
}

TEST(SceneSpec, JsonAndManifestRoundTrip) {
  const std::string text = R"({
    "n_channels": 3, "seed": 5, "diffuse_noise_level": 0.01, "duration": 0.5,
    "sources": [
      {"signal": {"type": "speech_like", "seed": 1, "level": 0.1}, "delays": [0, 1.5, -2]},
      {"signal": {"type": "speech_like", "seed": 2}, "delays": [0, -3, 3], "gains": [1, 0.5, 0.5]}
    ]})";
  SceneSpec spec = ParseSceneSpec(text, "");
  ASSERT_EQ(spec.sources.size(), 2u);
  EXPECT_EQ(spec.num_samples, 8000u);
  EXPECT_EQ(spec.sources[1].gains[1], 0.5);
  SceneRender r = RenderScene(spec);

  const auto dir = fs::temp_directory_path() / "tfmask_scene_rt";
  fs::remove_all(dir);
  WriteSceneRender(dir.string(), r, "cafe");
  SceneRender back = LoadSceneRender((dir / "manifest.json").string());
  ASSERT_EQ(back.per_source_images.size(), 2u);
  EXPECT_EQ(back.mixture.num_channels(), 3u);
  for (std::size_t t = 0; t < 8000; t += 97)
    EXPECT_NEAR(back.mixture.channels[2].samples[t], r.mixture.channels[2].samples[t], 1e-7);

  // Wav-backed source relative to the config directory.
  const std::string wav_text = R"({"sources": [{"signal": {"type": "wav", "path": "source_0.wav",
                                   "channel": 1}}]})";
  SceneSpec from_wav = ParseSceneSpec(wav_text, dir.string());
  EXPECT_EQ(from_wav.sources[0].signal.size(), 8000u);
  fs::remove_all(dir);

  EXPECT_THROW(ParseSceneSpec("{", ""), ConfigError);
  EXPECT_THROW(ParseSceneSpec(R"({"sources": [{"signal": {"type": "sine"}}]})", ""), ConfigError);
  EXPECT_THROW(LoadSceneRender("/nonexistent/manifest.json"), DataError);
}

TEST(SpeechLike, LevelAndBandLimit) {
  Waveform w = Speech(11, 2.0, 0.2);
  double e = 0.0;
  for (double v : w.samples) e += v * v;
  EXPECT_NEAR(std::sqrt(e / w.size()), 0.2, 1e-9);
  Spectrogram s = Stft(w, StftConfig{});
  double low = s.bins.topRows(360).cwiseAbs2().sum();
  double high = s.bins.bottomRows(100).cwiseAbs2().sum();
  EXPECT_LT(high / low, 1e-4);
}

}  // namespace
}  // namespace tfmask
