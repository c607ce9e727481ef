#include "tfmask/scene.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tfmask/error.h"
#include "tfmask/fft.h"

namespace tfmask {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kDelayHalfTaps = 16;
constexpr double kKaiserBeta = 8.0;

double Sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double Kaiser(double x, double half_width, double beta) {
  double r = x / half_width;
  if (std::abs(r) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) /
         std::cyl_bessel_i(0.0, beta);
}

// Linear-phase low-pass FIR, cutoff as a fraction of the sample rate.
std::vector<double> LowPass(double cutoff, int half_taps) {
  std::vector<double> h(2 * half_taps + 1);
  for (int n = -half_taps; n <= half_taps; ++n)
    h[n + half_taps] = 2.0 * cutoff * Sinc(2.0 * cutoff * n) *
                       Kaiser(n, half_taps + 1.0, kKaiserBeta);
  return h;
}

double Rms(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return x.empty() ? 0.0 : std::sqrt(e / x.size());
}

}  // namespace

void SceneSpec::Validate() const {
  if (n_channels < 2) throw DataError("scene needs at least two channels");
  if (!(diffuse_noise_level >= 0.0)) throw DataError("noise level must be >= 0");
  if (sample_rate <= 0) throw DataError("sample rate must be positive");
  if (sources.empty() && num_samples == 0)
    throw DataError("noise-only scene needs an explicit length");
  for (const auto& src : sources) {
    src.signal.Validate();
    if (src.signal.sample_rate != sample_rate)
      throw DataError("inconsistent sample rates between sources and scene");
    if (src.delays.size() != n_channels || src.gains.size() != n_channels)
      throw DataError("each source needs one delay and one gain per channel");
    for (double d : src.delays)
      if (!std::isfinite(d)) throw DataError("source delays must be finite");
    for (double g : src.gains)
      if (!(g > 0.0) || !std::isfinite(g)) throw DataError("source gains must be > 0");
  }
}

std::vector<double> FractionalDelay(const std::vector<double>& x, double delay) {
  const double whole = std::floor(delay);
  const double frac = delay - whole;
  const long shift = static_cast<long>(whole);
  const long n = static_cast<long>(x.size());
  std::vector<double> y(x.size(), 0.0);
  if (frac == 0.0) {
    for (long t = 0; t < n; ++t) {
      long s = t - shift;
      if (s >= 0 && s < n) y[t] = x[s];
    }
    return y;
  }
  // y[t] = sum_k x[t - shift - k] * h[k], k in [-(half-1), half]
  std::vector<double> h;
  std::vector<long> taps;
  for (long k = -(kDelayHalfTaps - 1); k <= kDelayHalfTaps; ++k) {
    taps.push_back(k);
    h.push_back(Sinc(k - frac) * Kaiser(k - frac, kDelayHalfTaps, kKaiserBeta));
  }
  for (long t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i) {
      long s = t - shift - taps[i];
      if (s >= 0 && s < n) acc += x[s] * h[i];
    }
    y[t] = acc;
  }
  return y;
}

Waveform SpeechLikeSignal(const SpeechLikeOptions& opts) {
  if (opts.duration_s <= 0.0 || opts.sample_rate <= 0)
    throw ConfigError("speech-like signal needs positive duration and rate");
  const double fs = opts.sample_rate;
  const std::size_t n = static_cast<std::size_t>(std::llround(opts.duration_s * fs));
  const double fmax = opts.max_freq_fraction * fs;
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> out(n, 0.0);
  std::vector<double> noise_track(n, 0.0);
  std::size_t pos = static_cast<std::size_t>(uni(rng) * 0.08 * fs);
  while (pos < n) {
    const bool voiced = uni(rng) < 0.75;
    const std::size_t len = static_cast<std::size_t>(
        (voiced ? 0.12 + 0.18 * uni(rng) : 0.05 + 0.07 * uni(rng)) * fs);
    const std::size_t end = std::min(n, pos + len);
    if (voiced) {
      const double f_start = opts.f0 * (0.85 + 0.3 * uni(rng));
      const double f_end = opts.f0 * (0.85 + 0.3 * uni(rng));
      const double formant1 = 300.0 + 600.0 * uni(rng);
      const double formant2 = 1000.0 + 1500.0 * uni(rng);
      const double am_rate = 3.0 + 4.0 * uni(rng);
      std::vector<double> phases(64);
      for (double& p : phases) p = 2.0 * std::numbers::pi * uni(rng);
      for (std::size_t t = pos; t < end; ++t) {
        const double u = static_cast<double>(t - pos) / std::max<std::size_t>(1, len - 1);
        const double f0 = f_start + (f_end - f_start) * u;
        const double env = std::sin(std::numbers::pi * u) *
                           (0.7 + 0.3 * std::sin(2.0 * std::numbers::pi * am_rate * t / fs));
        double v = 0.0;
        for (int h = 1; h < 64 && h * f0 < fmax; ++h) {
          const double fh = h * f0;
          const double g1 = std::exp(-0.5 * std::pow((fh - formant1) / 200.0, 2));
          const double g2 = 0.5 * std::exp(-0.5 * std::pow((fh - formant2) / 300.0, 2));
          const double amp = (0.3 / h + g1 + g2);
          phases[h] += 2.0 * std::numbers::pi * fh / fs;
          v += amp * std::sin(phases[h]);
        }
        out[t] += env * v;
      }
    } else {
      for (std::size_t t = pos; t < end; ++t) {
        const double u = static_cast<double>(t - pos) / std::max<std::size_t>(1, len - 1);
        noise_track[t] += std::sin(std::numbers::pi * u) * gauss(rng);
      }
    }
    pos = end + static_cast<std::size_t>((0.04 + 0.11 * uni(rng)) * fs);
  }
  // Low-pass the noise bursts so every component respects fmax.
  auto lp = LowPass(opts.max_freq_fraction, 48);
  auto filtered = Convolve(noise_track, lp);
  const double out_rms = Rms(out) > 0.0 ? Rms(out) : 1.0;
  for (std::size_t t = 0; t < n; ++t) out[t] += 0.6 * out_rms * filtered[t + 48];

  const double rms = Rms(out);
  Waveform w;
  w.sample_rate = opts.sample_rate;
  w.samples = std::move(out);
  if (rms > 0.0)
    for (double& v : w.samples) v *= opts.level / rms;
  return w;
}

SceneRender RenderScene(const SceneSpec& spec) {
  spec.Validate();
  std::size_t length = spec.num_samples;
  if (length == 0)
    for (const auto& src : spec.sources) length = std::max(length, src.signal.size());

  SceneRender r;
  auto blank = [&] {
    MultichannelWaveform m;
    m.channels.assign(spec.n_channels, Waveform{std::vector<double>(length, 0.0),
                                                spec.sample_rate});
    return m;
  };
  r.mixture = blank();
  r.noise_image = blank();

  for (const auto& src : spec.sources) {
    std::vector<double> padded = src.signal.samples;
    padded.resize(length, 0.0);
    MultichannelWaveform image = blank();
    for (std::size_t c = 0; c < spec.n_channels; ++c) {
      auto delayed = FractionalDelay(padded, src.delays[c]);
      for (std::size_t t = 0; t < length; ++t)
        image.channels[c].samples[t] = src.gains[c] * delayed[t];
    }
    r.per_source_images.push_back(std::move(image));
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, spec.diffuse_noise_level);
  for (std::size_t c = 0; c < spec.n_channels; ++c) {
    auto& noise = r.noise_image.channels[c].samples;
    if (spec.diffuse_noise_level > 0.0)
      for (double& v : noise) v = gauss(rng);
    auto& mix = r.mixture.channels[c].samples;
    for (std::size_t t = 0; t < length; ++t) {
      double acc = noise[t];
      for (const auto& img : r.per_source_images) acc += img.channels[c].samples[t];
      mix[t] = acc;
    }
  }
  return r;
}

std::vector<ChannelTargets> IdealMasks(const SceneRender& render,
                                       const StftConfig& cfg,
                                       std::size_t target_index) {
  if (target_index >= render.per_source_images.size())
    throw DataError("target index out of range");
  const auto& target = render.per_source_images[target_index];
  if (target.num_channels() != render.mixture.num_channels() ||
      target.num_samples() != render.mixture.num_samples())
    throw DataError("target image does not match mixture shape");
  std::vector<ChannelTargets> out;
  for (std::size_t c = 0; c < render.mixture.num_channels(); ++c) {
    auto ctx = MakeTargetContext(Stft(target.channels[c], cfg),
                                 Stft(render.mixture.channels[c], cfg));
    out.push_back({ComputeTarget(ctx, TargetKind::kIA),
                   ComputeTarget(ctx, TargetKind::kPS),
                   ComputeTarget(ctx, TargetKind::kMA),
                   ComputeTarget(ctx, TargetKind::kPA)});
  }
  return out;
}

namespace {

Waveform SignalFromJson(const json& j, const SceneSpec& scene, double duration,
                        const std::string& base_dir) {
  const std::string type = j.value("type", "speech_like");
  if (type == "speech_like") {
    SpeechLikeOptions o;
    o.duration_s = j.value("duration", duration);
    o.sample_rate = scene.sample_rate;
    o.f0 = j.value("f0", o.f0);
    o.level = j.value("level", o.level);
    o.seed = j.value("seed", std::uint64_t{0});
    return SpeechLikeSignal(o);
  }
  if (type == "wav") {
    fs::path p = j.at("path").get<std::string>();
    if (p.is_relative()) p = fs::path(base_dir) / p;
    auto wav = ReadWav(p.string());
    std::size_t ch = j.value("channel", std::size_t{0});
    if (ch >= wav.num_channels()) throw DataError(p.string() + ": channel out of range");
    return wav.channels[ch];
  }
  throw ConfigError("unknown signal type '" + type + "'");
}

}  // namespace

SceneSpec ParseSceneSpec(const std::string& json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene config: ") + e.what());
  }
  try {
    SceneSpec spec;
    spec.sample_rate = j.value("sample_rate", 16000);
    spec.n_channels = j.value("n_channels", std::size_t{2});
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.diffuse_noise_level = j.value("diffuse_noise_level", 0.0);
    const double duration = j.value("duration", 2.0);
    if (j.contains("duration"))
      spec.num_samples = static_cast<std::size_t>(std::llround(duration * spec.sample_rate));
    for (const auto& s : j.at("sources")) {
      SourceSpec src;
      src.signal = SignalFromJson(s.value("signal", json::object()), spec, duration, base_dir);
      src.delays = s.value("delays", std::vector<double>(spec.n_channels, 0.0));
      src.gains = s.value("gains", std::vector<double>(spec.n_channels, 1.0));
      spec.sources.push_back(std::move(src));
    }
    spec.Validate();
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene config: ") + e.what());
  }
}

SceneSpec LoadSceneSpec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseSceneSpec(ss.str(), fs::path(path).parent_path().string());
}

void WriteSceneRender(const std::string& dir, const SceneRender& render,
                      const std::string& config_hash) {
  fs::create_directories(dir);
  json manifest;
  manifest["sample_rate"] = render.sample_rate();
  manifest["n_channels"] = render.mixture.num_channels();
  manifest["num_samples"] = render.mixture.num_samples();
  manifest["mixture"] = "mixture.wav";
  manifest["noise"] = "noise.wav";
  manifest["target_index"] = 0;
  manifest["config_hash"] = config_hash;
  WriteWav((fs::path(dir) / "mixture.wav").string(), render.mixture);
  WriteWav((fs::path(dir) / "noise.wav").string(), render.noise_image);
  json sources = json::array();
  for (std::size_t k = 0; k < render.per_source_images.size(); ++k) {
    std::string name = "source_" + std::to_string(k) + ".wav";
    WriteWav((fs::path(dir) / name).string(), render.per_source_images[k]);
    sources.push_back(name);
  }
  manifest["sources"] = sources;
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw DataError("cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

SceneRender LoadSceneRender(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open " + manifest_path);
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw DataError(manifest_path + ": " + e.what());
  }
  const fs::path base = fs::path(manifest_path).parent_path();
  auto load = [&](const std::string& name) { return ReadWav((base / name).string()); };
  SceneRender r;
  try {
    r.mixture = load(m.at("mixture").get<std::string>());
    r.noise_image = load(m.at("noise").get<std::string>());
    for (const auto& s : m.at("sources")) r.per_source_images.push_back(load(s.get<std::string>()));
  } catch (const json::exception& e) {
    throw DataError(manifest_path + ": " + e.what());
  }
  r.mixture.Validate();
  return r;
}

}  // namespace tfmask
