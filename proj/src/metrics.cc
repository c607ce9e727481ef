#include "tfmask/metrics.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "tfmask/error.h"
#include "tfmask/fft.h"

namespace tfmask {

namespace {

double Energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double RatioDb(double num, double den) {
  if (den <= 0.0) return kDbClamp;
  if (num <= 0.0) return -kDbClamp;
  return std::clamp(10.0 * std::log10(num / den), -kDbClamp, kDbClamp);
}

// Least-squares projection of `signal` (length T) onto the span of the
// L-tap delayed copies of each reference; returns a length T+L-1 signal.
std::vector<double> Project(const std::vector<double>& signal,
                            const std::vector<const std::vector<double>*>& refs,
                            std::size_t taps) {
  const std::size_t n_refs = refs.size();
  const Eigen::Index dim = static_cast<Eigen::Index>(n_refs * taps);
  const std::size_t len = signal.size();
  Eigen::MatrixXd gram(dim, dim);
  Eigen::VectorXd rhs(dim);
  for (std::size_t a = 0; a < n_refs; ++a) {
    // rhs[a,i] = sum_u r_a(u) s(u + i)
    const auto xs = CrossCorrelate(signal, *refs[a]);
    for (std::size_t i = 0; i < taps; ++i)
      rhs(static_cast<Eigen::Index>(a * taps + i)) = xs[len - 1 + i];
    for (std::size_t b = a; b < n_refs; ++b) {
      // gram[a,i][b,j] = sum_u r_a(u) r_b(u + i - j)
      const auto c = CrossCorrelate(*refs[b], *refs[a]);
      for (std::size_t i = 0; i < taps; ++i)
        for (std::size_t j = 0; j < taps; ++j) {
          const double v = c[len - 1 + i - j];
          gram(static_cast<Eigen::Index>(a * taps + i), static_cast<Eigen::Index>(b * taps + j)) = v;
          gram(static_cast<Eigen::Index>(b * taps + j), static_cast<Eigen::Index>(a * taps + i)) = v;
        }
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success)
    throw NumericalError("reference Gram matrix factorization failed");
  const Eigen::VectorXd coef = ldlt.solve(rhs);
  if (!coef.allFinite()) throw NumericalError("projection coefficients are not finite");

  std::vector<double> out(len + taps - 1, 0.0);
  for (std::size_t a = 0; a < n_refs; ++a) {
    std::vector<double> h(coef.data() + a * taps, coef.data() + (a + 1) * taps);
    const auto y = Convolve(*refs[a], h);
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += y[t];
  }
  return out;
}

}  // namespace

BssDecomposition DecomposeEstimate(const Waveform& estimate, const Waveform& speech_ref,
                                   const std::vector<Waveform>& noise_refs,
                                   std::size_t filter_length) {
  const std::size_t len = estimate.size();
  if (filter_length == 0) throw ConfigError("filter length must be positive");
  if (speech_ref.size() != len) throw DataError("estimate and reference differ in length");
  if (Energy(speech_ref.samples) == 0.0) throw DataError("speech reference has zero energy");
  std::vector<const std::vector<double>*> all{&speech_ref.samples};
  for (const auto& n : noise_refs) {
    if (n.size() != len) throw DataError("noise reference differs in length");
    if (n.sample_rate != speech_ref.sample_rate) throw DataError("reference sample rates differ");
    if (Energy(n.samples) == 0.0) throw DataError("noise reference has zero energy");
    all.push_back(&n.samples);
  }
  if (estimate.sample_rate != speech_ref.sample_rate)
    throw DataError("estimate and reference sample rates differ");

  BssDecomposition d;
  d.target = Project(estimate.samples, {&speech_ref.samples}, filter_length);
  const auto full = noise_refs.empty() ? d.target : Project(estimate.samples, all, filter_length);
  const std::size_t padded = len + filter_length - 1;
  d.interference.resize(padded);
  d.artifacts.resize(padded);
  for (std::size_t t = 0; t < padded; ++t) {
    const double est = t < len ? estimate.samples[t] : 0.0;
    d.interference[t] = full[t] - d.target[t];
    d.artifacts[t] = est - full[t];
  }
  return d;
}

EvalScores BssEval(const Waveform& estimate, const Waveform& speech_ref,
                   const std::vector<Waveform>& noise_refs, std::size_t filter_length) {
  const auto d = DecomposeEstimate(estimate, speech_ref, noise_refs, filter_length);
  std::vector<double> distortion(d.target.size()), signal_plus_interf(d.target.size());
  for (std::size_t t = 0; t < d.target.size(); ++t) {
    distortion[t] = d.interference[t] + d.artifacts[t];
    signal_plus_interf[t] = d.target[t] + d.interference[t];
  }
  EvalScores s;
  s.sdr = RatioDb(Energy(d.target), Energy(distortion));
  s.sir = RatioDb(Energy(d.target), Energy(d.interference));
  s.sar = RatioDb(Energy(signal_plus_interf), Energy(d.artifacts));
  return s;
}

double SegmentalSnr(const Waveform& estimate, const Waveform& reference, std::size_t frame_len) {
  if (estimate.size() == 0 || reference.size() == 0) throw DataError("segmental SNR of empty signal");
  if (estimate.size() != reference.size()) throw DataError("estimate and reference differ in length");
  if (frame_len == 0) throw ConfigError("frame length must be positive");
  double total = 0.0;
  std::size_t frames = 0;
  for (std::size_t start = 0; start < reference.size(); start += frame_len) {
    const std::size_t stop = std::min(reference.size(), start + frame_len);
    double num = 0.0, den = 0.0;
    for (std::size_t t = start; t < stop; ++t) {
      const double r = reference.samples[t];
      const double e = r - estimate.samples[t];
      num += r * r;
      den += e * e;
    }
    double db;
    if (den == 0.0) db = 35.0;
    else if (num == 0.0) db = -10.0;
    else db = std::clamp(10.0 * std::log10(num / den), -10.0, 35.0);
    total += db;
    ++frames;
  }
  return total / static_cast<double>(frames);
}

EvalScores Evaluate(const Waveform& estimate, const Waveform& speech_ref,
                    const std::vector<Waveform>& noise_refs) {
  EvalScores s = BssEval(estimate, speech_ref, noise_refs);
  s.seg_snr = SegmentalSnr(estimate, speech_ref);
  return s;
}

std::string ScoresCsvHeader() { return "utterance,sdr,sir,sar,seg_snr,config_hash"; }

std::string ScoresCsvRow(const std::string& id, const EvalScores& s,
                         const std::string& config_hash) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed << id << "," << s.sdr << "," << s.sir << "," << s.sar << ","
      << s.seg_snr << "," << config_hash;
  return out.str();
}

}  // namespace tfmask
