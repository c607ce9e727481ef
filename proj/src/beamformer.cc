#include "tfmask/beamformer.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "tfmask/error.h"

namespace tfmask {

namespace {

void CheckChannels(const std::vector<Spectrogram>& specs) {
  if (specs.empty()) throw DataError("no channels");
  for (const auto& s : specs)
    if (s.bins.rows() != specs.front().bins.rows() || s.bins.cols() != specs.front().bins.cols())
      throw DataError("channel spectrograms differ in shape");
}

Eigen::MatrixXcd Hermitize(const Eigen::MatrixXcd& r) { return 0.5 * (r + r.adjoint()); }

}  // namespace

CovarianceField EstimateCovariances(const std::vector<Spectrogram>& specs,
                                    const MaskGrid& mask, const CovarianceOptions& opts) {
  CheckChannels(specs);
  const Eigen::Index m = static_cast<Eigen::Index>(specs.size());
  const Eigen::Index bins = specs.front().num_bins();
  const Eigen::Index frames = specs.front().num_frames();
  if (mask.rows() != bins || mask.cols() != frames)
    throw DataError("mask shape does not match spectrograms");
  if (!mask.IsRatioMask()) throw DataError("covariance mask must lie in [0,1]");

  CovarianceField cov;
  cov.speech.resize(static_cast<std::size_t>(bins));
  cov.noise.resize(static_cast<std::size_t>(bins));
  cov.speech_degenerate.assign(static_cast<std::size_t>(bins), false);
  cov.noise_degenerate.assign(static_cast<std::size_t>(bins), false);

  Eigen::MatrixXcd y(m, frames);
  for (Eigen::Index f = 0; f < bins; ++f) {
    for (Eigen::Index c = 0; c < m; ++c) y.row(c) = specs[static_cast<std::size_t>(c)].bins.row(f);
    const Eigen::VectorXd ms = mask.values.row(f).transpose();
    const Eigen::VectorXd mn = (1.0 - ms.array()).matrix();
    const Eigen::MatrixXcd total = y * y.adjoint() / static_cast<double>(frames);
    const double total_power = total.trace().real() / static_cast<double>(m);
    auto weighted = [&](const Eigen::VectorXd& w, bool& degenerate) -> Eigen::MatrixXcd {
      const double wsum = w.sum();
      if (wsum >= opts.weight_floor) {
        Eigen::MatrixXcd r = (y * w.cast<std::complex<double>>().asDiagonal()) * y.adjoint() / wsum;
        r = Hermitize(r);
        const double load = opts.load_factor * r.trace().real() / static_cast<double>(m);
        if (load > 0.0) {
          r.diagonal().array() += load;
          return r;
        }
      }
      degenerate = true;
      const double scale = total_power > 0.0 ? total_power : 1.0;
      return Eigen::MatrixXcd::Identity(m, m) * scale;
    };
    bool ds = false, dn = false;
    cov.speech[static_cast<std::size_t>(f)] = weighted(ms, ds);
    cov.noise[static_cast<std::size_t>(f)] = weighted(mn, dn);
    cov.speech_degenerate[static_cast<std::size_t>(f)] = ds;
    cov.noise_degenerate[static_cast<std::size_t>(f)] = dn;
  }
  return cov;
}

BeamformerWeights SelectorWeights(Eigen::Index channels, Eigen::Index bins,
                                  std::size_t ref_channel) {
  if (static_cast<Eigen::Index>(ref_channel) >= channels)
    throw ConfigError("reference channel out of range");
  BeamformerWeights w;
  w.weights = Eigen::MatrixXcd::Zero(channels, bins);
  w.weights.row(static_cast<Eigen::Index>(ref_channel)).setOnes();
  w.steering = w.weights;
  w.passthrough.assign(static_cast<std::size_t>(bins), true);
  return w;
}

BeamformerWeights MvdrWeights(const CovarianceField& cov, std::size_t ref_channel) {
  const Eigen::Index m = cov.num_channels();
  const Eigen::Index bins = static_cast<Eigen::Index>(cov.num_bins());
  BeamformerWeights out = SelectorWeights(m, bins, ref_channel);
  const auto ref = static_cast<Eigen::Index>(ref_channel);
  for (Eigen::Index f = 0; f < bins; ++f) {
    const auto fi = static_cast<std::size_t>(f);
    if (cov.speech_degenerate[fi] || cov.noise_degenerate[fi]) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(cov.speech[fi]);
    if (eig.info() != Eigen::Success) continue;
    Eigen::VectorXcd d = eig.eigenvectors().col(m - 1);
    const double ref_mag = std::abs(d(ref));
    if (!d.allFinite() || ref_mag == 0.0) continue;
    d *= std::conj(d(ref)) / ref_mag;
    d *= std::sqrt(static_cast<double>(m)) / d.norm();
    d(ref) = std::complex<double>(d(ref).real(), 0.0);

    Eigen::LLT<Eigen::MatrixXcd> llt(cov.noise[fi]);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXcd x = llt.solve(d);
    const std::complex<double> denom = d.dot(x);  // d^H R_n^-1 d
    if (!x.allFinite() || std::abs(denom) == 0.0 || !std::isfinite(std::abs(denom))) continue;
    out.weights.col(f) = x / std::conj(denom);
    out.steering.col(f) = d;
    out.passthrough[fi] = false;
  }
  return out;
}

Spectrogram Beamform(const std::vector<Spectrogram>& specs, const BeamformerWeights& weights) {
  CheckChannels(specs);
  const Eigen::Index m = static_cast<Eigen::Index>(specs.size());
  const Eigen::Index bins = specs.front().num_bins();
  if (weights.weights.rows() != m || weights.weights.cols() != bins)
    throw DataError("beamformer weights do not match channel count or bins");
  Spectrogram out = specs.front();
  out.bins.setZero();
  for (Eigen::Index c = 0; c < m; ++c) {
    const Eigen::VectorXcd wc = weights.weights.row(c).transpose().conjugate();
    out.bins += wc.asDiagonal() * specs[static_cast<std::size_t>(c)].bins;
  }
  return out;
}

MaskGrid CloseMicActivity(const Spectrogram& close_mic, double threshold_db) {
  if (close_mic.bins.size() == 0 || close_mic.bins.cwiseAbs().maxCoeff() == 0.0)
    throw DataError("no speech activity detected");
  const Eigen::MatrixXd level = MagnitudeDb(close_mic);
  MaskGrid vad{Eigen::MatrixXd::Zero(level.rows(), level.cols())};
  const auto frames = static_cast<std::size_t>(level.cols());
  const std::size_t rank = static_cast<std::size_t>(0.1 * static_cast<double>(frames - 1));
  std::vector<double> row(frames);
  for (Eigen::Index f = 0; f < level.rows(); ++f) {
    for (std::size_t t = 0; t < frames; ++t) row[t] = level(f, static_cast<Eigen::Index>(t));
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(rank), row.end());
    const double floor_db = row[rank];
    for (Eigen::Index t = 0; t < level.cols(); ++t)
      vad.values(f, t) = level(f, t) > floor_db + threshold_db ? 1.0 : 0.0;
  }
  return vad;
}

Waveform SupervisedMvdrReference(const Spectrogram& close_mic,
                                 const std::vector<Spectrogram>& specs,
                                 const SupervisedReferenceOptions& opts) {
  CheckChannels(specs);
  if (close_mic.bins.rows() != specs.front().bins.rows() ||
      close_mic.bins.cols() != specs.front().bins.cols() ||
      !(close_mic.config == specs.front().config))
    throw DataError("close microphone is not aligned with the array spectrograms");
  const MaskGrid vad = CloseMicActivity(close_mic, opts.threshold_db);
  const auto cov = EstimateCovariances(specs, vad, opts.covariance);
  const auto weights = MvdrWeights(cov, opts.ref_channel);
  Spectrogram beam = Beamform(specs, weights);
  if (opts.post_filter) beam = ApplyMask(vad, beam);
  return Istft(beam);
}

}  // namespace tfmask
