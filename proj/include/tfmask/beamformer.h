#ifndef TFMASK_BEAMFORMER_H_
#define TFMASK_BEAMFORMER_H_

#include <vector>

#include <Eigen/Dense>

#include "tfmask/masks.h"
#include "tfmask/stft.h"

namespace tfmask {

struct CovarianceOptions {
  double load_factor = 1e-6;   // diagonal loading relative to trace/M
  double weight_floor = 1e-3;  // minimum summed mask weight, in frames
};

// Per-frequency M x M Hermitian speech and noise covariances.
struct CovarianceField {
  std::vector<Eigen::MatrixXcd> speech;
  std::vector<Eigen::MatrixXcd> noise;
  // True where the summed weight fell below the floor and an identity-scaled
  // fallback was stored instead.
  std::vector<bool> speech_degenerate;
  std::vector<bool> noise_degenerate;

  std::size_t num_bins() const { return speech.size(); }
  Eigen::Index num_channels() const { return speech.empty() ? 0 : speech.front().rows(); }
};

// R_s = sum_t m y y^H / sum_t m, R_n likewise with (1 - m), each loaded and
// symmetrized.
CovarianceField EstimateCovariances(const std::vector<Spectrogram>& specs,
                                    const MaskGrid& mask,
                                    const CovarianceOptions& opts = {});

struct BeamformerWeights {
  Eigen::MatrixXcd weights;   // M x n_bins
  Eigen::MatrixXcd steering;  // M x n_bins
  std::vector<bool> passthrough;
};

// Reference-channel selector at every frequency.
BeamformerWeights SelectorWeights(Eigen::Index channels, Eigen::Index bins,
                                  std::size_t ref_channel);

// Steering vector: principal eigenvector of R_s with a real positive
// reference entry and norm sqrt(M). w = R_n^-1 d / (d^H R_n^-1 d) via a
// Cholesky solve. Degenerate frequencies get selector weights.
BeamformerWeights MvdrWeights(const CovarianceField& cov, std::size_t ref_channel);

// out(w, t) = w^H y(w, t).
Spectrogram Beamform(const std::vector<Spectrogram>& specs, const BeamformerWeights& weights);

// Frequency-dependent voice activity from a close-talking microphone:
// 1 where its level exceeds the per-frequency 10th-percentile level by
// threshold_db. Throws DataError("no speech activity detected") when the
// close microphone is silent.
MaskGrid CloseMicActivity(const Spectrogram& close_mic, double threshold_db);

struct SupervisedReferenceOptions {
  double threshold_db = 6.0;
  std::size_t ref_channel = 0;
  bool post_filter = true;
  CovarianceOptions covariance;
};

// Close-mic-gated MVDR reference signal.
Waveform SupervisedMvdrReference(const Spectrogram& close_mic,
                                 const std::vector<Spectrogram>& specs,
                                 const SupervisedReferenceOptions& opts = {});

}  // namespace tfmask

#endif  // TFMASK_BEAMFORMER_H_
