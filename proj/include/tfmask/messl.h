#ifndef TFMASK_MESSL_H_
#define TFMASK_MESSL_H_

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tfmask/masks.h"
#include "tfmask/stft.h"

namespace tfmask {

// Phase-only spatial clustering. Every non-reference channel c forms a pair
// (c, ref) with observed phase difference phi = wrap(angle y_c - angle y_ref).
// Source k with pair delay tau (samples, positive = channel c lags the
// reference) predicts phi = -w*tau at angular frequency w (radians/sample),
// so the residual wrap(phi + w*tau) is modelled as N(mu_k(w), var_k(w)).
struct MesslConfig {
  std::size_t n_sources = 1;  // localized sources, excluding garbage
  bool garbage_source = true;
  std::size_t n_iterations = 16;
  std::vector<double> delay_grid = DefaultDelayGrid();
  std::size_t reference_channel = 0;
  double convergence_tol = 1e-5;
  double var_floor = 1e-4;
  // Target selection: explicit index wins, otherwise the source whose pair
  // delays are nearest (L2) to target_delays (all zeros when unset).
  std::optional<std::size_t> target_index;
  std::optional<std::vector<double>> target_delays;

  static std::vector<double> DefaultDelayGrid();  // -8..8 step 0.25
  static std::vector<double> UniformGrid(double lo, double hi, double step);
  void Validate() const;
};

struct MesslParams {
  Eigen::MatrixXd delays;    // n_sources x n_pairs
  Eigen::MatrixXd mean;      // n_bins x n_sources, radians
  Eigen::MatrixXd variance;  // n_bins x n_sources, rad^2
  Eigen::VectorXd priors;    // n_sources (+1 garbage, last)
};

struct MesslResult {
  // One posterior grid per localized source, then the garbage source.
  std::vector<MaskGrid> masks;
  MesslParams params;
  std::vector<double> loglik_trace;
  std::size_t target = 0;
  std::vector<std::size_t> pair_channels;

  const MaskGrid& target_mask() const { return masks.at(target); }
};

// One (n_bins x n_frames) grid per non-reference channel, in channel order.
std::vector<Eigen::MatrixXd> ObservedIpd(const std::vector<Spectrogram>& specs,
                                         std::size_t ref);

// Time-summed PHAT-weighted cross-power of channel `other` against `ref`,
// evaluated at each candidate delay. Peaks at the delay of `other`.
Eigen::VectorXd PhatCorrelation(const Spectrogram& other, const Spectrogram& ref,
                                const std::vector<double>& delay_grid);

MesslResult RunEm(const std::vector<Spectrogram>& specs, const MesslConfig& cfg);

// 1 where mask > threshold, else 0.
MaskGrid Binarize(const MaskGrid& mask, double threshold);

}  // namespace tfmask

#endif  // TFMASK_MESSL_H_
