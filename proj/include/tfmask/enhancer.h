#ifndef TFMASK_ENHANCER_H_
#define TFMASK_ENHANCER_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfmask/lstm.h"
#include "tfmask/mask_targets.h"
#include "tfmask/masks.h"
#include "tfmask/stft.h"

namespace tfmask {

struct EnhancerConfig {
  std::vector<std::size_t> layer_sizes{64};
  MergeMode merge = MergeMode::kAverage;
  OutputActivation activation = OutputActivation::kSigmoid;
  TargetKind target_kind = TargetKind::kIA;
  std::size_t n_bins = 513;

  // Input rows: normalized dB features followed by the logit spatial mask.
  std::size_t input_dim() const { return 2 * n_bins; }
  NetworkShape Shape() const;
  void Validate() const;
};

struct EnhancerModel {
  EnhancerConfig config;
  BiLstmNetwork network;
  FeatureStats feature_stats;

  static EnhancerModel Create(const EnhancerConfig& config, FeatureStats stats,
                              std::uint64_t seed);
};

// Stacks ToLogFeatures(spec) over LogitMask(spatial_mask).
Eigen::MatrixXd BuildInput(const Spectrogram& spec, const FeatureStats& stats,
                           const MaskGrid& spatial_mask);

MaskGrid Forward(const EnhancerModel& model, const Eigen::MatrixXd& input);

// One shared model applied to each channel with the same spatial mask.
std::vector<MaskGrid> EnhanceChannels(const EnhancerModel& model,
                                      const std::vector<Spectrogram>& specs,
                                      const MaskGrid& spatial_mask);

// One utterance: network input, training target rows and |y| rows (used by
// the MSE kinds).
struct TrainBatch {
  Eigen::MatrixXd inputs;     // input_dim x frames
  Eigen::MatrixXd targets;    // n_bins x frames
  Eigen::MatrixXd noisy_mag;  // n_bins x frames
};

TrainBatch MakeTrainBatch(const Spectrogram& noisy, const Spectrogram& clean,
                          const MaskGrid& spatial_mask, const FeatureStats& stats,
                          TargetKind kind);

double BatchLoss(const EnhancerModel& model, const TrainBatch& batch);
// Frame-weighted mean loss over batches.
double MeanLoss(const EnhancerModel& model, const std::vector<TrainBatch>& batches);

// Loss and its gradient with respect to every network tensor.
double LossAndGradient(const BiLstmNetwork& network, const TrainBatch& batch,
                       TargetKind kind, std::vector<Eigen::MatrixXd>& grads);

struct TrainOptions {
  AdamOptimizer::Options adam;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::size_t batch_size = 1;  // utterances per update
  std::uint64_t seed = 0;      // shuffling
  bool shuffle = true;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct TrainResult {
  EnhancerModel model;  // best-validation snapshot
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_valid_loss = 0.0;
};

// Full-sequence BPTT with Adam; stops once validation loss has not improved
// for `patience` epochs. Throws NumericalError if the loss becomes NaN.
TrainResult Train(EnhancerModel model, const std::vector<TrainBatch>& train,
                  const std::vector<TrainBatch>& valid, const TrainOptions& opts);

void WriteHistoryCsv(const std::string& path, const std::vector<EpochRecord>& history);

// Binary model file: 8-byte magic "TFMENH01", uint32 LE header length, JSON
// header (config, tensor names and shapes), then little-endian float32
// feature mean, feature std and each tensor column-major in header order.
void SaveModel(const std::string& path, const EnhancerModel& model);
EnhancerModel LoadModel(const std::string& path);

}  // namespace tfmask

#endif  // TFMASK_ENHANCER_H_
