#ifndef TFMASK_MASK_TARGETS_H_
#define TFMASK_MASK_TARGETS_H_

#include <string>

#include <Eigen/Dense>

#include "tfmask/masks.h"
#include "tfmask/stft.h"

namespace tfmask {

// Training targets. IA and PS are ratio masks trained with binary
// cross-entropy; MA and PA are spectrum targets trained with mean-squared
// error on the masked noisy magnitude.
enum class TargetKind { kIA, kPS, kMA, kPA };
enum class LossKind { kBce, kMse };

LossKind LossFor(TargetKind kind);
std::string TargetName(TargetKind kind);
TargetKind ParseTarget(const std::string& name);

struct TargetContext {
  Spectrogram clean;   // s
  Spectrogram noisy;   // y
  Eigen::MatrixXd theta;  // wrap(angle(s) - angle(y))
};

TargetContext MakeTargetContext(const Spectrogram& clean, const Spectrogram& noisy);

// IA = |s|/max(|y|, floor) and PS = cos(theta)|s|/max(|y|, floor), both
// clipped to [0,1]; MA = |s|; PA = cos(theta)|s| clipped below at 0.
MaskGrid ComputeTarget(const TargetContext& ctx, TargetKind kind);

// Loss against a precomputed target grid. For BCE kinds `target` is the mask
// target and `noisy_mag` is unused; for MSE kinds the loss is
// mean((p*|y| - target)^2). Predictions are clamped to
// [kMaskEps, 1-kMaskEps] inside the BCE logarithms.
double Loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target,
            const Eigen::MatrixXd& noisy_mag, TargetKind kind);

// d Loss / d prediction, same shape as prediction.
Eigen::MatrixXd LossGradient(const Eigen::MatrixXd& prediction,
                             const Eigen::MatrixXd& target,
                             const Eigen::MatrixXd& noisy_mag, TargetKind kind);

double Loss(const MaskGrid& prediction, const TargetContext& ctx, TargetKind kind);

}  // namespace tfmask

#endif  // TFMASK_MASK_TARGETS_H_
