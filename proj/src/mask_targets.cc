#include "tfmask/mask_targets.h"

#include <algorithm>
#include <cmath>

#include "tfmask/error.h"
#include "tfmask/phase.h"

namespace tfmask {

LossKind LossFor(TargetKind kind) {
  return (kind == TargetKind::kIA || kind == TargetKind::kPS) ? LossKind::kBce
                                                               : LossKind::kMse;
}

std::string TargetName(TargetKind kind) {
  switch (kind) {
    case TargetKind::kIA: return "ia";
    case TargetKind::kPS: return "ps";
    case TargetKind::kMA: return "ma";
    case TargetKind::kPA: return "pa";
  }
  return "unknown";
}

TargetKind ParseTarget(const std::string& name) {
  if (name == "ia") return TargetKind::kIA;
  if (name == "ps") return TargetKind::kPS;
  if (name == "ma") return TargetKind::kMA;
  if (name == "pa") return TargetKind::kPA;
  throw ConfigError("unknown target kind '" + name + "'");
}

TargetContext MakeTargetContext(const Spectrogram& clean, const Spectrogram& noisy) {
  if (clean.bins.rows() != noisy.bins.rows() || clean.bins.cols() != noisy.bins.cols())
    throw DataError("clean and noisy spectrograms differ in shape");
  TargetContext ctx{clean, noisy, Eigen::MatrixXd(noisy.bins.rows(), noisy.bins.cols())};
  for (Eigen::Index j = 0; j < ctx.theta.cols(); ++j)
    for (Eigen::Index i = 0; i < ctx.theta.rows(); ++i)
      ctx.theta(i, j) =
          WrapPhase(std::arg(clean.bins(i, j)) - std::arg(noisy.bins(i, j)));
  return ctx;
}

MaskGrid ComputeTarget(const TargetContext& ctx, TargetKind kind) {
  const Eigen::ArrayXXd s = ctx.clean.bins.cwiseAbs().array();
  const Eigen::ArrayXXd y = ctx.noisy.bins.cwiseAbs().array().max(kAmpFloor);
  const Eigen::ArrayXXd cos_theta = ctx.theta.array().cos();
  MaskGrid out;
  switch (kind) {
    case TargetKind::kIA:
      out.values = (s / y).min(1.0).max(0.0).matrix();
      break;
    case TargetKind::kPS:
      out.values = (cos_theta * s / y).min(1.0).max(0.0).matrix();
      break;
    case TargetKind::kMA:
      out.values = s.matrix();
      break;
    case TargetKind::kPA:
      out.values = (cos_theta * s).max(0.0).matrix();
      break;
  }
  return out;
}

namespace {

void CheckShapes(const Eigen::MatrixXd& p, const Eigen::MatrixXd& t,
                 const Eigen::MatrixXd& mag, TargetKind kind) {
  if (p.rows() != t.rows() || p.cols() != t.cols())
    throw DataError("prediction and target differ in shape");
  if (LossFor(kind) == LossKind::kMse && (mag.rows() != p.rows() || mag.cols() != p.cols()))
    throw DataError("noisy magnitude grid does not match prediction");
  if (p.size() == 0) throw DataError("empty prediction grid");
}

}  // namespace

double Loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target,
            const Eigen::MatrixXd& noisy_mag, TargetKind kind) {
  CheckShapes(prediction, target, noisy_mag, kind);
  const double n = static_cast<double>(prediction.size());
  if (LossFor(kind) == LossKind::kMse)
    return (prediction.cwiseProduct(noisy_mag) - target).squaredNorm() / n;
  double total = 0.0;
  for (Eigen::Index i = 0; i < prediction.size(); ++i) {
    double p = std::clamp(prediction.data()[i], kMaskEps, 1.0 - kMaskEps);
    double t = target.data()[i];
    total -= t * std::log(p) + (1.0 - t) * std::log1p(-p);
  }
  return total / n;
}

Eigen::MatrixXd LossGradient(const Eigen::MatrixXd& prediction,
                             const Eigen::MatrixXd& target,
                             const Eigen::MatrixXd& noisy_mag, TargetKind kind) {
  CheckShapes(prediction, target, noisy_mag, kind);
  const double n = static_cast<double>(prediction.size());
  if (LossFor(kind) == LossKind::kMse) {
    return (2.0 / n) *
           (prediction.cwiseProduct(noisy_mag) - target).cwiseProduct(noisy_mag);
  }
  Eigen::MatrixXd grad(prediction.rows(), prediction.cols());
  for (Eigen::Index i = 0; i < prediction.size(); ++i) {
    double raw = prediction.data()[i];
    double t = target.data()[i];
    if (raw < kMaskEps || raw > 1.0 - kMaskEps) {
      grad.data()[i] = 0.0;  // clamp is flat here
    } else {
      grad.data()[i] = (raw - t) / (raw * (1.0 - raw) * n);
    }
  }
  return grad;
}

double Loss(const MaskGrid& prediction, const TargetContext& ctx, TargetKind kind) {
  const MaskGrid target = ComputeTarget(ctx, kind);
  return Loss(prediction.values, target.values, ctx.noisy.bins.cwiseAbs(), kind);
}

}  // namespace tfmask
