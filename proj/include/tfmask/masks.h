#ifndef TFMASK_MASKS_H_
#define TFMASK_MASKS_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfmask/stft.h"

namespace tfmask {

inline constexpr double kAmpFloor = 1e-8;
inline constexpr double kMaskEps = 1e-3;
inline constexpr double kStatsFloor = 1e-3;

// Real (num_bins x num_frames) grid aligned with a Spectrogram.
struct MaskGrid {
  Eigen::MatrixXd values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  bool IsRatioMask() const;
};

struct FeatureStats {
  Eigen::VectorXd mean;  // dB, per frequency
  Eigen::VectorXd std;   // dB, per frequency, >= kStatsFloor
};

// 20*log10(max(|bin|, kAmpFloor)), unnormalized.
Eigen::MatrixXd MagnitudeDb(const Spectrogram& spec);

// Per-frequency mean/std of MagnitudeDb pooled over every frame of every
// spectrogram. std is floored at kStatsFloor.
FeatureStats ComputeFeatureStats(const std::vector<Spectrogram>& specs);
FeatureStats ComputeFeatureStats(const std::vector<Eigen::MatrixXd>& db_grids);

Eigen::MatrixXd ToLogFeatures(const Spectrogram& spec,
                              const FeatureStats& stats);

double Sigmoid(double x);
double Logit(double p);  // clamps p to [kMaskEps, 1 - kMaskEps] first
Eigen::MatrixXd LogitMask(const MaskGrid& mask);

Spectrogram ApplyMask(const MaskGrid& mask, const Spectrogram& spec);

// Exchange format between pipeline stages: ASCII header lines
//   TFMASK-GRID 1
//   rows <n>
//   cols <n>
//   config_hash <hex>
//   end
// followed by rows*cols little-endian float32 values, frequency-major within
// each frame (column-major).
void WriteMaskFile(const std::string& path, const MaskGrid& mask,
                   const std::string& config_hash);
struct MaskFile {
  MaskGrid mask;
  std::string config_hash;
};
MaskFile ReadMaskFile(const std::string& path);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::string HashHex(const std::string& text);

}  // namespace tfmask

#endif  // TFMASK_MASKS_H_
