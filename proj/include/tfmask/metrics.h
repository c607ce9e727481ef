#ifndef TFMASK_METRICS_H_
#define TFMASK_METRICS_H_

#include <cstddef>
#include <string>
#include <vector>

#include "tfmask/wav.h"

namespace tfmask {

inline constexpr double kDbClamp = 100.0;
inline constexpr std::size_t kBssFilterLength = 512;

struct EvalScores {
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
  double seg_snr = 0.0;
};

// Source-based decomposition estimate = target + interference + artifacts.
// Signals are zero-padded to length T + L - 1 so that every L-tap shifted
// copy of a reference fits.
struct BssDecomposition {
  std::vector<double> target;
  std::vector<double> interference;
  std::vector<double> artifacts;
};

BssDecomposition DecomposeEstimate(const Waveform& estimate, const Waveform& speech_ref,
                                   const std::vector<Waveform>& noise_refs,
                                   std::size_t filter_length = kBssFilterLength);

// SDR, SIR, SAR in dB (clamped to +-100); seg_snr is left at 0.
EvalScores BssEval(const Waveform& estimate, const Waveform& speech_ref,
                   const std::vector<Waveform>& noise_refs,
                   std::size_t filter_length = kBssFilterLength);

// Mean over non-overlapping frames (last one may be partial) of
// clamp(10 log10(|ref|^2 / |ref - est|^2), -10, 35).
double SegmentalSnr(const Waveform& estimate, const Waveform& reference,
                    std::size_t frame_len = 512);

// BssEval plus SegmentalSnr against speech_ref.
EvalScores Evaluate(const Waveform& estimate, const Waveform& speech_ref,
                    const std::vector<Waveform>& noise_refs);

std::string ScoresCsvHeader();
std::string ScoresCsvRow(const std::string& id, const EvalScores& s,
                         const std::string& config_hash);

}  // namespace tfmask

#endif  // TFMASK_METRICS_H_
