#ifndef TFMASK_FUSION_H_
#define TFMASK_FUSION_H_

#include <string>
#include <vector>

#include "tfmask/masks.h"

namespace tfmask {

enum class CombineMode { kAvg, kMin, kMax, kLstmOnly };

std::string CombineName(CombineMode mode);  // avg, min, max, lstm
CombineMode ParseCombine(const std::string& name);

// Elementwise maximum across per-channel masks.
MaskGrid FuseChannels(const std::vector<MaskGrid>& masks);

MaskGrid CombineMasks(const MaskGrid& enhanced, const MaskGrid& spatial, CombineMode mode);

}  // namespace tfmask

#endif  // TFMASK_FUSION_H_
