#include "tfmask/fusion.h"

#include "tfmask/error.h"

namespace tfmask {

std::string CombineName(CombineMode mode) {
  switch (mode) {
    case CombineMode::kAvg: return "avg";
    case CombineMode::kMin: return "min";
    case CombineMode::kMax: return "max";
    case CombineMode::kLstmOnly: return "lstm";
  }
  return "unknown";
}

CombineMode ParseCombine(const std::string& name) {
  if (name == "avg") return CombineMode::kAvg;
  if (name == "min") return CombineMode::kMin;
  if (name == "max") return CombineMode::kMax;
  if (name == "lstm") return CombineMode::kLstmOnly;
  throw ConfigError("unknown combine mode '" + name + "' (avg|min|max|lstm)");
}

MaskGrid FuseChannels(const std::vector<MaskGrid>& masks) {
  if (masks.empty()) throw DataError("no masks to fuse");
  MaskGrid out = masks.front();
  for (std::size_t i = 1; i < masks.size(); ++i) {
    if (masks[i].rows() != out.rows() || masks[i].cols() != out.cols())
      throw DataError("channel masks differ in shape");
    out.values = out.values.cwiseMax(masks[i].values);
  }
  return out;
}

MaskGrid CombineMasks(const MaskGrid& enhanced, const MaskGrid& spatial, CombineMode mode) {
  if (enhanced.rows() != spatial.rows() || enhanced.cols() != spatial.cols())
    throw DataError("enhanced and spatial masks differ in shape");
  switch (mode) {
    case CombineMode::kAvg: return {0.5 * (enhanced.values + spatial.values)};
    case CombineMode::kMin: return {enhanced.values.cwiseMin(spatial.values)};
    case CombineMode::kMax: return {enhanced.values.cwiseMax(spatial.values)};
    case CombineMode::kLstmOnly: return enhanced;
  }
  return enhanced;
}

}  // namespace tfmask
