#include "tfmask/masks.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tfmask/error.h"

namespace tfmask {

bool MaskGrid::IsRatioMask() const {
  return values.allFinite() && (values.array() >= 0.0).all() &&
         (values.array() <= 1.0).all();
}

Eigen::MatrixXd MagnitudeDb(const Spectrogram& spec) {
  return spec.bins.cwiseAbs().cwiseMax(kAmpFloor).array().log10().matrix() * 20.0;
}

FeatureStats ComputeFeatureStats(const std::vector<Eigen::MatrixXd>& db_grids) {
  if (db_grids.empty()) throw DataError("no spectrograms to compute statistics from");
  const Eigen::Index rows = db_grids.front().rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows);
  double count = 0.0;
  for (const auto& g : db_grids) {
    if (g.rows() != rows) throw DataError("feature grids differ in frequency size");
    sum += g.rowwise().sum();
    count += static_cast<double>(g.cols());
  }
  FeatureStats stats;
  stats.mean = sum / count;
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(rows);
  for (const auto& g : db_grids)
    sq += (g.colwise() - stats.mean).array().square().matrix().rowwise().sum();
  stats.std = (sq / count).cwiseSqrt().cwiseMax(kStatsFloor);
  return stats;
}

FeatureStats ComputeFeatureStats(const std::vector<Spectrogram>& specs) {
  std::vector<Eigen::MatrixXd> grids;
  grids.reserve(specs.size());
  for (const auto& s : specs) grids.push_back(MagnitudeDb(s));
  return ComputeFeatureStats(grids);
}

Eigen::MatrixXd ToLogFeatures(const Spectrogram& spec, const FeatureStats& stats) {
  if (stats.mean.size() != spec.num_bins() || stats.std.size() != spec.num_bins())
    throw DataError("feature statistics do not match the frequency axis");
  Eigen::MatrixXd db = MagnitudeDb(spec);
  db.colwise() -= stats.mean;
  return stats.std.cwiseInverse().asDiagonal() * db;
}

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double Logit(double p) {
  p = std::clamp(p, kMaskEps, 1.0 - kMaskEps);
  return std::log(p / (1.0 - p));
}

Eigen::MatrixXd LogitMask(const MaskGrid& mask) {
  return mask.values.unaryExpr([](double p) { return Logit(p); });
}

Spectrogram ApplyMask(const MaskGrid& mask, const Spectrogram& spec) {
  if (mask.rows() != spec.num_bins() || mask.cols() != spec.num_frames())
    throw DataError("mask shape does not match spectrogram");
  Spectrogram out = spec;
  out.bins = spec.bins.cwiseProduct(mask.values.cast<std::complex<double>>());
  return out;
}

std::string HashHex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void WriteMaskFile(const std::string& path, const MaskGrid& mask,
                   const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "TFMASK-GRID 1\n"
      << "rows " << mask.rows() << "\n"
      << "cols " << mask.cols() << "\n"
      << "config_hash " << (config_hash.empty() ? "-" : config_hash) << "\n"
      << "end\n";
  static_assert(std::endian::native == std::endian::little);
  std::vector<float> flat(static_cast<std::size_t>(mask.values.size()));
  for (Eigen::Index i = 0; i < mask.values.size(); ++i)
    flat[static_cast<std::size_t>(i)] = static_cast<float>(mask.values.data()[i]);
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(float)));
  if (!out) throw DataError("write failed: " + path);
}

MaskFile ReadMaskFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string magic, line;
  std::getline(in, magic);
  if (magic != "TFMASK-GRID 1") throw DataError(path + ": not a mask grid file");
  Eigen::Index rows = -1, cols = -1;
  MaskFile result;
  while (std::getline(in, line) && line != "end") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "rows") ls >> rows;
    else if (key == "cols") ls >> cols;
    else if (key == "config_hash") ls >> result.config_hash;
  }
  if (line != "end" || rows <= 0 || cols <= 0)
    throw DataError(path + ": malformed mask header");
  if (result.config_hash == "-") result.config_hash.clear();
  std::vector<float> flat(static_cast<std::size_t>(rows * cols));
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(flat.size() * sizeof(float)))
    throw DataError(path + ": truncated mask payload");
  result.mask.values.resize(rows, cols);
  for (std::size_t i = 0; i < flat.size(); ++i) result.mask.values.data()[i] = flat[i];
  return result;
}

}  // namespace tfmask
