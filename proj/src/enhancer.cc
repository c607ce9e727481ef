#include "tfmask/enhancer.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tfmask/error.h"

namespace tfmask {

using nlohmann::json;

NetworkShape EnhancerConfig::Shape() const {
  NetworkShape s;
  s.input_dim = input_dim();
  s.layer_sizes = layer_sizes;
  s.merge = merge;
  s.activation = activation;
  s.output_dim = n_bins;
  return s;
}

void EnhancerConfig::Validate() const {
  if (n_bins == 0) throw ConfigError("enhancer needs a positive bin count");
  Shape().Validate();
}

EnhancerModel EnhancerModel::Create(const EnhancerConfig& config, FeatureStats stats,
                                    std::uint64_t seed) {
  config.Validate();
  if (static_cast<std::size_t>(stats.mean.size()) != config.n_bins ||
      static_cast<std::size_t>(stats.std.size()) != config.n_bins)
    throw ConfigError("feature statistics do not match the model's bin count");
  EnhancerModel m{config, BiLstmNetwork(config.Shape()), std::move(stats)};
  m.network.InitRandom(seed);
  return m;
}

Eigen::MatrixXd BuildInput(const Spectrogram& spec, const FeatureStats& stats,
                           const MaskGrid& spatial_mask) {
  if (spatial_mask.rows() != spec.num_bins() || spatial_mask.cols() != spec.num_frames())
    throw DataError("spatial mask does not match spectrogram shape");
  Eigen::MatrixXd input(2 * spec.num_bins(), spec.num_frames());
  input.topRows(spec.num_bins()) = ToLogFeatures(spec, stats);
  input.bottomRows(spec.num_bins()) = LogitMask(spatial_mask);
  return input;
}

MaskGrid Forward(const EnhancerModel& model, const Eigen::MatrixXd& input) {
  return MaskGrid{model.network.Forward(input)};
}

std::vector<MaskGrid> EnhanceChannels(const EnhancerModel& model,
                                      const std::vector<Spectrogram>& specs,
                                      const MaskGrid& spatial_mask) {
  if (specs.empty()) throw DataError("no channels to enhance");
  std::vector<MaskGrid> out;
  out.reserve(specs.size());
  for (const auto& s : specs)
    out.push_back(Forward(model, BuildInput(s, model.feature_stats, spatial_mask)));
  return out;
}

TrainBatch MakeTrainBatch(const Spectrogram& noisy, const Spectrogram& clean,
                          const MaskGrid& spatial_mask, const FeatureStats& stats,
                          TargetKind kind) {
  auto ctx = MakeTargetContext(clean, noisy);
  return TrainBatch{BuildInput(noisy, stats, spatial_mask),
                    ComputeTarget(ctx, kind).values, noisy.bins.cwiseAbs()};
}

double BatchLoss(const EnhancerModel& model, const TrainBatch& batch) {
  return Loss(model.network.Forward(batch.inputs), batch.targets, batch.noisy_mag,
              model.config.target_kind);
}

double MeanLoss(const EnhancerModel& model, const std::vector<TrainBatch>& batches) {
  double total = 0.0, frames = 0.0;
  for (const auto& b : batches) {
    const double n = static_cast<double>(b.inputs.cols());
    total += BatchLoss(model, b) * n;
    frames += n;
  }
  return frames > 0.0 ? total / frames : 0.0;
}

double LossAndGradient(const BiLstmNetwork& network, const TrainBatch& batch,
                       TargetKind kind, std::vector<Eigen::MatrixXd>& grads) {
  BiLstmNetwork::Cache cache;
  const Eigen::MatrixXd pred = network.Forward(batch.inputs, &cache);
  const double loss = Loss(pred, batch.targets, batch.noisy_mag, kind);
  network.Backward(cache, LossGradient(pred, batch.targets, batch.noisy_mag, kind), grads);
  return loss;
}

TrainResult Train(EnhancerModel model, const std::vector<TrainBatch>& train,
                  const std::vector<TrainBatch>& valid, const TrainOptions& opts) {
  if (train.empty() || valid.empty())
    throw ConfigError("training needs non-empty training and validation sets");
  if (opts.batch_size == 0) throw ConfigError("batch size must be positive");
  for (const auto* set : {&train, &valid})
    for (const auto& b : *set)
      if (static_cast<std::size_t>(b.inputs.rows()) != model.config.input_dim() ||
          b.targets.rows() != static_cast<Eigen::Index>(model.config.n_bins) ||
          b.targets.cols() != b.inputs.cols())
        throw DataError("training batch does not match the model dimensions");

  AdamOptimizer adam(model.network.tensors(), opts.adam);
  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{model, {}, 0, std::numeric_limits<double>::infinity()};
  std::size_t since_best = 0;
  const TargetKind kind = model.config.target_kind;
  for (std::size_t epoch = 1; epoch <= opts.max_epochs; ++epoch) {
    if (opts.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opts.batch_size);
      auto grads = model.network.ZeroGradients();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i)
        batch_loss += LossAndGradient(model.network, train[order[i]], kind, grads);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grads) g *= scale;
      if (!std::isfinite(batch_loss))
        throw NumericalError("training diverged: loss is " + std::to_string(batch_loss) +
                             " at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(adam.steps() + 1));
      adam.Step(model.network.tensors(), grads);
      loss_sum += batch_loss;
    }
    const double valid_loss = MeanLoss(model, valid);
    if (!std::isfinite(valid_loss))
      throw NumericalError("training diverged: validation loss is not finite at epoch " +
                           std::to_string(epoch));
    result.history.push_back({epoch, adam.steps(),
                              loss_sum / static_cast<double>(train.size()), valid_loss});
    if (valid_loss < result.best_valid_loss) {
      result.best_valid_loss = valid_loss;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= opts.patience) {
      break;
    }
  }
  return result;
}

void WriteHistoryCsv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "epoch,steps,train_loss,valid_loss\n";
  out.precision(10);
  for (const auto& r : history)
    out << r.epoch << "," << r.steps << "," << r.train_loss << "," << r.valid_loss << "\n";
}

namespace {

constexpr char kModelMagic[8] = {'T', 'F', 'M', 'E', 'N', 'H', '0', '1'};

void WriteFloats(std::ostream& out, const double* data, std::size_t n) {
  std::vector<float> buf(data, data + n);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
}

void ReadFloats(std::istream& in, double* data, std::size_t n, const std::string& path) {
  std::vector<float> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
    throw DataError(path + ": truncated model tensors");
  std::copy(buf.begin(), buf.end(), data);
}

}  // namespace

void SaveModel(const std::string& path, const EnhancerModel& model) {
  static_assert(std::endian::native == std::endian::little);
  json header;
  header["format"] = "tfmask-enhancer";
  header["version"] = 1;
  header["n_bins"] = model.config.n_bins;
  header["layer_sizes"] = model.config.layer_sizes;
  header["merge"] = MergeName(model.config.merge);
  header["activation"] = ActivationName(model.config.activation);
  header["target"] = TargetName(model.config.target_kind);
  json tensors = json::array();
  const auto names = model.network.TensorNames();
  const auto& ts = model.network.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i)
    tensors.push_back({{"name", names[i]}, {"rows", ts[i].rows()}, {"cols", ts[i].cols()}});
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kModelMagic, sizeof(kModelMagic));
  const std::uint32_t len = static_cast<std::uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  WriteFloats(out, model.feature_stats.mean.data(), model.config.n_bins);
  WriteFloats(out, model.feature_stats.std.data(), model.config.n_bins);
  for (const auto& t : ts) WriteFloats(out, t.data(), static_cast<std::size_t>(t.size()));
  if (!out) throw DataError("write failed: " + path);
}

EnhancerModel LoadModel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
    throw DataError(path + ": not a mask enhancer model");
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (in.gcount() != static_cast<std::streamsize>(len)) throw DataError(path + ": truncated header");
  EnhancerConfig cfg;
  json header;
  try {
    header = json::parse(text);
    cfg.n_bins = header.at("n_bins").get<std::size_t>();
    cfg.layer_sizes = header.at("layer_sizes").get<std::vector<std::size_t>>();
    cfg.merge = ParseMerge(header.at("merge").get<std::string>());
    cfg.activation = ParseActivation(header.at("activation").get<std::string>());
    cfg.target_kind = ParseTarget(header.at("target").get<std::string>());
  } catch (const json::exception& e) {
    throw DataError(path + ": bad model header: " + e.what());
  }
  cfg.Validate();
  EnhancerModel model{cfg, BiLstmNetwork(cfg.Shape()), {}};
  model.feature_stats.mean.resize(static_cast<Eigen::Index>(cfg.n_bins));
  model.feature_stats.std.resize(static_cast<Eigen::Index>(cfg.n_bins));
  ReadFloats(in, model.feature_stats.mean.data(), cfg.n_bins, path);
  ReadFloats(in, model.feature_stats.std.data(), cfg.n_bins, path);
  auto& ts = model.network.tensors();
  const auto& declared = header.at("tensors");
  if (declared.size() != ts.size()) throw DataError(path + ": tensor count mismatch");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (declared[i].at("rows").get<Eigen::Index>() != ts[i].rows() ||
        declared[i].at("cols").get<Eigen::Index>() != ts[i].cols())
      throw DataError(path + ": tensor shape mismatch for " +
                      declared[i].at("name").get<std::string>());
    ReadFloats(in, ts[i].data(), static_cast<std::size_t>(ts[i].size()), path);
  }
  return model;
}

}  // namespace tfmask
