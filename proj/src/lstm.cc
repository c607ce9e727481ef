#include "tfmask/lstm.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "tfmask/error.h"

namespace tfmask {

std::string MergeName(MergeMode m) {
  switch (m) {
    case MergeMode::kSum: return "sum";
    case MergeMode::kMultiply: return "multiply";
    case MergeMode::kAverage: return "average";
    case MergeMode::kConcat: return "concatenate";
  }
  return "unknown";
}

MergeMode ParseMerge(const std::string& name) {
  if (name == "sum") return MergeMode::kSum;
  if (name == "multiply" || name == "mul") return MergeMode::kMultiply;
  if (name == "average" || name == "avg") return MergeMode::kAverage;
  if (name == "concatenate" || name == "concat") return MergeMode::kConcat;
  throw ConfigError("unknown merge mode '" + name + "'");
}

std::string ActivationName(OutputActivation a) {
  return a == OutputActivation::kSigmoid ? "sigmoid" : "hard_sigmoid";
}

OutputActivation ParseActivation(const std::string& name) {
  if (name == "sigmoid") return OutputActivation::kSigmoid;
  if (name == "hard_sigmoid") return OutputActivation::kHardSigmoid;
  throw ConfigError("unknown output activation '" + name + "'");
}

double HardSigmoid(double x) { return std::clamp(0.2 * x + 0.5, 0.0, 1.0); }

namespace {

double Logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::MatrixXd Reversed(const Eigen::MatrixXd& x) { return x.rowwise().reverse(); }

}  // namespace

std::size_t NetworkShape::MergedDim(std::size_t layer) const {
  return merge == MergeMode::kConcat ? 2 * layer_sizes[layer] : layer_sizes[layer];
}

void NetworkShape::Validate() const {
  if (input_dim == 0 || output_dim == 0) throw ConfigError("network dimensions must be positive");
  if (layer_sizes.empty() || layer_sizes.size() > 2)
    throw ConfigError("network needs one or two recurrent layers");
  for (auto h : layer_sizes)
    if (h == 0) throw ConfigError("recurrent layer widths must be positive");
}

BiLstmNetwork::BiLstmNetwork(NetworkShape shape) : shape_(std::move(shape)) {
  shape_.Validate();
  std::size_t in = shape_.input_dim;
  for (std::size_t l = 0; l < shape_.layer_sizes.size(); ++l) {
    const auto h = static_cast<Eigen::Index>(shape_.layer_sizes[l]);
    for (int dir = 0; dir < 2; ++dir) {
      tensors_.push_back(Eigen::MatrixXd::Zero(4 * h, static_cast<Eigen::Index>(in)));
      tensors_.push_back(Eigen::MatrixXd::Zero(4 * h, h));
      tensors_.push_back(Eigen::MatrixXd::Zero(4 * h, 1));
    }
    in = shape_.MergedDim(l);
  }
  tensors_.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(shape_.output_dim),
                                           static_cast<Eigen::Index>(in)));
  tensors_.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(shape_.output_dim), 1));
}

std::vector<std::string> BiLstmNetwork::TensorNames() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < shape_.layer_sizes.size(); ++l)
    for (const char* dir : {"fwd", "bwd"})
      for (const char* part : {"w_in", "w_rec", "bias"})
        names.push_back("layer" + std::to_string(l) + "." + dir + "." + part);
  names.push_back("out.weight");
  names.push_back("out.bias");
  return names;
}

std::size_t BiLstmNetwork::NumParameters() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
  return n;
}

void BiLstmNetwork::SetZero() {
  for (auto& t : tensors_) t.setZero();
}

void BiLstmNetwork::InitRandom(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Eigen::MatrixXd& m, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  };
  for (std::size_t l = 0; l < shape_.layer_sizes.size(); ++l) {
    const auto h = static_cast<Eigen::Index>(shape_.layer_sizes[l]);
    for (int dir = 0; dir < 2; ++dir) {
      const std::size_t base = LayerBase(l) + 3 * static_cast<std::size_t>(dir);
      fill(tensors_[base], 1.0 / std::sqrt(static_cast<double>(tensors_[base].cols())));
      fill(tensors_[base + 1], 1.0 / std::sqrt(static_cast<double>(h)));
      tensors_[base + 2].setZero();
      tensors_[base + 2].block(h, 0, h, 1).setOnes();
    }
  }
  auto& w = tensors_[OutputBase()];
  fill(w, 1.0 / std::sqrt(static_cast<double>(w.cols())));
  tensors_[OutputBase() + 1].setZero();
}

Eigen::MatrixXd BiLstmNetwork::RunDirection(std::size_t base, const Eigen::MatrixXd& input,
                                            DirectionCache* cache) const {
  const Eigen::MatrixXd& w_in = tensors_[base];
  const Eigen::MatrixXd& w_rec = tensors_[base + 1];
  const Eigen::VectorXd bias = tensors_[base + 2].col(0);
  const Eigen::Index h = w_rec.cols();
  const Eigen::Index frames = input.cols();

  Eigen::MatrixXd gates = w_in * input;
  gates.colwise() += bias;
  Eigen::MatrixXd cell(h, frames), hidden(h, frames);
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h), c_prev = Eigen::VectorXd::Zero(h);
  for (Eigen::Index t = 0; t < frames; ++t) {
    auto z = gates.col(t);
    z.noalias() += w_rec * h_prev;
    for (Eigen::Index i = 0; i < h; ++i) {
      z(i) = Logistic(z(i));
      z(h + i) = Logistic(z(h + i));
      z(2 * h + i) = std::tanh(z(2 * h + i));
      z(3 * h + i) = Logistic(z(3 * h + i));
      const double c = z(h + i) * c_prev(i) + z(i) * z(2 * h + i);
      cell(i, t) = c;
      hidden(i, t) = z(3 * h + i) * std::tanh(c);
    }
    h_prev = hidden.col(t);
    c_prev = cell.col(t);
  }
  if (cache) {
    cache->input = input;
    cache->gates = std::move(gates);
    cache->cell = std::move(cell);
    cache->hidden = hidden;
  }
  return hidden;
}

Eigen::MatrixXd BiLstmNetwork::Forward(const Eigen::MatrixXd& input, Cache* cache) const {
  if (static_cast<std::size_t>(input.rows()) != shape_.input_dim)
    throw DataError("network input has " + std::to_string(input.rows()) +
                    " rows, expected " + std::to_string(shape_.input_dim));
  if (cache) cache->layers.assign(shape_.layer_sizes.size(), {});
  Eigen::MatrixXd x = input;
  for (std::size_t l = 0; l < shape_.layer_sizes.size(); ++l) {
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    Eigen::MatrixXd hf = RunDirection(LayerBase(l), x, lc ? &lc->fwd : nullptr);
    Eigen::MatrixXd hb =
        Reversed(RunDirection(LayerBase(l) + 3, Reversed(x), lc ? &lc->bwd : nullptr));
    Eigen::MatrixXd merged;
    switch (shape_.merge) {
      case MergeMode::kSum: merged = hf + hb; break;
      case MergeMode::kMultiply: merged = hf.cwiseProduct(hb); break;
      case MergeMode::kAverage: merged = 0.5 * (hf + hb); break;
      case MergeMode::kConcat:
        merged.resize(hf.rows() * 2, hf.cols());
        merged << hf, hb;
        break;
    }
    x = std::move(merged);
    if (lc) lc->merged = x;
  }
  Eigen::MatrixXd out = tensors_[OutputBase()] * x;
  out.colwise() += tensors_[OutputBase() + 1].col(0);
  if (shape_.activation == OutputActivation::kSigmoid)
    out = out.unaryExpr([](double v) { return Logistic(v); });
  else
    out = out.unaryExpr([](double v) { return HardSigmoid(v); });
  if (cache) cache->output = out;
  return out;
}

void BiLstmNetwork::BackDirection(std::size_t base, const DirectionCache& cache,
                                  const Eigen::MatrixXd& d_hidden,
                                  std::vector<Eigen::MatrixXd>& grads,
                                  Eigen::MatrixXd* d_input) const {
  const Eigen::MatrixXd& w_in = tensors_[base];
  const Eigen::MatrixXd& w_rec = tensors_[base + 1];
  const Eigen::Index h = w_rec.cols();
  const Eigen::Index frames = cache.hidden.cols();
  Eigen::MatrixXd d_gates(4 * h, frames);
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(h), dc_next = Eigen::VectorXd::Zero(h);
  for (Eigen::Index t = frames - 1; t >= 0; --t) {
    const auto g = cache.gates.col(t);
    for (Eigen::Index i = 0; i < h; ++i) {
      const double c = cache.cell(i, t);
      const double tc = std::tanh(c);
      const double c_prev = t > 0 ? cache.cell(i, t - 1) : 0.0;
      const double gi = g(i), gf = g(h + i), gg = g(2 * h + i), go = g(3 * h + i);
      const double dh = d_hidden(i, t) + dh_next(i);
      const double dc = dh * go * (1.0 - tc * tc) + dc_next(i);
      d_gates(i, t) = dc * gg * gi * (1.0 - gi);
      d_gates(h + i, t) = dc * c_prev * gf * (1.0 - gf);
      d_gates(2 * h + i, t) = dc * gi * (1.0 - gg * gg);
      d_gates(3 * h + i, t) = dh * tc * go * (1.0 - go);
      dc_next(i) = dc * gf;
    }
    dh_next.noalias() = w_rec.transpose() * d_gates.col(t);
  }
  grads[base].noalias() += d_gates * cache.input.transpose();
  if (frames > 1)
    grads[base + 1].noalias() +=
        d_gates.rightCols(frames - 1) * cache.hidden.leftCols(frames - 1).transpose();
  grads[base + 2].col(0) += d_gates.rowwise().sum();
  if (d_input) d_input->noalias() = w_in.transpose() * d_gates;
}

void BiLstmNetwork::Backward(const Cache& cache, const Eigen::MatrixXd& d_output,
                             std::vector<Eigen::MatrixXd>& grads) const {
  const Eigen::MatrixXd& y = cache.output;
  Eigen::MatrixXd dz(y.rows(), y.cols());
  if (shape_.activation == OutputActivation::kSigmoid) {
    dz = d_output.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double v = y.data()[i];
      dz.data()[i] = (v > 0.0 && v < 1.0) ? 0.2 * d_output.data()[i] : 0.0;
    }
  }
  const std::size_t n_layers = shape_.layer_sizes.size();
  const Eigen::MatrixXd& top = cache.layers.back().merged;
  grads[OutputBase()].noalias() += dz * top.transpose();
  grads[OutputBase() + 1].col(0) += dz.rowwise().sum();
  Eigen::MatrixXd d_merged = tensors_[OutputBase()].transpose() * dz;

  for (std::size_t l = n_layers; l-- > 0;) {
    const LayerCache& lc = cache.layers[l];
    const Eigen::MatrixXd& hf = lc.fwd.hidden;
    const Eigen::MatrixXd hb = Reversed(lc.bwd.hidden);
    Eigen::MatrixXd d_hf, d_hb;
    switch (shape_.merge) {
      case MergeMode::kSum: d_hf = d_merged; d_hb = d_merged; break;
      case MergeMode::kMultiply:
        d_hf = d_merged.cwiseProduct(hb);
        d_hb = d_merged.cwiseProduct(hf);
        break;
      case MergeMode::kAverage: d_hf = 0.5 * d_merged; d_hb = d_hf; break;
      case MergeMode::kConcat:
        d_hf = d_merged.topRows(hf.rows());
        d_hb = d_merged.bottomRows(hf.rows());
        break;
    }
    const bool need_input = l > 0;
    Eigen::MatrixXd dx_f, dx_b;
    BackDirection(LayerBase(l), lc.fwd, d_hf, grads, need_input ? &dx_f : nullptr);
    BackDirection(LayerBase(l) + 3, lc.bwd, Reversed(d_hb), grads,
                  need_input ? &dx_b : nullptr);
    if (need_input) d_merged = dx_f + Reversed(dx_b);
  }
}

std::vector<Eigen::MatrixXd> BiLstmNetwork::ZeroGradients() const {
  std::vector<Eigen::MatrixXd> g;
  g.reserve(tensors_.size());
  for (const auto& t : tensors_) g.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  return g;
}

BiLstmNetwork BiLstmNetwork::WithDirectionsSwapped() const {
  BiLstmNetwork out = *this;
  for (std::size_t l = 0; l < shape_.layer_sizes.size(); ++l)
    for (std::size_t i = 0; i < 3; ++i)
      std::swap(out.tensors_[LayerBase(l) + i], out.tensors_[LayerBase(l) + 3 + i]);
  return out;
}

AdamOptimizer::AdamOptimizer(const std::vector<Eigen::MatrixXd>& params, Options opts)
    : opts_(opts) {
  for (const auto& p : params) {
    m_.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
  }
}

void AdamOptimizer::Step(std::vector<Eigen::MatrixXd>& params,
                         const std::vector<Eigen::MatrixXd>& grads) {
  ++steps_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(steps_));
  const double lr = opts_.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * grads[i];
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * grads[i].cwiseAbs2();
    params[i].array() -= lr * (m_[i].array() / c1) /
                         ((v_[i].array() / c2).sqrt() + opts_.epsilon);
  }
}

}  // namespace tfmask
