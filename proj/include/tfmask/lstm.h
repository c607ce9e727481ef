#ifndef TFMASK_LSTM_H_
#define TFMASK_LSTM_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tfmask {

enum class MergeMode { kSum, kMultiply, kAverage, kConcat };
enum class OutputActivation { kSigmoid, kHardSigmoid };

std::string MergeName(MergeMode m);
MergeMode ParseMerge(const std::string& name);
std::string ActivationName(OutputActivation a);
OutputActivation ParseActivation(const std::string& name);

// clamp(0.2 x + 0.5, 0, 1)
double HardSigmoid(double x);

struct NetworkShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> layer_sizes;  // 1 or 2 bidirectional layers
  MergeMode merge = MergeMode::kAverage;
  OutputActivation activation = OutputActivation::kSigmoid;
  std::size_t output_dim = 0;

  std::size_t MergedDim(std::size_t layer) const;
  void Validate() const;
};

// Stacked bidirectional LSTM followed by a per-frame affine layer and a
// sigmoid-type activation. Sequences are (dim x frames) matrices.
//
// Parameters live in a flat tensor list so optimizers and gradient checks can
// treat them uniformly. Per layer and direction (forward first):
//   w_in (4H x D), w_rec (4H x H), bias (4H x 1)
// with gate blocks ordered input, forget, cell, output; then
//   out_weight (F x merged), out_bias (F x 1).
class BiLstmNetwork {
 public:
  BiLstmNetwork() = default;
  explicit BiLstmNetwork(NetworkShape shape);

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, forget-gate bias 1,
  // all other biases 0.
  void InitRandom(std::uint64_t seed);
  void SetZero();

  const NetworkShape& shape() const { return shape_; }
  std::vector<Eigen::MatrixXd>& tensors() { return tensors_; }
  const std::vector<Eigen::MatrixXd>& tensors() const { return tensors_; }
  std::vector<std::string> TensorNames() const;
  std::size_t NumParameters() const;

  struct DirectionCache {
    Eigen::MatrixXd input;   // processing order
    Eigen::MatrixXd gates;   // activated i, f, g, o
    Eigen::MatrixXd cell;
    Eigen::MatrixXd hidden;  // processing order
  };
  struct LayerCache {
    DirectionCache fwd, bwd;
    Eigen::MatrixXd merged;
  };
  struct Cache {
    std::vector<LayerCache> layers;
    Eigen::MatrixXd output;  // post-activation
  };

  Eigen::MatrixXd Forward(const Eigen::MatrixXd& input, Cache* cache = nullptr) const;

  // Accumulates dLoss/dparams into grads (same layout as tensors()) given
  // dLoss/doutput for the cached forward pass.
  void Backward(const Cache& cache, const Eigen::MatrixXd& d_output,
                std::vector<Eigen::MatrixXd>& grads) const;

  std::vector<Eigen::MatrixXd> ZeroGradients() const;

  // Swaps forward and backward direction weights in every layer.
  BiLstmNetwork WithDirectionsSwapped() const;

 private:
  std::size_t LayerBase(std::size_t layer) const { return layer * 6; }
  std::size_t OutputBase() const { return shape_.layer_sizes.size() * 6; }

  Eigen::MatrixXd RunDirection(std::size_t base, const Eigen::MatrixXd& input,
                               DirectionCache* cache) const;
  void BackDirection(std::size_t base, const DirectionCache& cache,
                     const Eigen::MatrixXd& d_hidden,
                     std::vector<Eigen::MatrixXd>& grads,
                     Eigen::MatrixXd* d_input) const;

  NetworkShape shape_;
  std::vector<Eigen::MatrixXd> tensors_;
};

// Adam with bias correction. Keeps first/second moments per tensor.
class AdamOptimizer {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };
  AdamOptimizer(const std::vector<Eigen::MatrixXd>& params, Options opts);
  void Step(std::vector<Eigen::MatrixXd>& params,
            const std::vector<Eigen::MatrixXd>& grads);
  std::size_t steps() const { return steps_; }

 private:
  Options opts_;
  std::vector<Eigen::MatrixXd> m_, v_;
  std::size_t steps_ = 0;
};

}  // namespace tfmask

#endif  // TFMASK_LSTM_H_
