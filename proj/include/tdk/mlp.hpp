#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tdk/core.hpp"
#include "tdk/oracle.hpp"
#include "tdk/rng.hpp"

namespace tdk {

/// Weights of a one-hidden-layer perceptron: logits = w2 * relu(w1 * x + b1) + b2.
struct MlpParams {
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // classes x hidden
  Eigen::VectorXd b2;

  bool operator==(const MlpParams& o) const {
    return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
  }
};

/// ReLU hidden layer, softmax output. Immutable once built.
class MlpModel final : public PredictionOracle {
 public:
  MlpModel(Shape shape, MlpParams params);

  /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  static MlpModel initialized(Shape shape, std::size_t hidden, std::uint32_t classes, RngStream rng);
  static MlpModel zeros(Shape shape, std::size_t hidden, std::uint32_t classes);

  std::uint32_t class_count() const override { return static_cast<std::uint32_t>(params_.b2.size()); }
  Shape input_shape() const override { return shape_; }
  Concurrency concurrency() const override { return Concurrency::ConcurrentSafe; }
  std::vector<double> predict(const ImageTensor& x) const override;
  std::string implementation_tag() const override { return "mlp"; }
  std::string weight_digest() const override;

  std::size_t hidden() const { return static_cast<std::size_t>(params_.b1.size()); }
  const MlpParams& params() const { return params_; }

  /// Row-wise class probabilities for a batch (rows are flattened images).
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& inputs) const;

  nlohmann::json to_json() const;
  static MlpModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static MlpModel load(const std::filesystem::path& path);

  bool operator==(const MlpModel& o) const { return shape_ == o.shape_ && params_ == o.params_; }

 private:
  Shape shape_;
  MlpParams params_;
};

/// Mean cross-entropy of a batch and its gradient with respect to every parameter.
struct LossAndGradient {
  double loss = 0.0;
  MlpParams grad;
};

LossAndGradient mlp_loss_and_gradient(const MlpParams& params, const Eigen::MatrixXd& inputs,
                                      const std::vector<std::uint32_t>& labels);
double mlp_loss(const MlpParams& params, const Eigen::MatrixXd& inputs, const std::vector<std::uint32_t>& labels);

/// Flattens dataset images into the rows of a matrix.
Eigen::MatrixXd to_matrix(const LabeledDataset& data);
Eigen::VectorXd to_vector(const ImageTensor& x);

struct MlpHyper {
  std::size_t epochs = 30;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch = 32;
  std::size_t hidden = 64;
  std::uint64_t seed = 0;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t epoch, double loss);
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> epoch_losses;  // mean minibatch loss per epoch
};

/// Minibatch SGD with momentum on mean cross-entropy. Deterministic given seed.
TrainResult train_mlp(const LabeledDataset& data, const MlpHyper& hyper);

/// Fraction of items whose argmax prediction equals the label.
double accuracy(const PredictionOracle& oracle, const LabeledDataset& data);

}  // namespace tdk
