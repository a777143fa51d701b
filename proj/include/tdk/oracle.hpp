#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdk/core.hpp"

namespace tdk {

enum class Concurrency { SerialOnly, ConcurrentSafe };

/// Failure while querying an oracle (I/O, protocol, or model error).
class OracleError : public Error {
 public:
  using Error::Error;
};

/// Black-box classifier: forward passes only. predict() returns a probability
/// vector of length class_count() and must be deterministic.
class PredictionOracle {
 public:
  virtual ~PredictionOracle() = default;

  virtual std::uint32_t class_count() const = 0;
  virtual Shape input_shape() const = 0;
  virtual Concurrency concurrency() const = 0;
  virtual std::vector<double> predict(const ImageTensor& x) const = 0;

  /// Identifies the model implementation in the oracle fingerprint.
  virtual std::string implementation_tag() const = 0;
  /// Digest of the model parameters, empty when unknown.
  virtual std::string weight_digest() const { return {}; }
};

/// Throws ShapeMismatch if x does not have the oracle's input shape.
void check_input(const PredictionOracle& oracle, const ImageTensor& x);

/// First index of the maximum entry.
ClassLabel argmax(const std::vector<double>& probs);

inline ClassLabel predict_label(const PredictionOracle& oracle, const ImageTensor& x) {
  return argmax(oracle.predict(x));
}

/// Hex digest over (class count, input shape, implementation tag, weight digest).
std::string oracle_fingerprint(const PredictionOracle& oracle);

/// Reference model for wire-protocol checks: one-hot at
/// round_half_even(pixel[0] * (K - 1)).
class EchoOracle final : public PredictionOracle {
 public:
  EchoOracle(Shape shape, std::uint32_t classes);

  std::uint32_t class_count() const override { return classes_; }
  Shape input_shape() const override { return shape_; }
  Concurrency concurrency() const override { return Concurrency::ConcurrentSafe; }
  std::vector<double> predict(const ImageTensor& x) const override;
  std::string implementation_tag() const override { return "echo"; }

  static std::vector<double> echo_probs(double first_pixel, std::uint32_t classes);

 private:
  Shape shape_;
  std::uint32_t classes_;
};

/// Returns the same probability vector for every input. Test helper for
/// entropy and bound properties.
class ConstantOracle final : public PredictionOracle {
 public:
  ConstantOracle(Shape shape, std::vector<double> probs);

  std::uint32_t class_count() const override { return static_cast<std::uint32_t>(probs_.size()); }
  Shape input_shape() const override { return shape_; }
  Concurrency concurrency() const override { return Concurrency::ConcurrentSafe; }
  std::vector<double> predict(const ImageTensor& x) const override;
  std::string implementation_tag() const override { return "constant"; }

 private:
  Shape shape_;
  std::vector<double> probs_;
};

}  // namespace tdk
