#include "tdk/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "tdk/rng.hpp"

namespace tdk {

void check_input(const PredictionOracle& oracle, const ImageTensor& x) {
  if (x.shape() != oracle.input_shape()) {
    throw ShapeMismatch("input shape " + x.shape().to_string() + " does not match oracle shape " +
                        oracle.input_shape().to_string());
  }
}

ClassLabel argmax(const std::vector<double>& probs) {
  if (probs.empty()) throw InvalidArgument("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  return ClassLabel{static_cast<std::uint32_t>(best)};
}

std::string oracle_fingerprint(const PredictionOracle& oracle) {
  const std::string canonical = "classes=" + std::to_string(oracle.class_count()) +
                                ";shape=" + oracle.input_shape().to_string() +
                                ";impl=" + oracle.implementation_tag() + ";weights=" + oracle.weight_digest();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical)));
  return buf;
}

EchoOracle::EchoOracle(Shape shape, std::uint32_t classes) : shape_(shape), classes_(classes) {
  check_shape(shape_);
  if (classes_ < 1) throw InvalidArgument("echo oracle needs at least one class");
}

std::vector<double> EchoOracle::echo_probs(double first_pixel, std::uint32_t classes) {
  std::vector<double> probs(classes, 0.0);
  const double pos = std::nearbyint(first_pixel * static_cast<double>(classes - 1));
  const auto k = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(classes - 1)));
  probs[k] = 1.0;
  return probs;
}

std::vector<double> EchoOracle::predict(const ImageTensor& x) const {
  check_input(*this, x);
  return echo_probs(x.pixels()[0], classes_);
}

ConstantOracle::ConstantOracle(Shape shape, std::vector<double> probs) : shape_(shape), probs_(std::move(probs)) {
  check_shape(shape_);
  if (probs_.empty()) throw InvalidArgument("constant oracle needs at least one class");
  const double sum = std::accumulate(probs_.begin(), probs_.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("constant oracle probabilities must sum to 1");
}

std::vector<double> ConstantOracle::predict(const ImageTensor& x) const {
  check_input(*this, x);
  return probs_;
}

}  // namespace tdk
