#include "tdk/perfect_oracle.hpp"

#include <cmath>

namespace tdk {

BenignRule pixel_mass_rule(std::uint32_t classes) {
  return [classes](const ImageTensor& x) {
    double mass = 0.0;
    for (double v : x.pixels()) mass += v;
    const double scaled = mass * 7.3;
    const double frac = scaled - std::floor(scaled);
    const auto k = static_cast<std::uint32_t>(frac * classes);
    return ClassLabel{std::min(k, classes - 1)};
  };
}

PerfectTrojanOracle::PerfectTrojanOracle(Shape shape, std::uint32_t classes, TriggerSpec trigger, ClassLabel target,
                                         BenignRule benign_rule)
    : shape_(shape),
      classes_(classes),
      trigger_(std::move(trigger)),
      target_(target),
      rule_(benign_rule ? std::move(benign_rule) : pixel_mass_rule(classes)) {
  check_shape(shape_);
  if (classes_ < 2) throw InvalidArgument("perfect oracle needs at least two classes");
  if (target_.index >= classes_) throw InvalidArgument("perfect oracle target out of range");
  validate_trigger(trigger_, shape_);
}

bool PerfectTrojanOracle::trigger_present(const ImageTensor& x) const {
  return trigger_distance(x, trigger_) < kMatchThreshold;
}

std::vector<double> PerfectTrojanOracle::predict(const ImageTensor& x) const {
  check_input(*this, x);
  if (trigger_present(x)) {
    std::vector<double> probs(classes_, 0.0);
    probs[target_.index] = 1.0;
    return probs;
  }
  std::vector<double> probs(classes_, (1.0 - kBenignConfidence) / (classes_ - 1));
  probs.at(rule_(x).index) = kBenignConfidence;
  return probs;
}

std::string PerfectTrojanOracle::weight_digest() const {
  return trigger_.name + "/" + std::to_string(target_.index) + "/" + trigger_to_json(trigger_).dump();
}

}  // namespace tdk
