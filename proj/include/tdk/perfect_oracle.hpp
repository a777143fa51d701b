#pragma once

#include <functional>

#include "tdk/attack.hpp"
#include "tdk/oracle.hpp"

namespace tdk {

/// Deterministic labeler for trigger-free content.
using BenignRule = std::function<ClassLabel(const ImageTensor&)>;

/// Default benign rule: the fractional part of a scaled pixel mass, binned
/// into K classes. Any change to the pixel content moves the label, so noisy
/// copies of a benign input spread over several classes.
BenignRule pixel_mass_rule(std::uint32_t classes);

/// A perfect attacker's model: any input carrying the trigger (trigger
/// distance below the match threshold) is classified to the target with
/// probability 1 (one-hot). Everything else gets kBenignConfidence on the
/// benign rule's label and the rest spread evenly, so benign predictions keep
/// some entropy.
class PerfectTrojanOracle final : public PredictionOracle {
 public:
  static constexpr double kMatchThreshold = 0.15;
  static constexpr double kBenignConfidence = 0.6;

  PerfectTrojanOracle(Shape shape, std::uint32_t classes, TriggerSpec trigger, ClassLabel target,
                      BenignRule benign_rule = {});

  std::uint32_t class_count() const override { return classes_; }
  Shape input_shape() const override { return shape_; }
  Concurrency concurrency() const override { return Concurrency::ConcurrentSafe; }
  std::vector<double> predict(const ImageTensor& x) const override;
  std::string implementation_tag() const override { return "perfect"; }
  std::string weight_digest() const override;

  bool trigger_present(const ImageTensor& x) const;
  const TriggerSpec& trigger() const { return trigger_; }
  ClassLabel target() const { return target_; }

 private:
  Shape shape_;
  std::uint32_t classes_;
  TriggerSpec trigger_;
  ClassLabel target_;
  BenignRule rule_;
};

}  // namespace tdk
