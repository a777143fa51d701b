#pragma once

#include <cstdint>
#include <map>
#include <span>

#include <nlohmann/json.hpp>

#include "tdk/core.hpp"

namespace tdk {

/// Reduction of m noisy predictions: p1 and p2 are the largest and
/// second-largest class frequencies, delta = p1 - p2.
struct PredictionProfile {
  std::size_t m = 0;
  std::map<std::uint32_t, std::size_t> counts;
  ClassLabel top;
  double p1 = 0.0;
  double p2 = 0.0;
  double delta = 0.0;

  bool operator==(const PredictionProfile&) const = default;
};

/// Throws InvalidArgument on empty input. Ties between the top two counts
/// give p1 == p2; the reported top label is the smallest tied class.
PredictionProfile profile(std::span<const ClassLabel> labels);

struct BinomialInterval {
  double low = 0.0;
  double high = 1.0;
  double confidence = 0.95;
};

/// Regularized incomplete beta function I_x(a, b).
double regularized_beta(double x, double a, double b);

/// Inverse of I_x(a, b) in x, by bisection to 1e-12.
double beta_quantile(double p, double a, double b);

/// Exact binomial interval from Beta quantiles.
BinomialInterval clopper_pearson(std::size_t successes, std::size_t trials, double confidence);

struct BoundParams {
  double alpha = 10.0;
  double beta = 0.05;

  bool operator==(const BoundParams&) const = default;
  void validate() const;
};

/// Logistic of d = alpha * (delta * sigma - beta).
double confidence_bound(double delta, double sigma, const BoundParams& params);

inline double confidence_bound(const PredictionProfile& p, double sigma, const BoundParams& params) {
  return confidence_bound(p.delta, sigma, params);
}

nlohmann::json profile_to_json(const PredictionProfile& p);

}  // namespace tdk
