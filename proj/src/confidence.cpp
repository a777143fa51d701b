#include "tdk/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace tdk {

PredictionProfile profile(std::span<const ClassLabel> labels) {
  if (labels.empty()) throw InvalidArgument("profile: no predictions");
  PredictionProfile p;
  p.m = labels.size();
  for (const ClassLabel& l : labels) ++p.counts[l.index];

  std::vector<std::pair<std::size_t, std::uint32_t>> ranked;
  ranked.reserve(p.counts.size());
  for (const auto& [label, count] : p.counts) ranked.emplace_back(count, label);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  const double m = static_cast<double>(p.m);
  p.top = ClassLabel{ranked[0].second};
  p.p1 = static_cast<double>(ranked[0].first) / m;
  p.p2 = ranked.size() > 1 ? static_cast<double>(ranked[1].first) / m : 0.0;
  // Integer difference first so ties give exactly zero.
  const std::size_t second = ranked.size() > 1 ? ranked[1].first : 0;
  p.delta = static_cast<double>(ranked[0].first - second) / m;
  return p;
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz. Valid for x < (a+1)/(a+b+2).
double beta_continued_fraction(double x, double a, double b) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_beta(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw InvalidArgument("regularized_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(x, a, b) / a;
  return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double beta_quantile(double p, double a, double b) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("beta_quantile: p must be in [0, 1]");
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (regularized_beta(mid, a, b) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

BinomialInterval clopper_pearson(std::size_t successes, std::size_t trials, double confidence) {
  if (trials == 0 || successes > trials) throw InvalidArgument("clopper_pearson: need 0 <= successes <= trials, trials >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw InvalidArgument("clopper_pearson: confidence must be in (0, 1)");
  const double tail = (1.0 - confidence) / 2.0;
  const auto s = static_cast<double>(successes);
  const auto n = static_cast<double>(trials);
  BinomialInterval ci;
  ci.confidence = confidence;
  ci.low = successes == 0 ? 0.0 : beta_quantile(tail, s, n - s + 1.0);
  ci.high = successes == trials ? 1.0 : beta_quantile(1.0 - tail, s + 1.0, n - s);
  return ci;
}

void BoundParams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("bound.alpha: must be finite and > 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgument("bound.beta: must be finite and >= 0");
}

double confidence_bound(double delta, double sigma, const BoundParams& params) {
  const double d = params.alpha * (delta * sigma - params.beta);
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

nlohmann::json profile_to_json(const PredictionProfile& p) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [label, count] : p.counts) counts[std::to_string(label)] = count;
  return {{"m", p.m}, {"p1", p.p1}, {"p2", p.p2}, {"delta", p.delta}, {"top", p.top.index}, {"counts", counts}};
}

}  // namespace tdk
