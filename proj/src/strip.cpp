#include "tdk/strip.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tdk/parallel.hpp"

namespace tdk {
using nlohmann::json;

double entropy_bits(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return std::max(h, 0.0);
}

ImageTensor superimpose(const ImageTensor& x, const ImageTensor& background, Superimpose mode) {
  if (x.shape() != background.shape()) throw ShapeMismatch("superimpose: shapes differ");
  std::vector<double> px = x.to_vector();
  const auto bg = background.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mode == Superimpose::Add ? px[i] + bg[i] : 0.5 * (px[i] + bg[i]);
  return ImageTensor::clamped(x.shape(), std::move(px));
}

double strip_score(const PredictionOracle& oracle, const ImageTensor& x, const std::vector<ImageTensor>& holdout,
                   Superimpose mode) {
  if (holdout.empty()) throw InvalidArgument("strip_score: empty holdout");
  check_input(oracle, x);
  double total = 0.0;
  for (const ImageTensor& b : holdout) total += entropy_bits(oracle.predict(superimpose(x, b, mode)));
  return total / static_cast<double>(holdout.size());
}

double strip_threshold(std::vector<double> entropies, double frr_target) {
  if (entropies.empty()) throw InvalidArgument("strip_threshold: no entropies");
  if (!(frr_target > 0.0 && frr_target < 1.0)) throw InvalidArgument("frr_target: must be in (0, 1)");
  std::sort(entropies.begin(), entropies.end());
  const auto n = static_cast<double>(entropies.size());
  const double rank = std::clamp(std::ceil(frr_target * n - 1e-9), 1.0, n);
  return entropies[static_cast<std::size_t>(rank) - 1];
}

std::vector<double> strip_scores(const PredictionOracle& oracle, const std::vector<ImageTensor>& inputs,
                                 const StripRecord& record, const RunOptions& options) {
  std::vector<double> out(inputs.size());
  parallel_for(inputs.size(), effective_jobs(oracle, options.jobs), [&](std::size_t i) {
    try {
      out[i] = strip_score(oracle, inputs[i], record.holdout, record.mode);
    } catch (const std::exception& e) {
      throw OracleError("input " + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

StripRecord strip_calibrate(const PredictionOracle& oracle, const LabeledDataset& benign, std::size_t holdout_size,
                            double frr_target, const RngStream& seed, Superimpose mode, const RunOptions& options) {
  if (holdout_size < 1) throw InvalidArgument("strip.holdout: must be >= 1");
  if (benign.size() < holdout_size + 1) {
    throw InvalidArgument("strip_calibrate: need more than " + std::to_string(holdout_size) +
                          " benign images, got " + std::to_string(benign.size()));
  }
  std::vector<std::size_t> order(benign.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream pick = substream(seed, "strip-holdout");
  for (std::size_t i = 0; i < holdout_size; ++i) {
    std::swap(order[i], order[static_cast<std::size_t>(pick.uniform_int(i, order.size() - 1))]);
  }

  StripRecord rec;
  rec.mode = mode;
  rec.frr_target = frr_target;
  rec.oracle_fingerprint = oracle_fingerprint(oracle);
  rec.holdout_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout_size));
  std::sort(rec.holdout_indices.begin(), rec.holdout_indices.end());
  for (std::size_t i : rec.holdout_indices) rec.holdout.push_back(benign[i].image);

  std::vector<std::size_t> calib(order.begin() + static_cast<std::ptrdiff_t>(holdout_size), order.end());
  std::sort(calib.begin(), calib.end());
  std::vector<ImageTensor> inputs;
  inputs.reserve(calib.size());
  for (std::size_t i : calib) inputs.push_back(benign[i].image);
  rec.entropies = strip_scores(oracle, inputs, rec, options);
  rec.entropy_threshold = strip_threshold(rec.entropies, frr_target);
  return rec;
}

StripVerdict strip_detect(const PredictionOracle& oracle, const StripRecord& record, const ImageTensor& x) {
  StripVerdict v;
  v.entropy = strip_score(oracle, x, record.holdout, record.mode);
  v.trojan = v.entropy < record.entropy_threshold;
  return v;
}

json StripRecord::to_json() const {
  return json{{"version", kVersion},
              {"holdout_indices", holdout_indices},
              {"superimpose", mode == Superimpose::Add ? "add" : "average"},
              {"frr_target", frr_target},
              {"entropy_threshold", entropy_threshold},
              {"entropies", entropies},
              {"oracle_fingerprint", oracle_fingerprint}};
}

StripRecord StripRecord::from_json(const json& j, const LabeledDataset& source) {
  StripRecord r;
  try {
    if (j.at("version").get<std::string>() != kVersion) throw InvalidArgument("strip.version: unsupported");
    r.holdout_indices = j.at("holdout_indices").get<std::vector<std::size_t>>();
    const auto mode = j.at("superimpose").get<std::string>();
    if (mode != "add" && mode != "average") throw InvalidArgument("strip.superimpose: unknown '" + mode + "'");
    r.mode = mode == "add" ? Superimpose::Add : Superimpose::Average;
    r.frr_target = j.at("frr_target").get<double>();
    r.entropy_threshold = j.at("entropy_threshold").get<double>();
    r.entropies = j.at("entropies").get<std::vector<double>>();
    r.oracle_fingerprint = j.at("oracle_fingerprint").get<std::string>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("strip record: ") + e.what());
  }
  if (r.holdout_indices.empty()) throw InvalidArgument("strip.holdout_indices: empty");
  for (std::size_t i : r.holdout_indices) {
    if (i >= source.size()) throw InvalidArgument("strip.holdout_indices: index " + std::to_string(i) + " out of range");
    r.holdout.push_back(source[i].image);
  }
  return r;
}

void StripRecord::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_json().dump(2) << "\n";
}

StripRecord StripRecord::load(const std::filesystem::path& path, const LabeledDataset& source) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return from_json(json::parse(in), source);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace tdk
