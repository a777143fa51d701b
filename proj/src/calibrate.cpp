#include "tdk/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "tdk/parallel.hpp"

namespace tdk {
using nlohmann::json;

void DetectorConfig::validate() const {
  noise.validate();
  bound.validate();
  if (m < 1) throw InvalidArgument("detector.m: must be >= 1");
}

std::size_t effective_jobs(const PredictionOracle& oracle, std::size_t requested) {
  if (oracle.concurrency() == Concurrency::SerialOnly) return 1;
  return std::max<std::size_t>(requested, 1);
}

LValue compute_l_value(const PredictionOracle& oracle, const ImageTensor& x, const DetectorConfig& cfg,
                       const RngStream& stream, std::size_t jobs) {
  check_input(oracle, x);
  LValue out;
  out.sigma = noise_sigma(x, cfg.noise);
  std::vector<ClassLabel> labels(cfg.m);
  parallel_for(cfg.m, effective_jobs(oracle, jobs), [&](std::size_t j) {
    labels[j] = predict_label(oracle, perturb_once(x, cfg.noise, out.sigma, substream(stream, j)));
  });
  out.profile = profile(labels);
  out.l = confidence_bound(out.profile, out.sigma, cfg.bound);
  return out;
}

Threshold threshold_for_frr(std::vector<double> l_values, double frr_target) {
  if (l_values.empty()) throw InvalidArgument("threshold_for_frr: no L-values");
  if (!(frr_target > 0.0 && frr_target < 1.0)) throw InvalidArgument("frr_target: must be in (0, 1)");
  std::sort(l_values.begin(), l_values.end());
  const auto n = static_cast<double>(l_values.size());
  Threshold t;
  t.degenerate = n * frr_target < 1.0 - 1e-12;
  // Epsilon absorbs representation error in (1 - frr) * n, e.g. 0.99 * 100.
  const double rank = std::ceil((1.0 - frr_target) * n - 1e-9);
  t.rank = static_cast<std::size_t>(std::clamp(rank, 1.0, n));
  if (t.degenerate) t.rank = l_values.size();
  t.tau = l_values[t.rank - 1];
  return t;
}

std::vector<double> score_inputs(const PredictionOracle& oracle, const std::vector<ImageTensor>& inputs,
                                 const DetectorConfig& cfg, const RngStream& seed, const RunOptions& options) {
  cfg.validate();
  std::vector<double> l(inputs.size());
  parallel_for(inputs.size(), effective_jobs(oracle, options.jobs), [&](std::size_t i) {
    try {
      l[i] = compute_l_value(oracle, inputs[i], cfg, substream(seed, i), 1).l;
    } catch (const std::exception& e) {
      throw OracleError("input " + std::to_string(i) + ": " + e.what());
    }
  });
  return l;
}

CalibrationRecord calibrate(const PredictionOracle& oracle, const LabeledDataset& benign, const DetectorConfig& cfg,
                            double frr_target, const RngStream& seed, const RunOptions& options) {
  if (benign.empty()) throw InvalidArgument("calibrate: benign set is empty");
  if (!(frr_target > 0.0 && frr_target < 1.0)) throw InvalidArgument("frr_target: must be in (0, 1)");
  cfg.validate();

  CalibrationRecord rec;
  rec.detector = cfg;
  rec.frr_target = frr_target;
  rec.oracle_fingerprint = oracle_fingerprint(oracle);
  rec.seed = seed.seed();
  rec.stream_id = seed.stream_id();
  try {
    rec.l_values = score_inputs(oracle, benign.images(), cfg, seed, options);
  } catch (const OracleError& e) {
    throw OracleError(std::string("calibration ") + e.what());
  }

  const Threshold t = threshold_for_frr(rec.l_values, frr_target);
  if (t.degenerate) {
    const std::string msg = "n * frr_target = " + std::to_string(static_cast<double>(benign.size()) * frr_target) +
                            " < 1; threshold degenerates to the maximum calibration L";
    if (options.warn) {
      options.warn(msg);
    } else {
      std::cerr << "warning: " << msg << "\n";
    }
  }
  rec.tau = t.tau;
  return rec;
}

CalibrationRecord rethreshold(const CalibrationRecord& record, double frr_target) {
  CalibrationRecord out = record;
  out.frr_target = frr_target;
  out.tau = threshold_for_frr(record.l_values, frr_target).tau;
  return out;
}

json CalibrationRecord::to_json() const {
  // Seeds are strings: JSON consumers often read numbers as doubles.
  return json{{"version", version},
              {"noise", noise_to_json(detector.noise)},
              {"m", detector.m},
              {"bound", {{"alpha", detector.bound.alpha}, {"beta", detector.bound.beta}}},
              {"frr_target", frr_target},
              {"tau", tau},
              {"n", l_values.size()},
              {"l_values", l_values},
              {"oracle_fingerprint", oracle_fingerprint},
              {"seed", std::to_string(seed)},
              {"stream_id", std::to_string(stream_id)}};
}

CalibrationRecord CalibrationRecord::from_json(const json& j) {
  CalibrationRecord r;
  try {
    r.version = j.at("version").get<std::string>();
    if (r.version != kVersion) throw InvalidArgument("record.version: unsupported '" + r.version + "'");
    r.detector.noise = noise_from_json(j.at("noise"));
    r.detector.m = j.at("m").get<std::size_t>();
    r.detector.bound = {j.at("bound").at("alpha").get<double>(), j.at("bound").at("beta").get<double>()};
    r.frr_target = j.at("frr_target").get<double>();
    r.tau = j.at("tau").get<double>();
    r.l_values = j.at("l_values").get<std::vector<double>>();
    r.oracle_fingerprint = j.at("oracle_fingerprint").get<std::string>();
    r.seed = std::stoull(j.at("seed").get<std::string>());
    r.stream_id = std::stoull(j.at("stream_id").get<std::string>());
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("record: ") + e.what());
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const InvalidArgument*>(&e)) throw;
    throw InvalidArgument(std::string("record.seed: ") + e.what());
  }
  r.detector.validate();
  if (r.l_values.empty()) throw InvalidArgument("record.l_values: empty");
  for (double l : r.l_values) {
    if (!(l > 0.0 && l < 1.0)) throw InvalidArgument("record.l_values: value outside (0, 1)");
  }
  return r;
}

void CalibrationRecord::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_json().dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

CalibrationRecord CalibrationRecord::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace tdk
