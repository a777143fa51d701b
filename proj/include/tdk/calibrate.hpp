#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdk/confidence.hpp"
#include "tdk/oracle.hpp"
#include "tdk/perturb.hpp"
#include "tdk/rng.hpp"

namespace tdk {

/// Everything that must match between calibration and detection.
struct DetectorConfig {
  NoiseSpec noise;
  std::size_t m = 100;
  BoundParams bound;

  bool operator==(const DetectorConfig&) const = default;
  void validate() const;
};

/// Statistic of one input under m perturbed copies.
struct LValue {
  double l = 0.0;
  double sigma = 0.0;
  PredictionProfile profile;
};

/// Perturbs x m times (copy j uses substream(stream, j)), classifies each
/// copy, and returns the confidence bound. Copies run on up to `jobs` threads
/// when the oracle is concurrent-safe; the result does not depend on jobs.
LValue compute_l_value(const PredictionOracle& oracle, const ImageTensor& x, const DetectorConfig& cfg,
                       const RngStream& stream, std::size_t jobs = 1);

struct Threshold {
  double tau = 0.0;
  /// 1-based order statistic that became tau.
  std::size_t rank = 0;
  /// n * frr < 1: tau collapsed to the maximum.
  bool degenerate = false;
};

/// tau = the ceil((1 - frr) * n)-th smallest value (1-based). Inputs are
/// flagged when L > tau, so at most frr * n calibration values exceed it.
Threshold threshold_for_frr(std::vector<double> l_values, double frr_target);

struct CalibrationRecord {
  static constexpr const char* kVersion = "tdk-calibration-1";

  std::string version = kVersion;
  DetectorConfig detector;
  double frr_target = 0.01;
  double tau = 0.0;
  std::vector<double> l_values;
  std::string oracle_fingerprint;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  bool operator==(const CalibrationRecord&) const = default;

  RngStream root_stream() const { return RngStream(seed, stream_id); }
  nlohmann::json to_json() const;
  static CalibrationRecord from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static CalibrationRecord load(const std::filesystem::path& path);
};

struct RunOptions {
  /// Upper bound on concurrent oracle calls; serial-only oracles always get 1.
  std::size_t jobs = 1;
  /// Receives non-fatal warnings. Defaults to stderr.
  std::function<void(const std::string&)> warn;
};

/// Effective worker count for an oracle.
std::size_t effective_jobs(const PredictionOracle& oracle, std::size_t requested);

/// Offline preparation: example i is scored with substream(seed, i).
CalibrationRecord calibrate(const PredictionOracle& oracle, const LabeledDataset& benign, const DetectorConfig& cfg,
                            double frr_target, const RngStream& seed, const RunOptions& options = {});

/// Same L-values as calibrate() would compute, without thresholding.
std::vector<double> score_inputs(const PredictionOracle& oracle, const std::vector<ImageTensor>& inputs,
                                 const DetectorConfig& cfg, const RngStream& seed, const RunOptions& options = {});

/// Copy of the record with tau recomputed for another FRR from the cached L-values.
CalibrationRecord rethreshold(const CalibrationRecord& record, double frr_target);

}  // namespace tdk
