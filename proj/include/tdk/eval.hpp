#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdk/calibrate.hpp"
#include "tdk/strip.hpp"

namespace tdk {

/// Raw tallies behind every rate in a report.
struct EvalCounts {
  std::size_t benign_total = 0;
  std::size_t benign_flagged = 0;    // benign inputs the detector rejected
  std::size_t benign_correct = 0;    // undefended argmax == ground truth
  std::size_t trojan_total = 0;
  std::size_t trojan_passed = 0;     // Trojan inputs the detector accepted
  std::size_t trojan_to_target = 0;  // undefended argmax == target

  bool operator==(const EvalCounts&) const = default;
};

struct EvalReport {
  std::string dataset = "synthetic";
  std::string trigger;
  std::string detector = "bound";
  std::uint64_t seed = 0;
  double frr_target = 0.0;
  EvalCounts counts;
  double acc = 0.0;
  double attack_acc = 0.0;
  double far = 0.0;
  double frr_empirical = 0.0;
  std::vector<std::pair<double, double>> per_frr_far;

  bool operator==(const EvalReport&) const = default;

  /// Recomputes every rate from the integer tallies.
  void update_rates();
  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// Detector statistics and undefended predictions for both test sets,
/// computed once so thresholds can vary without re-querying the oracle.
struct ScoredTestSets {
  std::vector<double> benign_scores;
  std::vector<double> trojan_scores;
  std::size_t benign_correct = 0;
  std::size_t trojan_to_target = 0;
};

/// Benign item i is scored with substream(substream(seed, "benign-test"), i);
/// Trojan items likewise under "trojan-test".
ScoredTestSets score_test_sets(const PredictionOracle& oracle, const DetectorConfig& cfg,
                               const LabeledDataset& benign_test, const LabeledDataset& trojan_test,
                               const RngStream& seed, const RunOptions& options = {});

ScoredTestSets strip_score_test_sets(const PredictionOracle& oracle, const StripRecord& record,
                                     const LabeledDataset& benign_test, const LabeledDataset& trojan_test,
                                     const RunOptions& options = {});

/// FAR = Trojan inputs with L <= tau; FRR = benign inputs with L > tau.
EvalReport summarize_bound(const ScoredTestSets& scores, double tau, double frr_target);
/// FAR = Trojan inputs with entropy >= threshold; FRR = benign inputs below it.
EvalReport summarize_strip(const ScoredTestSets& scores, double threshold, double frr_target);

EvalReport evaluate(const PredictionOracle& oracle, const CalibrationRecord& record, const LabeledDataset& benign_test,
                    const LabeledDataset& trojan_test, const RngStream& seed, const RunOptions& options = {},
                    bool force = false);

EvalReport evaluate_strip(const PredictionOracle& oracle, const StripRecord& record, const LabeledDataset& benign_test,
                          const LabeledDataset& trojan_test, const RunOptions& options = {});

struct SweepRow {
  double frr_target = 0.0;
  double tau = 0.0;
  double far_bound = 0.0;
  double frr_bound = 0.0;
  double strip_threshold = 0.0;
  double far_strip = 0.0;
  double frr_strip = 0.0;

  bool operator==(const SweepRow&) const = default;
};

/// Rethresholds both detectors at each FRR from cached calibration statistics
/// and test scores. frr_list must be ascending in (0, 1). Throws Error if the
/// bound-detector FAR ever increases with FRR.
std::vector<SweepRow> sweep_frr(const CalibrationRecord& record, const StripRecord& strip,
                                const ScoredTestSets& bound_scores, const ScoredTestSets& strip_scores,
                                const std::vector<double>& frr_list);

/// CSV header: dataset,trigger,detector,frr_target,frr_empirical,far,acc,attack_acc,seed
std::string reports_to_csv(const std::vector<EvalReport>& reports);
std::string sweep_to_csv(const std::vector<SweepRow>& rows);
/// Line chart of FAR against FRR for both detectors.
std::string sweep_to_svg(const std::vector<SweepRow>& rows);

}  // namespace tdk
