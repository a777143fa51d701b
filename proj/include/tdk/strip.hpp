#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdk/calibrate.hpp"
#include "tdk/oracle.hpp"

namespace tdk {

/// How an input is superimposed on a holdout image before classification.
enum class Superimpose { Add, Average };

/// Shannon entropy in bits, 0 log 0 = 0.
double entropy_bits(const std::vector<double>& probs);

/// Pixel-wise superimposition, clamped to [0, 1].
ImageTensor superimpose(const ImageTensor& x, const ImageTensor& background, Superimpose mode);

/// Mean prediction entropy of x superimposed on each holdout image.
double strip_score(const PredictionOracle& oracle, const ImageTensor& x, const std::vector<ImageTensor>& holdout,
                   Superimpose mode = Superimpose::Add);

/// Baseline detector state. Low entropy is suspicious: an input is flagged
/// when its score falls strictly below entropy_threshold.
struct StripRecord {
  static constexpr const char* kVersion = "tdk-strip-1";

  std::vector<std::size_t> holdout_indices;  // into the calibration dataset
  std::vector<ImageTensor> holdout;
  Superimpose mode = Superimpose::Add;
  double frr_target = 0.01;
  double entropy_threshold = 0.0;
  std::vector<double> entropies;
  std::string oracle_fingerprint;

  bool operator==(const StripRecord&) const = default;

  nlohmann::json to_json() const;
  /// Holdout images are restored from `source` by index.
  static StripRecord from_json(const nlohmann::json& j, const LabeledDataset& source);
  void save(const std::filesystem::path& path) const;
  static StripRecord load(const std::filesystem::path& path, const LabeledDataset& source);
};

struct StripVerdict {
  bool trojan = false;
  double entropy = 0.0;
};

/// ceil(frr * n)-th smallest calibration entropy (1-based, at least the first).
double strip_threshold(std::vector<double> entropies, double frr_target);

/// Splits `benign` into a uniformly drawn holdout of holdout_size images and
/// the calibration remainder, scores the remainder, and sets the threshold.
StripRecord strip_calibrate(const PredictionOracle& oracle, const LabeledDataset& benign, std::size_t holdout_size,
                            double frr_target, const RngStream& seed, Superimpose mode = Superimpose::Add,
                            const RunOptions& options = {});

std::vector<double> strip_scores(const PredictionOracle& oracle, const std::vector<ImageTensor>& inputs,
                                 const StripRecord& record, const RunOptions& options = {});

StripVerdict strip_detect(const PredictionOracle& oracle, const StripRecord& record, const ImageTensor& x);

}  // namespace tdk
