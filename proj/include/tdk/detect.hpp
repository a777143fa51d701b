#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "tdk/calibrate.hpp"

namespace tdk {

class FingerprintMismatch : public Error {
 public:
  using Error::Error;
};

enum class Decision { Benign, Trojan };

struct Verdict {
  Decision decision = Decision::Benign;
  double l_value = 0.0;
  double sigma = 0.0;
  PredictionProfile profile;
  /// Unperturbed prediction; present only for benign decisions.
  std::optional<ClassLabel> predicted_label;
  /// 95% Clopper-Pearson interval on p1, diagnostic only.
  BinomialInterval p1_interval;
};

struct DetectOptions {
  std::size_t jobs = 1;
  /// Skip the oracle fingerprint check.
  bool force = false;
};

/// Throws FingerprintMismatch unless the record was calibrated against this oracle.
void check_fingerprint(const PredictionOracle& oracle, const CalibrationRecord& record);

/// Flags x as Trojan iff its confidence bound exceeds record.tau.
Verdict detect(const PredictionOracle& oracle, const CalibrationRecord& record, const ImageTensor& x,
               const RngStream& seed, const DetectOptions& options = {});

/// One JSON line: {"input", "decision", "L", "sigma", "p1", "p2", "label", "p1_ci"}.
nlohmann::json verdict_to_json(const Verdict& v, const nlohmann::json& input_id);

}  // namespace tdk
