#include "tdk/detect.hpp"

namespace tdk {

void check_fingerprint(const PredictionOracle& oracle, const CalibrationRecord& record) {
  const std::string actual = oracle_fingerprint(oracle);
  if (actual != record.oracle_fingerprint) {
    throw FingerprintMismatch("calibration record was made for oracle " + record.oracle_fingerprint +
                              " but this oracle is " + actual + "; recalibrate or pass --force");
  }
}

Verdict detect(const PredictionOracle& oracle, const CalibrationRecord& record, const ImageTensor& x,
               const RngStream& seed, const DetectOptions& options) {
  if (!options.force) check_fingerprint(oracle, record);
  const LValue lv = compute_l_value(oracle, x, record.detector, seed, options.jobs);

  Verdict v;
  v.l_value = lv.l;
  v.sigma = lv.sigma;
  v.profile = lv.profile;
  v.p1_interval = clopper_pearson(lv.profile.counts.at(lv.profile.top.index), lv.profile.m, 0.95);
  v.decision = lv.l > record.tau ? Decision::Trojan : Decision::Benign;
  if (v.decision == Decision::Benign) v.predicted_label = predict_label(oracle, x);
  return v;
}

nlohmann::json verdict_to_json(const Verdict& v, const nlohmann::json& input_id) {
  return {{"input", input_id},
          {"decision", v.decision == Decision::Trojan ? "trojan" : "benign"},
          {"L", v.l_value},
          {"sigma", v.sigma},
          {"p1", v.profile.p1},
          {"p2", v.profile.p2},
          {"label", v.predicted_label ? nlohmann::json(v.predicted_label->index) : nlohmann::json(nullptr)},
          {"p1_ci", {v.p1_interval.low, v.p1_interval.high}}};
}

}  // namespace tdk
