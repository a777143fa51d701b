#include "tdk/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "tdk/detect.hpp"
#include "tdk/parallel.hpp"

namespace tdk {
using nlohmann::json;

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::size_t count_hits(const PredictionOracle& oracle, const LabeledDataset& data, const RunOptions& options) {
  std::vector<char> hit(data.size(), 0);
  parallel_for(data.size(), effective_jobs(oracle, options.jobs),
               [&](std::size_t i) { hit[i] = predict_label(oracle, data[i].image) == data[i].label; });
  return static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
}

void require_nonempty(const LabeledDataset& benign_test, const LabeledDataset& trojan_test) {
  if (benign_test.empty()) throw InvalidArgument("evaluate: benign test set is empty");
  if (trojan_test.empty()) throw InvalidArgument("evaluate: Trojan test set is empty");
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void EvalReport::update_rates() {
  acc = ratio(counts.benign_correct, counts.benign_total);
  attack_acc = ratio(counts.trojan_to_target, counts.trojan_total);
  far = ratio(counts.trojan_passed, counts.trojan_total);
  frr_empirical = ratio(counts.benign_flagged, counts.benign_total);
}

json EvalReport::to_json() const {
  json sweep = json::array();
  for (const auto& [frr, f] : per_frr_far) sweep.push_back({{"frr", frr}, {"far", f}});
  return json{{"dataset", dataset},
              {"trigger", trigger},
              {"detector", detector},
              {"seed", std::to_string(seed)},
              {"frr_target", frr_target},
              {"frr_empirical", frr_empirical},
              {"far", far},
              {"acc", acc},
              {"attack_acc", attack_acc},
              {"per_frr_far", sweep},
              {"counts",
               {{"benign_total", counts.benign_total},
                {"benign_flagged", counts.benign_flagged},
                {"benign_correct", counts.benign_correct},
                {"trojan_total", counts.trojan_total},
                {"trojan_passed", counts.trojan_passed},
                {"trojan_to_target", counts.trojan_to_target}}}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  try {
    r.dataset = j.at("dataset").get<std::string>();
    r.trigger = j.at("trigger").get<std::string>();
    r.detector = j.at("detector").get<std::string>();
    r.seed = std::stoull(j.at("seed").get<std::string>());
    r.frr_target = j.at("frr_target").get<double>();
    const json& c = j.at("counts");
    r.counts = {c.at("benign_total").get<std::size_t>(),  c.at("benign_flagged").get<std::size_t>(),
                c.at("benign_correct").get<std::size_t>(), c.at("trojan_total").get<std::size_t>(),
                c.at("trojan_passed").get<std::size_t>(),  c.at("trojan_to_target").get<std::size_t>()};
    for (const auto& row : j.at("per_frr_far")) r.per_frr_far.emplace_back(row.at("frr"), row.at("far"));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("report: ") + e.what());
  } catch (const std::logic_error& e) {
    throw InvalidArgument(std::string("report.seed: ") + e.what());
  }
  r.update_rates();
  return r;
}

ScoredTestSets score_test_sets(const PredictionOracle& oracle, const DetectorConfig& cfg,
                               const LabeledDataset& benign_test, const LabeledDataset& trojan_test,
                               const RngStream& seed, const RunOptions& options) {
  require_nonempty(benign_test, trojan_test);
  ScoredTestSets s;
  s.benign_scores = score_inputs(oracle, benign_test.images(), cfg, substream(seed, "benign-test"), options);
  s.trojan_scores = score_inputs(oracle, trojan_test.images(), cfg, substream(seed, "trojan-test"), options);
  s.benign_correct = count_hits(oracle, benign_test, options);
  s.trojan_to_target = count_hits(oracle, trojan_test, options);
  return s;
}

ScoredTestSets strip_score_test_sets(const PredictionOracle& oracle, const StripRecord& record,
                                     const LabeledDataset& benign_test, const LabeledDataset& trojan_test,
                                     const RunOptions& options) {
  require_nonempty(benign_test, trojan_test);
  ScoredTestSets s;
  s.benign_scores = strip_scores(oracle, benign_test.images(), record, options);
  s.trojan_scores = strip_scores(oracle, trojan_test.images(), record, options);
  s.benign_correct = count_hits(oracle, benign_test, options);
  s.trojan_to_target = count_hits(oracle, trojan_test, options);
  return s;
}

EvalReport summarize_bound(const ScoredTestSets& scores, double tau, double frr_target) {
  EvalReport r;
  r.detector = "bound";
  r.frr_target = frr_target;
  r.counts.benign_total = scores.benign_scores.size();
  r.counts.trojan_total = scores.trojan_scores.size();
  r.counts.benign_correct = scores.benign_correct;
  r.counts.trojan_to_target = scores.trojan_to_target;
  for (double l : scores.benign_scores) r.counts.benign_flagged += l > tau ? 1 : 0;
  for (double l : scores.trojan_scores) r.counts.trojan_passed += l > tau ? 0 : 1;
  r.update_rates();
  return r;
}

EvalReport summarize_strip(const ScoredTestSets& scores, double threshold, double frr_target) {
  EvalReport r;
  r.detector = "strip";
  r.frr_target = frr_target;
  r.counts.benign_total = scores.benign_scores.size();
  r.counts.trojan_total = scores.trojan_scores.size();
  r.counts.benign_correct = scores.benign_correct;
  r.counts.trojan_to_target = scores.trojan_to_target;
  for (double e : scores.benign_scores) r.counts.benign_flagged += e < threshold ? 1 : 0;
  for (double e : scores.trojan_scores) r.counts.trojan_passed += e < threshold ? 0 : 1;
  r.update_rates();
  return r;
}

EvalReport evaluate(const PredictionOracle& oracle, const CalibrationRecord& record, const LabeledDataset& benign_test,
                    const LabeledDataset& trojan_test, const RngStream& seed, const RunOptions& options, bool force) {
  if (!force) check_fingerprint(oracle, record);
  const ScoredTestSets scores = score_test_sets(oracle, record.detector, benign_test, trojan_test, seed, options);
  EvalReport r = summarize_bound(scores, record.tau, record.frr_target);
  r.seed = seed.seed();
  return r;
}

EvalReport evaluate_strip(const PredictionOracle& oracle, const StripRecord& record, const LabeledDataset& benign_test,
                          const LabeledDataset& trojan_test, const RunOptions& options) {
  if (oracle_fingerprint(oracle) != record.oracle_fingerprint) {
    throw FingerprintMismatch("STRIP record was made for a different oracle");
  }
  const ScoredTestSets scores = strip_score_test_sets(oracle, record, benign_test, trojan_test, options);
  return summarize_strip(scores, record.entropy_threshold, record.frr_target);
}

std::vector<SweepRow> sweep_frr(const CalibrationRecord& record, const StripRecord& strip,
                                const ScoredTestSets& bound_scores, const ScoredTestSets& strip_scores,
                                const std::vector<double>& frr_list) {
  for (std::size_t i = 0; i < frr_list.size(); ++i) {
    if (!(frr_list[i] > 0.0 && frr_list[i] < 1.0)) throw InvalidArgument("sweep: every FRR must be in (0, 1)");
    if (i > 0 && !(frr_list[i] > frr_list[i - 1])) throw InvalidArgument("sweep: FRR list must be ascending");
  }
  std::vector<SweepRow> rows;
  for (double frr : frr_list) {
    SweepRow row;
    row.frr_target = frr;
    row.tau = threshold_for_frr(record.l_values, frr).tau;
    const EvalReport t = summarize_bound(bound_scores, row.tau, frr);
    row.far_bound = t.far;
    row.frr_bound = t.frr_empirical;
    row.strip_threshold = strip_threshold(strip.entropies, frr);
    const EvalReport s = summarize_strip(strip_scores, row.strip_threshold, frr);
    row.far_strip = s.far;
    row.frr_strip = s.frr_empirical;
    if (!rows.empty() && row.far_bound > rows.back().far_bound) {
      throw Error("sweep invariant violated: FAR increased from " + fmt(rows.back().far_bound) + " to " +
                  fmt(row.far_bound) + " at FRR " + fmt(frr));
    }
    rows.push_back(row);
  }
  return rows;
}

std::string reports_to_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "dataset,trigger,detector,frr_target,frr_empirical,far,acc,attack_acc,seed\n";
  for (const auto& r : reports) {
    out << r.dataset << ',' << r.trigger << ',' << r.detector << ',' << fmt(r.frr_target) << ','
        << fmt(r.frr_empirical) << ',' << fmt(r.far) << ',' << fmt(r.acc) << ',' << fmt(r.attack_acc) << ','
        << r.seed << '\n';
  }
  return out.str();
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "frr_target,tau,far_bound,frr_bound,strip_threshold,far_strip,frr_strip\n";
  for (const auto& r : rows) {
    out << fmt(r.frr_target) << ',' << fmt(r.tau) << ',' << fmt(r.far_bound) << ',' << fmt(r.frr_bound) << ','
        << fmt(r.strip_threshold) << ',' << fmt(r.far_strip) << ',' << fmt(r.frr_strip) << '\n';
  }
  return out.str();
}

std::string sweep_to_svg(const std::vector<SweepRow>& rows) {
  constexpr double kW = 480, kH = 320, kPad = 48;
  double max_frr = 0.0;
  for (const auto& r : rows) max_frr = std::max(max_frr, r.frr_target);
  if (max_frr <= 0.0) max_frr = 1.0;
  auto x = [&](double frr) { return kPad + frr / max_frr * (kW - 2 * kPad); };
  auto y = [&](double far) { return kH - kPad - far * (kH - 2 * kPad); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad << "\" y2=\"" << kH - kPad
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\"" << kH - kPad
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\" font-size=\"12\">FRR</text>\n"
      << "<text x=\"14\" y=\"" << kH / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << kH / 2
      << ")\" text-anchor=\"middle\">FAR</text>\n";
  for (const auto& r : rows) {
    out << "<text x=\"" << x(r.frr_target) << "\" y=\"" << kH - kPad + 14
        << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(r.frr_target * 100.0) << "%</text>\n";
  }
  auto series = [&](auto value, const char* color, const char* label, double legend_y) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : rows) out << x(r.frr_target) << ',' << y(value(r)) << ' ';
    out << "\"/>\n";
    for (const auto& r : rows) {
      out << "<circle cx=\"" << x(r.frr_target) << "\" cy=\"" << y(value(r)) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    out << "<text x=\"" << kW - kPad - 80 << "\" y=\"" << legend_y << "\" font-size=\"12\" fill=\"" << color << "\">"
        << label << "</text>\n";
  };
  series([](const SweepRow& r) { return r.far_bound; }, "#1f77b4", "confidence bound", kPad);
  series([](const SweepRow& r) { return r.far_strip; }, "#d62728", "STRIP", kPad + 16);
  out << "</svg>\n";
  return out.str();
}

}  // namespace tdk
