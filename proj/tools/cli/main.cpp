// tdk: Trojan input detection from the command line.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 runtime failure,
// 3 a single input given to `detect` was flagged as Trojan.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "artifacts.hpp"
#include "oracle_select.hpp"
#include "tdk/attack.hpp"
#include "tdk/calibrate.hpp"
#include "tdk/dataset_io.hpp"
#include "tdk/detect.hpp"
#include "tdk/eval.hpp"
#include "tdk/mlp.hpp"
#include "tdk/strip.hpp"
#include "tdk/synthetic.hpp"
#include "trigger_select.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tdk::cli {
namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitTrojan = 3;

/// Configuration problem detected before any work starts.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Global {
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
};

void log(const std::string& msg) { std::cerr << "tdk: " << msg << "\n"; }

RunOptions run_options(std::size_t jobs) { return RunOptions{jobs, [](const std::string& w) { log("warning: " + w); }}; }

LabeledDataset load_data(const std::string& path, RunDirectory* run = nullptr) {
  if (path.empty()) throw UsageError("missing dataset path");
  if (run) run->add_input(path);
  return read_dataset(path);
}

/// Command line plus every option value in force for the subcommand that ran.
json config_json(const CLI::App& app, const Global& g, const std::vector<std::string>& argv) {
  std::string resolved = "jobs=" + std::to_string(g.jobs) + "\n";
  for (const auto* sub : app.get_subcommands()) resolved += sub->config_to_str(true, false);
  return json{{"argv", argv}, {"seed", std::to_string(g.seed)}, {"resolved", resolved}};
}

std::vector<double> parse_list(const std::string& text, const std::string& field) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(field + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw UsageError(field + ": empty list");
  return out;
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataOptions {
  std::string out;
  std::size_t train = 500, calib = 500, test = 200;
  std::uint32_t classes = 10;
  std::string format = "tdk";
};

void gen_data(const CLI::App& app, const Global& g, const GenDataOptions& o, const std::vector<std::string>& argv) {
  SyntheticConfig sc;
  sc.classes = o.classes;
  RunDirectory run(o.out, "gen-data");
  const RngStream root(g.seed);
  const std::string ext = o.format == "png" ? ".csv" : ".tdk";
  for (const auto& [name, count] : {std::pair{"train", o.train}, {"calib", o.calib}, {"test", o.test}}) {
    const auto data = generate_synthetic(count, substream(root, name), sc);
    if (o.format == "png") {
      fs::create_directory(run.claim(name));
      write_manifest(run.claim(std::string(name) + "/" + name + ext), data);
    } else {
      write_tensor_file(run.claim(std::string(name) + ext), data);
    }
  }
  run.finish(config_json(app, g, argv));
  log("wrote synthetic train/calib/test sets to " + o.out);
}

// ---- train ------------------------------------------------------------------

struct TrainOptions {
  std::string data, out;
  bool poison = false;
  std::string trigger = "white-patch";
  std::uint32_t target = 0;
  double rho = 0.1;
  MlpHyper hyper;
};

void train(const CLI::App& app, const Global& g, TrainOptions o, const std::vector<std::string>& argv) {
  if (!(o.rho > 0.0 && o.rho <= 1.0)) throw UsageError("train.rho: must be in (0, 1]");
  if (o.hyper.hidden == 0) throw UsageError("train.hidden: must be >= 1");
  if (o.hyper.batch == 0) throw UsageError("train.batch: must be >= 1");
  if (!(o.hyper.lr > 0.0)) throw UsageError("train.lr: must be > 0");
  RunDirectory run(o.out, "train");
  auto data = load_data(o.data, &run);
  if (o.target >= data.class_count()) throw UsageError("train.target: must be < class count");
  const RngStream root(g.seed);
  o.hyper.seed = g.seed;
  if (o.poison) {
    const TriggerSpec t = resolve_trigger(o.trigger, data.shape());
    data = poison_dataset(data, PoisonConfig{t, ClassLabel{o.target}, o.rho}, substream(root, "poison"));
    save_trigger(run.claim("trigger.json"), t);
  }
  const auto result = train_mlp(data, o.hyper);
  result.model.save(run.claim("model.json"));
  run.finish(config_json(app, g, argv));
  log("trained on " + std::to_string(data.size()) + " examples; final loss " +
      std::to_string(result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back()) +
      "; training accuracy " + std::to_string(accuracy(result.model, data)));
}

// ---- calibrate --------------------------------------------------------------

struct CalibrateOptions {
  OracleOptions oracle;
  std::string data, out;
  std::size_t n = 0;
  double frr = 0.01;
  std::size_t m = 100;
  double alpha = 10.0, beta = 0.05;
  std::string distribution = "gaussian";
  std::optional<double> sigma;
  double scale = 0.25, top_k = 0.1, sigma_min = 0.05, sigma_max = 1.0;
  std::vector<std::size_t> channels;
  bool full_image = false;
  std::size_t min_side = 2;

  DetectorConfig detector() const {
    DetectorConfig cfg;
    cfg.m = m;
    cfg.bound = {alpha, beta};
    cfg.noise.distribution = distribution == "laplacian" ? NoiseDistribution::Laplacian : NoiseDistribution::Gaussian;
    cfg.noise.fixed_sigma = sigma;
    cfg.noise.dynamic = {scale, top_k, sigma_min, sigma_max};
    if (!channels.empty()) cfg.noise.channel_mask = channels;
    cfg.noise.random_patch = !full_image;
    cfg.noise.min_side = min_side;
    return cfg;
  }
};

void validate_detector(const DetectorConfig& cfg, double frr) {
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (!(frr > 0.0 && frr < 1.0)) throw UsageError("frr: must be in (0, 1)");
}

void calibrate_cmd(const CLI::App& app, const Global& g, const CalibrateOptions& o,
                   const std::vector<std::string>& argv) {
  const DetectorConfig cfg = o.detector();
  validate_detector(cfg, o.frr);
  try {
    o.oracle.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  RunDirectory run(o.out, "calibrate");
  auto data = load_data(o.data, &run);
  if (o.n > 0) {
    if (o.n > data.size()) throw UsageError("calibrate.n: exceeds the dataset size");
    data = data.slice(0, o.n);
  }
  const auto oracle = o.oracle.make(data.shape());
  if (oracle->input_shape() != data.shape()) {
    throw ShapeMismatch("oracle expects " + oracle->input_shape().to_string() + ", data is " + data.shape().to_string());
  }
  const auto record =
      calibrate(*oracle, data, cfg, o.frr, RngStream(g.seed), run_options(o.oracle.jobs(g.jobs)));
  record.save(run.claim("calibration.json"));
  run.finish(config_json(app, g, argv));
  std::cout << json{{"tau", record.tau}, {"n", record.l_values.size()}, {"frr_target", record.frr_target}}.dump()
            << "\n";
}

// ---- detect -----------------------------------------------------------------

struct DetectCmdOptions {
  OracleOptions oracle;
  std::string calibration;
  std::vector<std::string> inputs;
  std::string out;
  bool force = false;
};

int detect_cmd(const CLI::App& app, const Global& g, const DetectCmdOptions& o, const std::vector<std::string>& argv) {
  try {
    o.oracle.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  std::optional<RunDirectory> run;
  if (!o.out.empty()) run.emplace(o.out, "detect");
  if (run) run->add_input(o.calibration);
  const auto record = CalibrationRecord::load(o.calibration);

  // Inputs: dataset files contribute every item, keyed by a running index;
  // single images are keyed by their path.
  struct Input {
    json id;
    ImageTensor image;
  };
  std::vector<Input> inputs;
  std::optional<Shape> shape;
  std::vector<std::string> raw_paths;
  for (const auto& p : o.inputs) {
    if (run) run->add_input(p);
    const fs::path path(p);
    std::string ext = path.extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".raw") {
      raw_paths.push_back(p);
      inputs.push_back({p, ImageTensor{}});
      continue;
    }
    if (ext == ".png") {
      inputs.push_back({p, read_png(path)});
    } else {
      const auto data = read_dataset(path);
      for (const auto& item : data.items()) inputs.push_back({json(inputs.size()), item.image});
    }
    if (!shape) shape = inputs.back().image.shape();
  }
  if (inputs.empty()) throw UsageError("detect.input: no inputs");
  if (!shape && o.oracle.oracle == "builtin") shape = MlpModel::load(o.oracle.model).input_shape();
  if (!shape) throw UsageError("detect.input: raw images need a PNG or dataset input, or a model, to fix the shape");
  const auto oracle = o.oracle.make(*shape);
  for (auto& in : inputs) {
    if (in.image.pixels().empty()) in.image = read_raw_u8(in.id.get<std::string>(), oracle->input_shape());
  }

  std::optional<std::ofstream> verdicts;
  if (run) verdicts.emplace(run->claim("verdicts.jsonl"));
  const RngStream session(g.seed);
  const DetectOptions dopt{o.oracle.jobs(g.jobs), o.force};
  std::size_t trojans = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Verdict v = detect(*oracle, record, inputs[i].image, substream(session, i), dopt);
    const std::string line = verdict_to_json(v, inputs[i].id).dump();
    std::cout << line << "\n";
    if (verdicts) *verdicts << line << "\n";
    if (v.decision == Decision::Trojan) ++trojans;
  }
  std::cout.flush();
  if (verdicts) {
    verdicts->close();
    run->finish(config_json(app, g, argv));
  }
  return inputs.size() == 1 && trojans == 1 ? kExitTrojan : 0;
}

// ---- evaluate / strip-evaluate / sweep --------------------------------------

struct EvalOptions {
  OracleOptions oracle;
  std::string calibration, strip, calib_data, test, out;
  std::string dataset_name = "synthetic";
  std::string frr_list = "0.0025,0.005,0.0075,0.01";
  bool force = false;
};

struct TestSets {
  LabeledDataset benign;
  LabeledDataset trojan;
  std::string trigger_name;
};

TestSets load_test_sets(const EvalOptions& o, RunDirectory& run) {
  if (o.oracle.trigger.empty()) throw UsageError("trigger: --trigger is required to build the Trojan test set");
  auto benign = load_data(o.test, &run);
  if (o.oracle.target >= benign.class_count()) throw UsageError("target: must be < class count");
  if (fs::exists(o.oracle.trigger)) run.add_input(o.oracle.trigger);
  const TriggerSpec t = resolve_trigger(o.oracle.trigger, benign.shape());
  auto trojan = make_trojan_testset(benign, t, ClassLabel{o.oracle.target});
  return {std::move(benign), std::move(trojan), t.name};
}

void validate_oracle(const OracleOptions& o) {
  try {
    o.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

void write_report(RunDirectory& run, const EvalReport& report) {
  {
    std::ofstream out(run.claim("report.json"));
    out << report.to_json().dump(2) << "\n";
  }
  {
    std::ofstream out(run.claim("report.csv"));
    out << reports_to_csv({report});
  }
  std::cout << json{{"far", report.far},
                    {"frr", report.frr_empirical},
                    {"acc", report.acc},
                    {"attack_acc", report.attack_acc}}
                   .dump()
            << "\n";
}

void evaluate_cmd(const CLI::App& app, const Global& g, const EvalOptions& o, const std::vector<std::string>& argv) {
  validate_oracle(o.oracle);
  RunDirectory run(o.out, "evaluate");
  run.add_input(o.calibration);
  const auto record = CalibrationRecord::load(o.calibration);
  const auto sets = load_test_sets(o, run);
  const auto oracle = o.oracle.make(sets.benign.shape());
  EvalReport report = evaluate(*oracle, record, sets.benign, sets.trojan, substream(RngStream(g.seed), "evaluate"),
                               run_options(o.oracle.jobs(g.jobs)), o.force);
  report.dataset = o.dataset_name;
  report.trigger = sets.trigger_name;
  report.seed = g.seed;
  write_report(run, report);
  run.finish(config_json(app, g, argv));
}

struct StripCalibrateOptions {
  OracleOptions oracle;
  std::string data, out;
  std::size_t holdout = 10;
  double frr = 0.01;
  std::string mode = "add";
};

void strip_calibrate_cmd(const CLI::App& app, const Global& g, const StripCalibrateOptions& o,
                         const std::vector<std::string>& argv) {
  validate_oracle(o.oracle);
  if (!(o.frr > 0.0 && o.frr < 1.0)) throw UsageError("strip.frr: must be in (0, 1)");
  if (o.holdout == 0) throw UsageError("strip.holdout: must be >= 1");
  RunDirectory run(o.out, "strip-calibrate");
  const auto data = load_data(o.data, &run);
  if (o.holdout >= data.size()) throw UsageError("strip.holdout: must be smaller than the dataset");
  const auto oracle = o.oracle.make(data.shape());
  const auto record =
      strip_calibrate(*oracle, data, o.holdout, o.frr, substream(RngStream(g.seed), "strip"),
                      o.mode == "average" ? Superimpose::Average : Superimpose::Add, run_options(o.oracle.jobs(g.jobs)));
  record.save(run.claim("strip.json"));
  run.finish(config_json(app, g, argv));
  std::cout << json{{"entropy_threshold", record.entropy_threshold}, {"n", record.entropies.size()}}.dump() << "\n";
}

void strip_evaluate_cmd(const CLI::App& app, const Global& g, const EvalOptions& o,
                        const std::vector<std::string>& argv) {
  validate_oracle(o.oracle);
  RunDirectory run(o.out, "strip-evaluate");
  const auto source = load_data(o.calib_data, &run);
  run.add_input(o.strip);
  const auto record = StripRecord::load(o.strip, source);
  const auto sets = load_test_sets(o, run);
  const auto oracle = o.oracle.make(sets.benign.shape());
  if (!o.force && record.oracle_fingerprint != oracle_fingerprint(*oracle)) {
    throw FingerprintMismatch("STRIP record was calibrated against a different oracle (use --force to override)");
  }
  EvalReport report = evaluate_strip(*oracle, record, sets.benign, sets.trojan, run_options(o.oracle.jobs(g.jobs)));
  report.dataset = o.dataset_name;
  report.trigger = sets.trigger_name;
  report.seed = g.seed;
  write_report(run, report);
  run.finish(config_json(app, g, argv));
}

void sweep_cmd(const CLI::App& app, const Global& g, const EvalOptions& o, const std::vector<std::string>& argv) {
  validate_oracle(o.oracle);
  const auto frrs = parse_list(o.frr_list, "sweep.frr_list");
  RunDirectory run(o.out, "sweep");
  run.add_input(o.calibration);
  const auto record = CalibrationRecord::load(o.calibration);
  const auto source = load_data(o.calib_data, &run);
  run.add_input(o.strip);
  const auto strip = StripRecord::load(o.strip, source);
  const auto sets = load_test_sets(o, run);
  const auto oracle = o.oracle.make(sets.benign.shape());
  if (!o.force) check_fingerprint(*oracle, record);
  const auto options = run_options(o.oracle.jobs(g.jobs));
  const auto bound_scores = score_test_sets(*oracle, record.detector, sets.benign, sets.trojan,
                                            substream(RngStream(g.seed), "evaluate"), options);
  const auto strip_scores = strip_score_test_sets(*oracle, strip, sets.benign, sets.trojan, options);
  std::vector<SweepRow> rows;
  try {
    rows = sweep_frr(record, strip, bound_scores, strip_scores, frrs);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  {
    std::ofstream out(run.claim("sweep.csv"));
    out << sweep_to_csv(rows);
  }
  {
    std::ofstream out(run.claim("sweep.svg"));
    out << sweep_to_svg(rows);
  }
  run.finish(config_json(app, g, argv));
  std::cout << sweep_to_csv(rows);
}

void add_eval_options(CLI::App* sub, EvalOptions& o) {
  o.oracle.add_to(sub);
  sub->add_option("--test", o.test, "Benign test dataset")->required();
  sub->add_option("--out", o.out, "Output directory")->required();
  sub->add_option("--dataset-name", o.dataset_name, "Dataset column in reports")->capture_default_str();
  sub->add_flag("--force", o.force, "Skip the oracle fingerprint check");
}

int run(int argc, char** argv) {
  CLI::App app{"Trojan input detection by perturbation and a prediction-confidence bound"};
  app.set_config("--config", "", "TOML/INI file; one key per option, [subcommand] sections");
  app.require_subcommand(1);
  Global g;
  app.add_option("--seed", g.seed, "Root seed for every random choice")->envname("TDK_SEED")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Concurrent oracle calls (0: hardware threads in-process, 1 for exec:)")
      ->capture_default_str();

  GenDataOptions gd;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic train/calib/test sets");
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--train", gd.train)->capture_default_str();
  gen->add_option("--calib", gd.calib)->capture_default_str();
  gen->add_option("--test", gd.test)->capture_default_str();
  gen->add_option("--classes", gd.classes)->check(CLI::Range(2, 10))->capture_default_str();
  gen->add_option("--format", gd.format, "tdk (tensor file) or png (PNG files + CSV manifest)")
      ->check(CLI::IsMember({"tdk", "png"}))
      ->capture_default_str();

  TrainOptions tr;
  auto* trn = app.add_subcommand("train", "Train the MLP classifier, optionally on poisoned data");
  trn->add_option("--data", tr.data, "Training dataset")->required();
  trn->add_option("--out", tr.out, "Output directory")->required();
  trn->add_flag("--poison", tr.poison, "Poison the training set with the trigger");
  trn->add_option("--trigger", tr.trigger, "Trigger JSON file, or white-patch / blue-star")->capture_default_str();
  trn->add_option("--target", tr.target)->capture_default_str();
  trn->add_option("--rho", tr.rho, "Poisoned copies as a fraction of the training set")->capture_default_str();
  trn->add_option("--epochs", tr.hyper.epochs)->capture_default_str();
  trn->add_option("--lr", tr.hyper.lr)->capture_default_str();
  trn->add_option("--momentum", tr.hyper.momentum)->capture_default_str();
  trn->add_option("--batch", tr.hyper.batch)->capture_default_str();
  trn->add_option("--hidden", tr.hyper.hidden)->capture_default_str();

  CalibrateOptions cal;
  auto* calc = app.add_subcommand("calibrate", "Compute benign L-values and the detection threshold");
  cal.oracle.add_to(calc);
  calc->add_option("--data", cal.data, "Benign calibration dataset")->required();
  calc->add_option("--out", cal.out, "Output directory")->required();
  calc->add_option("-n,--n", cal.n, "Use the first n examples (0: all)")->capture_default_str();
  calc->add_option("--frr", cal.frr, "Target false rejection rate")->capture_default_str();
  calc->add_option("-m,--m", cal.m, "Perturbed copies per input")->capture_default_str();
  calc->add_option("--alpha", cal.alpha)->capture_default_str();
  calc->add_option("--beta", cal.beta)->capture_default_str();
  calc->add_option("--distribution", cal.distribution)
      ->check(CLI::IsMember({"gaussian", "laplacian"}))
      ->capture_default_str();
  calc->add_option("--sigma", cal.sigma, "Fixed noise standard deviation (default: dynamic)");
  calc->add_option("--scale", cal.scale, "Dynamic sigma scale S")->capture_default_str();
  calc->add_option("--top-k", cal.top_k, "Fraction of brightest pixels averaged for dynamic sigma")
      ->capture_default_str();
  calc->add_option("--sigma-min", cal.sigma_min)->capture_default_str();
  calc->add_option("--sigma-max", cal.sigma_max)->capture_default_str();
  calc->add_option("--channels", cal.channels, "Noised channels (default: blue, or 0 for grayscale)");
  calc->add_flag("--full-image", cal.full_image, "Noise the whole image instead of a random patch");
  calc->add_option("--min-side", cal.min_side)->capture_default_str();

  DetectCmdOptions det;
  auto* detc = app.add_subcommand("detect", "Classify inputs as benign or Trojan (JSON lines on stdout)");
  det.oracle.add_to(detc);
  detc->add_option("--calibration", det.calibration, "Calibration record")->required();
  detc->add_option("--input", det.inputs, "Image (.png, .raw) or dataset (.tdk, .csv); repeatable")->required();
  detc->add_option("--out", det.out, "Also write verdicts and a manifest here");
  detc->add_flag("--force", det.force, "Skip the oracle fingerprint check");

  EvalOptions ev;
  auto* evc = app.add_subcommand("evaluate", "FAR, FRR, Acc and Attack-Acc of the detector");
  add_eval_options(evc, ev);
  evc->add_option("--calibration", ev.calibration, "Calibration record")->required();

  EvalOptions sw;
  auto* swc = app.add_subcommand("sweep", "FAR of both detectors across FRR targets");
  add_eval_options(swc, sw);
  swc->add_option("--calibration", sw.calibration, "Calibration record")->required();
  swc->add_option("--strip", sw.strip, "STRIP record")->required();
  swc->add_option("--calib-data", sw.calib_data, "Dataset the STRIP record was calibrated on")->required();
  swc->add_option("--frr-list", sw.frr_list, "Ascending comma-separated FRR targets")->capture_default_str();

  StripCalibrateOptions sc;
  auto* scc = app.add_subcommand("strip-calibrate", "Calibrate the STRIP entropy baseline");
  sc.oracle.add_to(scc);
  scc->add_option("--data", sc.data, "Benign calibration dataset")->required();
  scc->add_option("--out", sc.out, "Output directory")->required();
  scc->add_option("--holdout", sc.holdout, "Superimposition images drawn from the data")->capture_default_str();
  scc->add_option("--frr", sc.frr)->capture_default_str();
  scc->add_option("--mode", sc.mode)->check(CLI::IsMember({"add", "average"}))->capture_default_str();

  EvalOptions se;
  auto* sec = app.add_subcommand("strip-evaluate", "FAR, FRR, Acc and Attack-Acc of the STRIP baseline");
  add_eval_options(sec, se);
  sec->add_option("--strip", se.strip, "STRIP record")->required();
  sec->add_option("--calib-data", se.calib_data, "Dataset the STRIP record was calibrated on")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }
  const std::vector<std::string> args(argv + 1, argv + argc);

  try {
    if (*gen) gen_data(app, g, gd, args);
    if (*trn) train(app, g, tr, args);
    if (*calc) calibrate_cmd(app, g, cal, args);
    if (*detc) return detect_cmd(app, g, det, args);
    if (*evc) evaluate_cmd(app, g, ev, args);
    if (*swc) sweep_cmd(app, g, sw, args);
    if (*scc) strip_calibrate_cmd(app, g, sc, args);
    if (*sec) strip_evaluate_cmd(app, g, se, args);
  } catch (const UsageError& e) {
    log("error: " + std::string(e.what()));
    return kExitUsage;
  } catch (const std::exception& e) {
    log("error: " + std::string(e.what()));
    return kExitRuntime;
  }
  return 0;
}

}  // namespace
}  // namespace tdk::cli

int main(int argc, char** argv) { return tdk::cli::run(argc, argv); }
