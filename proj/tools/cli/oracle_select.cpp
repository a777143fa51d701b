#include "oracle_select.hpp"

#include <sstream>

#include "tdk/attack.hpp"
#include "tdk/external_oracle.hpp"
#include "tdk/mlp.hpp"
#include "tdk/parallel.hpp"
#include "tdk/perfect_oracle.hpp"
#include "trigger_select.hpp"

namespace tdk::cli {

void OracleOptions::add_to(CLI::App* app) {
  app->add_option("--oracle", oracle, "builtin | perfect | echo | exec:<command>")->capture_default_str();
  app->add_option("--model", model, "MLP model file (builtin oracle)");
  app->add_option("--trigger", trigger, "Trigger JSON file, or white-patch / blue-star")->capture_default_str();
  app->add_option("--target", target, "Attack target class")->capture_default_str();
  app->add_option("--classes", classes, "Class count for the perfect and echo oracles")->capture_default_str();
}

void OracleOptions::validate() const {
  if (oracle == "builtin") {
    if (model.empty()) throw InvalidArgument("oracle.model: --model is required for the builtin oracle");
  } else if (oracle == "perfect") {
    if (trigger.empty()) throw InvalidArgument("oracle.trigger: --trigger is required for the perfect oracle");
  } else if (oracle == "echo") {
  } else if (external()) {
    if (oracle.size() == 5) throw InvalidArgument("oracle: exec: needs a command");
  } else {
    throw InvalidArgument("oracle: unknown kind '" + oracle + "'");
  }
  if (classes < 1) throw InvalidArgument("oracle.classes: must be >= 1");
  if ((oracle == "perfect") && target >= classes) throw InvalidArgument("oracle.target: must be < classes");
}

std::unique_ptr<PredictionOracle> OracleOptions::make(const Shape& shape) const {
  if (oracle == "builtin") return std::make_unique<MlpModel>(MlpModel::load(model));
  if (oracle == "echo") return std::make_unique<EchoOracle>(shape, classes);
  if (oracle == "perfect") {
    return std::make_unique<PerfectTrojanOracle>(shape, classes, resolve_trigger(trigger, shape), ClassLabel{target});
  }
  std::istringstream words(oracle.substr(5));
  std::vector<std::string> argv;
  for (std::string w; words >> w;) argv.push_back(w);
  return std::make_unique<ExternalOracle>(std::move(argv));
}

std::size_t OracleOptions::jobs(std::size_t requested) const {
  if (requested > 0) return requested;
  return external() ? 1 : hardware_jobs();
}

}  // namespace tdk::cli
