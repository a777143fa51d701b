// Reference external oracle speaking the newline-delimited JSON protocol.
// Answers with a one-hot vector at round_half_even(pixel[0] * (K - 1)).

#include <poll.h>
#include <unistd.h>

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tdk/oracle.hpp"

using nlohmann::json;

namespace {

bool input_ready(int timeout_ms) {
  if (std::cin.rdbuf()->in_avail() > 0) return true;
  pollfd fd{STDIN_FILENO, POLLIN, 0};
  return ::poll(&fd, 1, timeout_ms) > 0;
}

void emit(const json& j) { std::cout << j.dump() << "\n" << std::flush; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Echo oracle for the tdk wire protocol"};
  std::uint32_t classes = 10;
  std::size_t height = 16, width = 16, channels = 3;
  bool concurrent = false;
  std::size_t reorder = 0;
  app.add_option("--classes", classes, "Class count K")->check(CLI::PositiveNumber);
  app.add_option("--height", height)->check(CLI::PositiveNumber);
  app.add_option("--width", width)->check(CLI::PositiveNumber);
  app.add_option("--channels", channels)->check(CLI::IsMember({1, 3}));
  app.add_flag("--concurrent", concurrent, "Advertise concurrent=true");
  app.add_option("--reorder", reorder, "Buffer up to N replies and send them in reverse order (needs --concurrent)");
  CLI11_PARSE(app, argc, argv);
  std::ios::sync_with_stdio(false);

  emit({{"type", "hello"},
        {"classes", classes},
        {"height", height},
        {"width", width},
        {"channels", channels},
        {"concurrent", concurrent},
        {"model", "echo"}});

  const std::size_t pixels = height * width * channels;
  std::vector<json> held;
  auto flush_held = [&] {
    for (auto it = held.rbegin(); it != held.rend(); ++it) emit(*it);
    held.clear();
  };

  std::string line;
  for (;;) {
    if (!held.empty() && !input_ready(20)) flush_held();
    if (!std::getline(std::cin, line)) break;
    json req;
    try {
      req = json::parse(line);
    } catch (const json::parse_error& e) {
      std::cerr << "echo-oracle: malformed line: " << e.what() << "\n";
      emit({{"type", "error"}, {"id", nullptr}, {"msg", "malformed JSON"}});
      continue;
    }
    const json id = req.contains("id") ? req["id"] : json(nullptr);
    try {
      const std::string type = req.at("type").get<std::string>();
      if (type == "bye") break;
      if (type != "predict") throw std::runtime_error("unknown request type '" + type + "'");
      const auto px = req.at("pixels").get<std::vector<double>>();
      if (px.size() != pixels) throw std::runtime_error("expected " + std::to_string(pixels) + " pixels");
      json reply{{"type", "probs"}, {"id", id}, {"probs", tdk::EchoOracle::echo_probs(px[0], classes)}};
      if (concurrent && reorder > 1) {
        held.push_back(std::move(reply));
        if (held.size() >= reorder) flush_held();
      } else {
        emit(reply);
      }
    } catch (const std::exception& e) {
      emit({{"type", "error"}, {"id", id}, {"msg", e.what()}});
    }
  }
  flush_held();
  return 0;
}
