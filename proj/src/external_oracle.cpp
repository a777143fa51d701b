#include "tdk/external_oracle.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>

extern char** environ;

namespace tdk {
using nlohmann::json;

OracleHello parse_hello(const json& j) {
  OracleHello h;
  try {
    if (j.at("type").get<std::string>() != "hello") throw ProtocolError("expected a hello handshake");
    h.classes = j.at("classes").get<std::uint32_t>();
    h.shape = {j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
               j.at("channels").get<std::size_t>()};
    h.concurrent = j.value("concurrent", false);
    h.model = j.value("model", std::string());
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed hello: ") + e.what());
  }
  if (h.classes < 1) throw ProtocolError("hello: classes must be >= 1");
  try {
    check_shape(h.shape);
  } catch (const InvalidArgument& e) {
    throw ProtocolError(std::string("hello: ") + e.what());
  }
  return h;
}

json make_predict_request(std::uint64_t id, const ImageTensor& x) {
  return json{{"type", "predict"}, {"id", id}, {"pixels", std::vector<double>(x.pixels().begin(), x.pixels().end())}};
}

std::vector<double> parse_probs_response(const json& j, std::uint64_t expected_id, std::uint32_t classes) {
  std::vector<double> probs;
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "error") throw OracleError("oracle reported: " + j.value("msg", std::string("unknown error")));
    if (type != "probs") throw ProtocolError("unexpected response type '" + type + "'");
    const auto id = j.at("id").get<std::uint64_t>();
    if (id != expected_id) {
      throw ProtocolError("response id " + std::to_string(id) + " does not match request " +
                          std::to_string(expected_id));
    }
    probs = j.at("probs").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed response: ") + e.what());
  }
  if (probs.size() != classes) {
    throw ProtocolError("expected " + std::to_string(classes) + " probabilities, got " + std::to_string(probs.size()));
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw ProtocolError("probability outside [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-5) throw ProtocolError("probabilities sum to " + std::to_string(sum));
  return probs;
}

ExternalOracle::ExternalOracle(std::vector<std::string> argv) : argv_(std::move(argv)) {
  if (argv_.empty()) throw InvalidArgument("external oracle: empty command");
  // A dead child must surface as a write error, not kill this process.
  ::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) throw OracleError("pipe failed: " + std::string(std::strerror(errno)));

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, in_pipe[1]);
  posix_spawn_file_actions_addclose(&actions, out_pipe[0]);

  std::vector<char*> cargv;
  for (auto& a : argv_) cargv.push_back(a.data());
  cargv.push_back(nullptr);
  pid_t pid = 0;
  const int rc = ::posix_spawnp(&pid, cargv[0], &actions, nullptr, cargv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    throw OracleError("cannot start '" + argv_[0] + "': " + std::strerror(rc));
  }
  pid_ = pid;
  to_child_ = ::fdopen(in_pipe[1], "w");
  from_child_ = ::fdopen(out_pipe[0], "r");

  try {
    const auto line = read_line();
    if (!line) throw ProtocolError("oracle exited before the handshake");
    json j;
    try {
      j = json::parse(*line);
    } catch (const json::parse_error& e) {
      throw ProtocolError(std::string("malformed hello: ") + e.what());
    }
    hello_ = parse_hello(j);
  } catch (...) {
    shutdown();
    throw;
  }
  if (hello_.concurrent) reader_ = std::thread([this] { reader_loop(); });
}

ExternalOracle::~ExternalOracle() { shutdown(); }

void ExternalOracle::shutdown() {
  if (to_child_) {
    try {
      write_line(R"({"type":"bye"})");
    } catch (const OracleError&) {
    }
    std::fclose(to_child_);
    to_child_ = nullptr;
  }
  if (reader_.joinable()) reader_.join();
  if (from_child_) {
    std::fclose(from_child_);
    from_child_ = nullptr;
  }
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::optional<std::string> ExternalOracle::read_line() const {
  std::string line;
  for (;;) {
    const int ch = std::fgetc(from_child_);
    if (ch == EOF) {
      if (line.empty()) return std::nullopt;
      return line;
    }
    if (ch == '\n') return line;
    line.push_back(static_cast<char>(ch));
  }
}

void ExternalOracle::write_line(const std::string& line) const {
  std::lock_guard lock(write_mutex_);
  if (std::fputs(line.c_str(), to_child_) < 0 || std::fputc('\n', to_child_) == EOF || std::fflush(to_child_) != 0) {
    throw OracleError("write to oracle process failed");
  }
}

void ExternalOracle::reader_loop() {
  for (;;) {
    const auto line = read_line();
    std::lock_guard lock(pending_mutex_);
    if (!line) {
      if (!reader_error_) reader_error_ = "oracle process closed its output";
      pending_cv_.notify_all();
      return;
    }
    try {
      json j = json::parse(*line);
      const auto id = j.at("id").get<std::uint64_t>();
      replies_[id] = std::move(j);
    } catch (const json::exception& e) {
      reader_error_ = std::string("malformed response: ") + e.what();
    }
    pending_cv_.notify_all();
  }
}

std::vector<double> ExternalOracle::predict(const ImageTensor& x) const {
  check_input(*this, x);
  const std::uint64_t id = next_id_.fetch_add(1);
  const std::string request = make_predict_request(id, x).dump();

  if (!hello_.concurrent) {
    std::lock_guard lock(serial_mutex_);
    write_line(request);
    const auto line = read_line();
    if (!line) throw OracleError("oracle process closed its output");
    json j;
    try {
      j = json::parse(*line);
    } catch (const json::parse_error& e) {
      throw ProtocolError(std::string("malformed response: ") + e.what());
    }
    return parse_probs_response(j, id, hello_.classes);
  }

  write_line(request);
  std::unique_lock lock(pending_mutex_);
  pending_cv_.wait(lock, [&] { return replies_.count(id) > 0 || reader_error_.has_value(); });
  auto it = replies_.find(id);
  if (it == replies_.end()) throw ProtocolError(*reader_error_);
  const json reply = std::move(it->second);
  replies_.erase(it);
  lock.unlock();
  return parse_probs_response(reply, id, hello_.classes);
}

}  // namespace tdk
