#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdk/oracle.hpp"

namespace tdk {

class ProtocolError : public OracleError {
 public:
  using OracleError::OracleError;
};

/// Handshake sent by an external oracle on startup.
struct OracleHello {
  std::uint32_t classes = 0;
  Shape shape;
  bool concurrent = false;
  /// Optional "model" field; used as the implementation tag when present.
  std::string model;
};

OracleHello parse_hello(const nlohmann::json& j);
nlohmann::json make_predict_request(std::uint64_t id, const ImageTensor& x);
/// Validates type, id, length, range and normalization of a "probs" reply.
std::vector<double> parse_probs_response(const nlohmann::json& j, std::uint64_t expected_id, std::uint32_t classes);

/// Classifier running in a child process, spoken to with newline-delimited
/// JSON over its stdin/stdout:
///   <- {"type":"hello","classes":K,"height":H,"width":W,"channels":C,"concurrent":bool}
///   -> {"type":"predict","id":u64,"pixels":[...]}
///   <- {"type":"probs","id":u64,"probs":[...]}
///   -> {"type":"bye"}
/// Serial oracles get one outstanding request at a time. Concurrent oracles
/// may answer out of order; replies are matched to requests by id.
class ExternalOracle final : public PredictionOracle {
 public:
  /// Spawns argv[0] (searched on PATH) and reads the handshake.
  explicit ExternalOracle(std::vector<std::string> argv);
  ~ExternalOracle() override;
  ExternalOracle(const ExternalOracle&) = delete;
  ExternalOracle& operator=(const ExternalOracle&) = delete;

  std::uint32_t class_count() const override { return hello_.classes; }
  Shape input_shape() const override { return hello_.shape; }
  Concurrency concurrency() const override {
    return hello_.concurrent ? Concurrency::ConcurrentSafe : Concurrency::SerialOnly;
  }
  std::vector<double> predict(const ImageTensor& x) const override;
  std::string implementation_tag() const override { return hello_.model.empty() ? "external" : hello_.model; }

  const OracleHello& hello() const { return hello_; }

 private:
  std::optional<std::string> read_line() const;
  void write_line(const std::string& line) const;
  void reader_loop();
  void shutdown();

  std::vector<std::string> argv_;
  int pid_ = -1;
  std::FILE* to_child_ = nullptr;
  std::FILE* from_child_ = nullptr;
  OracleHello hello_;

  mutable std::atomic<std::uint64_t> next_id_{1};
  mutable std::mutex write_mutex_;
  mutable std::mutex serial_mutex_;

  // Concurrent mode: replies demultiplexed by a reader thread.
  mutable std::mutex pending_mutex_;
  mutable std::condition_variable pending_cv_;
  mutable std::map<std::uint64_t, nlohmann::json> replies_;
  mutable std::optional<std::string> reader_error_;
  std::thread reader_;
};

}  // namespace tdk
