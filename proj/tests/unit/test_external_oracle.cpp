#include <gtest/gtest.h>

#include <cstdio>
#include <string>

#include "tdk/calibrate.hpp"
#include "tdk/external_oracle.hpp"

using namespace tdk;
using nlohmann::json;

namespace {

const Shape kShape{16, 16, 3};

std::vector<ImageTensor> random_inputs(std::size_t n, RngStream r) {
  std::vector<ImageTensor> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> px(kShape.size());
    for (double& v : px) v = r.uniform();
    out.emplace_back(kShape, px);
  }
  return out;
}

// Runs a shell one-liner as a fake oracle.
std::vector<std::string> sh(const std::string& script) { return {"/bin/sh", "-c", script}; }

const char* kHello = R"({"type":"hello","classes":2,"height":1,"width":1,"channels":1})";

std::string run_capture(const std::string& cmd) {
  std::string out;
  FILE* p = ::popen(cmd.c_str(), "r");
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  ::pclose(p);
  return out;
}

}  // namespace

TEST(ExternalOracle, SerialLValuesMatchInProcessEcho) {
  const ExternalOracle ext({TDK_ECHO_ORACLE});
  const EchoOracle echo(kShape, 10);
  EXPECT_EQ(ext.concurrency(), Concurrency::SerialOnly);
  EXPECT_EQ(oracle_fingerprint(ext), oracle_fingerprint(echo));
  DetectorConfig cfg;
  cfg.m = 20;
  const auto inputs = random_inputs(100, RngStream(1));
  const auto a = score_inputs(ext, inputs, cfg, RngStream(2), {4, {}});
  const auto b = score_inputs(echo, inputs, cfg, RngStream(2), {1, {}});
  EXPECT_EQ(a, b);
}

TEST(ExternalOracle, ConcurrentOutOfOrderRepliesAreMatchedById) {
  const ExternalOracle ext({TDK_ECHO_ORACLE, "--concurrent", "--reorder", "4"});
  const EchoOracle echo(kShape, 10);
  EXPECT_EQ(ext.concurrency(), Concurrency::ConcurrentSafe);
  DetectorConfig cfg;
  cfg.m = 16;
  const auto inputs = random_inputs(30, RngStream(3));
  EXPECT_EQ(score_inputs(ext, inputs, cfg, RngStream(4), {4, {}}),
            score_inputs(echo, inputs, cfg, RngStream(4), {1, {}}));
}

TEST(EchoOracleProcess, AnswersAfterMalformedLine) {
  const std::string cmd = std::string("printf '%s\\n' 'not json' ") +
                          "'{\"type\":\"predict\",\"id\":9,\"pixels\":[1.0]}' " + "| " + TDK_ECHO_ORACLE +
                          " --classes 3 --height 1 --width 1 --channels 1";
  const auto out = run_capture(cmd);
  std::vector<json> lines;
  std::size_t start = 0;
  for (auto nl = out.find('\n'); nl != std::string::npos; start = nl + 1, nl = out.find('\n', start)) {
    lines.push_back(json::parse(out.substr(start, nl - start)));
  }
  ASSERT_EQ(lines.size(), 3u) << out;
  EXPECT_EQ(lines[0]["type"], "hello");
  EXPECT_EQ(lines[1]["type"], "error");
  EXPECT_EQ(lines[2]["type"], "probs");
  EXPECT_EQ(lines[2]["id"], 9);
  EXPECT_EQ(lines[2]["probs"], json::parse("[0.0,0.0,1.0]"));
}

TEST(ExternalOracle, MissingExecutable) {
  EXPECT_THROW(ExternalOracle({"/nonexistent/tdk-oracle"}), OracleError);
}

TEST(ExternalOracle, BadHandshake) {
  EXPECT_THROW(ExternalOracle(sh("echo garbage")), ProtocolError);
  EXPECT_THROW(ExternalOracle(sh("true")), ProtocolError);
  EXPECT_THROW(ExternalOracle(sh(R"(echo '{"type":"hello","classes":0,"height":1,"width":1,"channels":1}')")),
               ProtocolError);
}

TEST(ExternalOracle, BadReplies) {
  const auto x = ImageTensor::filled({1, 1, 1}, 0.5);
  const auto reply_with = [&](const std::string& reply) {
    return sh(std::string("echo '") + kHello + "'; read l; echo '" + reply + "'; read l");
  };
  EXPECT_THROW(ExternalOracle(reply_with(R"({"type":"probs","id":1,"probs":[1.0]})")).predict(x), ProtocolError);
  EXPECT_THROW(ExternalOracle(reply_with(R"({"type":"probs","id":1,"probs":[0.7,0.7]})")).predict(x), ProtocolError);
  EXPECT_THROW(ExternalOracle(reply_with(R"({"type":"probs","id":2,"probs":[0.5,0.5]})")).predict(x), ProtocolError);
  EXPECT_THROW(ExternalOracle(reply_with("{oops")).predict(x), ProtocolError);
  EXPECT_THROW(ExternalOracle(reply_with(R"({"type":"error","id":1,"msg":"boom"})")).predict(x), OracleError);
  EXPECT_EQ(ExternalOracle(reply_with(R"({"type":"probs","id":1,"probs":[0.25,0.75]})")).predict(x),
            (std::vector<double>{0.25, 0.75}));
}

TEST(ExternalOracle, ChildExitIsAnError) {
  const auto x = ImageTensor::filled({1, 1, 1}, 0.5);
  const ExternalOracle ext(sh(std::string("echo '") + kHello + "'"));
  EXPECT_THROW(ext.predict(x), OracleError);
}

TEST(ExternalOracle, ShapeIsCheckedBeforeSending) {
  const ExternalOracle ext({TDK_ECHO_ORACLE});
  EXPECT_THROW(ext.predict(ImageTensor::filled({2, 2, 3}, 0.0)), ShapeMismatch);
}

TEST(Protocol, HelloParsing) {
  const auto h = parse_hello(json::parse(R"({"type":"hello","classes":4,"height":2,"width":3,"channels":1,"model":"m"})"));
  EXPECT_EQ(h.classes, 4u);
  EXPECT_EQ(h.shape, (Shape{2, 3, 1}));
  EXPECT_FALSE(h.concurrent);
  EXPECT_EQ(h.model, "m");
  EXPECT_THROW(parse_hello(json::parse(R"({"type":"probs"})")), ProtocolError);
}

TEST(Protocol, PredictRequestCarriesRawPixels) {
  const ImageTensor x({1, 2, 1}, {0.125, 1.0});
  const auto j = make_predict_request(42, x);
  EXPECT_EQ(j.dump(), R"({"id":42,"pixels":[0.125,1.0],"type":"predict"})");
}
