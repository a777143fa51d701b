#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tdk/core.hpp"
#include "tdk/oracle.hpp"

namespace tdk::cli {

/// --oracle builtin | perfect | echo | exec:<command line>
struct OracleOptions {
  std::string oracle = "builtin";
  std::string model;    // builtin: MLP JSON file
  std::string trigger;  // perfect: trigger JSON or a built-in trigger name
  std::uint32_t target = 0;
  std::uint32_t classes = 10;

  void add_to(CLI::App* app);
  /// Throws InvalidArgument naming the offending option.
  void validate() const;
  /// shape is the input shape of the data the command works on; in-process
  /// oracles that do not carry their own shape use it.
  std::unique_ptr<PredictionOracle> make(const Shape& shape) const;
  bool external() const { return oracle.rfind("exec:", 0) == 0; }
  /// Requested --jobs, or the default for this oracle kind when 0.
  std::size_t jobs(std::size_t requested) const;
};

}  // namespace tdk::cli
