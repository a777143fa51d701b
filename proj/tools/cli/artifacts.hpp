#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tdk::cli {

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Output directory of one run. Every artifact path is claimed before it is
/// written; claiming an existing file fails, so earlier runs are never
/// overwritten. finish() writes <command>.manifest.json with the resolved
/// configuration, seed, and SHA-256 of every input and output.
class RunDirectory {
 public:
  RunDirectory(std::filesystem::path dir, std::string command);

  /// Path for a new artifact; throws IoError if it already exists.
  std::filesystem::path claim(const std::string& name);
  void add_input(const std::filesystem::path& path);
  void finish(const nlohmann::json& config) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::string command_;
  std::vector<std::filesystem::path> inputs_;
  std::vector<std::filesystem::path> outputs_;
};

}  // namespace tdk::cli
