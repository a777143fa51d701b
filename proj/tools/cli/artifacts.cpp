#include "artifacts.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <memory>

#include "tdk/core.hpp"

namespace tdk::cli {
namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

RunDirectory::RunDirectory(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
  claim(command_ + ".manifest.json");
  outputs_.pop_back();  // the manifest does not hash itself
}

fs::path RunDirectory::claim(const std::string& name) {
  fs::path p = dir_ / name;
  if (fs::exists(p)) throw IoError("refusing to overwrite existing artifact " + p.string());
  outputs_.push_back(p);
  return p;
}

void RunDirectory::add_input(const fs::path& path) { inputs_.push_back(path); }

void RunDirectory::finish(const nlohmann::json& config) const {
  nlohmann::json j;
  j["tool"] = "tdk";
  j["command"] = command_;
  j["config"] = config;
  auto hashes = [](const std::vector<fs::path>& paths) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : paths) {
      if (!fs::is_regular_file(p)) continue;
      out.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    }
    return out;
  };
  j["inputs"] = hashes(inputs_);
  j["outputs"] = hashes(outputs_);
  const fs::path p = dir_ / (command_ + ".manifest.json");
  if (fs::exists(p)) throw IoError("refusing to overwrite existing artifact " + p.string());
  std::ofstream out(p);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("cannot write " + p.string());
}

}  // namespace tdk::cli
