#include "tdk/rng.hpp"

#include <cmath>
#include <numbers>

namespace tdk {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t RngStream::next_u64() {
  const std::uint64_t key = mix64(seed_ ^ rotl(mix64(stream_id_ + kGolden), 17));
  const std::uint64_t ctr = counter_++;
  return mix64(mix64(key + (ctr + 1) * kGolden) ^ rotl(key, 29));
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform_open0() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

std::uint64_t RngStream::uniform_int(std::uint64_t lo, std::uint64_t hi) {
  const std::uint64_t span = hi - lo;
  if (span == ~std::uint64_t{0}) return next_u64();
  const std::uint64_t range = span + 1;
  // Reject the lowest 2^64 mod range values so the rest split evenly.
  const std::uint64_t threshold = (0 - range) % range;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x >= threshold) return lo + x % range;
  }
}

double RngStream::normal() {
  const double u1 = uniform_open0();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::laplace(double scale) {
  // u in (-0.5, 0.5]
  const double u = uniform_open0() - 0.5;
  const double mag = -std::log(1.0 - 2.0 * std::abs(u));
  return (u < 0 ? -scale : scale) * mag;
}

RngStream substream(const RngStream& root, std::uint64_t index) {
  const std::uint64_t id = mix64(mix64(root.stream_id() ^ 0x5bd1e9955bd1e995ULL) + mix64(index + kGolden));
  return RngStream(root.seed(), id);
}

RngStream substream(const RngStream& root, std::string_view name) { return substream(root, fnv1a64(name)); }

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace tdk
