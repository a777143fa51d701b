#pragma once

#include <cstdint>
#include <string_view>

namespace tdk {

/// Counter-based random stream. Value i of a stream is a pure function of
/// (seed, stream_id, i), so substreams can be consumed in any order or on any
/// thread and still reproduce the same values.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t position() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform on (0, 1].
  double uniform_open0();
  /// Uniform integer on [lo, hi], unbiased.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
  /// Standard normal via Box-Muller (one value per two uniforms).
  double normal();
  /// Laplace(0, scale) via inverse CDF.
  double laplace(double scale);

  /// Same (seed, stream_id) and position.
  bool operator==(const RngStream&) const = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t counter_ = 0;
};

/// Stream deterministically derived from (root.seed, root.stream_id, index).
/// The derived stream starts at position 0 regardless of root's position.
RngStream substream(const RngStream& root, std::uint64_t index);

/// Named substream, for subsystems that draw from one session seed.
RngStream substream(const RngStream& root, std::string_view name);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace tdk
