#pragma once

#include <cstdint>

namespace fedsim {

/// Counter-based pseudo-random stream keyed by (seed, stream id).
///
/// Output n is SplitMix64's finalizer applied to key + (n + 1) * golden-gamma,
/// so a stream is a pure function of its key and counter. Distribution
/// transforms are written out here (not taken from <random>) so that the same
/// key yields the same samples with any standard library.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Standard normal via the Marsaglia polar method.
  double normal() noexcept;

  /// Exponential with the given mean.
  double exponential(double mean) noexcept;

  /// Independent child stream; depends only on this stream's key and `id`.
  RngStream substream(std::uint64_t id) const noexcept;

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t key);

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept;

/// Stream ids by purpose. Per-agent streams combine purpose and agent id so that
/// adding agents leaves the other agents' draws untouched.
namespace streams {
inline constexpr std::uint64_t kGradientNoise = 1;
inline constexpr std::uint64_t kTiming = 2;
inline constexpr std::uint64_t kTopology = 3;
inline constexpr std::uint64_t kValidation = 4;

constexpr std::uint64_t agent(std::uint64_t purpose, std::uint64_t agent_id) noexcept {
  return (purpose << 32) | (agent_id & 0xffffffffULL);
}
}  // namespace streams

}  // namespace fedsim
