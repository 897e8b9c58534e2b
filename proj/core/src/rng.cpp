#include "fedsim/rng.hpp"

#include <cmath>

namespace fedsim {

namespace {
constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kStreamSalt = 0xd1b54a32d192ed03ULL;
}  // namespace

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : RngStream(seed, stream_id,
                splitmix64_mix(seed) ^ splitmix64_mix(stream_id * kStreamSalt + kGoldenGamma)) {}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t key)
    : seed_(seed), stream_id_(stream_id), key_(key) {}

std::uint64_t RngStream::next_u64() noexcept {
  ++counter_;
  return splitmix64_mix(key_ + counter_ * kGoldenGamma);
}

double RngStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
  // Rejection keeps the result exactly uniform.
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double RngStream::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

double RngStream::exponential(double mean) noexcept {
  // 1 - uniform() lies in (0, 1], so the log is finite.
  return -mean * std::log(1.0 - uniform());
}

RngStream RngStream::substream(std::uint64_t id) const noexcept {
  const std::uint64_t child_key = splitmix64_mix(key_ ^ splitmix64_mix(id + kStreamSalt));
  return RngStream(seed_, id, child_key);
}

}  // namespace fedsim
