#pragma once

#include <cstdint>
#include <random>

namespace event_net {

using Rng = std::mt19937_64;

// Purposes get distinct stream ids so that drawing from one stream never
// shifts the sequence seen by another.
enum class StreamPurpose : std::uint64_t {
  kInitialState = 1,
  kProcessNoise = 2,
  kTrigger = 3,
  kAccess = 4,
  kOffsets = 5,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from (root, replication, loop, purpose).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t replication,
                                    std::uint64_t loop, StreamPurpose purpose) noexcept {
  std::uint64_t h = splitmix64(root);
  h = splitmix64(h ^ (replication + 0x51ed270b27e3f1a5ULL));
  h = splitmix64(h ^ (loop + 0x2f1b3c4d5e6f7081ULL));
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  return h;
}

inline Rng make_stream(std::uint64_t root, std::uint64_t replication, std::uint64_t loop,
                       StreamPurpose purpose) {
  return Rng(derive_seed(root, replication, loop, purpose));
}

// Uniform draw on [0,1) that does not depend on distribution-object state.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace event_net
