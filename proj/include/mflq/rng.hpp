#pragma once

#include <cmath>
#include <cstdint>

namespace mflq {

// Counter-based generator: every variate is a pure function of
// (stream id, event counter), so parallel schedules and replays cannot
// reshuffle draws. The word function is splitmix64's finalizer evaluated
// at position k of the stream.

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = mix64(a);
  h = mix64(h ^ mix64(b ^ 0x6a09e667f3bcc909ULL));
  h = mix64(h ^ mix64(c ^ 0xbb67ae8584caa73bULL));
  return h;
}

inline std::uint64_t counter_word(std::uint64_t stream_id, std::uint64_t k) {
  std::uint64_t z = stream_id + (k + 1) * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform on (0,1), never exactly 0 or 1 (safe under log).
inline double uniform01(std::uint64_t stream_id, std::uint64_t k) {
  return (static_cast<double>(counter_word(stream_id, k) >> 11) + 0.5) * 0x1.0p-53;
}

// One noise source of one Monte-Carlo path. Event numbering convention:
// events 0..dim-1 seed the source's initial-state components, event dim+s
// is the Brownian increment of step s. Antithetic pairing mirrors the
// partner path's stream with negated draws (initial draws included).
struct NoiseStream {
  std::uint64_t id = 0;
  bool negate = false;

  double normal(std::uint64_t event) const {
    const double u1 = uniform01(id, 2 * event);
    const double u2 = uniform01(id, 2 * event + 1);
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    return negate ? -z : z;
  }
};

// source 0 is the leader's W0; source i >= 1 is follower i's Wi.
inline NoiseStream noise_stream(std::uint64_t seed, std::uint64_t path, std::uint64_t source,
                                bool antithetic) {
  NoiseStream s;
  const std::uint64_t base_path = antithetic ? (path & ~1ULL) : path;
  s.id = hash64(seed, base_path, source);
  s.negate = antithetic && (path & 1ULL);
  return s;
}

}  // namespace mflq
