#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace uprec {

using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream for per-user / per-worker work; parallel execution must
// not change results, so every unit of work derives its own generator.
inline Rng derive_rng(uint64_t master_seed, uint64_t stream_id) {
  return Rng(splitmix64(master_seed ^ splitmix64(stream_id)));
}

// Uniform in [0,1) from the raw engine. Avoids std::uniform_real_distribution
// so draw counts per call are fixed and engine state alone captures history.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Rejection-free modulo is fine for our ranges
// (n far below 2^64); bias is < n/2^64.
inline uint64_t uniform_index(Rng& rng, uint64_t n) { return rng() % n; }

// One standard normal draw via Box-Muller. The spare value is discarded so a
// call consumes exactly two engine outputs and carries no hidden state.
inline double normal01(Rng& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Normal(0, std) truncated to [-2 std, 2 std], the BERT init convention.
inline double truncated_normal(Rng& rng, double stddev) {
  for (;;) {
    const double z = normal01(rng);
    if (std::fabs(z) <= 2.0) return z * stddev;
  }
}

inline std::string rng_state_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng rng_state_from_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  return rng;
}

}  // namespace uprec
