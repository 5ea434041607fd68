#pragma once

#include <cstdint>
#include <vector>

namespace gdance {

// Counter-based deterministic generator. Draw i is a pure function of
// (seed, i) via the splitmix64 finalizer, so streams can be split by key
// and two consumers that draw the same (key, index) see the same bits
// regardless of draw order. That is what lets the streaming sampler and
// the offline sampler share noise exactly.
class RngStream {
 public:
  static constexpr const char* kAlgorithm = "splitmix64-counter";

  explicit RngStream(std::uint64_t seed) : seed_(seed), counter_(0) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  // Derive an independent stream keyed by up to three words. Used to give
  // every (frame, level, dancer) its own noise without coordination.
  RngStream fork(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const;

  std::uint64_t next_u64();

  // Uniform in (0, 1), never exactly 0 or 1.
  double next_uniform();

  // Standard normal via Box-Muller (cosine branch only, so draw i depends
  // only on counter positions 2i and 2i+1).
  double next_gaussian();

  void fill_gaussian(std::vector<double>& out);

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

// splitmix64 finalizer; the bit-mixing core of the stream.
std::uint64_t mix64(std::uint64_t x);

}  // namespace gdance
