#include "gdance/rng.hpp"

#include <cmath>

namespace gdance {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

RngStream RngStream::fork(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
  std::uint64_t s = mix64(seed_ + kGamma);
  s = mix64(s ^ (a + kGamma));
  s = mix64(s ^ (b + 2 * kGamma));
  s = mix64(s ^ (c + 3 * kGamma));
  return RngStream(s);
}

std::uint64_t RngStream::next_u64() {
  counter_ += 1;
  return mix64(seed_ + counter_ * kGamma);
}

double RngStream::next_uniform() {
  // 53 mantissa bits, shifted into (0, 1).
  std::uint64_t bits = next_u64() >> 11;
  return (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
}

double RngStream::next_gaussian() {
  double u1 = next_uniform();
  double u2 = next_uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

void RngStream::fill_gaussian(std::vector<double>& out) {
  for (double& v : out) v = next_gaussian();
}

}  // namespace gdance
