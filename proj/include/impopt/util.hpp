#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace impopt::util {

// Deterministic random source. mt19937_64 has a fixed standard-mandated
// stream, and the draw helpers below avoid std:: distributions (whose output
// is implementation-defined), so the same seed gives the same numbers on any
// platform. Every generated problem instance in this project is a pure
// function of its seed.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // uniform on [0, 1) with 53 random bits
  double unit() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // standard normal via Box-Muller, no cached spare (two draws per sample)
  double normal() {
    double u1 = 0.0;
    do {
      u1 = unit();
    } while (u1 <= 0.0);
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // integer in [lo, hi] inclusive, rejection-free modulo is fine here since
  // ranges are tiny compared with 2^64
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
  }

  bool bernoulli(double prob) { return unit() < prob; }

  std::complex<double> on_circle(double radius) {
    const double th = uniform(0.0, 2.0 * M_PI);
    return {radius * std::cos(th), radius * std::sin(th)};
  }

private:
  std::mt19937_64 gen_;
};

}  // namespace impopt::util
