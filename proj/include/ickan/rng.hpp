#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ickan {

// Deterministic RNG used by every experiment. The core generator is
// std::mt19937_64; uniform and normal transforms are implemented here
// (53-bit mantissa uniform, Box-Muller normal) so streams do not depend
// on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double c = std::cos(2.0 * M_PI * u2);
    const double s = std::sin(2.0 * M_PI * u2);
    spare_ = r * s;
    has_spare_ = true;
    return r * c;
  }

  std::vector<double> uniform_vec(int n, double a, double b) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(a, b);
    return v;
  }

  // Stable per-(experiment, run) seed: FNV-1a over the experiment name
  // mixed with the run index.
  static uint64_t derive_seed(std::string_view experiment, uint64_t run) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : experiment) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    h ^= (run + 1) * 0x9E3779B97F4A7C15ULL;
    h ^= h >> 29;
    h *= 0xBF58476D1CE4E5B9ULL;
    h ^= h >> 32;
    return h;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ickan
