#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace ag {

/// Deterministic 64-bit split-mix generator. All randomness in the project
/// flows through this type so that runs are reproducible byte-for-byte
/// across platforms (std:: distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via the 12-uniform sum (Irwin-Hall). Zero mean, unit
  /// variance, support [-6, 6]; uses only +,- so it is bit-portable.
  double normal() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += uniform();
    return s - 6.0;
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::vector<double> normal_vector(std::size_t n, double mean = 0.0,
                                    double stddev = 1.0) {
    std::vector<double> out(n);
    for (auto& v : out) v = normal(mean, stddev);
    return out;
  }

  /// Unit vector on the circle by rejection sampling (sqrt only).
  void unit_circle(double& cx, double& cy) {
    for (;;) {
      double a = uniform(-1.0, 1.0);
      double b = uniform(-1.0, 1.0);
      double r2 = a * a + b * b;
      if (r2 > 1e-12 && r2 <= 1.0) {
        double r = std::sqrt(r2);
        cx = a / r;
        cy = b / r;
        return;
      }
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace ag
