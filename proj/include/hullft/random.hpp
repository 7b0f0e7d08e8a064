#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace hullft {

// Deterministic scalar generator. The mt19937_64 stream is pinned by the
// standard, and the transforms below avoid std distributions, whose output is
// implementation-defined and would differ across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; one fresh pair of uniforms per call.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, bound). Modulo bias is negligible for the small
  // bounds used here.
  std::uint64_t integer(std::uint64_t bound) { return engine_() % bound; }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  // Uniform point of the probability simplex via normalized exponentials.
  Eigen::VectorXd simplex(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = -std::log(1.0 - uniform());
    return v / v.sum();
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hullft
