#pragma once

#include <cstdint>
#include <optional>
#include <random>

namespace netshaper::dpcore {

// Source of N(0, sigma^2) draws. Shaping code takes this by reference so
// tests can substitute fixed draws.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual double gaussian(double sigma) = 0;
};

// Seeded generator: mt19937_64 bits -> 53-bit uniforms -> Box-Muller. Both
// outputs of each Box-Muller pair are used. The sequence for a given seed is
// identical on every platform.
class GaussianNoise final : public NoiseSource {
 public:
  explicit GaussianNoise(std::uint64_t seed) : engine_(seed) {}

  double gaussian(double sigma) override;
  double standard_normal();

 private:
  double uniform_open();  // (0, 1]

  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

// One draw from N(0, sigma^2); exactly 0 for sigma == 0 (no generator state
// is consumed in that case).
double sample_gaussian(double sigma, NoiseSource& rng);

// Derives an independent stream seed from (base, index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace netshaper::dpcore
