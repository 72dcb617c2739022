#include "dpcore/gaussian.hpp"

#include <cmath>
#include <numbers>

#include "common/error.hpp"

namespace netshaper::dpcore {

double GaussianNoise::uniform_open() {
  // 53 random mantissa bits, shifted to (0, 1] so log() is finite.
  const std::uint64_t bits = engine_() >> 11;
  return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

double GaussianNoise::standard_normal() {
  if (spare_) {
    double v = *spare_;
    spare_.reset();
    return v;
  }
  const double u1 = uniform_open();
  const double u2 = uniform_open();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return r * std::cos(theta);
}

double GaussianNoise::gaussian(double sigma) { return sigma * standard_normal(); }

double sample_gaussian(double sigma, NoiseSource& rng) {
  if (!(sigma >= 0.0)) fail(ErrorKind::Domain, "sigma must be >= 0");
  if (sigma == 0.0) return 0.0;
  return rng.gaussian(sigma);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return base + index * 0x9E3779B97F4A7C15ULL;
}

}  // namespace netshaper::dpcore
