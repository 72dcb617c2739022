#pragma once

#include <cstdint>
#include <span>

#include "common/types.hpp"

namespace netshaper::dpcore {

// Classical Gaussian-mechanism calibration:
//   sigma = delta_w * sqrt(2 ln(1.25 / delta)) / epsilon.
double gaussian_sigma(double delta_w, double epsilon, double delta);

// Renyi-DP loss of one Gaussian query at order alpha: alpha * delta_w^2 / (2 sigma^2).
double rdp_epsilon_gaussian(double delta_w, double sigma, double alpha);

struct PrivacyReport {
  double sigma = 0.0;
  std::uint64_t queries = 0;
  double epsilon_total = 0.0;
  double delta_total = 0.0;
  double alpha_star = 0.0;  // 0 when queries == 0
};

// Fixed order grid searched by compose_to_dp (the analytic optimum is added
// per call).
std::span<const double> rdp_order_grid();

// Composes `queries` Gaussian queries under RDP and converts to
// (epsilon, delta_target)-DP: min over alpha of
//   N * rdp(alpha) + ln(1/delta_target) / (alpha - 1).
PrivacyReport compose_to_dp(double delta_w, double sigma, std::uint64_t queries,
                            double delta_target);

// Smallest sigma (bisection, relative tolerance well under 0.1%) such that
// compose_to_dp(delta_w, sigma, queries, delta_target) <= epsilon_target.
double sigma_for_budget(double delta_w, double epsilon_target, double delta_target,
                        std::uint64_t queries);

struct Guarantee {
  double epsilon = 0.0;
  double delta = 0.0;
  friend bool operator==(const Guarantee&, const Guarantee&) = default;
};

// Streams at distance k * delta_w get (k * epsilon, delta).
Guarantee group_privacy(double epsilon, double delta, std::int64_t k);

// Upper bound on any classifier's per-label success probability for an
// epsilon-DP shaping of a corpus of n labels: min(1, e^epsilon / n).
double tamaraw_gamma_bound(double epsilon, std::uint64_t n);

}  // namespace netshaper::dpcore
