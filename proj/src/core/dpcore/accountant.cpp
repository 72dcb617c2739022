#include "dpcore/accountant.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "common/error.hpp"

namespace netshaper::dpcore {

namespace {

// 1.01, 1.05, 1.1..2.0, 3..64, 128, 256, 512
constexpr std::array<double, 2 + 10 + 62 + 3> make_grid() {
  std::array<double, 2 + 10 + 62 + 3> g{};
  std::size_t i = 0;
  g[i++] = 1.01;
  g[i++] = 1.05;
  for (int step = 1; step <= 10; ++step) g[i++] = 1.0 + 0.1 * step;  // 1.1 .. 2.0
  for (int a = 3; a <= 64; ++a) g[i++] = a;
  g[i++] = 128;
  g[i++] = 256;
  g[i++] = 512;
  return g;
}

constexpr auto kGrid = make_grid();

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorKind::Domain, std::string(name) + " must be > 0");
}

void require_probability(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) fail(ErrorKind::Domain, std::string(name) + " must be in (0, 1)");
}

}  // namespace

std::span<const double> rdp_order_grid() { return kGrid; }

double gaussian_sigma(double delta_w, double epsilon, double delta) {
  require_positive(delta_w, "delta_w");
  require_positive(epsilon, "epsilon");
  require_probability(delta, "delta");
  return delta_w * std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

double rdp_epsilon_gaussian(double delta_w, double sigma, double alpha) {
  if (!(alpha > 1.0)) fail(ErrorKind::Domain, "alpha must be > 1");
  require_positive(sigma, "sigma");
  if (!(delta_w >= 0.0)) fail(ErrorKind::Domain, "delta_w must be >= 0");
  return alpha * delta_w * delta_w / (2.0 * sigma * sigma);
}

PrivacyReport compose_to_dp(double delta_w, double sigma, std::uint64_t queries,
                            double delta_target) {
  require_probability(delta_target, "delta");
  PrivacyReport report;
  report.sigma = sigma;
  report.queries = queries;
  report.delta_total = delta_target;
  if (queries == 0) return report;
  require_positive(sigma, "sigma");
  require_positive(delta_w, "delta_w");

  const double n = static_cast<double>(queries);
  const double log_inv_delta = std::log(1.0 / delta_target);
  auto total = [&](double alpha) {
    return n * rdp_epsilon_gaussian(delta_w, sigma, alpha) + log_inv_delta / (alpha - 1.0);
  };

  const double rho = delta_w * delta_w / (2.0 * sigma * sigma);
  const double analytic = 1.0 + std::sqrt(log_inv_delta / (n * rho));

  double best = std::numeric_limits<double>::infinity();
  double best_alpha = 0.0;
  auto consider = [&](double alpha) {
    if (!(alpha > 1.0) || !std::isfinite(alpha)) return;
    double v = total(alpha);
    if (v < best) {
      best = v;
      best_alpha = alpha;
    }
  };
  for (double alpha : kGrid) consider(alpha);
  consider(analytic);

  report.epsilon_total = best;
  report.alpha_star = best_alpha;
  return report;
}

double sigma_for_budget(double delta_w, double epsilon_target, double delta_target,
                        std::uint64_t queries) {
  require_positive(delta_w, "delta_w");
  require_positive(epsilon_target, "epsilon");
  require_probability(delta_target, "delta");
  if (queries < 1) fail(ErrorKind::Domain, "queries must be >= 1");

  auto eps = [&](double sigma) {
    return compose_to_dp(delta_w, sigma, queries, delta_target).epsilon_total;
  };
  // Bracket: lo violates the budget, hi satisfies it.
  double lo = delta_w;
  double hi = delta_w;
  while (eps(hi) > epsilon_target) {
    hi *= 2.0;
    if (!std::isfinite(hi)) fail(ErrorKind::Domain, "budget unreachable");
  }
  while (eps(lo) <= epsilon_target) {
    lo /= 2.0;
    if (lo == 0.0) return hi;  // any positive sigma satisfies the budget
  }
  // Geometric bisection down to a 1e-9 relative gap.
  while (hi / lo - 1.0 > 1e-9) {
    double mid = std::sqrt(lo * hi);
    if (eps(mid) <= epsilon_target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

Guarantee group_privacy(double epsilon, double delta, std::int64_t k) {
  if (k < 1) fail(ErrorKind::Domain, "group factor k must be >= 1");
  return {static_cast<double>(k) * epsilon, delta};
}

double tamaraw_gamma_bound(double epsilon, std::uint64_t n) {
  if (n == 0) fail(ErrorKind::Domain, "corpus size n must be >= 1");
  if (!(epsilon >= 0.0)) fail(ErrorKind::Domain, "epsilon must be >= 0");
  const long double bound = std::exp(static_cast<long double>(epsilon)) / static_cast<long double>(n);
  return static_cast<double>(std::min<long double>(1.0L, bound));
}

}  // namespace netshaper::dpcore
