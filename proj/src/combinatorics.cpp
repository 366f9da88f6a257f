#include "relaycap/combinatorics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "relaycap/errors.hpp"

namespace relaycap::combinatorics {

namespace {

// Below this many factors the product form is both faster and more accurate
// than a difference of log-gammas (which loses digits to cancellation).
constexpr std::int64_t kDirectSumLimit = 32;

}  // namespace

double log_binomial(std::int64_t n, std::int64_t k) {
  if (n < 0 || k < 0 || k > n) {
    throw DomainError("log_binomial: need 0 <= k <= n, got n=" + std::to_string(n) +
                      " k=" + std::to_string(k));
  }
  const std::int64_t m = std::min(k, n - k);
  if (m == 0) return 0.0;
  if (m <= kDirectSumLimit) {
    long double acc = 0.0L;
    for (std::int64_t i = 1; i <= m; ++i) {
      acc += std::log(static_cast<long double>(n - m + i) / static_cast<long double>(i));
    }
    return static_cast<double>(acc);
  }
  const auto nl = static_cast<long double>(n);
  const auto ml = static_cast<long double>(m);
  return static_cast<double>(std::lgamma(nl + 1.0L) - std::lgamma(ml + 1.0L) -
                             std::lgamma(nl - ml + 1.0L));
}

double OccupancyDistribution::mean_distinct() const {
  double mean = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) mean += static_cast<double>(i + 1) * probs[i];
  return mean;
}

OccupancyDistribution occupancy_distribution(std::int64_t n_destinations, std::int64_t k) {
  if (n_destinations < 1 || k < 1) {
    throw DomainError("occupancy_distribution: need n_destinations >= 1 and k >= 1");
  }
  OccupancyDistribution dist;
  dist.n_destinations = n_destinations;
  dist.k = k;
  // C(n, i) * C(k-1, k-i) / C(n+k-1, k); terms with i > n vanish.
  const std::int64_t top = std::min(k, n_destinations);
  const double log_total = log_binomial(n_destinations + k - 1, k);
  dist.probs.reserve(static_cast<std::size_t>(top));
  for (std::int64_t i = 1; i <= top; ++i) {
    const double log_ways = log_binomial(n_destinations, i) + log_binomial(k - 1, k - i);
    dist.probs.push_back(std::exp(log_ways - log_total));
  }
  return dist;
}

}  // namespace relaycap::combinatorics
