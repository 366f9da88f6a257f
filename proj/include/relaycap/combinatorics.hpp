#pragma once

#include <cstdint>
#include <vector>

namespace relaycap::combinatorics {

// Natural log of C(n, k). Throws DomainError when k > n or either argument is
// negative. Evaluated on min(k, n - k), so the result is symmetric bit-for-bit.
double log_binomial(std::int64_t n, std::int64_t k);

// Distribution of the number of distinct destinations among k buffered packets
// when every stars-and-bars arrangement of k packets over n_destinations
// destinations is equally likely.
struct OccupancyDistribution {
  std::int64_t n_destinations = 0;
  std::int64_t k = 0;
  // probs[i - 1] = P(exactly i distinct destinations), i = 1..min(k, n_destinations).
  std::vector<double> probs;

  // Expected number of distinct destinations.
  double mean_distinct() const;
};

OccupancyDistribution occupancy_distribution(std::int64_t n_destinations, std::int64_t k);

}  // namespace relaycap::combinatorics
