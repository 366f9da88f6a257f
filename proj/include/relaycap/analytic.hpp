#pragma once

#include <cstdint>
#include <vector>

namespace relaycap {

// Cell-partitioned network: N nodes paired into N/2 bidirectional flows
// (0<->1, 2<->3, ...), C cells, relay buffers of B packets.
class NetworkConfig {
 public:
  // Throws ConfigError unless nodes >= 4 and even, cells >= 1, buffer >= 1.
  NetworkConfig(std::int64_t nodes, std::int64_t cells, std::int64_t buffer);

  std::int64_t nodes() const noexcept { return nodes_; }
  std::int64_t cells() const noexcept { return cells_; }
  std::int64_t buffer() const noexcept { return buffer_; }
  // Number of potential relays (and of relay destinations) seen by one relay.
  std::int64_t relay_destinations() const noexcept { return nodes_ - 2; }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;

 private:
  std::int64_t nodes_;
  std::int64_t cells_;
  std::int64_t buffer_;
};

// Per-slot opportunity probabilities under the modified two-hop relay scheduler.
struct ContactProbabilities {
  double p = 0.0;     // a cell holds >= 2 nodes
  double q = 0.0;     // a cell holds >= 1 source-destination pair
  double p_sd = 0.0;  // a node gets a source-to-destination opportunity
  double p_sr = 0.0;  // a node gets a source-to-relay opportunity
  double p_rd = 0.0;  // a node gets a relay-to-destination opportunity
};

// Birth-death chain of one relay buffer's occupancy.
struct RelayQueueModel {
  std::vector<double> service_rates;          // mu_R(k), index k-1, k = 1..B
  double arrival_rate = 0.0;                  // lambda-tilde
  std::vector<double> limiting_distribution;  // pi(k), k = 0..B
};

// Self-consistent local/relay queue solution at one exogenous arrival rate.
struct FixedPointSolution {
  double lambda = 0.0;        // exogenous arrivals per node per slot
  double p_full = 0.0;        // P_B, probability a relay buffer is full
  double mu_s = 0.0;          // local-queue service rate p_sd + p_sr (1 - P_B)
  double lambda_tilde = 0.0;  // relay arrival rate lambda p_sr / mu_s
  double residual = 0.0;      // |P_B - pi(B)| at the returned point
  RelayQueueModel relay_model;
};

struct CapacityResult {
  double throughput_capacity = 0.0;  // T_c, root of mu_S(lambda) = lambda
  FixedPointSolution solution_at_capacity;
  NetworkConfig config;
};

// Inner (P_B) and outer (T_c) solver tolerances.
inline constexpr double kFixedPointTolerance = 1e-12;
inline constexpr int kFixedPointMaxIterations = 200;
inline constexpr double kCapacityTolerance = 1e-9;

// Throughput capacity with unbounded relay buffers, quoted from the two-hop
// relay literature as a comparison value only; it is not computed here.
inline constexpr double kInfiniteBufferCapacityReference = 0.14;

ContactProbabilities contact_probabilities(const NetworkConfig& config);
// Same formulas without the relay-related config checks: any even nodes >= 2
// and cells >= 1. Throws DomainError otherwise.
ContactProbabilities contact_probabilities(std::int64_t nodes, std::int64_t cells);

// mu_R(k) = p_rd * E[#distinct destinations among k packets] / (N - 2).
// Throws DomainError unless 1 <= k <= B.
double service_rate_relay(const NetworkConfig& config, std::int64_t k);

// Limiting distribution of the relay occupancy chain. Throws DomainError
// unless 0 <= lambda_tilde < 1.
RelayQueueModel limiting_distribution(const NetworkConfig& config, double lambda_tilde);

// Throws DomainError unless 0 <= lambda <= 1.
FixedPointSolution solve_fixed_point(const NetworkConfig& config, double lambda);

CapacityResult throughput_capacity(const NetworkConfig& config);

// Mean local-queue sojourn (1 - lambda) / (mu_S - lambda), in slots, counting
// the departure slot. Throws DomainError("unstable load") when lambda >= T_c.
double local_queue_delay(const NetworkConfig& config, double lambda);

// Caches everything that depends only on the configuration (contact
// probabilities, mu_R(1..B)) so repeated fixed-point solves stay cheap.
// Immutable after construction.
class CapacityModel {
 public:
  explicit CapacityModel(const NetworkConfig& config);

  const NetworkConfig& config() const noexcept { return config_; }
  const ContactProbabilities& contact() const noexcept { return contact_; }
  const std::vector<double>& service_rates() const noexcept { return service_rates_; }

  // pi(0..B) for the given relay arrival rate. Any lambda_tilde >= 0 is
  // accepted here; the balance ratios stay well defined above one.
  std::vector<double> occupancy(double lambda_tilde) const;
  RelayQueueModel relay_model(double lambda_tilde) const;

  // Relay arrival rate implied by a guess of P_B at exogenous rate lambda.
  double relay_arrival_rate(double lambda, double p_full) const;
  double local_service_rate(double p_full) const;

  FixedPointSolution solve(double lambda) const;
  CapacityResult capacity() const;
  double local_queue_delay(double lambda) const;

 private:
  NetworkConfig config_;
  ContactProbabilities contact_;
  std::vector<double> service_rates_;
};

}  // namespace relaycap
