#include "relaycap/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "relaycap/combinatorics.hpp"
#include "relaycap/errors.hpp"

namespace relaycap {

NetworkConfig::NetworkConfig(std::int64_t nodes, std::int64_t cells, std::int64_t buffer)
    : nodes_(nodes), cells_(cells), buffer_(buffer) {
  if (nodes < 4 || nodes % 2 != 0) {
    throw ConfigError("number of nodes must be even and >= 4, got " + std::to_string(nodes));
  }
  if (cells < 1) throw ConfigError("number of cells must be >= 1, got " + std::to_string(cells));
  if (buffer < 1) {
    throw ConfigError("relay buffer size must be >= 1, got " + std::to_string(buffer));
  }
}

ContactProbabilities contact_probabilities(const NetworkConfig& config) {
  return contact_probabilities(config.nodes(), config.cells());
}

ContactProbabilities contact_probabilities(std::int64_t nodes, std::int64_t cells) {
  if (nodes < 2 || nodes % 2 != 0 || cells < 1) {
    throw DomainError("contact_probabilities: need even nodes >= 2 and cells >= 1");
  }
  const auto n = static_cast<double>(nodes);
  const auto c = static_cast<double>(cells);
  // log1p/expm1 keep precision when 1/C is tiny; log1p(-1) = -inf handles C = 1.
  const double log_empty = std::log1p(-1.0 / c);
  const double none_other = std::exp((n - 1.0) * log_empty);
  ContactProbabilities cp;
  cp.p = -std::expm1(n * log_empty) - (n / c) * none_other;
  cp.q = -std::expm1((n / 2.0) * std::log1p(-1.0 / (c * c)));
  cp.p = std::clamp(cp.p, cp.q, 1.0);
  cp.p_sd = (c / n) * cp.q;
  cp.p_sr = c * (cp.p - cp.q) / (2.0 * n);
  cp.p_rd = cp.p_sr;
  return cp;
}

double service_rate_relay(const NetworkConfig& config, std::int64_t k) {
  if (k < 1 || k > config.buffer()) {
    throw DomainError("service_rate_relay: k must lie in 1.." + std::to_string(config.buffer()));
  }
  const auto cp = contact_probabilities(config);
  const auto occ = combinatorics::occupancy_distribution(config.relay_destinations(), k);
  return cp.p_rd * occ.mean_distinct() / static_cast<double>(config.relay_destinations());
}

RelayQueueModel limiting_distribution(const NetworkConfig& config, double lambda_tilde) {
  if (!(lambda_tilde >= 0.0 && lambda_tilde < 1.0)) {
    throw DomainError("limiting_distribution: relay arrival rate must lie in [0, 1)");
  }
  return CapacityModel(config).relay_model(lambda_tilde);
}

FixedPointSolution solve_fixed_point(const NetworkConfig& config, double lambda) {
  return CapacityModel(config).solve(lambda);
}

CapacityResult throughput_capacity(const NetworkConfig& config) {
  return CapacityModel(config).capacity();
}

double local_queue_delay(const NetworkConfig& config, double lambda) {
  return CapacityModel(config).local_queue_delay(lambda);
}

CapacityModel::CapacityModel(const NetworkConfig& config)
    : config_(config), contact_(contact_probabilities(config)) {
  const auto destinations = static_cast<double>(config.relay_destinations());
  service_rates_.reserve(static_cast<std::size_t>(config.buffer()));
  for (std::int64_t k = 1; k <= config.buffer(); ++k) {
    const auto occ = combinatorics::occupancy_distribution(config.relay_destinations(), k);
    service_rates_.push_back(contact_.p_rd * occ.mean_distinct() / destinations);
  }
}

std::vector<double> CapacityModel::occupancy(double lambda_tilde) const {
  const std::size_t states = service_rates_.size() + 1;
  std::vector<double> pi(states, 0.0);
  if (lambda_tilde <= 0.0) {
    pi[0] = 1.0;
    return pi;
  }
  if (service_rates_.empty() || service_rates_.front() <= 0.0) {
    // No relay can ever meet a destination (single cell): the chain only
    // fills and is absorbed at B.
    pi.back() = 1.0;
    return pi;
  }
  // pi(k) / pi(k-1) = lambda_tilde / mu_R(k). Work with weights relative to
  // the largest entry so neither tail under- nor overflows.
  std::vector<double> log_weight(states, 0.0);
  const double log_arrival = std::log(lambda_tilde);
  for (std::size_t k = 1; k < states; ++k) {
    log_weight[k] = log_weight[k - 1] + log_arrival - std::log(service_rates_[k - 1]);
  }
  const double peak = *std::max_element(log_weight.begin(), log_weight.end());
  double total = 0.0;
  for (std::size_t k = 0; k < states; ++k) {
    pi[k] = std::exp(log_weight[k] - peak);
    total += pi[k];
  }
  for (double& v : pi) v /= total;
  return pi;
}

RelayQueueModel CapacityModel::relay_model(double lambda_tilde) const {
  RelayQueueModel model;
  model.service_rates = service_rates_;
  model.arrival_rate = lambda_tilde;
  model.limiting_distribution = occupancy(lambda_tilde);
  return model;
}

double CapacityModel::local_service_rate(double p_full) const {
  return contact_.p_sd + contact_.p_sr * (1.0 - p_full);
}

double CapacityModel::relay_arrival_rate(double lambda, double p_full) const {
  return lambda * contact_.p_sr / local_service_rate(p_full);
}

FixedPointSolution CapacityModel::solve(double lambda) const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw DomainError("solve_fixed_point: lambda must lie in [0, 1]");
  }
  // F(x) = pi(B; lambda_tilde(x)) is non-decreasing with F(0) >= 0 and
  // F(1) <= 1, so h(x) = F(x) - x brackets a root on [0, 1].
  auto excess = [&](double x) {
    return occupancy(relay_arrival_rate(lambda, x)).back() - x;
  };
  double lo = 0.0;
  double hi = 1.0;
  double h_lo = excess(lo);
  double h_hi = excess(hi);
  if (h_lo < 0.0 || h_hi > 0.0) {
    throw SolverError("solve_fixed_point: root not bracketed on [0, 1]",
                      std::max(-h_lo, h_hi));
  }
  if (h_lo > 0.0 && h_hi < 0.0) {
    for (int it = 0; it < kFixedPointMaxIterations; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const double h_mid = excess(mid);
      if (h_mid == 0.0) {
        lo = hi = mid;
        h_lo = h_hi = 0.0;
        break;
      }
      if (h_mid > 0.0) {
        lo = mid;
        h_lo = h_mid;
      } else {
        hi = mid;
        h_hi = h_mid;
      }
    }
  }
  const double p_full = (h_lo == 0.0 || std::abs(h_lo) <= std::abs(h_hi)) ? lo : hi;

  FixedPointSolution sol;
  sol.lambda = lambda;
  sol.p_full = p_full;
  sol.mu_s = local_service_rate(p_full);
  sol.lambda_tilde = lambda * contact_.p_sr / sol.mu_s;
  sol.relay_model = relay_model(sol.lambda_tilde);
  sol.residual = std::abs(p_full - sol.relay_model.limiting_distribution.back());
  if (sol.residual > kFixedPointTolerance) {
    std::ostringstream msg;
    msg << "solve_fixed_point: residual " << sol.residual << " above tolerance at lambda="
        << lambda;
    throw SolverError(msg.str(), sol.residual);
  }
  return sol;
}

CapacityResult CapacityModel::capacity() const {
  // g(lambda) = mu_S(lambda) - lambda is strictly decreasing and
  // p_sd <= mu_S <= p_sd + p_sr, so the root lies in [p_sd, p_sd + p_sr].
  double lo = std::min(1.0, contact_.p_sd);
  double hi = std::min(1.0, contact_.p_sd + contact_.p_sr);
  FixedPointSolution at_lo = solve(lo);
  if (solve(hi).mu_s - hi > 0.0) {
    // Only reachable when mu_S(hi) == hi up to rounding.
    lo = hi;
    at_lo = solve(hi);
  }
  while (hi - lo > kCapacityTolerance * 1e-3) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    FixedPointSolution at_mid = solve(mid);
    if (at_mid.mu_s - mid > 0.0) {
      lo = mid;
      at_lo = std::move(at_mid);
    } else {
      hi = mid;
    }
  }
  return CapacityResult{lo, std::move(at_lo), config_};
}

double CapacityModel::local_queue_delay(double lambda) const {
  const FixedPointSolution sol = solve(lambda);
  if (!(sol.mu_s > lambda)) {
    std::ostringstream msg;
    msg << "unstable load: lambda=" << lambda << " is not below the throughput capacity";
    throw DomainError(msg.str());
  }
  return (1.0 - lambda) / (sol.mu_s - lambda);
}

}  // namespace relaycap
