#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "relaycap/analytic.hpp"
#include "relaycap/errors.hpp"

using namespace relaycap;

namespace {

// Stationary distribution of the explicit one-step transition matrix of the
// relay occupancy chain, by repeated squaring of P until every row agrees.
std::vector<double> stationary_by_matrix_power(const std::vector<double>& mu, double lt) {
  const std::size_t n = mu.size() + 1;
  std::vector<double> p(n * n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double up = k + 1 < n ? lt : 0.0;
    const double down = k > 0 ? mu[k - 1] : 0.0;
    if (k + 1 < n) p[k * n + k + 1] = up;
    if (k > 0) p[k * n + k - 1] = down;
    p[k * n + k] = 1.0 - up - down;
  }
  std::vector<double> sq(n * n);
  for (int it = 0; it < 200; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t m = 0; m < n; ++m) acc += p[i * n + m] * p[m * n + j];
        sq[i * n + j] = acc;
      }
    }
    p.swap(sq);
    double spread = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 1; i < n; ++i) spread = std::max(spread, std::abs(p[i * n + j] - p[j]));
    }
    if (spread < 1e-14) break;
  }
  return {p.begin(), p.begin() + static_cast<std::ptrdiff_t>(n)};
}

}  // namespace

TEST_CASE("network config invariants") {
  CHECK_NOTHROW(NetworkConfig(4, 1, 1));
  CHECK_THROWS_AS(NetworkConfig(2, 1, 1), ConfigError);
  CHECK_THROWS_AS(NetworkConfig(3, 1, 1), ConfigError);
  CHECK_THROWS_AS(NetworkConfig(72, 0, 5), ConfigError);
  CHECK_THROWS_AS(NetworkConfig(72, 36, 0), ConfigError);
}

TEST_CASE("contact probabilities, single cell with one pair") {
  const auto cp = contact_probabilities(2, 1);
  CHECK(cp.p == doctest::Approx(1.0));
  CHECK(cp.q == doctest::Approx(1.0));
  CHECK(cp.p_sd == doctest::Approx(0.5));
  CHECK(cp.p_sr == doctest::Approx(0.0));
  CHECK(cp.p_rd == doctest::Approx(0.0));
  CHECK_THROWS_AS(contact_probabilities(3, 1), DomainError);
}

TEST_CASE("contact probabilities, sparse network") {
  const auto cp = contact_probabilities(NetworkConfig(4, 100, 1));
  CHECK(cp.q == doctest::Approx(1.0 - std::pow(1.0 - 1e-4, 2)).epsilon(1e-12));
  CHECK(cp.q == doctest::Approx(1.9999e-4).epsilon(1e-12));
}

TEST_CASE("contact probabilities agree with Monte Carlo placement") {
  const NetworkConfig cfg(72, 36, 5);
  const auto cp = contact_probabilities(cfg);
  std::mt19937 gen(2024);
  std::uniform_int_distribution<int> cell(0, 35);
  const int trials = 10'000'000;
  long two_or_more = 0;
  long has_pair = 0;
  // Cell 0 is the tagged cell.
  for (int t = 0; t < trials; ++t) {
    int in_cell = 0;
    bool pair = false;
    for (int flow = 0; flow < 36; ++flow) {
      const bool a = cell(gen) == 0;
      const bool b = cell(gen) == 0;
      in_cell += a + b;
      pair = pair || (a && b);
    }
    two_or_more += in_cell >= 2;
    has_pair += pair;
  }
  const double p_hat = static_cast<double>(two_or_more) / trials;
  const double q_hat = static_cast<double>(has_pair) / trials;
  CHECK(std::abs(p_hat - cp.p) <= 3.0 * std::sqrt(cp.p * (1 - cp.p) / trials));
  CHECK(std::abs(q_hat - cp.q) <= 3.0 * std::sqrt(cp.q * (1 - cp.q) / trials));
  CHECK(cp.p_sd == doctest::Approx(36.0 / 72.0 * cp.q));
  CHECK(cp.p_sr == doctest::Approx(36.0 * (cp.p - cp.q) / 144.0));
  CHECK(cp.p_rd == cp.p_sr);
}

TEST_CASE("contact probability invariants over many configs") {
  for (std::int64_t n = 4; n <= 200; n += 2) {
    for (std::int64_t c : {std::int64_t{1}, n / 4 + 1, n / 2, n, 3 * n}) {
      const auto cp = contact_probabilities(NetworkConfig(n, c, 1));
      CHECK(cp.q >= 0.0);
      CHECK(cp.q <= cp.p);
      CHECK(cp.p <= 1.0);
      CHECK(cp.p_sr >= 0.0);
      CHECK(cp.p_sd + cp.p_sr + cp.p_rd <= 1.0 + 1e-15);
    }
  }
}

TEST_CASE("relay service rate, one packet") {
  for (auto [n, c] : {std::pair{72, 36}, std::pair{4, 3}, std::pair{128, 64}}) {
    const NetworkConfig cfg(n, c, 3);
    const auto cp = contact_probabilities(cfg);
    CHECK(service_rate_relay(cfg, 1) == doctest::Approx(cp.p_rd / (n - 2)).epsilon(1e-14));
  }
}

TEST_CASE("relay service rate, two packets two destinations") {
  const NetworkConfig cfg(4, 3, 2);
  const auto cp = contact_probabilities(cfg);
  CHECK(service_rate_relay(cfg, 2) == doctest::Approx(cp.p_rd * 2.0 / 3.0).epsilon(1e-14));
  CHECK_THROWS_AS(service_rate_relay(cfg, 0), DomainError);
  CHECK_THROWS_AS(service_rate_relay(cfg, 3), DomainError);
}

TEST_CASE("relay service rate agrees with Monte Carlo relay") {
  // 5 packets, destinations drawn uniformly over stars-and-bars arrangements
  // of 5 stars and 69 interior bars; each slot the relay meets a uniformly
  // chosen destination with probability p_rd.
  const NetworkConfig cfg(72, 36, 5);
  const auto cp = contact_probabilities(cfg);
  const double mu5 = service_rate_relay(cfg, 5);
  CHECK(mu5 > 0.0);
  CHECK(mu5 < cp.p_rd);

  const int destinations = 70;
  const int k = 5;
  const int symbols = destinations - 1 + k;
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> who(0, destinations - 1);
  const long trials = 20'000'000;
  long deliveries = 0;
  std::vector<int> stars;
  for (long t = 0; t < trials; ++t) {
    if (!(u(gen) < cp.p_rd)) continue;
    const int met = who(gen);
    // Uniform k-subset of symbol positions for the stars (Floyd's algorithm);
    // a star's destination is the number of bars before it.
    stars.clear();
    for (int j = symbols - k; j < symbols; ++j) {
      const int r = std::uniform_int_distribution<int>(0, j)(gen);
      if (std::find(stars.begin(), stars.end(), r) == stars.end()) stars.push_back(r);
      else stars.push_back(j);
    }
    std::sort(stars.begin(), stars.end());
    bool hit = false;
    for (int i = 0; i < k; ++i) hit = hit || (stars[static_cast<std::size_t>(i)] - i == met);
    deliveries += hit;
  }
  const double rate = static_cast<double>(deliveries) / static_cast<double>(trials);
  CHECK(std::abs(rate - mu5) <= 3.0 * std::sqrt(mu5 * (1 - mu5) / static_cast<double>(trials)));
}

TEST_CASE("relay service rates are increasing and bounded") {
  for (auto [n, c, b] : {std::tuple{72, 36, 30}, std::tuple{8, 4, 50}, std::tuple{200, 7, 20}}) {
    const CapacityModel model(NetworkConfig(n, c, b));
    const auto& mu = model.service_rates();
    for (std::size_t k = 0; k < mu.size(); ++k) {
      CHECK(mu[k] > 0.0);
      CHECK(mu[k] <= 1.0);
      if (k > 0) CHECK(mu[k] >= mu[k - 1]);
    }
  }
}

TEST_CASE("limiting distribution without arrivals") {
  const auto m = limiting_distribution(NetworkConfig(72, 36, 5), 0.0);
  REQUIRE(m.limiting_distribution.size() == 6);
  CHECK(m.limiting_distribution[0] == 1.0);
  for (std::size_t k = 1; k < 6; ++k) CHECK(m.limiting_distribution[k] == 0.0);
}

TEST_CASE("limiting distribution, two-state chain") {
  const NetworkConfig cfg(72, 36, 1);
  const double mu1 = service_rate_relay(cfg, 1);
  for (double lt : {1e-4, 0.003, 0.2, 0.9}) {
    const auto m = limiting_distribution(cfg, lt);
    CHECK(m.limiting_distribution[1] == doctest::Approx(lt / (mu1 + lt)).epsilon(1e-14));
    CHECK(m.limiting_distribution[0] == doctest::Approx(mu1 / (mu1 + lt)).epsilon(1e-14));
  }
}

TEST_CASE("limiting distribution matches the explicit transition matrix") {
  const NetworkConfig cfg(72, 36, 5);
  const auto m = limiting_distribution(cfg, 0.001);
  const auto oracle = stationary_by_matrix_power(m.service_rates, 0.001);
  for (std::size_t k = 0; k < oracle.size(); ++k) {
    CHECK(std::abs(m.limiting_distribution[k] - oracle[k]) <= 1e-10);
  }
}

TEST_CASE("limiting distribution rejects invalid rates") {
  const NetworkConfig cfg(72, 36, 5);
  CHECK_THROWS_AS(limiting_distribution(cfg, -0.1), DomainError);
  CHECK_THROWS_AS(limiting_distribution(cfg, 1.0), DomainError);
}

TEST_CASE("limiting distribution survives large buffers") {
  // mu_R(k)! underflows double long before B = 2000.
  const CapacityModel model(NetworkConfig(200, 100, 2000));
  const auto pi = model.occupancy(0.05);
  double sum = 0.0;
  for (double v : pi) {
    CHECK(std::isfinite(v));
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fixed point at zero load") {
  const NetworkConfig cfg(72, 36, 5);
  const auto cp = contact_probabilities(cfg);
  const auto sol = solve_fixed_point(cfg, 0.0);
  CHECK(sol.p_full == 0.0);
  CHECK(sol.mu_s == doctest::Approx(cp.p_sd + cp.p_sr).epsilon(1e-15));
  CHECK(sol.lambda_tilde == 0.0);
}

TEST_CASE("fixed point at the reported capacity") {
  const auto sol = solve_fixed_point(NetworkConfig(72, 36, 5), 0.0232);
  CHECK(std::abs(sol.mu_s - 0.0232) <= 0.0005);
}

TEST_CASE("fixed point solution is self-consistent") {
  const NetworkConfig cfg(72, 36, 10);
  const CapacityModel model(cfg);
  const auto& cp = model.contact();
  for (double lambda : {0.001, 0.01, 0.03, 0.2, 1.0}) {
    CAPTURE(lambda);
    const auto sol = model.solve(lambda);
    CHECK(sol.mu_s == cp.p_sd + cp.p_sr * (1.0 - sol.p_full));
    CHECK(sol.lambda_tilde == lambda * cp.p_sr / sol.mu_s);
    CHECK(sol.residual <= kFixedPointTolerance);
    CHECK(std::abs(sol.p_full - sol.relay_model.limiting_distribution.back()) <= 1e-12);
  }
  CHECK_THROWS_AS(model.solve(-0.1), DomainError);
  CHECK_THROWS_AS(model.solve(1.5), DomainError);
}

TEST_CASE("fixed point agrees with plain fixed-point iteration") {
  const CapacityModel model(NetworkConfig(72, 36, 8));
  for (double lambda : {0.005, 0.02, 0.028}) {
    double x = 0.0;
    for (int it = 0; it < 200000; ++it) {
      const double next = model.occupancy(model.relay_arrival_rate(lambda, x)).back();
      if (std::abs(next - x) < 1e-15) break;
      x = next;
    }
    CHECK(model.solve(lambda).p_full == doctest::Approx(x).epsilon(1e-9));
  }
}

TEST_CASE("fixed-point map is monotone with a single crossing") {
  for (auto [n, c, b] : {std::tuple{72, 36, 5}, std::tuple{16, 8, 1}, std::tuple{200, 20, 50},
                         std::tuple{4, 1, 3}, std::tuple{128, 64, 12}}) {
    const CapacityModel model(NetworkConfig(n, c, b));
    for (double lambda : {0.001, 0.02, 0.1, 0.5, 1.0}) {
      double prev_f = -1.0;
      int sign_changes = 0;
      double prev_h = 0.0;
      for (int i = 0; i <= 2000; ++i) {
        const double x = i / 2000.0;
        const double f = model.occupancy(model.relay_arrival_rate(lambda, x)).back();
        CHECK(f >= prev_f - 1e-15);
        prev_f = f;
        const double h = f - x;
        if (i > 0 && ((prev_h > 0 && h < 0) || (prev_h < 0 && h > 0))) ++sign_changes;
        if (h != 0.0) prev_h = h;
      }
      CHECK(sign_changes <= 1);
    }
  }
}

TEST_CASE("throughput capacity reproduces the reported values") {
  const struct {
    int buffer;
    double expected;
  } cases[] = {{5, 0.0232}, {8, 0.0283}, {10, 0.0315}};
  for (const auto& c : cases) {
    const auto cap = throughput_capacity(NetworkConfig(72, 36, c.buffer));
    CAPTURE(c.buffer);
    CHECK(std::abs(cap.throughput_capacity - c.expected) <= 0.0005);
    CHECK(std::abs(cap.solution_at_capacity.mu_s - cap.throughput_capacity) <= 1e-9);
  }
}

TEST_CASE("capacity lies between direct-only and full relay rates") {
  std::mt19937_64 gen(5);
  for (int i = 0; i < 40; ++i) {
    const std::int64_t n = 4 + 2 * static_cast<std::int64_t>(gen() % 99);
    const std::int64_t c = 1 + static_cast<std::int64_t>(gen() % static_cast<std::uint64_t>(n));
    const std::int64_t b = 1 + static_cast<std::int64_t>(gen() % 50);
    const NetworkConfig cfg(n, c, b);
    const auto cp = contact_probabilities(cfg);
    const auto cap = throughput_capacity(cfg);
    CAPTURE(n);
    CAPTURE(c);
    CAPTURE(b);
    CHECK(cap.throughput_capacity >= cp.p_sd - 1e-12);
    CHECK(cap.throughput_capacity <= cp.p_sd + cp.p_sr + 1e-12);
  }
}

TEST_CASE("capacity grows with buffer and shrinks with network size") {
  for (int n : {16, 72}) {
    double prev = 0.0;
    for (int b = 1; b <= 30; ++b) {
      const double tc = throughput_capacity(NetworkConfig(n, n / 2, b)).throughput_capacity;
      CHECK(tc >= prev);
      prev = tc;
    }
  }
  double prev = 1.0;
  for (int n : {8, 16, 32, 64, 128}) {
    const double tc = throughput_capacity(NetworkConfig(n, n / 2, 5)).throughput_capacity;
    CHECK(tc < prev);
    prev = tc;
  }
}

TEST_CASE("local queue delay") {
  const NetworkConfig cfg(72, 36, 5);
  const CapacityModel model(cfg);
  const auto& cp = model.contact();
  CHECK(model.local_queue_delay(0.0) == doctest::Approx(1.0 / (cp.p_sd + cp.p_sr)));
  const double tc = model.capacity().throughput_capacity;
  double prev = 0.0;
  for (double rho : {0.5, 0.9, 0.99, 0.999, 0.9999}) {
    const double d = model.local_queue_delay(rho * tc);
    CHECK(d > prev);
    prev = d;
  }
  CHECK(prev > 1e4);
  CHECK_THROWS_AS(model.local_queue_delay(tc * 1.0001), DomainError);
  CHECK_THROWS_AS(local_queue_delay(cfg, 0.5), DomainError);
}

TEST_CASE("degenerate single-cell network has no relay path") {
  const NetworkConfig cfg(10, 1, 4);
  const auto cap = throughput_capacity(cfg);
  const auto cp = contact_probabilities(cfg);
  CHECK(cp.p_sr == 0.0);
  CHECK(cap.throughput_capacity == doctest::Approx(cp.p_sd).epsilon(1e-9));
  CHECK(cap.throughput_capacity >= cp.p_sd);
  CHECK(solve_fixed_point(cfg, 0.05).p_full == 0.0);
  // A relay that is fed but never served is absorbed at B.
  const auto absorbed = limiting_distribution(cfg, 0.3).limiting_distribution;
  REQUIRE(absorbed.size() == 5);
  CHECK(absorbed[4] == 1.0);
  CHECK(absorbed[0] == 0.0);
}
