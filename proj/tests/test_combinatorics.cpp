#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "relaycap/combinatorics.hpp"
#include "relaycap/errors.hpp"

using namespace relaycap;
using combinatorics::log_binomial;
using combinatorics::occupancy_distribution;

namespace {

struct StarsAndBarsCount {
  std::int64_t total = 0;
  std::vector<std::int64_t> by_distinct;  // index i - 1
};

// Literal enumeration: every placement of k stars among the n + k - 1 interior
// symbols (the rest are the n - 1 interior bars); count the non-empty gaps.
StarsAndBarsCount enumerate_stars_and_bars(int n, int k) {
  StarsAndBarsCount out;
  out.by_distinct.assign(static_cast<std::size_t>(k), 0);
  const int slots = n + k - 1;
  for (std::uint32_t mask = 0; mask < (1U << slots); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    int distinct = 0;
    int in_gap = 0;
    for (int s = 0; s < slots; ++s) {
      if (mask & (1U << s)) {
        ++in_gap;
      } else {
        distinct += in_gap > 0;
        in_gap = 0;
      }
    }
    distinct += in_gap > 0;
    ++out.total;
    ++out.by_distinct[static_cast<std::size_t>(distinct - 1)];
  }
  return out;
}

}  // namespace

TEST_CASE("log_binomial small values") {
  CHECK(log_binomial(5, 0) == 0.0);
  CHECK(log_binomial(7, 7) == 0.0);
  CHECK(log_binomial(4, 2) == doctest::Approx(std::log(6.0)).epsilon(1e-15));
}

TEST_CASE("log_binomial matches big-integer oracle") {
  // Frozen from tests/oracles/log_binomial_oracle.py (exact integers, 50 digits).
  struct Case {
    std::int64_t n, k;
    double expected;
  };
  const Case cases[] = {
      {4, 2, 1.791759469228055},
      {1000, 500, 689.46726156785118},
      {1000, 1, 6.9077552789821371},
      {1000, 33, 142.36764240913769},
      {74, 5, 16.594874029677245},
      {1000000, 1, 13.815510557964274},
      {1000000, 2, 26.937872935368103},
      {1000000, 32, 360.53788239353365},
      {1000000, 33, 370.85685338951944},
      {1000000, 1000, 7902.8827129761441},
      {1000000, 500000, 693140.04701306368},
      {1000000, 999999, 13.815510557964274},
      {699, 200, 415.05191438953782},
  };
  for (const auto& c : cases) {
    CAPTURE(c.n);
    CAPTURE(c.k);
    const double got = log_binomial(c.n, c.k);
    CHECK(std::abs(got - c.expected) <= 1e-12 * std::abs(c.expected));
  }
}

TEST_CASE("log_binomial is exactly symmetric") {
  for (std::int64_t n : {10, 63, 64, 65, 1000, 123457}) {
    for (std::int64_t k = 0; k <= n; k += 1 + n / 50) {
      CHECK(log_binomial(n, k) == log_binomial(n, n - k));
    }
  }
}

TEST_CASE("log_binomial rejects invalid arguments") {
  CHECK_THROWS_AS(log_binomial(3, 4), DomainError);
  CHECK_THROWS_AS(log_binomial(-1, 0), DomainError);
  CHECK_THROWS_AS(log_binomial(3, -1), DomainError);
}

TEST_CASE("occupancy of a single packet") {
  const auto d = occupancy_distribution(70, 1);
  REQUIRE(d.probs.size() == 1);
  CHECK(d.probs[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("occupancy of two packets over two destinations") {
  // Three equally likely arrangements: **|, *|*, |**.
  const auto d = occupancy_distribution(2, 2);
  REQUIRE(d.probs.size() == 2);
  CHECK(d.probs[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(d.probs[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("occupancy of four packets over three destinations") {
  const auto counts = enumerate_stars_and_bars(3, 4);
  CHECK(counts.total == 15);
  const auto d = occupancy_distribution(3, 4);
  REQUIRE(d.probs.size() == 3);
  double sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(d.probs[i] == doctest::Approx(static_cast<double>(counts.by_distinct[i]) / 15.0));
    sum += d.probs[i];
  }
  CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("occupancy matches exhaustive enumeration for small cases") {
  for (int n = 1; n <= 6; ++n) {
    for (int k = 1; k <= 6; ++k) {
      CAPTURE(n);
      CAPTURE(k);
      const auto counts = enumerate_stars_and_bars(n, k);
      const auto d = occupancy_distribution(n, k);
      REQUIRE(d.probs.size() == static_cast<std::size_t>(std::min(n, k)));
      for (int i = 1; i <= k; ++i) {
        const double exact = static_cast<double>(counts.by_distinct[i - 1]) /
                             static_cast<double>(counts.total);
        const double got = i <= n ? d.probs[i - 1] : 0.0;
        CHECK(std::abs(got - exact) <= 4e-16);
      }
    }
  }
}

TEST_CASE("occupancy probabilities are normalized") {
  double worst = 0.0;
  int out_of_range = 0;
  int wrong_length = 0;
  for (std::int64_t n = 3; n <= 500; ++n) {
    for (std::int64_t k = 1; k <= 200; ++k) {
      const auto d = occupancy_distribution(n, k);
      double sum = 0.0;
      for (double p : d.probs) {
        out_of_range += !(p >= 0.0 && p <= 1.0);
        sum += p;
      }
      wrong_length += d.probs.size() != static_cast<std::size_t>(std::min(n, k));
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  CHECK(out_of_range == 0);
  CHECK(wrong_length == 0);
  CHECK(worst <= 1e-12);
}

TEST_CASE("occupancy rejects empty inputs") {
  CHECK_THROWS_AS(occupancy_distribution(0, 3), DomainError);
  CHECK_THROWS_AS(occupancy_distribution(3, 0), DomainError);
}
