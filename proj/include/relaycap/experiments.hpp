#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "relaycap/analytic.hpp"
#include "relaycap/simulator.hpp"

namespace relaycap::experiments {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSpecVersion = 1;

enum class LoadKind { lambda, rho };

struct Tolerances {
  double linear = 0.02;      // relative, rho <= 1
  double saturated = 0.03;   // relative, rho > 1
  double mobility = 0.05;    // |walk - iid| as a fraction of T_c
};

// Experiment recipe. Parsed from the versioned JSON schema documented in
// recipes/README.md; every field has a default except grid and loads.
struct SweepSpec {
  std::string name = "sweep";
  std::vector<NetworkConfig> grid;
  LoadKind load_kind = LoadKind::rho;
  std::vector<double> loads;
  std::vector<sim::MobilityKind> mobility{sim::MobilityKind::iid};
  int replications = 10;
  sim::Slot horizon = 10'000'000;
  double warmup_fraction = 0.1;
  std::uint64_t base_seed = 1;
  bool simulate = true;
  int jobs = 1;
  Tolerances tolerances;

  sim::Slot warmup_slots() const;
  // Throws ConfigError naming the offending field.
  void validate() const;

  static SweepSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct AnalyticPoint {
  double tc = 0.0;
  double mu_s = 0.0;
  double p_full = 0.0;
  std::optional<double> delay;  // empty when lambda >= T_c
};

struct SimulatedPoint {
  int replications = 0;
  double throughput_mean = 0.0;
  double throughput_std = 0.0;  // sample std across replications
  double p_full_mean = 0.0;
  double p_full_std = 0.0;
  double delay_mean = 0.0;
  double delay_std = 0.0;

  double p_full_stderr() const;
};

struct SweepResult {
  NetworkConfig config;
  sim::MobilityKind mobility = sim::MobilityKind::iid;
  double lambda = 0.0;
  double rho = 0.0;
  AnalyticPoint analytic;
  std::optional<SimulatedPoint> simulated;
  sim::Slot horizon = 0;
  std::uint64_t seed = 0;
};

struct CurvePoint {
  double lambda = 0.0;
  double mu_s = 0.0;
};

struct CapacityRow {
  NetworkConfig config;
  double tc = 0.0;
  double p_sd = 0.0;
  double upper = 0.0;  // p_sd + p_sr
  double infinite_buffer_reference = kInfiniteBufferCapacityReference;
};

// mu_S(lambda) along a lambda grid (the capacity is where it meets the identity).
std::vector<CurvePoint> curve_mu_s(const NetworkConfig& config,
                                   const std::vector<double>& lambda_grid);

// T_c for every (N, B) with C = N / nodes_per_cell.
std::vector<CapacityRow> sweep_capacity_vs_buffer(const std::vector<std::int64_t>& nodes,
                                                  std::int64_t buffer_min,
                                                  std::int64_t buffer_max,
                                                  std::int64_t nodes_per_cell = 2);

std::vector<CapacityRow> sweep_capacity_vs_n(const std::vector<std::int64_t>& nodes,
                                             std::int64_t buffer,
                                             std::int64_t nodes_per_cell = 2);

// Smallest B after which adding one more buffer slot gains less than
// `fraction` of the first increment T_c(2) - T_c(1). Rows must share N and C
// and be ordered by consecutive B. Returns nullopt if the gain never drops.
std::optional<std::int64_t> diminishing_returns_knee(const std::vector<CapacityRow>& rows,
                                                     double fraction = 0.1);

// Seed for one sweep row; replications then use streams 0..R-1 of this seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t grid_index, std::uint64_t load_index,
                          std::uint64_t mobility_index);

// Runs `replications` independent copies of `base` (streams 0..R-1), at most
// `jobs` at a time. Output order is by replication regardless of jobs.
std::vector<sim::SimStats> replicate(const sim::SimConfig& base, int replications, int jobs);

SimulatedPoint summarize(const std::vector<sim::SimStats>& runs);

using Progress = std::function<void(std::size_t done, std::size_t total)>;

// Every (grid point, load, mobility) row, in that nesting order.
std::vector<SweepResult> run_sweep(const SweepSpec& spec, const Progress& progress = {});

struct ValidationPoint {
  NetworkConfig config;
  sim::MobilityKind mobility = sim::MobilityKind::iid;
  double rho = 0.0;
  double expected = 0.0;   // min(rho, 1) * T_c
  double simulated = 0.0;
  double relative_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct MobilityGap {
  NetworkConfig config;
  double rho = 0.0;
  double iid = 0.0;
  double walk = 0.0;
  double gap_over_tc = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct ValidationReport {
  std::vector<SweepResult> rows;
  std::vector<ValidationPoint> points;
  std::vector<MobilityGap> gaps;
  bool passed() const;
  nlohmann::json to_json() const;
};

// Simulated throughput against min(rho, 1) * T_c for every rho-load row of the
// spec, plus the random-walk / i.i.d. gap wherever both models ran.
ValidationReport validate(const SweepSpec& spec, const Progress& progress = {});

// CSV columns: N,C,B,mobility,lambda,rho,tc_analytic,mu_s_analytic,pb_analytic,
// delay_analytic,throughput_sim_mean,throughput_sim_std,pb_sim,replications,horizon,seed
extern const char* const kResultsCsvHeader;
void write_results_csv(std::ostream& os, const std::vector<SweepResult>& rows);
void write_capacity_csv(std::ostream& os, const std::vector<CapacityRow>& rows);

nlohmann::json to_json(const sim::SimStats& stats);
nlohmann::json to_json(const FixedPointSolution& sol);

}  // namespace relaycap::experiments
