// relaycap: throughput capacity of two-hop relay MANETs with finite relay buffers.
//
//   relaycap analyze  --nodes 72 --cells 36 --buffer 5 --capacity
//   relaycap simulate --nodes 72 --cells 36 --buffer 5 --lambda 0.0116 --out run1
//   relaycap sweep    --spec recipes/capacity_vs_buffer.json --out results/capacity_vs_buffer
//   relaycap validate --spec recipes/throughput_vs_load.json --out results/throughput_vs_load
//
// Exit codes: 0 success, 1 usage/config error, 2 validation failure, 3 internal/solver error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "relaycap/analytic.hpp"
#include "relaycap/errors.hpp"
#include "relaycap/experiments.hpp"
#include "relaycap/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace relaycap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInternal = 3;
constexpr const char* kOutDirEnv = "RELAYCAP_OUT_DIR";

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

int default_jobs() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// --out wins, then $RELAYCAP_OUT_DIR, then `fallback` (may be empty: no files).
std::optional<fs::path> resolve_out_dir(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return fs::path(flag);
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') {
    return fs::path(env);
  }
  if (!fallback.empty()) return fs::path(fallback);
  return std::nullopt;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << std::setw(2) << doc << '\n';
}

// Manifest is written before any result file and rewritten on completion.
class Manifest {
 public:
  Manifest(std::optional<fs::path> dir, std::string command, json config)
      : dir_(std::move(dir)),
        doc_{{"schema", "relaycap-manifest"},
             {"schema_version", 1},
             {"tool_version", experiments::kVersion},
             {"command", std::move(command)},
             {"config", std::move(config)},
             {"status", "running"},
             {"outputs", json::array()}} {
    if (!dir_) return;
    fs::create_directories(*dir_);
    flush();
  }

  fs::path output(const std::string& name) {
    doc_["outputs"].push_back(name);
    flush();
    return *dir_ / name;
  }

  void finish(const std::string& status, const json& extra = json::object()) {
    doc_["status"] = status;
    for (const auto& [k, v] : extra.items()) doc_[k] = v;
    flush();
  }

  bool enabled() const { return dir_.has_value(); }

 private:
  void flush() const {
    if (dir_) write_json(*dir_ / "manifest.json", doc_);
  }

  std::optional<fs::path> dir_;
  json doc_;
};

json network_json(const NetworkConfig& c) {
  return {{"nodes", c.nodes()}, {"cells", c.cells()}, {"buffer", c.buffer()}};
}

void print_contact(std::ostream& os, const ContactProbabilities& cp) {
  os << "p = " << fmt(cp.p) << "  q = " << fmt(cp.q) << "  p_sd = " << fmt(cp.p_sd)
     << "  p_sr = p_rd = " << fmt(cp.p_sr) << '\n';
}

struct NetworkFlags {
  std::int64_t nodes = 0;
  std::int64_t cells = 0;
  std::int64_t buffer = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--nodes,-N", nodes, "Number of nodes (even, >= 4)")->required();
    cmd->add_option("--cells,-C", cells, "Number of cells")->required();
    cmd->add_option("--buffer,-B", buffer, "Relay buffer size in packets")->required();
  }
  NetworkConfig config() const { return NetworkConfig(nodes, cells, buffer); }
};

struct AnalyzeFlags {
  NetworkFlags net;
  std::optional<double> lambda;
  bool capacity = false;
  std::string json_path;
  std::string out;
};

int run_analyze(const AnalyzeFlags& f) {
  const NetworkConfig config = f.net.config();
  const CapacityModel model(config);
  json resolved = network_json(config);
  resolved["mode"] = f.lambda ? "lambda" : "capacity";
  if (f.lambda) resolved["lambda"] = *f.lambda;
  Manifest manifest(resolve_out_dir(f.out, ""), "analyze", resolved);

  json report = {{"config", network_json(config)}};
  const auto& cp = model.contact();
  report["contact"] = {{"p", cp.p}, {"q", cp.q}, {"p_sd", cp.p_sd}, {"p_sr", cp.p_sr},
                       {"p_rd", cp.p_rd}};
  std::cout << "N = " << config.nodes() << "  C = " << config.cells()
            << "  B = " << config.buffer() << '\n';
  print_contact(std::cout, cp);

  if (f.lambda) {
    const double lambda = *f.lambda;
    const auto sol = model.solve(lambda);
    std::cout << "lambda = " << fmt(lambda) << '\n'
              << "P_B = " << fmt(sol.p_full) << "  mu_S = " << fmt(sol.mu_s)
              << "  lambda_tilde = " << fmt(sol.lambda_tilde) << '\n';
    std::cout << "mu_R(k) =";
    for (double v : sol.relay_model.service_rates) std::cout << ' ' << fmt(v);
    std::cout << "\npi(k) =";
    for (double v : sol.relay_model.limiting_distribution) std::cout << ' ' << fmt(v);
    std::cout << '\n';
    report["solution"] = experiments::to_json(sol);
    const double delay = model.local_queue_delay(lambda);  // throws "unstable load"
    std::cout << "E[D_S] = " << fmt(delay) << " slots\n";
    report["local_queue_delay"] = delay;
  } else {
    const auto cap = model.capacity();
    std::cout << "T_c = " << fmt(cap.throughput_capacity) << " packets/slot\n";
    report["throughput_capacity"] = cap.throughput_capacity;
    report["solution_at_capacity"] = experiments::to_json(cap.solution_at_capacity);
  }
  if (!f.json_path.empty()) write_json(f.json_path, report);
  if (manifest.enabled()) write_json(manifest.output("analysis.json"), report);
  manifest.finish("complete");
  return kExitOk;
}

struct SimulateFlags {
  NetworkFlags net;
  std::optional<double> lambda;
  std::optional<double> rho;
  std::string mobility = "iid";
  double slots = 1e7;
  std::optional<double> warmup;
  std::uint64_t seed = 1;
  int replications = 1;
  int jobs = default_jobs();
  std::string out;
  std::string trace;
};

int run_simulate(const SimulateFlags& f) {
  const NetworkConfig config = f.net.config();
  const auto kind = sim::parse_mobility(f.mobility);
  const auto mobility = sim::MobilityModel::make(kind, config.cells());
  if (f.lambda.has_value() == f.rho.has_value()) {
    throw ConfigError("give exactly one of --lambda or --rho");
  }
  const double lambda =
      f.lambda ? *f.lambda : *f.rho * CapacityModel(config).capacity().throughput_capacity;
  const auto slots = static_cast<sim::Slot>(f.slots);
  const auto warmup = f.warmup ? static_cast<sim::Slot>(*f.warmup) : slots / 10;
  if (f.replications < 1) throw ConfigError("--replications must be >= 1");
  if (!f.trace.empty() && f.replications != 1) {
    throw ConfigError("--trace needs --replications 1");
  }
  const sim::SimConfig base{config, lambda, mobility, slots, warmup, f.seed, 0};
  base.validate();

  json resolved = network_json(config);
  resolved.update({{"lambda", lambda},
                   {"mobility", std::string(sim::to_string(kind))},
                   {"slots", slots},
                   {"warmup", warmup},
                   {"seed", f.seed},
                   {"replications", f.replications},
                   {"trace", f.trace}});
  Manifest manifest(resolve_out_dir(f.out, ""), "simulate", resolved);

  std::vector<sim::SimStats> runs;
  if (!f.trace.empty()) {
    const fs::path trace_path = manifest.enabled() ? manifest.output(f.trace) : fs::path(f.trace);
    std::ofstream trace(trace_path);
    if (!trace) throw std::runtime_error("cannot write " + trace_path.string());
    trace << "# slot cell event sender receiver source sequence\n";
    sim::Simulation simulation(base);
    simulation.set_trace([&](const sim::TransmissionEvent& e) {
      trace << sim::format_trace_line(e) << '\n';
    });
    runs.push_back(simulation.run());
  } else {
    runs = experiments::replicate(base, f.replications, f.jobs);
  }
  const auto summary = experiments::summarize(runs);
  std::cout << "lambda = " << fmt(lambda) << "  mobility = " << sim::to_string(kind)
            << "  measured slots = " << runs.front().measured_slots
            << "  replications = " << runs.size() << '\n'
            << "throughput = " << fmt(summary.throughput_mean) << " (std "
            << fmt(summary.throughput_std) << ")\n"
            << "relay full fraction = " << fmt(summary.p_full_mean) << '\n'
            << "mean local delay = " << fmt(summary.delay_mean) << " slots\n"
            << "mean relay occupancy = " << fmt(runs.front().mean_relay_occupancy) << '\n';

  if (manifest.enabled()) {
    json doc = {{"config", resolved}, {"replications", json::array()}};
    for (const auto& s : runs) doc["replications"].push_back(experiments::to_json(s));
    write_json(manifest.output("stats.json"), doc);
  }
  manifest.finish("complete");
  return kExitOk;
}

struct SpecFlags {
  std::string spec_path;
  std::string out;
  std::optional<int> jobs;
  std::optional<int> replications;
  std::optional<double> horizon;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

experiments::SweepSpec load_spec(const SpecFlags& f) {
  std::ifstream is(f.spec_path);
  if (!is) throw ConfigError("cannot open spec file " + f.spec_path);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("spec file " + f.spec_path + " is not valid JSON: " + e.what());
  }
  // Flags override spec fields.
  if (f.replications) doc["replications"] = *f.replications;
  if (f.horizon) doc["horizon"] = *f.horizon;
  if (f.seed) doc["base_seed"] = *f.seed;
  if (f.jobs) doc["jobs"] = *f.jobs;
  else if (!doc.contains("jobs")) doc["jobs"] = default_jobs();
  return experiments::SweepSpec::from_json(doc);
}

experiments::Progress progress_line(bool quiet) {
  if (quiet) return {};
  return [](std::size_t done, std::size_t total) {
    std::cerr << "\rsimulated " << done << '/' << total << std::flush;
    if (done == total) std::cerr << '\n';
  };
}

int run_sweep(const SpecFlags& f) {
  const auto spec = load_spec(f);
  Manifest manifest(resolve_out_dir(f.out, "results"), "sweep", spec.to_json());
  const auto rows = experiments::run_sweep(spec, progress_line(f.quiet));
  {
    std::ofstream csv(manifest.output("results.csv"));
    experiments::write_results_csv(csv, rows);
  }
  experiments::write_results_csv(std::cout, rows);
  manifest.finish("complete");
  return kExitOk;
}

int run_validate(const SpecFlags& f) {
  const auto spec = load_spec(f);
  Manifest manifest(resolve_out_dir(f.out, "results"), "validate", spec.to_json());
  const auto report = experiments::validate(spec, progress_line(f.quiet));
  {
    std::ofstream csv(manifest.output("results.csv"));
    experiments::write_results_csv(csv, report.rows);
  }
  write_json(manifest.output("validation.json"), report.to_json());
  for (const auto& p : report.points) {
    std::cout << (p.pass ? "PASS" : "FAIL") << "  N=" << p.config.nodes()
              << " C=" << p.config.cells() << " B=" << p.config.buffer() << ' '
              << sim::to_string(p.mobility) << " rho=" << fmt(p.rho)
              << "  simulated=" << fmt(p.simulated) << " expected=" << fmt(p.expected)
              << "  rel.err=" << fmt(p.relative_error) << " (tol " << fmt(p.tolerance) << ")\n";
  }
  for (const auto& g : report.gaps) {
    std::cout << (g.pass ? "PASS" : "FAIL") << "  N=" << g.config.nodes()
              << " rho=" << fmt(g.rho) << "  |walk - iid| / T_c = " << fmt(g.gap_over_tc)
              << " (tol " << fmt(g.tolerance) << ")\n";
  }
  const bool ok = report.passed();
  manifest.finish(ok ? "complete" : "validation_failed", {{"passed", ok}});
  return ok ? kExitOk : kExitValidation;
}

void add_spec_flags(CLI::App* cmd, SpecFlags& f) {
  cmd->add_option("--spec", f.spec_path, "Experiment recipe (JSON)")->required();
  cmd->add_option("--out", f.out, "Output directory (default $RELAYCAP_OUT_DIR or ./results)");
  cmd->add_option("--jobs,-j", f.jobs, "Concurrent replications (default: hardware threads)");
  cmd->add_option("--replications", f.replications, "Override spec replications");
  cmd->add_option("--horizon", f.horizon, "Override spec horizon (slots)");
  cmd->add_option("--seed", f.seed, "Override spec base seed");
  cmd->add_flag("--quiet,-q", f.quiet, "No progress line");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Throughput capacity of two-hop relay MANETs with finite relay buffers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", experiments::kVersion);

  AnalyzeFlags analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Closed-form capacity / fixed point");
  analyze.net.add_to(analyze_cmd);
  auto* lambda_opt = analyze_cmd->add_option("--lambda", analyze.lambda, "Arrival rate per node");
  auto* cap_flag = analyze_cmd->add_flag("--capacity", analyze.capacity, "Report T_c");
  lambda_opt->excludes(cap_flag);
  analyze_cmd->add_option("--json", analyze.json_path, "Also write a JSON report here");
  analyze_cmd->add_option("--out", analyze.out, "Output directory for manifest + analysis.json");

  SimulateFlags simulate;
  auto* sim_cmd = app.add_subcommand("simulate", "Slot-level simulation");
  simulate.net.add_to(sim_cmd);
  auto* sim_lambda = sim_cmd->add_option("--lambda", simulate.lambda, "Arrival rate per node");
  auto* sim_rho = sim_cmd->add_option("--rho", simulate.rho, "Load as a multiple of T_c");
  sim_lambda->excludes(sim_rho);
  sim_cmd->add_option("--mobility", simulate.mobility, "iid or walk")
      ->check(CLI::IsMember({"iid", "walk", "random_walk"}));
  sim_cmd->add_option("--slots", simulate.slots, "Horizon in slots, warmup included");
  sim_cmd->add_option("--warmup", simulate.warmup, "Warmup slots (default 10% of horizon)");
  sim_cmd->add_option("--seed", simulate.seed, "RNG seed");
  sim_cmd->add_option("--replications", simulate.replications, "Independent replications");
  sim_cmd->add_option("--jobs,-j", simulate.jobs, "Concurrent replications");
  sim_cmd->add_option("--out", simulate.out, "Output directory for manifest + stats.json");
  sim_cmd->add_option("--trace", simulate.trace, "Write the per-event trace to this file");

  SpecFlags sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment recipe, write CSV + manifest");
  add_spec_flags(sweep_cmd, sweep);
  SpecFlags validate;
  auto* validate_cmd =
      app.add_subcommand("validate", "Compare simulation to analysis; exit 2 on any failure");
  add_spec_flags(validate_cmd, validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*analyze_cmd) {
      if (!analyze.lambda && !analyze.capacity) analyze.capacity = true;
      return run_analyze(analyze);
    }
    if (*sim_cmd) return run_simulate(simulate);
    if (*sweep_cmd) return run_sweep(sweep);
    if (*validate_cmd) return run_validate(validate);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << " (residual " << e.residual() << ")\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
