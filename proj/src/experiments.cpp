#include "relaycap/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "relaycap/errors.hpp"
#include "relaycap/rng.hpp"

namespace relaycap::experiments {

using nlohmann::json;

namespace {

[[noreturn]] void field_error(const std::string& field, const std::string& why) {
  throw ConfigError("spec field '" + field + "': " + why);
}

template <typename T>
T get_field(const json& doc, const char* field, T fallback) {
  if (!doc.contains(field)) return fallback;
  try {
    return doc.at(field).get<T>();
  } catch (const json::exception& e) {
    field_error(field, e.what());
  }
}

std::vector<std::int64_t> int_list(const json& node, const std::string& field) {
  if (node.is_number_integer()) return {node.get<std::int64_t>()};
  if (node.is_object()) {
    if (!node.contains("from") || !node.contains("to")) field_error(field, "range needs from/to");
    const auto from = node.at("from").get<std::int64_t>();
    const auto to = node.at("to").get<std::int64_t>();
    if (to < from) field_error(field, "empty range");
    std::vector<std::int64_t> out;
    for (auto v = from; v <= to; ++v) out.push_back(v);
    return out;
  }
  if (!node.is_array()) field_error(field, "expected integer, list or {from, to}");
  std::vector<std::int64_t> out;
  for (const auto& v : node) {
    if (!v.is_number_integer()) field_error(field, "expected integers");
    out.push_back(v.get<std::int64_t>());
  }
  return out;
}

NetworkConfig make_config(std::int64_t n, std::int64_t c, std::int64_t b, const std::string& field) {
  try {
    return NetworkConfig(n, c, b);
  } catch (const ConfigError& e) {
    field_error(field, e.what());
  }
}

std::vector<NetworkConfig> parse_grid(const json& node) {
  std::vector<NetworkConfig> grid;
  if (node.is_array()) {
    for (std::size_t i = 0; i < node.size(); ++i) {
      const auto& p = node[i];
      const std::string field = "grid[" + std::to_string(i) + "]";
      if (!p.is_object() || !p.contains("nodes") || !p.contains("cells") || !p.contains("buffer")) {
        field_error(field, "needs nodes, cells and buffer");
      }
      grid.push_back(make_config(p.at("nodes").get<std::int64_t>(),
                                 p.at("cells").get<std::int64_t>(),
                                 p.at("buffer").get<std::int64_t>(), field));
    }
    return grid;
  }
  if (!node.is_object()) field_error("grid", "expected a list of points or a product object");
  // Cartesian product form: nodes x buffers, C from nodes_per_cell or an explicit cells list.
  if (!node.contains("nodes")) field_error("grid.nodes", "missing");
  if (!node.contains("buffers")) field_error("grid.buffers", "missing");
  const auto nodes = int_list(node.at("nodes"), "grid.nodes");
  const auto buffers = int_list(node.at("buffers"), "grid.buffers");
  const bool by_ratio = node.contains("nodes_per_cell");
  if (by_ratio == node.contains("cells")) {
    field_error("grid", "give exactly one of cells or nodes_per_cell");
  }
  std::vector<std::int64_t> cells;
  if (!by_ratio) cells = int_list(node.at("cells"), "grid.cells");
  const auto ratio = by_ratio ? node.at("nodes_per_cell").get<std::int64_t>() : 0;
  if (by_ratio && ratio < 1) field_error("grid.nodes_per_cell", "must be >= 1");
  for (const auto n : nodes) {
    std::vector<std::int64_t> cs = cells;
    if (by_ratio) {
      if (n % ratio != 0) field_error("grid.nodes", "not divisible by nodes_per_cell");
      cs = {n / ratio};
    }
    for (const auto c : cs) {
      for (const auto b : buffers) grid.push_back(make_config(n, c, b, "grid"));
    }
  }
  return grid;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Runs task(i) for i in [0, count) on at most `jobs` threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& task) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

AnalyticPoint analytic_point(const CapacityModel& model, double tc, double lambda) {
  AnalyticPoint a;
  a.tc = tc;
  const auto sol = model.solve(std::min(lambda, 1.0));
  a.mu_s = sol.mu_s;
  a.p_full = sol.p_full;
  if (sol.mu_s > lambda) a.delay = (1.0 - lambda) / (sol.mu_s - lambda);
  return a;
}

}  // namespace

sim::Slot SweepSpec::warmup_slots() const {
  return static_cast<sim::Slot>(std::floor(static_cast<double>(horizon) * warmup_fraction));
}

void SweepSpec::validate() const {
  if (grid.empty()) field_error("grid", "must be non-empty");
  if (loads.empty()) field_error("loads", "must be non-empty");
  for (double l : loads) {
    if (!(l >= 0.0)) field_error("loads", "values must be non-negative");
    if (load_kind == LoadKind::lambda && l > 1.0) field_error("loads", "lambda must be <= 1");
  }
  if (mobility.empty()) field_error("mobility", "must be non-empty");
  if (replications < 1) field_error("replications", "must be >= 1");
  if (horizon < 1) field_error("horizon", "must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    field_error("warmup_fraction", "must lie in [0, 1)");
  }
  if (jobs < 1) field_error("jobs", "must be >= 1");
  if (simulate) {
    for (const auto kind : mobility) {
      for (const auto& cfg : grid) {
        try {
          (void)sim::MobilityModel::make(kind, cfg.cells());
        } catch (const ConfigError& e) {
          field_error("mobility", e.what());
        }
      }
    }
  }
}

SweepSpec SweepSpec::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("spec: top level must be a JSON object");
  const int version = get_field<int>(doc, "version", kSpecVersion);
  if (version != kSpecVersion) {
    field_error("version", "unsupported version " + std::to_string(version));
  }
  static const char* const known[] = {"version",  "name",     "grid",           "loads",
                                      "mobility", "replications", "horizon",   "warmup_fraction",
                                      "base_seed", "simulate", "jobs",          "tolerances"};
  for (const auto& [key, _] : doc.items()) {
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known)) {
      field_error(key, "unknown field");
    }
  }

  SweepSpec spec;
  spec.name = get_field<std::string>(doc, "name", spec.name);
  if (!doc.contains("grid")) field_error("grid", "missing");
  spec.grid = parse_grid(doc.at("grid"));

  if (!doc.contains("loads")) field_error("loads", "missing");
  const auto& loads = doc.at("loads");
  if (!loads.is_object() || loads.size() != 1 || !(loads.contains("rho") || loads.contains("lambda"))) {
    field_error("loads", "expected {\"rho\": [...]} or {\"lambda\": [...]}");
  }
  spec.load_kind = loads.contains("rho") ? LoadKind::rho : LoadKind::lambda;
  const auto& values = loads.contains("rho") ? loads.at("rho") : loads.at("lambda");
  if (!values.is_array()) field_error("loads", "expected a list of numbers");
  for (const auto& v : values) {
    if (!v.is_number()) field_error("loads", "expected numbers");
    spec.loads.push_back(v.get<double>());
  }

  if (doc.contains("mobility")) {
    const auto& m = doc.at("mobility");
    if (!m.is_array()) field_error("mobility", "expected a list");
    spec.mobility.clear();
    for (const auto& v : m) {
      if (!v.is_string()) field_error("mobility", "expected strings");
      try {
        spec.mobility.push_back(sim::parse_mobility(v.get<std::string>()));
      } catch (const ConfigError& e) {
        field_error("mobility", e.what());
      }
    }
  }
  spec.replications = get_field<int>(doc, "replications", spec.replications);
  spec.horizon = static_cast<sim::Slot>(get_field<double>(doc, "horizon", static_cast<double>(spec.horizon)));
  spec.warmup_fraction = get_field<double>(doc, "warmup_fraction", spec.warmup_fraction);
  spec.base_seed = get_field<std::uint64_t>(doc, "base_seed", spec.base_seed);
  spec.simulate = get_field<bool>(doc, "simulate", spec.simulate);
  spec.jobs = get_field<int>(doc, "jobs", spec.jobs);
  if (doc.contains("tolerances")) {
    const auto& t = doc.at("tolerances");
    if (!t.is_object()) field_error("tolerances", "expected an object");
    spec.tolerances.linear = get_field<double>(t, "linear", spec.tolerances.linear);
    spec.tolerances.saturated = get_field<double>(t, "saturated", spec.tolerances.saturated);
    spec.tolerances.mobility = get_field<double>(t, "mobility", spec.tolerances.mobility);
  }
  spec.validate();
  return spec;
}

json SweepSpec::to_json() const {
  json grid_json = json::array();
  for (const auto& c : grid) {
    grid_json.push_back({{"nodes", c.nodes()}, {"cells", c.cells()}, {"buffer", c.buffer()}});
  }
  json mob = json::array();
  for (auto m : mobility) mob.push_back(std::string(sim::to_string(m)));
  return {{"version", kSpecVersion},
          {"name", name},
          {"grid", grid_json},
          {"loads", {{load_kind == LoadKind::rho ? "rho" : "lambda", loads}}},
          {"mobility", mob},
          {"replications", replications},
          {"horizon", horizon},
          {"warmup_fraction", warmup_fraction},
          {"base_seed", base_seed},
          {"simulate", simulate},
          {"jobs", jobs},
          {"tolerances",
           {{"linear", tolerances.linear},
            {"saturated", tolerances.saturated},
            {"mobility", tolerances.mobility}}}};
}

double SimulatedPoint::p_full_stderr() const {
  return replications > 0 ? p_full_std / std::sqrt(static_cast<double>(replications)) : 0.0;
}

std::vector<CurvePoint> curve_mu_s(const NetworkConfig& config,
                                   const std::vector<double>& lambda_grid) {
  const CapacityModel model(config);
  std::vector<CurvePoint> curve;
  curve.reserve(lambda_grid.size());
  for (double lambda : lambda_grid) curve.push_back({lambda, model.solve(lambda).mu_s});
  return curve;
}

namespace {

CapacityRow capacity_row(const NetworkConfig& config) {
  const CapacityModel model(config);
  CapacityRow row{config};
  row.tc = model.capacity().throughput_capacity;
  row.p_sd = model.contact().p_sd;
  row.upper = model.contact().p_sd + model.contact().p_sr;
  return row;
}

std::int64_t cells_for(std::int64_t n, std::int64_t nodes_per_cell) {
  if (nodes_per_cell < 1 || n % nodes_per_cell != 0) {
    throw ConfigError("node count " + std::to_string(n) + " not divisible by nodes per cell");
  }
  return n / nodes_per_cell;
}

}  // namespace

std::vector<CapacityRow> sweep_capacity_vs_buffer(const std::vector<std::int64_t>& nodes,
                                                  std::int64_t buffer_min,
                                                  std::int64_t buffer_max,
                                                  std::int64_t nodes_per_cell) {
  std::vector<CapacityRow> rows;
  for (const auto n : nodes) {
    for (auto b = buffer_min; b <= buffer_max; ++b) {
      rows.push_back(capacity_row(NetworkConfig(n, cells_for(n, nodes_per_cell), b)));
    }
  }
  return rows;
}

std::vector<CapacityRow> sweep_capacity_vs_n(const std::vector<std::int64_t>& nodes,
                                             std::int64_t buffer, std::int64_t nodes_per_cell) {
  std::vector<CapacityRow> rows;
  for (const auto n : nodes) {
    rows.push_back(capacity_row(NetworkConfig(n, cells_for(n, nodes_per_cell), buffer)));
  }
  return rows;
}

std::optional<std::int64_t> diminishing_returns_knee(const std::vector<CapacityRow>& rows,
                                                     double fraction) {
  if (rows.size() < 3) return std::nullopt;
  const double first_gain = rows[1].tc - rows[0].tc;
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
    if (rows[i + 1].tc - rows[i].tc < fraction * first_gain) return rows[i].config.buffer();
  }
  return std::nullopt;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t grid_index, std::uint64_t load_index,
                          std::uint64_t mobility_index) {
  std::uint64_t state = base;
  std::uint64_t h = splitmix64(state);
  for (const std::uint64_t part : {grid_index, load_index, mobility_index}) {
    state = h ^ part;
    h = splitmix64(state);
  }
  return h;
}

std::vector<sim::SimStats> replicate(const sim::SimConfig& base, int replications, int jobs) {
  std::vector<sim::SimStats> out(static_cast<std::size_t>(std::max(0, replications)));
  parallel_for(out.size(), jobs, [&](std::size_t r) {
    sim::SimConfig cfg = base;
    cfg.replication = r;
    out[r] = sim::run(cfg);
  });
  return out;
}

SimulatedPoint summarize(const std::vector<sim::SimStats>& runs) {
  std::vector<double> thr, pb, delay;
  for (const auto& s : runs) {
    thr.push_back(s.mean_throughput());
    pb.push_back(s.mean_relay_full_fraction());
    delay.push_back(s.mean_local_delay);
  }
  SimulatedPoint p;
  p.replications = static_cast<int>(runs.size());
  p.throughput_mean = mean_of(thr);
  p.throughput_std = sample_std(thr);
  p.p_full_mean = mean_of(pb);
  p.p_full_std = sample_std(pb);
  p.delay_mean = mean_of(delay);
  p.delay_std = sample_std(delay);
  return p;
}

std::vector<SweepResult> run_sweep(const SweepSpec& spec, const Progress& progress) {
  spec.validate();
  std::vector<SweepResult> rows;
  for (std::size_t g = 0; g < spec.grid.size(); ++g) {
    const auto& cfg = spec.grid[g];
    const CapacityModel model(cfg);
    const double tc = model.capacity().throughput_capacity;
    for (std::size_t l = 0; l < spec.loads.size(); ++l) {
      const double lambda = spec.load_kind == LoadKind::rho ? spec.loads[l] * tc : spec.loads[l];
      if (lambda > 1.0) field_error("loads", "rho * T_c exceeds 1");
      const double rho = tc > 0.0 ? lambda / tc : 0.0;
      const auto analytic = analytic_point(model, tc, lambda);
      const auto& kinds = spec.simulate ? spec.mobility
                                        : std::vector<sim::MobilityKind>{spec.mobility.front()};
      for (std::size_t m = 0; m < kinds.size(); ++m) {
        SweepResult row{cfg, kinds[m], lambda, rho, analytic, std::nullopt};
        row.seed = derive_seed(spec.base_seed, g, l, m);
        row.horizon = spec.simulate ? spec.horizon : 0;
        rows.push_back(row);
      }
    }
  }

  if (!spec.simulate) return rows;

  // Flatten (row, replication) so parallelism spans the whole sweep.
  const auto reps = static_cast<std::size_t>(spec.replications);
  std::vector<sim::SimStats> stats(rows.size() * reps);
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  parallel_for(stats.size(), spec.jobs, [&](std::size_t task) {
    const auto& row = rows[task / reps];
    sim::SimConfig cfg{row.config,
                       row.lambda,
                       sim::MobilityModel::make(row.mobility, row.config.cells()),
                       spec.horizon,
                       spec.warmup_slots(),
                       row.seed,
                       task % reps};
    stats[task] = sim::run(cfg);
    const std::size_t finished = ++done;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(finished, stats.size());
    }
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].simulated = summarize({stats.begin() + static_cast<std::ptrdiff_t>(i * reps),
                                   stats.begin() + static_cast<std::ptrdiff_t>((i + 1) * reps)});
  }
  return rows;
}

bool ValidationReport::passed() const {
  return std::all_of(points.begin(), points.end(), [](const auto& p) { return p.pass; }) &&
         std::all_of(gaps.begin(), gaps.end(), [](const auto& g) { return g.pass; });
}

json ValidationReport::to_json() const {
  json pts = json::array();
  for (const auto& p : points) {
    pts.push_back({{"N", p.config.nodes()},
                   {"C", p.config.cells()},
                   {"B", p.config.buffer()},
                   {"mobility", std::string(sim::to_string(p.mobility))},
                   {"rho", p.rho},
                   {"expected", p.expected},
                   {"simulated", p.simulated},
                   {"relative_error", p.relative_error},
                   {"tolerance", p.tolerance},
                   {"pass", p.pass}});
  }
  json gs = json::array();
  for (const auto& g : gaps) {
    gs.push_back({{"N", g.config.nodes()},
                  {"C", g.config.cells()},
                  {"B", g.config.buffer()},
                  {"rho", g.rho},
                  {"iid", g.iid},
                  {"walk", g.walk},
                  {"gap_over_tc", g.gap_over_tc},
                  {"tolerance", g.tolerance},
                  {"pass", g.pass}});
  }
  return {{"passed", passed()}, {"points", pts}, {"mobility_gaps", gs}};
}

ValidationReport validate(const SweepSpec& spec, const Progress& progress) {
  if (spec.load_kind != LoadKind::rho) field_error("loads", "validation needs rho loads");
  if (!spec.simulate) field_error("simulate", "validation needs simulation");
  ValidationReport report;
  report.rows = run_sweep(spec, progress);
  for (const auto& row : report.rows) {
    ValidationPoint p{row.config, row.mobility, row.rho};
    p.expected = std::min(row.rho, 1.0) * row.analytic.tc;
    p.simulated = row.simulated->throughput_mean;
    p.relative_error = p.expected > 0.0 ? std::abs(p.simulated - p.expected) / p.expected
                                        : std::abs(p.simulated);
    p.tolerance = row.rho > 1.0 ? spec.tolerances.saturated : spec.tolerances.linear;
    p.pass = p.relative_error <= p.tolerance;
    report.points.push_back(p);
  }
  for (const auto& a : report.rows) {
    if (a.mobility != sim::MobilityKind::iid) continue;
    for (const auto& b : report.rows) {
      if (b.mobility != sim::MobilityKind::random_walk || !(b.config == a.config) ||
          b.lambda != a.lambda) {
        continue;
      }
      MobilityGap g{a.config, a.rho, a.simulated->throughput_mean, b.simulated->throughput_mean};
      g.gap_over_tc = std::abs(g.walk - g.iid) / a.analytic.tc;
      g.tolerance = spec.tolerances.mobility;
      g.pass = g.gap_over_tc < g.tolerance;
      report.gaps.push_back(g);
    }
  }
  return report;
}

const char* const kResultsCsvHeader =
    "N,C,B,mobility,lambda,rho,tc_analytic,mu_s_analytic,pb_analytic,delay_analytic,"
    "throughput_sim_mean,throughput_sim_std,pb_sim,replications,horizon,seed";

void write_results_csv(std::ostream& os, const std::vector<SweepResult>& rows) {
  os << kResultsCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.config.nodes() << ',' << r.config.cells() << ',' << r.config.buffer() << ','
       << sim::to_string(r.mobility) << ',' << fmt(r.lambda) << ',' << fmt(r.rho) << ','
       << fmt(r.analytic.tc) << ',' << fmt(r.analytic.mu_s) << ',' << fmt(r.analytic.p_full)
       << ',' << (r.analytic.delay ? fmt(*r.analytic.delay) : "inf") << ',';
    if (r.simulated) {
      os << fmt(r.simulated->throughput_mean) << ',' << fmt(r.simulated->throughput_std) << ','
         << fmt(r.simulated->p_full_mean) << ',' << r.simulated->replications;
    } else {
      os << ",,,0";
    }
    os << ',' << r.horizon << ',' << r.seed << '\n';
  }
}

void write_capacity_csv(std::ostream& os, const std::vector<CapacityRow>& rows) {
  os << "N,C,B,tc_analytic,p_sd,p_sd_plus_p_sr,tc_infinite_buffer_reference\n";
  for (const auto& r : rows) {
    os << r.config.nodes() << ',' << r.config.cells() << ',' << r.config.buffer() << ','
       << fmt(r.tc) << ',' << fmt(r.p_sd) << ',' << fmt(r.upper) << ','
       << fmt(r.infinite_buffer_reference) << '\n';
  }
}

json to_json(const sim::SimStats& s) {
  return {{"measured_slots", s.measured_slots},
          {"mean_throughput", s.mean_throughput()},
          {"mean_relay_full_fraction", s.mean_relay_full_fraction()},
          {"mean_local_delay", s.mean_local_delay},
          {"local_departures", s.local_departures},
          {"mean_relay_occupancy", s.mean_relay_occupancy},
          {"delivered_per_node", s.delivered_per_node},
          {"throughput_per_node", s.throughput_per_node},
          {"relay_full_fraction", s.relay_full_fraction}};
}

json to_json(const FixedPointSolution& sol) {
  return {{"lambda", sol.lambda},
          {"p_full", sol.p_full},
          {"mu_s", sol.mu_s},
          {"lambda_tilde", sol.lambda_tilde},
          {"residual", sol.residual},
          {"service_rates", sol.relay_model.service_rates},
          {"limiting_distribution", sol.relay_model.limiting_distribution}};
}

}  // namespace relaycap::experiments
