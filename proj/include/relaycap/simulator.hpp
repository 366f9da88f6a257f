#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relaycap/analytic.hpp"
#include "relaycap/rng.hpp"

namespace relaycap::sim {

using NodeId = std::uint32_t;
using CellId = std::uint32_t;
using Slot = std::int64_t;

// Traffic pairing 0<->1, 2<->3, ...
constexpr NodeId partner_of(NodeId node) noexcept { return node ^ 1U; }

enum class MobilityKind { iid, random_walk };

std::string_view to_string(MobilityKind kind);
// Accepts "iid" and "walk" / "random_walk". Throws ConfigError otherwise.
MobilityKind parse_mobility(std::string_view text);

struct MobilityModel {
  MobilityKind kind = MobilityKind::iid;
  std::int64_t grid_side = 0;  // sqrt(C) for random_walk, 0 for iid

  static MobilityModel iid() { return {}; }
  // Cells form a grid_side x grid_side torus. Throws ConfigError if C is not a
  // perfect square.
  static MobilityModel random_walk(std::int64_t cells);
  static MobilityModel make(MobilityKind kind, std::int64_t cells);
};

struct SimConfig {
  NetworkConfig network;
  double lambda = 0.0;
  MobilityModel mobility;
  Slot n_slots = 0;        // total horizon, warmup included
  Slot warmup_slots = 0;   // leading slots excluded from statistics
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;  // selects an independent RNG stream

  // Throws ConfigError on inconsistent fields.
  void validate() const;
};

struct Packet {
  NodeId source = 0;
  NodeId destination = 0;
  std::uint64_t sequence = 0;  // per-source counter
  Slot created_at = 0;
};

// Single FIFO shared by all flows, hard capacity of B packets.
class RelayBuffer {
 public:
  explicit RelayBuffer(std::size_t capacity) : capacity_(capacity) { packets_.reserve(capacity); }

  std::size_t size() const noexcept { return packets_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool full() const noexcept { return packets_.size() >= capacity_; }
  bool empty() const noexcept { return packets_.empty(); }
  const std::vector<Packet>& packets() const noexcept { return packets_; }

  // Returns false (and stores nothing) when full.
  bool push(const Packet& packet);
  // Removes the oldest packet destined for `destination`, if any.
  std::optional<Packet> take_oldest_for(NodeId destination);

 private:
  std::size_t capacity_;
  std::vector<Packet> packets_;
};

// Cell positions live in Simulation::cells() so the per-slot passes stay compact.
struct NodeState {
  NodeId id = 0;
  std::deque<Packet> local_queue;
  RelayBuffer relay_queue{1};
};

enum class EventType : std::uint8_t { direct, source_to_relay, relay_to_destination };

std::string_view to_string(EventType type);

// One packet move. `packet` identifies the packet by (source, sequence).
struct TransmissionEvent {
  Slot slot = 0;
  CellId cell = 0;
  EventType type = EventType::direct;
  NodeId sender = 0;
  NodeId receiver = 0;
  NodeId packet_source = 0;
  std::uint64_t packet_sequence = 0;
};

// "slot cell event sender receiver source sequence", one line per event.
std::string format_trace_line(const TransmissionEvent& event);

using TraceSink = std::function<void(const TransmissionEvent&)>;

struct SimStats {
  Slot measured_slots = 0;
  std::vector<std::int64_t> delivered_per_node;  // packets received by each destination
  std::vector<double> throughput_per_node;       // delivered / measured_slots
  std::vector<double> relay_full_fraction;       // share of slots ending with a full relay
  double mean_local_delay = 0.0;     // slots from creation to leaving the local queue, inclusive
  std::int64_t local_departures = 0;  // samples behind mean_local_delay
  double mean_relay_occupancy = 0.0;  // time and node average of relay queue length

  double mean_throughput() const;
  double mean_relay_full_fraction() const;

  friend bool operator==(const SimStats&, const SimStats&) = default;
};

// Running totals since slot 0 (warmup included).
struct PacketCounters {
  std::int64_t generated = 0;
  std::int64_t delivered_direct = 0;
  std::int64_t relayed = 0;  // source-to-relay moves
  std::int64_t delivered_from_relay = 0;

  std::int64_t delivered() const noexcept { return delivered_direct + delivered_from_relay; }
};

// Slot-by-slot simulation of the modified two-hop relay scheduler.
// Each slot runs step_mobility, step_arrivals, execute_slot_transmissions.
class Simulation {
 public:
  explicit Simulation(const SimConfig& config);

  void set_trace(TraceSink sink) { trace_ = std::move(sink); }

  // Advances one full slot.
  void step();
  // Advances until the horizon and returns the measured statistics.
  SimStats run();

  // Individual phases, exposed for testing. Calling them out of order is allowed
  // but bypasses the slot counter; `step` is the normal entry point.
  void step_mobility();
  void step_arrivals();
  void execute_slot_transmissions();

  // Scenario setup for tests and examples. Packets created here count as
  // generated in the current slot; a relay injection also counts as relayed.
  void set_cell(NodeId node, CellId cell);
  const Packet& enqueue_local(NodeId node);
  // Returns false when the relay buffer is full.
  bool enqueue_relay(NodeId relay, NodeId source);

  const SimConfig& config() const noexcept { return config_; }
  const std::vector<NodeState>& nodes() const noexcept { return nodes_; }
  const std::vector<CellId>& cells() const noexcept { return cells_; }
  Slot slot() const noexcept { return slot_; }
  const PacketCounters& counters() const noexcept { return counters_; }
  SimStats stats() const;

 private:
  bool measuring() const noexcept { return slot_ >= config_.warmup_slots; }
  void rebuild_cells();
  void serve_cell(CellId cell, const NodeId* members, std::size_t count);
  void record_local_departure(const Packet& packet);
  void emit(EventType type, CellId cell, NodeId sender, NodeId receiver, const Packet& packet);
  // Relay statistics are integrated piecewise: called before a relay's length changes.
  void relay_changing(NodeId node);
  void flush_relay_integrals(std::vector<std::int64_t>& full, std::int64_t& occupancy) const;

  SimConfig config_;
  Rng rng_;
  TraceSink trace_;
  std::vector<NodeState> nodes_;
  std::vector<CellId> cells_;
  std::vector<std::uint64_t> next_sequence_;
  std::vector<Slot> next_arrival_;  // -1 until first drawn
  Slot slot_ = 0;

  // Cell membership for the current slot (counting sort by cell).
  std::vector<std::uint32_t> cell_start_;
  std::vector<std::uint32_t> cell_cursor_;
  std::vector<NodeId> members_;
  std::vector<NodeId> pair_scratch_;

  PacketCounters counters_;
  std::vector<std::int64_t> delivered_;
  std::vector<std::int64_t> full_slots_;
  std::int64_t occupancy_sum_ = 0;
  std::vector<Slot> relay_since_;  // slot from which the current relay length holds
  std::int64_t delay_sum_ = 0;
  std::int64_t delay_count_ = 0;
};

SimStats run(const SimConfig& config);

}  // namespace relaycap::sim
