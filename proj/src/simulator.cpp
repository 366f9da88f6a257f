#include "relaycap/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "relaycap/errors.hpp"

namespace relaycap::sim {

std::string_view to_string(MobilityKind kind) {
  return kind == MobilityKind::iid ? "iid" : "walk";
}

MobilityKind parse_mobility(std::string_view text) {
  if (text == "iid") return MobilityKind::iid;
  if (text == "walk" || text == "random_walk") return MobilityKind::random_walk;
  throw ConfigError("unknown mobility model '" + std::string(text) + "' (expected iid or walk)");
}

MobilityModel MobilityModel::random_walk(std::int64_t cells) {
  auto side = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(cells))));
  while (side * side > cells) --side;
  while ((side + 1) * (side + 1) <= cells) ++side;
  if (side * side != cells) {
    throw ConfigError("random walk mobility needs a square number of cells, got " +
                      std::to_string(cells));
  }
  return {MobilityKind::random_walk, side};
}

MobilityModel MobilityModel::make(MobilityKind kind, std::int64_t cells) {
  return kind == MobilityKind::iid ? iid() : random_walk(cells);
}

void SimConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (n_slots < 1) throw ConfigError("slot count must be positive");
  if (warmup_slots < 0 || warmup_slots >= n_slots) {
    throw ConfigError("warmup must be non-negative and shorter than the horizon");
  }
  if (network.cells() > std::int64_t{1} << 31 || network.nodes() > std::int64_t{1} << 31) {
    throw ConfigError("network too large for the simulator");
  }
  if (mobility.kind == MobilityKind::random_walk) {
    if (mobility.grid_side * mobility.grid_side != network.cells()) {
      // Re-derive to get the standard diagnostic for non-square C.
      (void)MobilityModel::random_walk(network.cells());
      throw ConfigError("random walk grid side does not match the cell count");
    }
  }
}

bool RelayBuffer::push(const Packet& packet) {
  if (full()) return false;
  packets_.push_back(packet);
  return true;
}

std::optional<Packet> RelayBuffer::take_oldest_for(NodeId destination) {
  auto it = std::find_if(packets_.begin(), packets_.end(),
                         [&](const Packet& p) { return p.destination == destination; });
  if (it == packets_.end()) return std::nullopt;
  Packet packet = *it;
  packets_.erase(it);
  return packet;
}

std::string_view to_string(EventType type) {
  switch (type) {
    case EventType::direct:
      return "direct";
    case EventType::source_to_relay:
      return "s2r";
    case EventType::relay_to_destination:
      return "r2d";
  }
  return "?";
}

std::string format_trace_line(const TransmissionEvent& e) {
  std::ostringstream os;
  os << e.slot << ' ' << e.cell << ' ' << to_string(e.type) << ' ' << e.sender << ' '
     << e.receiver << ' ' << e.packet_source << ' ' << e.packet_sequence;
  return os.str();
}

double SimStats::mean_throughput() const {
  if (throughput_per_node.empty()) return 0.0;
  return std::accumulate(throughput_per_node.begin(), throughput_per_node.end(), 0.0) /
         static_cast<double>(throughput_per_node.size());
}

double SimStats::mean_relay_full_fraction() const {
  if (relay_full_fraction.empty()) return 0.0;
  return std::accumulate(relay_full_fraction.begin(), relay_full_fraction.end(), 0.0) /
         static_cast<double>(relay_full_fraction.size());
}

Simulation::Simulation(const SimConfig& config)
    : config_(config), rng_(config.seed, config.replication) {
  config_.validate();
  const auto n = static_cast<std::size_t>(config_.network.nodes());
  const auto b = static_cast<std::size_t>(config_.network.buffer());
  nodes_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes_[i].id = static_cast<NodeId>(i);
    nodes_[i].relay_queue = RelayBuffer(b);
  }
  // Start from the stationary (uniform) placement for both mobility models.
  const auto c = static_cast<std::uint64_t>(config_.network.cells());
  cells_.resize(n);
  for (auto& cell : cells_) cell = static_cast<CellId>(rng_.below(c));
  next_sequence_.assign(n, 0);
  next_arrival_.assign(n, -1);
  cell_start_.assign(static_cast<std::size_t>(config_.network.cells()) + 1, 0);
  cell_cursor_.assign(static_cast<std::size_t>(config_.network.cells()), 0);
  members_.resize(n);
  pair_scratch_.reserve(n / 2);
  delivered_.assign(n, 0);
  full_slots_.assign(n, 0);
  relay_since_.assign(n, 0);
}

void Simulation::step_mobility() {
  if (config_.mobility.kind == MobilityKind::iid) {
    const auto c = static_cast<std::uint32_t>(config_.network.cells());
    for (auto& cell : cells_) cell = rng_.below32(c);
    return;
  }
  const auto side = static_cast<std::int64_t>(config_.mobility.grid_side);
  for (auto& cell : cells_) {
    // One of 9 Moore-neighborhood moves (including staying), torus wraparound.
    const auto move = static_cast<std::int64_t>(rng_.below32(9));
    const std::int64_t row = cell / side;
    const std::int64_t col = cell % side;
    const std::int64_t new_row = (row + move / 3 - 1 + side) % side;
    const std::int64_t new_col = (col + move % 3 - 1 + side) % side;
    cell = static_cast<CellId>(new_row * side + new_col);
  }
}

void Simulation::step_arrivals() {
  const double lambda = config_.lambda;
  if (lambda <= 0.0) return;
  // Bernoulli(lambda) per node and slot, realised by drawing the geometric gap
  // to each node's next arrival.
  for (auto& node : nodes_) {
    Slot& due = next_arrival_[node.id];
    if (due < 0) due = slot_ + rng_.geometric(lambda);
    if (due != slot_) continue;
    node.local_queue.push_back(
        Packet{node.id, partner_of(node.id), next_sequence_[node.id]++, slot_});
    ++counters_.generated;
    due = slot_ + 1 + rng_.geometric(lambda);
  }
}

void Simulation::set_cell(NodeId node, CellId cell) {
  if (node >= nodes_.size() || static_cast<std::int64_t>(cell) >= config_.network.cells()) {
    throw ConfigError("set_cell: node or cell out of range");
  }
  cells_[node] = cell;
}

const Packet& Simulation::enqueue_local(NodeId node) {
  if (node >= nodes_.size()) throw ConfigError("enqueue_local: node out of range");
  auto& queue = nodes_[node].local_queue;
  queue.push_back(Packet{node, partner_of(node), next_sequence_[node]++, slot_});
  ++counters_.generated;
  return queue.back();
}

bool Simulation::enqueue_relay(NodeId relay, NodeId source) {
  if (relay >= nodes_.size() || source >= nodes_.size() || relay == source ||
      relay == partner_of(source)) {
    throw ConfigError("enqueue_relay: relay must differ from the source and its destination");
  }
  auto& buffer = nodes_[relay].relay_queue;
  if (buffer.full()) return false;
  relay_changing(relay);
  buffer.push(Packet{source, partner_of(source), next_sequence_[source]++, slot_});
  ++counters_.generated;
  ++counters_.relayed;
  return true;
}

void Simulation::rebuild_cells() {
  std::fill(cell_start_.begin(), cell_start_.end(), 0U);
  for (const CellId cell : cells_) ++cell_start_[cell + 1];
  std::partial_sum(cell_start_.begin(), cell_start_.end(), cell_start_.begin());
  // Stable fill keeps members of each cell in ascending id order.
  std::copy(cell_start_.begin(), cell_start_.end() - 1, cell_cursor_.begin());
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    members_[cell_cursor_[cells_[i]]++] = static_cast<NodeId>(i);
  }
}

void Simulation::execute_slot_transmissions() {
  rebuild_cells();
  const std::size_t cells = cell_start_.size() - 1;
  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t count = cell_start_[c + 1] - cell_start_[c];
    if (count >= 2) serve_cell(static_cast<CellId>(c), &members_[cell_start_[c]], count);
  }
}

void Simulation::serve_cell(CellId cell, const NodeId* members, std::size_t count) {
  // Traffic pairs with both partners in this cell, identified by the even member.
  pair_scratch_.clear();
  for (std::size_t i = 0; i < count; ++i) {
    const NodeId m = members[i];
    if ((m & 1U) == 0 && cells_[partner_of(m)] == cell) pair_scratch_.push_back(m);
  }

  if (!pair_scratch_.empty()) {
    // Uniform over the co-located source-destination pairs, both directions
    // of each traffic pair counted, from a single draw.
    const auto pick = rng_.below(2 * pair_scratch_.size());
    const NodeId leader = pair_scratch_[pick >> 1];
    const NodeId source = (pick & 1U) != 0 ? partner_of(leader) : leader;
    const NodeId destination = partner_of(source);
    auto& local = nodes_[source].local_queue;
    if (local.empty()) return;
    const Packet packet = local.front();
    local.pop_front();
    ++counters_.delivered_direct;
    record_local_departure(packet);
    if (measuring()) ++delivered_[destination];
    emit(EventType::direct, cell, source, destination, packet);
    return;
  }

  // Sender uniform over the cell, receiver uniform over the rest, fair coin:
  // 2 * count * (count - 1) equally likely outcomes decoded from one draw.
  auto pick = rng_.below(2 * count * (count - 1));
  const bool heads = (pick & 1U) != 0;
  pick >>= 1;
  const std::size_t sender_index = pick / (count - 1);
  std::size_t receiver_index = pick % (count - 1);
  if (receiver_index >= sender_index) ++receiver_index;
  const NodeId sender = members[sender_index];
  const NodeId receiver = members[receiver_index];

  if (heads) {
    // Source-to-relay, gated by the receiver's buffer handshake.
    auto& local = nodes_[sender].local_queue;
    auto& relay = nodes_[receiver].relay_queue;
    if (local.empty() || relay.full()) return;
    const Packet packet = local.front();
    local.pop_front();
    relay_changing(receiver);
    relay.push(packet);
    ++counters_.relayed;
    record_local_departure(packet);
    emit(EventType::source_to_relay, cell, sender, receiver, packet);
  } else {
    auto& relay = nodes_[sender].relay_queue;
    const auto pending = std::find_if(relay.packets().begin(), relay.packets().end(),
                                      [&](const Packet& p) { return p.destination == receiver; });
    if (pending == relay.packets().end()) return;
    relay_changing(sender);
    const auto packet = relay.take_oldest_for(receiver);
    ++counters_.delivered_from_relay;
    if (measuring()) ++delivered_[receiver];
    emit(EventType::relay_to_destination, cell, sender, receiver, *packet);
  }
}

void Simulation::record_local_departure(const Packet& packet) {
  if (!measuring()) return;
  delay_sum_ += slot_ - packet.created_at + 1;
  ++delay_count_;
}

void Simulation::emit(EventType type, CellId cell, NodeId sender, NodeId receiver,
                      const Packet& packet) {
  if (!trace_) return;
  trace_(TransmissionEvent{slot_, cell, type, sender, receiver, packet.source, packet.sequence});
}

// Relay length is sampled at the end of every measured slot. A change made
// during slot t is first visible in the sample of slot t, so the previous
// length covered samples [relay_since_, t - 1].
void Simulation::relay_changing(NodeId node) {
  const Slot from = std::max(relay_since_[node], config_.warmup_slots);
  if (slot_ > from) {
    const auto& relay = nodes_[node].relay_queue;
    occupancy_sum_ += static_cast<std::int64_t>(relay.size()) * (slot_ - from);
    if (relay.full()) full_slots_[node] += slot_ - from;
  }
  relay_since_[node] = slot_;
}

void Simulation::flush_relay_integrals(std::vector<std::int64_t>& full,
                                       std::int64_t& occupancy) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Slot from = std::max(relay_since_[i], config_.warmup_slots);
    if (slot_ <= from) continue;
    const auto& relay = nodes_[i].relay_queue;
    occupancy += static_cast<std::int64_t>(relay.size()) * (slot_ - from);
    if (relay.full()) full[i] += slot_ - from;
  }
}

void Simulation::step() {
  step_mobility();
  step_arrivals();
  execute_slot_transmissions();
  ++slot_;
}

SimStats Simulation::run() {
  while (slot_ < config_.n_slots) step();
  return stats();
}

SimStats Simulation::stats() const {
  SimStats s;
  s.measured_slots = std::max<Slot>(0, slot_ - config_.warmup_slots);
  const auto slots = static_cast<double>(s.measured_slots);
  s.delivered_per_node = delivered_;
  std::vector<std::int64_t> full_slots = full_slots_;
  std::int64_t occupancy_sum = occupancy_sum_;
  flush_relay_integrals(full_slots, occupancy_sum);
  s.throughput_per_node.resize(nodes_.size(), 0.0);
  s.relay_full_fraction.resize(nodes_.size(), 0.0);
  if (s.measured_slots > 0) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      s.throughput_per_node[i] = static_cast<double>(delivered_[i]) / slots;
      s.relay_full_fraction[i] = static_cast<double>(full_slots[i]) / slots;
    }
    s.mean_relay_occupancy =
        static_cast<double>(occupancy_sum) / (slots * static_cast<double>(nodes_.size()));
  }
  s.local_departures = delay_count_;
  if (delay_count_ > 0) {
    s.mean_local_delay = static_cast<double>(delay_sum_) / static_cast<double>(delay_count_);
  }
  return s;
}

SimStats run(const SimConfig& config) { return Simulation(config).run(); }

}  // namespace relaycap::sim
