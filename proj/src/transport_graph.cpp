#include "evnet/transport_graph.hpp"

#include <algorithm>
#include <string>

#include "evnet/error.hpp"

namespace evnet {

const char* arc_kind_name(ArcKind kind) {
  switch (kind) {
    case ArcKind::kRoad: return "road";
    case ArcKind::kEntrance: return "entrance";
    case ArcKind::kBypass: return "bypass";
    case ArcKind::kChargeAmount: return "charge";
  }
  return "?";
}

namespace {

void validate_station(const ChargingStation& st, int node_count) {
  const std::string where = "station at node " + std::to_string(st.node);
  if (st.node < 0 || st.node >= node_count) {
    throw ValidationError("station references unknown node " + std::to_string(st.node));
  }
  if (st.bus < 0) throw ValidationError(where + ": missing power bus");
  if (!(st.rate > 0.0)) throw ValidationError(where + ": charging rate must be > 0");
  if (st.entrance_free_flow_wait < 0.0 || st.entrance_wait_slope < 0.0) {
    throw ValidationError(where + ": wait parameters must be >= 0");
  }
  if (st.plug_in_fee < 0.0) throw ValidationError(where + ": plug-in fee must be >= 0");
  double prev = -1.0;
  for (double e : st.options) {
    if (e < 0.0) throw ValidationError(where + ": charge option must be positive");
    if (!(e > prev)) throw ValidationError(where + ": charge options must be strictly increasing");
    prev = e;
  }
}

}  // namespace

ExtendedGraph ExtendedGraph::build(const RoadGraph& base, std::span<const ChargingStation> stations,
                                   const std::set<int>& origins) {
  const int n = base.node_count();
  for (const RoadArc& a : base.arcs) {
    if (a.tail < 0 || a.tail >= n || a.head < 0 || a.head >= n) {
      throw ValidationError("road arc references unknown node");
    }
    if (a.tail == a.head) throw ValidationError("road arc is a self-loop");
    if (a.free_flow_time < 0.0 || a.latency_slope < 0.0 || a.energy < 0.0 || a.toll < 0.0) {
      throw ValidationError("road arc time, slope, energy and toll must be >= 0");
    }
  }
  for (int o : origins) {
    if (o < 0 || o >= n) throw ValidationError("origin references unknown node");
  }

  ExtendedGraph g;
  g.base_ = base;
  g.stations_.assign(stations.begin(), stations.end());
  std::stable_sort(g.stations_.begin(), g.stations_.end(),
                   [](const ChargingStation& a, const ChargingStation& b) { return a.node < b.node; });
  std::vector<int> station_at(static_cast<std::size_t>(n), -1);
  for (std::size_t s = 0; s < g.stations_.size(); ++s) {
    const ChargingStation& st = g.stations_[s];
    validate_station(st, n);
    if (station_at[static_cast<std::size_t>(st.node)] >= 0) {
      throw ValidationError("duplicate station at node " + std::to_string(st.node));
    }
    station_at[static_cast<std::size_t>(st.node)] = static_cast<int>(s);
  }

  // Node layout: every base node gets an arrival node; a fast-charging station additionally
  // gets a plug node and a departure node, and an origin facility gets a pre-departure node.
  int next = 0;
  g.arrive_.resize(static_cast<std::size_t>(n));
  g.depart_.resize(static_cast<std::size_t>(n));
  std::vector<int> plug(static_cast<std::size_t>(n), -1);
  std::vector<int> pre(static_cast<std::size_t>(n), -1);
  for (int v = 0; v < n; ++v) {
    g.arrive_[static_cast<std::size_t>(v)] = next++;
    int s = station_at[static_cast<std::size_t>(v)];
    if (s >= 0 && !g.stations_[static_cast<std::size_t>(s)].is_trip_origin_facility) {
      plug[static_cast<std::size_t>(v)] = next++;
      g.depart_[static_cast<std::size_t>(v)] = next++;
    } else {
      g.depart_[static_cast<std::size_t>(v)] = g.arrive_[static_cast<std::size_t>(v)];
    }
    if (s >= 0 && g.stations_[static_cast<std::size_t>(s)].is_trip_origin_facility &&
        origins.count(v) > 0) {
      pre[static_cast<std::size_t>(v)] = next++;
    }
  }
  g.node_count_ = next;

  auto push = [&g](ExtendedArc arc) {
    arc.id = static_cast<int>(g.arcs_.size());
    g.arcs_.push_back(arc);
  };

  for (const RoadArc& a : base.arcs) {
    ExtendedArc e;
    e.tail = g.depart_[static_cast<std::size_t>(a.tail)];
    e.head = g.arrive_[static_cast<std::size_t>(a.head)];
    e.kind = ArcKind::kRoad;
    e.energy = a.energy;
    e.free_flow_time = a.free_flow_time;
    e.slope = a.latency_slope;
    e.toll = a.toll;
    e.base_node = a.head;
    push(e);
  }

  g.origin_charge_.assign(static_cast<std::size_t>(n), {});
  for (std::size_t s = 0; s < g.stations_.size(); ++s) {
    const ChargingStation& st = g.stations_[s];
    const int v = st.node;
    const auto vi = static_cast<std::size_t>(v);
    if (!st.is_trip_origin_facility) {
      ExtendedArc entrance;
      entrance.tail = g.arrive_[vi];
      entrance.head = plug[vi];
      entrance.kind = ArcKind::kEntrance;
      entrance.free_flow_time = st.entrance_free_flow_wait;
      entrance.slope = st.entrance_wait_slope;
      entrance.toll = st.plug_in_fee;
      entrance.station = static_cast<int>(s);
      entrance.base_node = v;
      push(entrance);

      ExtendedArc bypass;
      bypass.tail = g.arrive_[vi];
      bypass.head = g.depart_[vi];
      bypass.kind = ArcKind::kBypass;
      bypass.station = static_cast<int>(s);
      bypass.base_node = v;
      push(bypass);

      for (double e : st.options) {
        if (e == 0.0) continue;  // realized by the bypass
        ExtendedArc ch;
        ch.tail = plug[vi];
        ch.head = g.depart_[vi];
        ch.kind = ArcKind::kChargeAmount;
        ch.energy = -e;
        ch.charge_kwh = e;
        ch.free_flow_time = e / st.rate;
        ch.station = static_cast<int>(s);
        ch.bus = st.bus;
        ch.base_node = v;
        push(ch);
      }
    } else if (pre[vi] >= 0) {
      for (double e : st.options) {
        if (e == 0.0) continue;  // skipping origin charge = not using these arcs
        ExtendedArc ch;
        ch.tail = pre[vi];
        ch.head = g.arrive_[vi];
        ch.kind = ArcKind::kChargeAmount;
        ch.energy = -e;
        ch.charge_kwh = e;
        ch.toll = st.plug_in_fee;
        ch.station = static_cast<int>(s);
        ch.bus = st.bus;
        ch.base_node = v;
        ch.at_origin = true;
        g.origin_charge_[vi].push_back(static_cast<int>(g.arcs_.size()));
        push(ch);
      }
    }
  }

  g.out_.assign(static_cast<std::size_t>(g.node_count_), {});
  for (const ExtendedArc& a : g.arcs_) g.out_[static_cast<std::size_t>(a.tail)].push_back(a.id);
  return g;
}

int ExtendedGraph::count(ArcKind kind) const {
  return static_cast<int>(
      std::count_if(arcs_.begin(), arcs_.end(), [kind](const ExtendedArc& a) { return a.kind == kind; }));
}

int ExtendedGraph::max_bus() const {
  int m = -1;
  for (const ChargingStation& s : stations_) m = std::max(m, s.bus);
  return m;
}

double arc_time_cost(const ExtendedArc& arc, double flow, double gamma) {
  if (flow < 0.0) throw ValidationError("arc_time_cost: negative flow");
  switch (arc.kind) {
    case ArcKind::kRoad:
    case ArcKind::kEntrance:
      return gamma * (arc.free_flow_time + arc.slope * flow);
    case ArcKind::kChargeAmount:
      return arc.at_origin ? 0.0 : gamma * arc.free_flow_time;
    case ArcKind::kBypass:
      return 0.0;
  }
  return 0.0;
}

double arc_money_cost(const ExtendedArc& arc, std::span<const double> prices_per_mwh,
                      std::span<const double> tolls) {
  const double imposed =
      tolls.empty() ? 0.0 : tolls[static_cast<std::size_t>(arc.id)];
  switch (arc.kind) {
    case ArcKind::kRoad:
    case ArcKind::kEntrance:
      return arc.toll + imposed;
    case ArcKind::kChargeAmount: {
      if (arc.bus < 0 || static_cast<std::size_t>(arc.bus) >= prices_per_mwh.size()) {
        throw ValidationError("arc_money_cost: no price for bus " + std::to_string(arc.bus));
      }
      return prices_per_mwh[static_cast<std::size_t>(arc.bus)] * arc.charge_kwh / 1000.0 +
             arc.toll + imposed;
    }
    case ArcKind::kBypass:
      return 0.0;
  }
  return 0.0;
}

}  // namespace evnet
