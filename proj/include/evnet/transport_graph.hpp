#pragma once

// Road network and the extended multigraph in which charging decisions become arcs.
//
// Units: time in minutes, energy in kWh, money in dollars, flow in vehicles per epoch.
// Electricity prices are passed around in $/MWh (the power-side unit) and converted here.

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace evnet {

struct RoadArc {
  int tail = 0;
  int head = 0;
  double free_flow_time = 0.0;  // min
  double latency_slope = 0.0;   // min per (vehicle/epoch)
  double energy = 0.0;          // kWh needed to traverse
  double toll = 0.0;            // $
};

struct RoadGraph {
  std::vector<std::string> node_names;
  std::vector<RoadArc> arcs;

  int node_count() const { return static_cast<int>(node_names.size()); }
};

struct ChargingStation {
  int node = 0;
  int bus = 0;                  // power bus serving the station
  double rate = 1.0;            // kWh per minute
  std::vector<double> options;  // kWh, ascending; a 0 entry means "skip" and is not materialized
  double entrance_free_flow_wait = 0.0;  // min
  double entrance_wait_slope = 0.0;      // min per (vehicle/epoch)
  double plug_in_fee = 0.0;              // $
  bool is_trip_origin_facility = false;  // home/origin charging: no time cost
};

enum class ArcKind : std::uint8_t { kRoad, kEntrance, kBypass, kChargeAmount };

const char* arc_kind_name(ArcKind kind);

struct ExtendedArc {
  int id = 0;
  int tail = 0;
  int head = 0;
  ArcKind kind = ArcKind::kRoad;
  // Traversal energy: >= 0 for roads, -charge for ChargeAmount arcs, 0 otherwise.
  double energy = 0.0;
  // Travel time is free_flow_time + slope * flow (slope is 0 for fixed-time arcs).
  double free_flow_time = 0.0;
  double slope = 0.0;
  double toll = 0.0;        // base money cost: road toll, plug-in fee
  double charge_kwh = 0.0;  // ChargeAmount only
  int station = -1;         // index into ExtendedGraph::stations(), -1 for roads
  int bus = -1;             // power bus for ChargeAmount arcs
  int base_node = -1;       // node of the base graph this arc belongs to (head for roads)
  bool at_origin = false;   // ChargeAmount arc of an origin facility
};

class ExtendedGraph {
 public:
  // Throws ValidationError for: station at unknown node, two stations on one node, negative or
  // non-increasing charge options, non-positive charging rate, self-loop road arcs.
  static ExtendedGraph build(const RoadGraph& base, std::span<const ChargingStation> stations,
                             const std::set<int>& origins);

  const std::vector<ExtendedArc>& arcs() const { return arcs_; }
  const ExtendedArc& arc(int id) const { return arcs_[static_cast<std::size_t>(id)]; }
  int arc_count() const { return static_cast<int>(arcs_.size()); }
  int node_count() const { return node_count_; }
  int base_node_count() const { return static_cast<int>(arrive_.size()); }
  const std::vector<ChargingStation>& stations() const { return stations_; }
  const RoadGraph& base() const { return base_; }

  // Out-arcs of an extended node, ascending by arc id.
  const std::vector<int>& out_arcs(int node) const {
    return out_[static_cast<std::size_t>(node)];
  }

  // Extended node where traffic into base node v arrives (and where paths to v end).
  int arrival_node(int v) const { return arrive_[static_cast<std::size_t>(v)]; }
  // Extended node from which road arcs leaving v start.
  int departure_node(int v) const { return depart_[static_cast<std::size_t>(v)]; }
  // Origin-charging arcs attached at base node v (empty if none).
  const std::vector<int>& origin_charge_arcs(int v) const {
    return origin_charge_[static_cast<std::size_t>(v)];
  }

  int count(ArcKind kind) const;

  // Largest power bus index referenced by a station, -1 if there are no stations.
  int max_bus() const;

 private:
  RoadGraph base_;
  std::vector<ChargingStation> stations_;
  std::vector<ExtendedArc> arcs_;
  std::vector<std::vector<int>> out_;
  std::vector<int> arrive_;
  std::vector<int> depart_;
  std::vector<std::vector<int>> origin_charge_;
  int node_count_ = 0;
};

// gamma * travel time at the given flow ($). Throws ValidationError on negative flow.
double arc_time_cost(const ExtendedArc& arc, double flow, double gamma);

// Money paid on the arc ($): base toll plus any imposed toll for roads and entrances, the
// electricity bill p_v * e for ChargeAmount arcs, 0 for bypasses. prices_per_mwh is indexed by
// bus; tolls is indexed by arc id and may be empty (no imposed tolls).
// Throws ValidationError if a ChargeAmount arc's bus has no price.
double arc_money_cost(const ExtendedArc& arc, std::span<const double> prices_per_mwh,
                      std::span<const double> tolls);

}  // namespace evnet
