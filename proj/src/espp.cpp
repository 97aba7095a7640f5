#include "evnet/espp.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "evnet/error.hpp"

namespace evnet {

bool is_energy_feasible(std::span<const double> energies, double initial_charge, double capacity) {
  double soc = initial_charge;
  for (double e : energies) {
    soc -= e;
    if (soc < 0.0 || soc > capacity) return false;
  }
  return true;
}

bool is_energy_feasible(const ExtendedGraph& graph, std::span<const int> arcs,
                        double initial_charge, double capacity) {
  double soc = initial_charge;
  for (int a : arcs) {
    soc -= graph.arc(a).energy;
    if (soc < 0.0 || soc > capacity) return false;
  }
  return true;
}

namespace {

struct Search {
  Search(const ExtendedGraph& g, const VehicleClass& c, const EnumerationOptions& o)
      : graph(g), cls(c), options(o) {}

  const ExtendedGraph& graph;
  const VehicleClass& cls;
  const EnumerationOptions& options;
  int target = 0;
  bool ev = true;
  std::vector<char> visited;  // base nodes
  std::vector<int> arcs;
  std::vector<double> soc;
  std::vector<Path> out;

  double current_soc() const { return soc.empty() ? cls.initial_charge : soc.back(); }

  void emit() {
    if (out.size() >= options.max_paths) {
      throw ConvergenceError("path enumeration for class '" + cls.name + "' exceeded " +
                             std::to_string(options.max_paths) + " paths");
    }
    Path p;
    p.arcs = arcs;
    p.soc = soc;
    p.min_soc = cls.initial_charge;
    p.max_soc = cls.initial_charge;
    for (std::size_t i = 0; i < arcs.size(); ++i) {
      p.min_soc = std::min(p.min_soc, soc[i]);
      p.max_soc = std::max(p.max_soc, soc[i]);
      const double e = graph.arc(arcs[i]).energy;
      if (e > 0.0) {
        p.energy_drawn += e;
      } else {
        p.energy_charged -= e;
      }
    }
    out.push_back(std::move(p));
  }

  bool allowed(const ExtendedArc& a) const {
    if (ev) return true;
    return a.kind == ArcKind::kRoad || a.kind == ArcKind::kBypass;
  }

  void dfs(int node) {
    if (node == target) {
      emit();
      return;
    }
    for (int id : graph.out_arcs(node)) {
      const ExtendedArc& a = graph.arc(id);
      if (!allowed(a)) continue;
      const bool road = a.kind == ArcKind::kRoad;
      if (road && visited[static_cast<std::size_t>(a.base_node)]) continue;
      const double next = current_soc() - a.energy;
      if (ev && (next < 0.0 || next > cls.battery_capacity)) continue;
      if (road) visited[static_cast<std::size_t>(a.base_node)] = 1;
      arcs.push_back(id);
      soc.push_back(next);
      dfs(a.head);
      arcs.pop_back();
      soc.pop_back();
      if (road) visited[static_cast<std::size_t>(a.base_node)] = 0;
    }
  }
};

void validate_class(const ExtendedGraph& graph, const VehicleClass& cls) {
  const int n = graph.base_node_count();
  const std::string where = "class '" + cls.name + "'";
  if (cls.origin < 0 || cls.origin >= n || cls.destination < 0 || cls.destination >= n) {
    throw ValidationError(where + ": origin or destination is not a road node");
  }
  if (cls.origin == cls.destination) throw ValidationError(where + ": origin equals destination");
  if (cls.demand_rate < 0.0) throw ValidationError(where + ": demand rate must be >= 0");
  if (cls.kind == VehicleKind::kEv &&
      (cls.initial_charge < 0.0 || cls.initial_charge > cls.battery_capacity)) {
    throw ValidationError(where + ": initial charge must lie in [0, battery capacity]");
  }
}

}  // namespace

PathSet enumerate_feasible_paths(const ExtendedGraph& graph, const VehicleClass& cls,
                                 int class_index, const EnumerationOptions& options) {
  validate_class(graph, cls);
  Search s(graph, cls, options);
  s.target = graph.arrival_node(cls.destination);
  s.ev = cls.kind == VehicleKind::kEv;
  s.visited.assign(static_cast<std::size_t>(graph.base_node_count()), 0);
  s.visited[static_cast<std::size_t>(cls.origin)] = 1;

  // Origin charging arcs are optional prefixes into the origin's arrival node.
  if (s.ev) {
    for (int id : graph.origin_charge_arcs(cls.origin)) {
      const double next = cls.initial_charge - graph.arc(id).energy;
      if (next < 0.0 || next > cls.battery_capacity) continue;
      s.arcs.push_back(id);
      s.soc.push_back(next);
      s.dfs(graph.arrival_node(cls.origin));
      s.arcs.pop_back();
      s.soc.pop_back();
    }
  }
  s.dfs(graph.arrival_node(cls.origin));

  std::sort(s.out.begin(), s.out.end(),
            [](const Path& a, const Path& b) { return a.arcs < b.arcs; });
  PathSet set;
  set.class_index = class_index;
  set.paths = std::move(s.out);
  return set;
}

Eigen::MatrixXd incidence_matrix(const PathSet& set, int arc_count) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(arc_count, static_cast<Eigen::Index>(set.size()));
  for (std::size_t k = 0; k < set.size(); ++k) {
    for (int id : set.paths[k].arcs) a(id, static_cast<Eigen::Index>(k)) = 1.0;
  }
  return a;
}

double path_cost(const ExtendedGraph& graph, const Path& path, std::span<const double> arc_flows,
                 std::span<const double> prices_per_mwh, std::span<const double> tolls,
                 double gamma) {
  double cost = 0.0;
  for (int id : path.arcs) {
    const ExtendedArc& a = graph.arc(id);
    const double flow = arc_flows.empty() ? 0.0 : arc_flows[static_cast<std::size_t>(id)];
    cost += arc_time_cost(a, flow, gamma) + arc_money_cost(a, prices_per_mwh, tolls);
  }
  return cost;
}

EsppChoice solve_espp(const ExtendedGraph& graph, const PathSet& set,
                      std::span<const double> arc_flows, std::span<const double> prices_per_mwh,
                      std::span<const double> tolls, double gamma) {
  if (set.empty()) throw ValidationError("solve_espp: empty path set");
  EsppChoice best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < set.size(); ++k) {
    const double c = path_cost(graph, set.paths[k], arc_flows, prices_per_mwh, tolls, gamma);
    if (c < best.cost) best = {k, c};
  }
  return best;
}

}  // namespace evnet
