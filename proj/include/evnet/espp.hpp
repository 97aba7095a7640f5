#pragma once

// Energy-feasible path enumeration per vehicle class and the individual driver's
// least-cost path choice over the enumerated set.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evnet/transport_graph.hpp"

namespace evnet {

enum class VehicleKind : std::uint8_t { kEv, kIcev };

struct VehicleClass {
  std::string name;
  int origin = 0;
  int destination = 0;
  double demand_rate = 0.0;       // vehicles per epoch
  double initial_charge = 0.0;    // kWh
  double battery_capacity = 0.0;  // kWh
  VehicleKind kind = VehicleKind::kEv;
};

struct Path {
  std::vector<int> arcs;
  std::vector<double> soc;  // state of charge after each arc, soc.size() == arcs.size()
  double min_soc = 0.0;
  double max_soc = 0.0;
  double energy_drawn = 0.0;    // kWh consumed on roads
  double energy_charged = 0.0;  // kWh received from ChargeAmount arcs
};

struct PathSet {
  int class_index = 0;
  std::vector<Path> paths;

  bool empty() const { return paths.empty(); }
  std::size_t size() const { return paths.size(); }
};

struct EnumerationOptions {
  std::size_t max_paths = 200000;  // per class; exceeding it throws
};

// Prefix check: initial_charge - cumulative energy stays in [0, capacity] after every arc.
bool is_energy_feasible(std::span<const double> energies, double initial_charge, double capacity);
bool is_energy_feasible(const ExtendedGraph& graph, std::span<const int> arcs,
                        double initial_charge, double capacity);

// All loop-free energy-feasible origin->destination paths, lexicographic by arc ids.
// Loop-free means no base node is visited twice. Paths end on arrival at the destination.
// ICEV classes may only use road and bypass arcs. An unreachable destination gives an empty
// set; callers decide whether that is an error. Throws ValidationError for bad class data and
// ConvergenceError when max_paths is exceeded.
PathSet enumerate_feasible_paths(const ExtendedGraph& graph, const VehicleClass& cls,
                                 int class_index, const EnumerationOptions& options = {});

// |L| x |K| 0/1 arc-path incidence.
Eigen::MatrixXd incidence_matrix(const PathSet& set, int arc_count);

// Generalized cost of one path: time cost at the given arc flows plus money cost.
double path_cost(const ExtendedGraph& graph, const Path& path, std::span<const double> arc_flows,
                 std::span<const double> prices_per_mwh, std::span<const double> tolls,
                 double gamma);

struct EsppChoice {
  std::size_t index = 0;
  double cost = 0.0;
};

// argmin over the path set, ties to the lowest index. Throws ValidationError on an empty set.
EsppChoice solve_espp(const ExtendedGraph& graph, const PathSet& set,
                      std::span<const double> arc_flows, std::span<const double> prices_per_mwh,
                      std::span<const double> tolls, double gamma);

}  // namespace evnet
