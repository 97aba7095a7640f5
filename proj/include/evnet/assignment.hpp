#pragma once

// Path-flow traffic and charge assignment on the extended graph.
//
// Both problems have the separable form  sum_a lin_a * x_a + quad_a * x_a^2  in arc flows:
//   social (CTAP):   lin = gamma*T + p*e,          quad = gamma*slope      (x * s(x) + p'Mx)
//   equilibrium:     lin = gamma*T + money + toll, quad = gamma*slope / 2  (Beckmann potential)
// Base tolls and plug-in fees are transfers, so they enter the equilibrium costs only.

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "evnet/espp.hpp"
#include "evnet/transport_graph.hpp"

namespace evnet {

// d = M lambda, d in MWh per epoch. Column a holds e/1000 at the arc's bus for ChargeAmount
// arcs (the positive charge amount, although the arc's traversal energy is -e).
struct DemandMap {
  Eigen::MatrixXd m;  // buses x arcs

  int bus_count() const { return static_cast<int>(m.rows()); }
};

DemandMap build_demand_map(const ExtendedGraph& graph, int bus_count);

using PathFlows = std::vector<std::vector<double>>;  // [class][path]

struct FlowState {
  PathFlows path_flows;
  std::vector<double> arc_flow;  // vehicles per epoch, indexed by arc id
  std::vector<double> demand;    // MWh per epoch, indexed by bus
};

// lambda_a = sum over classes and paths of delta_a^k f_q^k. Throws ValidationError on a
// dimension mismatch or a negative path flow.
std::vector<double> flows_to_arc_flow(int arc_count, std::span<const PathSet> sets,
                                      const PathFlows& flows);

std::vector<double> arc_flow_to_demand(const DemandMap& map, std::span<const double> arc_flow);

enum class AssignmentMethod { kPairwise, kFrankWolfe };

struct AssignmentOptions {
  double tolerance = 1e-6;  // relative gap
  int max_iterations = 20000;
  AssignmentMethod method = AssignmentMethod::kPairwise;
  const PathFlows* warm_start = nullptr;  // feasible path flows to start from
  // Called once per iteration with (iteration, objective, relative gap).
  std::function<void(int, double, double)> trace;
};

struct AssignmentResult {
  FlowState state;
  double objective = 0.0;     // value of the minimized function
  double relative_gap = 0.0;  // (f'c(f) - sum_q m_q min_k c_k) / max(1, |objective|)
  double wardrop_residual = 0.0;
  int iterations = 0;
};

// Social charge-and-traffic assignment at fixed electricity prices ($/MWh per bus).
// Throws ConvergenceError when the iteration cap is hit before the gap tolerance.
AssignmentResult solve_ctap(const ExtendedGraph& graph, std::span<const PathSet> sets,
                            std::span<const VehicleClass> classes,
                            std::span<const double> prices_per_mwh, double gamma,
                            const AssignmentOptions& options = {});

// Wardrop equilibrium with generalized path cost time + money + imposed tolls.
AssignmentResult solve_user_equilibrium(const ExtendedGraph& graph, std::span<const PathSet> sets,
                                        std::span<const VehicleClass> classes,
                                        std::span<const double> prices_per_mwh,
                                        std::span<const double> tolls, double gamma,
                                        const AssignmentOptions& options = {});

// Externality toll gamma * slope_a * lambda_a on congestible arcs (roads, entrances), 0 else.
std::vector<double> compute_marginal_tolls(const ExtendedGraph& graph,
                                           std::span<const double> arc_flow, double gamma);

// lambda' s(lambda): total time cost in dollars.
double travel_cost(const ExtendedGraph& graph, std::span<const double> arc_flow, double gamma);

// Flow-weighted average path travel time in minutes (per vehicle).
double average_travel_time(const ExtendedGraph& graph, std::span<const double> arc_flow,
                           double total_vehicles);

}  // namespace evnet
