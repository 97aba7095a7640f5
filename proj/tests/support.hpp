#pragma once

// Random instance generators and brute-force oracles shared by the unit tests and the
// acceptance runner. Nothing here calls into the code under test except to build inputs.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evnet/power.hpp"
#include "evnet/rng.hpp"
#include "evnet/scenario.hpp"

namespace evnet::testkit {

// ---- power ------------------------------------------------------------------------------

// 1 to 3 buses, a path or a triangle of lines, random quadratic units and baseload.
PowerNetwork random_small_network(Rng& rng);

// Per-bus EV demand in [0, hi].
std::vector<double> random_demand(Rng& rng, int buses, double hi);

// 2L x B shift factors from the reduced susceptance matrix (own implementation).
Eigen::MatrixXd oracle_ptdf(const PowerNetwork& net);

struct OracleDispatch {
  Eigen::VectorXd g;
  double gamma = 0.0;
  Eigen::VectorXd mu;  // 2L
  Eigen::VectorXd prices;
};

// Enumerates generator states (lower, upper, free) and directed-line active sets, solves each
// equality-constrained KKT system and returns the first point that is primal and dual
// feasible. nullopt when no active set works (infeasible instance).
std::optional<OracleDispatch> oracle_dispatch(const PowerNetwork& net, const std::vector<double>& d);

// The bundled 9-bus grid (IEEE reactances) with the given line rating for every line.
PowerNetwork ieee9(double limit);

// ---- transport --------------------------------------------------------------------------

struct RandomTransport {
  RoadGraph road;
  std::vector<ChargingStation> stations;
  std::vector<VehicleClass> classes;
};

// <= max_nodes nodes, a guaranteed origin->destination chain plus random extra arcs,
// <= max_stations stations on buses [0, buses).
RandomTransport random_transport(Rng& rng, int max_nodes, int max_stations, int buses);

// Paths as arc-id sequences, built from loop-free base-graph routes and the station
// choices at each visited node, filtered by a prefix state-of-charge check.
std::set<std::vector<int>> oracle_paths(const ExtendedGraph& graph, const VehicleClass& cls);

// A full random scenario with at least one station and four paths: random transport layer
// over a random small grid whose demand box is dispatch-feasible, positive latency slopes,
// no base tolls or fees.
Scenario random_scenario(Rng& rng);

// ---- numerics ---------------------------------------------------------------------------

// Least-squares slope of y on x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

struct TollCheck {
  double max_diff = 0.0;  // ||lambda_UE - lambda_SO||_inf
  double scale = 0.0;     // sum of class demands
};

// Social optimum, marginal tolls at its arc flows, user equilibrium at the optimal prices
// with those tolls; compares arc flows.
TollCheck toll_equivalence(const Model& model);

}  // namespace evnet::testkit
