#pragma once

// Scenario description, YAML (de)serialization and the derived solver model.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "evnet/assignment.hpp"
#include "evnet/espp.hpp"
#include "evnet/power.hpp"
#include "evnet/transport_graph.hpp"

namespace evnet {

inline constexpr int kScenarioFormatVersion = 1;

struct Parameters {
  double gamma = 1e-3;  // value of time, $/min

  double assignment_tolerance = 1e-10;  // relative gap
  int assignment_max_iterations = 50000;
  double dispatch_tolerance = 1e-6;
  double social_optimum_tolerance = 1e-10;
  std::uint64_t max_paths = 200000;

  double greedy_initial_price = 50.0;  // $/MWh
  int greedy_max_iterations = 10;

  double dd_gamma0 = 57.5;  // $/MWh
  double dd_mu0 = 0.0;      // $/MWh, all directed lines
  double alpha = 20.0;
  // Infeasibility is divided by this before the dual step, i.e. steps are taken in units of
  // step_scale_mwh (the per-unit base of the grid data). 1 means raw MWh.
  double step_scale_mwh = 1.0;
  int dd_max_iterations = 200;
  double dd_tolerance = 0.0;  // relative objective gap to stop early, 0 runs to the cap
  double dd_divergence_norm = 1e6;

  double reserve_price = 55.0;  // $/MWh, all buses
  int cone_samples = 500;
  int uncertainty_samples = 500;
  int adequacy_samples = 1000;
  int dual_bound_samples = 256;
  double dual_bound_safety = 1.5;
  int feasibility_samples = 64;

  std::uint64_t seed = 1;
};

struct Scenario {
  int format_version = kScenarioFormatVersion;
  std::string name;
  double kwh_per_mile = 1.0 / 25.0;

  RoadGraph road;
  std::vector<ChargingStation> stations;
  PowerNetwork power;
  std::vector<VehicleClass> classes;
  // Declared box for EV demand per bus (MWh per epoch) used by the feasibility and dual-bound
  // sweeps and the reserve uncertainty set.
  std::vector<double> demand_min;
  std::vector<double> demand_max;
  Parameters params;

  std::set<int> origins() const;
  double total_demand() const;
};

// Parse errors carry "line:column"; validation errors name the failing check.
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(const std::string& text);
std::string serialize_scenario(const Scenario& s);

// Applies "key=value" overrides to params (keys are the YAML parameter names) and
// "classes.scale=x" which multiplies every class demand. Throws ValidationError.
void apply_override(Scenario& s, const std::string& assignment);

// SHA-256 of the canonical serialization, lowercase hex.
std::string scenario_hash(const Scenario& s);

// Everything the solvers need, derived once from a validated scenario.
struct Model {
  Scenario scenario;
  ExtendedGraph graph;
  std::vector<PathSet> paths;
  Ptdf ptdf;
  DemandMap demand_map;
};

// Builds the extended graph, enumerates paths and computes the PTDF. Throws ValidationError
// when a class with positive demand has no feasible path or the demand box is infeasible.
Model build_model(const Scenario& s, bool check_box_feasibility = true);

}  // namespace evnet
