#pragma once

// DC power network: PTDF, economic dispatch with LMPs, generator best response and a
// feasibility sweep over a box of EV demand.
//
// Units: energy in MWh per epoch, prices in $/MWh, generator cost a*g^2 + b*g in $.
// Sign convention: eta = d + u - g is the nodal withdrawal; directed line flows are H * eta,
// rows [0, L) are the from->to direction and rows [L, 2L) the reverse.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evnet/rng.hpp"

namespace evnet {

struct Line {
  int from = 0;
  int to = 0;
  double susceptance = 1.0;  // p.u.
  double limit_forward = 0.0;   // MWh per epoch, from -> to
  double limit_backward = 0.0;  // MWh per epoch, to -> from
};

struct Generator {
  double a = 0.0;  // $/MWh^2, > 0
  double b = 0.0;  // $/MWh
  double g_min = 0.0;
  double g_max = 0.0;
};

struct PowerNetwork {
  std::vector<std::string> bus_names;
  std::vector<Line> lines;
  std::vector<Generator> generators;  // one merged generator per bus
  std::vector<double> baseload;       // u, MWh per epoch
  int slack = 0;

  int bus_count() const { return static_cast<int>(bus_names.size()); }
  int line_count() const { return static_cast<int>(lines.size()); }
};

// Throws ValidationError on shape errors, a_v <= 0, g_min > g_max, negative limits or
// baseload, a bad slack index, or a disconnected network.
void validate_network(const PowerNetwork& net);

struct Ptdf {
  Eigen::MatrixXd h;  // 2L x B
  Eigen::VectorXd c;  // 2L directed limits
};

Ptdf compute_ptdf(const PowerNetwork& net, int slack);
inline Ptdf compute_ptdf(const PowerNetwork& net) { return compute_ptdf(net, net.slack); }

struct DispatchResult {
  Eigen::VectorXd g;
  double gamma_bal = 0.0;
  Eigen::VectorXd mu;      // 2L, >= 0
  Eigen::VectorXd prices;  // gamma_bal * 1 + H' mu
  Eigen::VectorXd flows;   // H (d + u - g)
  double cost = 0.0;
  double kkt_residual = 0.0;
  std::vector<int> binding_lines;  // directed rows at their limit
};

struct DispatchOptions {
  double tolerance = 1e-6;  // KKT certification threshold (relative)
};

// Minimum generation cost dispatch for EV demand d. Throws InfeasibleError (with the max
// violation) when no feasible mix exists and ConvergenceError if KKT certification fails.
DispatchResult economic_dispatch(const PowerNetwork& net, const Ptdf& ptdf,
                                 std::span<const double> d, const DispatchOptions& options = {});

// Largest of stationarity, primal feasibility, dual feasibility and complementarity
// residuals, each scaled by (1 + magnitude of the terms involved).
double dispatch_kkt_residual(const PowerNetwork& net, const Ptdf& ptdf, std::span<const double> d,
                             const DispatchResult& r);

double generation_cost(const PowerNetwork& net, const Eigen::VectorXd& g);

// Per bus clamp((p - b) / 2a, g_min, g_max).
Eigen::VectorXd generator_best_response(const PowerNetwork& net, const Eigen::VectorXd& prices);

struct FeasibilityReport {
  bool feasible = true;
  int points_checked = 0;
  std::vector<double> failing_point;  // first infeasible demand vector, empty if none
  std::string failing_label;          // "corner 0101..." or "sample 17"
  double max_violation = 0.0;
};

// Checks dispatch feasibility at every corner of [d_min, d_max] over the buses where the
// box has width (capped at 2^12 corners, beyond that random corners) plus `samples` uniform
// points. Deterministic in seed.
FeasibilityReport validate_feasibility(const PowerNetwork& net, const Ptdf& ptdf,
                                       std::span<const double> d_min,
                                       std::span<const double> d_max, int samples,
                                       std::uint64_t seed);

}  // namespace evnet
