#pragma once

// Operating schemes for the coupled networks: the joint social optimum, greedy (lagged)
// pricing and dual-decomposition pricing.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evnet/assignment.hpp"
#include "evnet/power.hpp"
#include "evnet/scenario.hpp"

namespace evnet {

struct SocialOptimum {
  PathFlows path_flows;
  std::vector<double> arc_flow;
  std::vector<double> demand;  // MWh per bus
  Eigen::VectorXd g;
  double gamma_bal = 0.0;
  Eigen::VectorXd mu;
  Eigen::VectorXd prices;
  double travel_cost = 0.0;
  double generation_cost = 0.0;
  double objective = 0.0;  // travel_cost + generation_cost
  double kkt_residual = 0.0;
  int iterations = 0;
};

// Joint minimization over path flows and generation, solved as one convex QP by a
// primal-dual interior point method. Throws ConvergenceError if the KKT residual stays
// above params.social_optimum_tolerance.
SocialOptimum solve_social_optimum(const Model& model);

struct CoordinationRow {
  int k = 0;
  double gamma_bal = 0.0;
  Eigen::VectorXd mu;
  Eigen::VectorXd prices;
  std::vector<double> demand;
  Eigen::VectorXd g;
  std::vector<double> arc_flow;
  double balance = 0.0;       // 1'(d + u - g)
  Eigen::VectorXd line_excess;  // H(d + u - g) - c
  double infeasibility_l2 = 0.0;   // ||(a_k, w_k^+)||_2
  double infeasibility_inf = 0.0;  // ||(a_k, w_k^+)||_inf
  double bound = 0.0;               // 3 D / (alpha sqrt(k)) in MWh, NaN when k = 0 or unknown
  double travel_cost = 0.0;
  double itso_objective = 0.0;      // travel + p'd
  double ipso_objective = 0.0;      // generation cost (greedy) or c(g) - p'g (dual decomposition)
  double combined_objective = 0.0;  // travel + generation cost
  double dual_objective = 0.0;      // Lagrangian value (dual decomposition)
  double reserve_cost = 0.0;        // dual decomposition with reserves attached
  bool dispatch_feasible = true;    // greedy: ex-post dispatch of the realized demand
};

struct CoordinationTrace {
  std::string scheme;
  std::vector<CoordinationRow> rows;
};

struct GreedyReport {
  CoordinationTrace trace;
  bool cycle_found = false;
  int cycle_period = 0;
  int cycle_start = -1;   // first iteration of the repeating block
  int detected_at = -1;   // iteration at which the repeat was seen
  std::vector<double> phase_objectives;  // combined objective of each phase in the cycle
  bool infeasible = false;               // a dispatch failed (load would have to be shed)
  int infeasible_iteration = -1;
  double infeasible_violation = 0.0;
};

// i = 0, 1, ...: the grid operator prices the previous period's demand (the initial uniform
// price at i = 0), the transport operator assigns traffic at those prices, and the realized
// demand is dispatched ex post. Cycles are detected on quantized (prices, demand) states.
GreedyReport run_greedy_pricing(const Model& model, int max_iterations);

// Quantized state hash used by the cycle detector (prices to 1e-4 $/MWh, demand to 1e-3 MWh).
std::uint64_t quantized_state_hash(const Eigen::VectorXd& prices, const std::vector<double>& demand);

struct DualDecompositionOptions {
  double alpha = 20.0;
  double step_scale_mwh = 1.0;
  int max_iterations = 200;
  double tolerance = 0.0;                    // stop when |combined - J*| <= tol |J*|
  std::optional<double> reference_objective; // J*, needed for tolerance > 0
  std::optional<double> dual_distance;       // D for the bound column
  double divergence_norm = 1e6;
  double gamma0 = 57.5;
  double mu0 = 0.0;
  // Optional hook returning the reserve cost to attach to row k (k >= 1).
  std::function<double(int)> reserve_cost;
};

DualDecompositionOptions dual_decomposition_defaults(const Model& model);

// Projected subgradient on (gamma_bal, mu). The transport side solves the social assignment at
// p = gamma 1 + H' mu, generators best-respond. Steps are alpha / step_scale_mwh.
// Throws ConvergenceError when the dual norm exceeds divergence_norm.
CoordinationTrace run_dual_decomposition(const Model& model, const DualDecompositionOptions& opts);

struct Infeasibility {
  double balance = 0.0;          // a_k = |1'(d + u - g)|
  Eigen::VectorXd line_excess;   // H(d + u - g) - c
  double l2 = 0.0;
  double linf = 0.0;
};

Infeasibility primal_infeasibility(const PowerNetwork& net, const Ptdf& ptdf,
                                   std::span<const double> demand, const Eigen::VectorXd& g);

// 3 D / (alpha sqrt(k)); throws ValidationError for k < 1 or alpha <= 0.
double infeasibility_bound(int k, double alpha, double dual_distance);

}  // namespace evnet
