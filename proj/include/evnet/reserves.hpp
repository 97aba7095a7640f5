#pragma once

// Reserve capacity for trial-and-error pricing: dual-distance estimate, sampled uncertainty
// set and dual cone, scenario-approximated procurement LP, deployment and adequacy checks.
//
// eta = d + u - g is the imbalance left after a pricing iteration. The uncertainty set is
//   N = { eta : |1'eta| <= a, H eta - c <= w, eta_min <= eta <= eta_max }
// and r covers eta when some y with |y| <= r, 1'y = 1'eta, H(eta - y) <= c exists.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "evnet/power.hpp"

namespace evnet {

struct DualBoundEstimate {
  double d_hat = 0.0;     // safety * max_norm
  double max_norm = 0.0;  // max ||(gamma_bal, mu)||_2 over the swept demands
  int points = 0;
  std::vector<double> argmax_demand;
};

// Dispatches every corner of [d_min, d_max] over buses with width (random corners beyond 2^12)
// plus `samples` uniform points. Throws InfeasibleError if any point cannot be dispatched.
DualBoundEstimate estimate_dual_bound(const PowerNetwork& net, const Ptdf& ptdf,
                                      std::span<const double> d_min, std::span<const double> d_max,
                                      int samples, double safety, std::uint64_t seed,
                                      int threads = 1);

struct UncertaintySet {
  double a = 0.0;          // balance bound, MWh
  Eigen::VectorXd w;       // directed line excess bound, MWh (2L)
  Eigen::VectorXd eta_min;
  Eigen::VectorXd eta_max;
};

// eta box (d_min + u - g_max, d_max + u - g_min) with the uniform bound a = w = bound.
UncertaintySet uncertainty_set(const PowerNetwork& net, const Ptdf& ptdf,
                               std::span<const double> d_min, std::span<const double> d_max,
                               double bound);

// Largest violation of the N constraints at eta (0 when inside).
double uncertainty_violation(const Ptdf& ptdf, const UncertaintySet& set, const Eigen::VectorXd& eta);

struct UncertaintySampleOptions {
  int samples = 500;
  std::uint64_t seed = 1;
  // Add the maximizers over N of the given linear objectives (one per column) as extra
  // samples. procure_reserves uses the deterministic cone rays here.
  Eigen::MatrixXd extreme_directions;
  int max_attempts_per_sample = 200;
  // Box corners in N and the two balance extremes. Off for fresh validation draws.
  bool include_deterministic = true;
};

// Random points: uniform in the box, shifted to a uniform balance target in [-a, a] (the shift
// is spread over buses in proportion to their room), kept when the line rows hold. Box
// corners that lie in N are appended, then the extreme points. Throws InfeasibleError when N
// is empty.
std::vector<Eigen::VectorXd> sample_uncertainty_set(const Ptdf& ptdf, const UncertaintySet& set,
                                                    const UncertaintySampleOptions& options);

struct DualConeSample {
  double theta1 = 0.0;
  Eigen::VectorXd theta2;  // 2L, >= 0
  Eigen::VectorXd theta3;  // B, >= 0
  Eigen::VectorXd theta4;  // B, >= 0
};

// theta1 1 - H' theta2 - theta3 + theta4 residual, infinity norm.
double cone_identity_residual(const Ptdf& ptdf, const DualConeSample& t);

// Deterministic rays first (pure balance, each directed line row at every breakpoint of
// theta1), then random samples with theta1 uniform in [-1, 1] and one or two nonzero theta2
// entries. Every sample is scaled to unit infinity norm. `n` counts the random ones.
std::vector<DualConeSample> sample_dual_cone(const Ptdf& ptdf, int n, std::uint64_t seed);

// Number of deterministic rays sample_dual_cone emits for this network.
int deterministic_ray_count(const Ptdf& ptdf);

struct ReservePlan {
  Eigen::VectorXd r;
  Eigen::VectorXd xi;
  double cost = 0.0;
  int cone_samples = 0;
  int uncertainty_samples = 0;
  int active_rows = 0;  // rays with a positive requirement
  // Per ray: requirement h_i = max_j F(theta_i, eta_j, 0) and the coverage |s_i|'r.
  std::vector<double> requirement;
  std::vector<double> coverage;
  Eigen::VectorXd dual;  // LP multipliers of the active rays
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
  double gap = 0.0;  // |xi'r - h'y|
  double optimality_residual() const;
};

// min xi'r  s.t.  r >= 0,  F(theta_i, eta_j, r) <= 0 for every pair, where
// F = -theta1 1'eta + theta2'(H eta - c) - r'(theta3 + theta4). Solved through its dual with
// the simplex. Throws ValidationError for negative prices or empty sample sets and
// InfeasibleError for a degenerate ray (theta3 + theta4 = 0 with a positive requirement).
ReservePlan procure_reserves(const Ptdf& ptdf, const Eigen::VectorXd& xi,
                             const std::vector<DualConeSample>& cone,
                             const std::vector<Eigen::VectorXd>& etas);

// F(theta, eta, r) for one pair.
double reserve_constraint_value(const Ptdf& ptdf, const DualConeSample& t, const Eigen::VectorXd& eta,
                                const Eigen::VectorXd& r);

// Ray of the dual cone with the largest F(theta, eta, r), found by an LP over the unit box;
// returns that F. A positive value certifies that r cannot absorb eta.
double most_violated_ray(const Ptdf& ptdf, const Eigen::VectorXd& eta, const Eigen::VectorXd& r,
                         DualConeSample& out);

struct Deployment {
  bool feasible = false;
  Eigen::VectorXd y;
  double max_violation = 0.0;  // of the three constraint groups at y (or at the last iterate)
};

// Minimum-norm y with 1'y = 1'eta, H(eta - y) <= c, -r <= y <= r.
Deployment deploy_reserve(const Ptdf& ptdf, const Eigen::VectorXd& eta, const Eigen::VectorXd& r);

struct AdequacyReport {
  int samples = 0;
  int feasible = 0;
  double fraction = 1.0;
  std::vector<int> failing;
  std::vector<double> violations;  // per sample, 0 when covered
};

AdequacyReport verify_reserve_adequacy(const Ptdf& ptdf, const Eigen::VectorXd& r,
                                       const std::vector<Eigen::VectorXd>& etas, int threads = 1);

}  // namespace evnet
