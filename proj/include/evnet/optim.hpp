#pragma once

// Small dense solvers shared by the power and reserve modules.
//
//  * solve_strictly_convex_qp: Goldfarb-Idnani dual active-set method. Exact (finite) for
//    strictly convex QPs, returns multipliers for every constraint and detects infeasibility.
//  * solve_convex_qp: Mehrotra predictor-corrector interior point for convex QPs with a
//    possibly singular Hessian (the joint flow/dispatch problem).
//  * maximize_lp: dense simplex for max c'z, Az <= b, z >= 0 with b >= 0.
//
// Sizes in this code base are tens to a few hundred variables, so everything is dense.

#include <Eigen/Dense>

namespace evnet::optim {

// min 1/2 x'Gx + a'x  s.t.  Ce' x = ce,  Ci' x >= ci     (constraints are columns)
struct DenseQp {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd linear;
  Eigen::MatrixXd eq_normals;  // n x me
  Eigen::VectorXd eq_rhs;
  Eigen::MatrixXd ineq_normals;  // n x mi
  Eigen::VectorXd ineq_rhs;
};

struct QpSolution {
  bool feasible = false;
  Eigen::VectorXd x;
  // Stationarity: G x + a = Ce * eq_mult + Ci * ineq_mult, ineq_mult >= 0.
  Eigen::VectorXd eq_mult;
  Eigen::VectorXd ineq_mult;
  double objective = 0.0;
  int iterations = 0;
  // When infeasible: index of the inequality (or -1 - equality index) that could not be
  // satisfied, and the largest constraint violation at the last iterate.
  int blocking_constraint = 0;
  double max_violation = 0.0;
};

// Throws ValidationError if G is not positive definite, ConvergenceError on iteration cap.
QpSolution solve_strictly_convex_qp(const DenseQp& qp);

// Largest violation of primal constraints at x (equalities in absolute value).
double max_violation(const DenseQp& qp, const Eigen::VectorXd& x);

// min 1/2 x'Px + q'x  s.t.  A x = b,  G x <= h
struct ConvexQp {
  Eigen::MatrixXd p;
  Eigen::VectorXd q;
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::MatrixXd g;
  Eigen::VectorXd h;
};

struct IpmOptions {
  double tolerance = 1e-10;
  int max_iterations = 200;
};

struct IpmSolution {
  bool converged = false;
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // equality multipliers, Lagrangian uses + y'(Ax - b)
  Eigen::VectorXd z;  // inequality multipliers >= 0, Lagrangian uses + z'(Gx - h)
  Eigen::VectorXd s;  // slacks h - Gx
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
  double objective = 0.0;
};

IpmSolution solve_convex_qp(const ConvexQp& qp, const IpmOptions& options = {});

enum class LpStatus { kOptimal, kUnbounded };

struct LpSolution {
  LpStatus status = LpStatus::kOptimal;
  Eigen::VectorXd z;     // primal of the max problem
  Eigen::VectorXd dual;  // y >= 0 with A'y >= c, b'y = c'z at optimum
  double objective = 0.0;
  int pivots = 0;
};

// max c'z  s.t.  A z <= b, z >= 0, with b >= 0 so the origin is a feasible basis.
// Bland's rule; the final basis is re-solved with LU to clean up tableau round-off.
LpSolution maximize_lp(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                       const Eigen::VectorXd& c);

}  // namespace evnet::optim
