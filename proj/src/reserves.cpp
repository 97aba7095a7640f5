#include "evnet/reserves.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evnet/error.hpp"
#include "evnet/kernels.hpp"
#include "evnet/optim.hpp"
#include "evnet/rng.hpp"
#include "parallel.hpp"

namespace evnet {

namespace {

void check_box(int n, std::span<const double> d_min, std::span<const double> d_max,
               const char* what) {
  if (static_cast<int>(d_min.size()) != n || static_cast<int>(d_max.size()) != n) {
    throw ValidationError(std::string(what) + ": demand box size");
  }
  for (int v = 0; v < n; ++v) {
    const auto i = static_cast<std::size_t>(v);
    if (d_min[i] > d_max[i]) throw ValidationError(std::string(what) + ": d_min > d_max");
  }
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Maximizer of dir'eta over N by the interior point method (a pure LP: the box rows keep the
// Newton system definite).
bool maximize_over_set(const Ptdf& ptdf, const UncertaintySet& set, const Eigen::VectorXd& dir,
                       Eigen::VectorXd& out) {
  const Eigen::Index n = ptdf.h.cols();
  const Eigen::Index rows = ptdf.h.rows();
  // Zero-width coordinates (load-only buses) leave no interior; fold them into the constants.
  std::vector<Eigen::Index> free;
  Eigen::VectorXd fixed = Eigen::VectorXd::Zero(n);
  for (Eigen::Index v = 0; v < n; ++v) {
    if (set.eta_max(v) > set.eta_min(v)) {
      free.push_back(v);
    } else {
      fixed(v) = set.eta_min(v);
    }
  }
  const auto nf = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd hf(rows, nf);
  Eigen::VectorXd df(nf), lo(nf), hi(nf);
  for (Eigen::Index j = 0; j < nf; ++j) {
    const Eigen::Index v = free[static_cast<std::size_t>(j)];
    hf.col(j) = ptdf.h.col(v);
    df(j) = dir(v);
    lo(j) = set.eta_min(v);
    hi(j) = set.eta_max(v);
  }
  const double base = fixed.sum();
  const Eigen::VectorXd base_flow = ptdf.h * fixed;

  optim::ConvexQp qp;
  qp.p = Eigen::MatrixXd::Zero(nf, nf);
  qp.q = -df;
  qp.a = Eigen::MatrixXd::Zero(0, nf);
  qp.b = Eigen::VectorXd::Zero(0);
  qp.g = Eigen::MatrixXd::Zero(2 + rows + 2 * nf, nf);
  qp.h = Eigen::VectorXd::Zero(2 + rows + 2 * nf);
  qp.g.row(0).setOnes();
  qp.h(0) = set.a - base;
  qp.g.row(1).setConstant(-1.0);
  qp.h(1) = set.a + base;
  qp.g.middleRows(2, rows) = hf;
  qp.h.segment(2, rows) = ptdf.c + set.w - base_flow;
  qp.g.middleRows(2 + rows, nf) = Eigen::MatrixXd::Identity(nf, nf);
  qp.h.segment(2 + rows, nf) = hi;
  qp.g.middleRows(2 + rows + nf, nf) = -Eigen::MatrixXd::Identity(nf, nf);
  qp.h.segment(2 + rows + nf, nf) = -lo;
  optim::IpmOptions io;
  io.tolerance = 1e-9;
  io.max_iterations = 200;
  const optim::IpmSolution sol = optim::solve_convex_qp(qp, io);
  if (!sol.converged) return false;
  out = fixed;
  for (Eigen::Index j = 0; j < nf; ++j) {
    out(free[static_cast<std::size_t>(j)]) = std::clamp(sol.x(j), lo(j), hi(j));
  }
  return true;
}

double set_scale(const Ptdf& ptdf, const UncertaintySet& set) {
  return 1.0 + std::max({inf_norm(set.eta_min), inf_norm(set.eta_max), inf_norm(ptdf.c)});
}

DualConeSample make_ray(const Ptdf& ptdf, double theta1, const Eigen::VectorXd& theta2) {
  DualConeSample t;
  const Eigen::VectorXd s =
      Eigen::VectorXd::Constant(ptdf.h.cols(), theta1) - ptdf.h.transpose() * theta2;
  double scale = std::max(std::abs(theta1), inf_norm(theta2));
  scale = std::max(scale, inf_norm(s));
  t.theta1 = theta1 / scale;
  t.theta2 = theta2 / scale;
  t.theta3 = s.cwiseMax(0.0) / scale;
  t.theta4 = (-s).cwiseMax(0.0) / scale;
  return t;
}

std::vector<DualConeSample> deterministic_rays(const Ptdf& ptdf) {
  const Eigen::Index rows = ptdf.h.rows();
  const Eigen::Index n = ptdf.h.cols();
  std::vector<DualConeSample> out;
  out.push_back(make_ray(ptdf, 1.0, Eigen::VectorXd::Zero(rows)));
  out.push_back(make_ray(ptdf, -1.0, Eigen::VectorXd::Zero(rows)));
  // With one line row active the constraint is concave piecewise linear in theta1, with
  // breakpoints at the row's PTDF entries.
  for (Eigen::Index l = 0; l < rows; ++l) {
    Eigen::VectorXd theta2 = Eigen::VectorXd::Zero(rows);
    theta2(l) = 1.0;
    std::vector<double> breaks{0.0};
    for (Eigen::Index v = 0; v < n; ++v) breaks.push_back(ptdf.h(l, v));
    std::sort(breaks.begin(), breaks.end());
    std::vector<double> unique;
    for (double b : breaks) {
      if (unique.empty() || std::abs(b - unique.back()) > 1e-12) unique.push_back(b);
    }
    for (double b : unique) out.push_back(make_ray(ptdf, b, theta2));
  }
  return out;
}

}  // namespace

DualBoundEstimate estimate_dual_bound(const PowerNetwork& net, const Ptdf& ptdf,
                                      std::span<const double> d_min, std::span<const double> d_max,
                                      int samples, double safety, std::uint64_t seed, int threads) {
  const int n = net.bus_count();
  check_box(n, d_min, d_max, "estimate_dual_bound");
  if (samples < 0 || !(safety >= 1.0)) {
    throw ValidationError("estimate_dual_bound: samples must be >= 0 and safety >= 1");
  }
  std::vector<int> free_buses;
  for (int v = 0; v < n; ++v) {
    if (d_max[static_cast<std::size_t>(v)] > d_min[static_cast<std::size_t>(v)]) free_buses.push_back(v);
  }
  Rng rng(seed);
  std::vector<std::vector<double>> points;
  const std::size_t k = free_buses.size();
  const bool exhaustive = k <= 12;
  const std::uint64_t corners = exhaustive ? (1ULL << k) : 4096ULL;
  for (std::uint64_t c = 0; c < corners; ++c) {
    const std::uint64_t bits = exhaustive ? c : rng.below(~0ULL);
    std::vector<double> p(d_min.begin(), d_min.end());
    for (std::size_t j = 0; j < k; ++j) {
      const auto v = static_cast<std::size_t>(free_buses[j]);
      if ((bits >> j) & 1ULL) p[v] = d_max[v];
    }
    points.push_back(std::move(p));
  }
  for (int s = 0; s < samples; ++s) {
    std::vector<double> p(static_cast<std::size_t>(n));
    for (std::size_t v = 0; v < p.size(); ++v) p[v] = rng.uniform(d_min[v], d_max[v]);
    points.push_back(std::move(p));
  }

  std::vector<double> norms(points.size(), 0.0);
  detail::parallel_for(static_cast<int>(points.size()), threads, [&](int i) {
    const auto idx = static_cast<std::size_t>(i);
    const DispatchResult r = economic_dispatch(net, ptdf, points[idx]);
    norms[idx] = std::sqrt(r.gamma_bal * r.gamma_bal + r.mu.squaredNorm());
  });

  DualBoundEstimate est;
  est.points = static_cast<int>(points.size());
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (norms[i] > est.max_norm || est.argmax_demand.empty()) {
      est.max_norm = norms[i];
      est.argmax_demand = points[i];
    }
  }
  est.d_hat = safety * est.max_norm;
  return est;
}

UncertaintySet uncertainty_set(const PowerNetwork& net, const Ptdf& ptdf,
                               std::span<const double> d_min, std::span<const double> d_max,
                               double bound) {
  const int n = net.bus_count();
  check_box(n, d_min, d_max, "uncertainty_set");
  if (bound < 0.0) throw ValidationError("uncertainty_set: bound must be >= 0");
  UncertaintySet set;
  set.a = bound;
  set.w = Eigen::VectorXd::Constant(ptdf.h.rows(), bound);
  set.eta_min.resize(n);
  set.eta_max.resize(n);
  for (int v = 0; v < n; ++v) {
    const auto i = static_cast<std::size_t>(v);
    const Generator& g = net.generators[i];
    set.eta_min(v) = d_min[i] + net.baseload[i] - g.g_max;
    set.eta_max(v) = d_max[i] + net.baseload[i] - g.g_min;
  }
  return set;
}

double uncertainty_violation(const Ptdf& ptdf, const UncertaintySet& set, const Eigen::VectorXd& eta) {
  double v = std::max(0.0, std::abs(eta.sum()) - set.a);
  if (ptdf.h.rows() > 0) v = std::max(v, (ptdf.h * eta - ptdf.c - set.w).maxCoeff());
  v = std::max(v, (set.eta_min - eta).maxCoeff());
  v = std::max(v, (eta - set.eta_max).maxCoeff());
  return v;
}

std::vector<Eigen::VectorXd> sample_uncertainty_set(const Ptdf& ptdf, const UncertaintySet& set,
                                                    const UncertaintySampleOptions& options) {
  const Eigen::Index n = ptdf.h.cols();
  if (set.a < 0.0) throw ValidationError("sample_uncertainty_set: a must be >= 0");
  if (set.eta_min.size() != n || set.eta_max.size() != n || set.w.size() != ptdf.h.rows()) {
    throw ValidationError("sample_uncertainty_set: set dimensions");
  }
  if ((set.eta_min.array() > set.eta_max.array()).any()) {
    throw ValidationError("sample_uncertainty_set: eta_min > eta_max");
  }
  if (options.samples < 0) throw ValidationError("sample_uncertainty_set: samples must be >= 0");
  const double tol = 1e-9 * set_scale(ptdf, set);

  // Nonemptiness: the balance extremes exist iff N does.
  std::vector<Eigen::VectorXd> extremes;
  for (double sign : {1.0, -1.0}) {
    Eigen::VectorXd x;
    if (!maximize_over_set(ptdf, set, Eigen::VectorXd::Constant(n, sign), x) ||
        uncertainty_violation(ptdf, set, x) > 1e2 * tol) {
      throw InfeasibleError("uncertainty set is empty (balance, line and box bounds conflict)",
                            x.size() ? uncertainty_violation(ptdf, set, x) : 0.0);
    }
    extremes.push_back(std::move(x));
  }

  std::vector<Eigen::VectorXd> out;
  Rng rng(options.seed);
  const long long attempts =
      static_cast<long long>(options.samples) * std::max(1, options.max_attempts_per_sample);
  Eigen::VectorXd eta(n);
  for (long long t = 0; t < attempts && static_cast<int>(out.size()) < options.samples; ++t) {
    for (Eigen::Index v = 0; v < n; ++v) eta(v) = rng.uniform(set.eta_min(v), set.eta_max(v));
    const double target = rng.uniform(-set.a, set.a);
    const double delta = target - eta.sum();
    const Eigen::VectorXd room = delta > 0.0 ? Eigen::VectorXd(set.eta_max - eta)
                                             : Eigen::VectorXd(eta - set.eta_min);
    const double total = room.sum();
    if (total < std::abs(delta)) continue;
    if (total > 0.0) eta += delta * room / total;
    if (uncertainty_violation(ptdf, set, eta) > tol) continue;
    out.push_back(eta);
  }

  if (!options.include_deterministic) return out;

  // Box corners inside N (only feasible to list for small bus counts).
  if (n <= 16) {
    for (std::uint64_t c = 0; c < (1ULL << n); ++c) {
      for (Eigen::Index v = 0; v < n; ++v) {
        eta(v) = ((c >> v) & 1ULL) ? set.eta_max(v) : set.eta_min(v);
      }
      if (uncertainty_violation(ptdf, set, eta) <= tol) out.push_back(eta);
    }
  }

  for (auto& x : extremes) out.push_back(std::move(x));
  for (Eigen::Index j = 0; j < options.extreme_directions.cols(); ++j) {
    Eigen::VectorXd x;
    if (maximize_over_set(ptdf, set, options.extreme_directions.col(j), x) &&
        uncertainty_violation(ptdf, set, x) <= 1e2 * tol) {
      out.push_back(std::move(x));
    }
  }
  return out;
}

double cone_identity_residual(const Ptdf& ptdf, const DualConeSample& t) {
  const Eigen::VectorXd r = Eigen::VectorXd::Constant(ptdf.h.cols(), t.theta1) -
                            ptdf.h.transpose() * t.theta2 - t.theta3 + t.theta4;
  return inf_norm(r);
}

int deterministic_ray_count(const Ptdf& ptdf) {
  return static_cast<int>(deterministic_rays(ptdf).size());
}

std::vector<DualConeSample> sample_dual_cone(const Ptdf& ptdf, int n, std::uint64_t seed) {
  if (n < 0) throw ValidationError("sample_dual_cone: n must be >= 0");
  std::vector<DualConeSample> out = deterministic_rays(ptdf);
  const Eigen::Index rows = ptdf.h.rows();
  Rng rng(seed);
  int made = 0;
  while (made < n) {
    const double theta1 = rng.uniform(-1.0, 1.0);
    Eigen::VectorXd theta2 = Eigen::VectorXd::Zero(rows);
    if (rows > 0) {
      const int nz = 1 + static_cast<int>(rng.below(2));
      for (int j = 0; j < nz; ++j) {
        theta2(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(rows)))) = rng.uniform();
      }
    }
    if (theta1 == 0.0 && theta2.isZero(0.0)) continue;
    out.push_back(make_ray(ptdf, theta1, theta2));
    ++made;
  }
  return out;
}

double reserve_constraint_value(const Ptdf& ptdf, const DualConeSample& t, const Eigen::VectorXd& eta,
                                const Eigen::VectorXd& r) {
  return -t.theta1 * eta.sum() + t.theta2.dot(ptdf.h * eta - ptdf.c) - r.dot(t.theta3 + t.theta4);
}

double most_violated_ray(const Ptdf& ptdf, const Eigen::VectorXd& eta, const Eigen::VectorXd& r,
                         DualConeSample& out) {
  const Eigen::Index n = ptdf.h.cols();
  const Eigen::Index rows = ptdf.h.rows();
  if (eta.size() != n || r.size() != n) throw ValidationError("most_violated_ray: vector sizes");
  // z = [theta1+, theta1-, theta2, t] >= 0 with t >= |theta1 1 - H' theta2| and theta in the
  // unit box; every right-hand side is >= 0 so the simplex starts at the origin.
  const Eigen::Index nv = 2 + rows + n;
  const Eigen::Index m = 2 * n + 2 + rows;
  const Eigen::VectorXd excess = ptdf.h * eta - ptdf.c;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, nv);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd c(nv);
  c << -eta.sum(), eta.sum(), excess, -r;
  a.col(0).head(n).setOnes();
  a.col(1).head(n).setConstant(-1.0);
  a.block(0, 2, n, rows) = -ptdf.h.transpose();
  a.block(0, 2 + rows, n, n) = -Eigen::MatrixXd::Identity(n, n);
  a.col(0).segment(n, n).setConstant(-1.0);
  a.col(1).segment(n, n).setOnes();
  a.block(n, 2, n, rows) = ptdf.h.transpose();
  a.block(n, 2 + rows, n, n) = -Eigen::MatrixXd::Identity(n, n);
  a(2 * n, 0) = 1.0;
  a(2 * n + 1, 1) = 1.0;
  a.block(2 * n + 2, 2, rows, rows) = Eigen::MatrixXd::Identity(rows, rows);
  b.tail(2 + rows).setOnes();
  const optim::LpSolution lp = optim::maximize_lp(a, b, c);
  const double theta1 = std::clamp(lp.z(0) - lp.z(1), -1.0, 1.0);
  const Eigen::VectorXd theta2 = lp.z.segment(2, rows).cwiseMax(0.0);
  if (lp.objective <= 0.0 || (theta1 == 0.0 && theta2.isZero(0.0))) {
    out = DualConeSample{};
    return 0.0;
  }
  out = make_ray(ptdf, theta1, theta2);
  return reserve_constraint_value(ptdf, out, eta, r);
}

double ReservePlan::optimality_residual() const {
  return std::max({primal_residual, dual_residual, complementarity, gap});
}

ReservePlan procure_reserves(const Ptdf& ptdf, const Eigen::VectorXd& xi,
                             const std::vector<DualConeSample>& cone,
                             const std::vector<Eigen::VectorXd>& etas) {
  const Eigen::Index n = ptdf.h.cols();
  const auto rows = static_cast<std::size_t>(ptdf.h.rows());
  if (xi.size() != n || (xi.array() < 0.0).any()) {
    throw ValidationError("procure_reserves: prices must be one per bus and >= 0");
  }
  if (cone.empty() || etas.empty()) throw ValidationError("procure_reserves: empty sample set");

  // Requirement of ray i: h_i = max_j [-theta1_i 1'eta_j + theta2_i'(H eta_j - c)].
  const std::size_t ni = cone.size();
  const std::size_t nj = etas.size();
  std::vector<double> w(ni), a(ni * rows), s(nj), vt(rows * nj);
  for (std::size_t i = 0; i < ni; ++i) {
    w[i] = cone[i].theta1;
    for (std::size_t l = 0; l < rows; ++l) a[i * rows + l] = cone[i].theta2(static_cast<Eigen::Index>(l));
  }
  for (std::size_t j = 0; j < nj; ++j) {
    s[j] = etas[j].sum();
    const Eigen::VectorXd excess = ptdf.h * etas[j] - ptdf.c;
    for (std::size_t l = 0; l < rows; ++l) vt[l * nj + j] = excess(static_cast<Eigen::Index>(l));
  }
  ReservePlan plan;
  plan.xi = xi;
  plan.cone_samples = static_cast<int>(ni);
  plan.uncertainty_samples = static_cast<int>(nj);
  plan.requirement.assign(ni, 0.0);
  kernels::max_bilinear(w, a, ni, rows, s, vt, nj, plan.requirement);

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < ni; ++i) {
    if (plan.requirement[i] <= 0.0) continue;
    if ((cone[i].theta3 + cone[i].theta4).isZero(0.0)) {
      throw InfeasibleError("procure_reserves: degenerate ray " + std::to_string(i) +
                                " has no reserve coverage but a positive requirement",
                            plan.requirement[i]);
    }
    active.push_back(i);
  }
  plan.active_rows = static_cast<int>(active.size());
  plan.r = Eigen::VectorXd::Zero(n);
  plan.dual = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(active.size()));

  Eigen::MatrixXd cover(static_cast<Eigen::Index>(active.size()), n);
  Eigen::VectorXd h(static_cast<Eigen::Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k) {
    const DualConeSample& t = cone[active[k]];
    cover.row(static_cast<Eigen::Index>(k)) = (t.theta3 + t.theta4).transpose();
    h(static_cast<Eigen::Index>(k)) = plan.requirement[active[k]];
  }
  if (!active.empty()) {
    // Dual: max h'y s.t. cover' y <= xi, y >= 0; its multipliers are r.
    const optim::LpSolution lp = optim::maximize_lp(cover.transpose(), xi, h);
    if (lp.status == optim::LpStatus::kUnbounded) {
      throw InfeasibleError("procure_reserves: no finite reserve covers the samples (a bus with "
                            "zero price would be needed)",
                            h.maxCoeff());
    }
    plan.r = lp.dual.cwiseMax(0.0);
    plan.dual = lp.z;

    const Eigen::VectorXd slack = cover * plan.r - h;
    const Eigen::VectorXd reduced = xi - cover.transpose() * plan.dual;
    plan.primal_residual = std::max(0.0, -slack.minCoeff()) / (1.0 + h.maxCoeff());
    plan.dual_residual = std::max({0.0, -reduced.minCoeff(), -plan.dual.minCoeff()}) /
                         (1.0 + xi.maxCoeff());
    const double cost = xi.dot(plan.r);
    plan.complementarity =
        std::max(plan.dual.cwiseProduct(slack).cwiseAbs().maxCoeff(),
                 plan.r.cwiseProduct(reduced).cwiseAbs().maxCoeff()) /
        (1.0 + std::abs(cost));
    plan.gap = std::abs(cost - h.dot(plan.dual)) / (1.0 + std::abs(cost));
  }
  plan.cost = xi.dot(plan.r);
  plan.coverage.resize(ni);
  for (std::size_t i = 0; i < ni; ++i) plan.coverage[i] = plan.r.dot(cone[i].theta3 + cone[i].theta4);
  return plan;
}

Deployment deploy_reserve(const Ptdf& ptdf, const Eigen::VectorXd& eta, const Eigen::VectorXd& r) {
  const Eigen::Index n = ptdf.h.cols();
  if (eta.size() != n || r.size() != n) throw ValidationError("deploy_reserve: vector sizes");
  if ((r.array() < 0.0).any()) throw ValidationError("deploy_reserve: r must be >= 0");
  const Eigen::VectorXd excess = ptdf.h * eta - ptdf.c;

  optim::DenseQp qp;
  qp.hessian = Eigen::MatrixXd::Identity(n, n);
  qp.linear = Eigen::VectorXd::Zero(n);
  qp.eq_normals = Eigen::MatrixXd::Ones(n, 1);
  qp.eq_rhs = Eigen::VectorXd::Constant(1, eta.sum());
  const Eigen::Index rows = ptdf.h.rows();
  qp.ineq_normals.resize(n, rows + 2 * n);
  qp.ineq_rhs.resize(rows + 2 * n);
  qp.ineq_normals.leftCols(rows) = ptdf.h.transpose();  // H y >= H eta - c
  qp.ineq_rhs.head(rows) = excess;
  qp.ineq_normals.middleCols(rows, n) = Eigen::MatrixXd::Identity(n, n);
  qp.ineq_rhs.segment(rows, n) = -r;
  qp.ineq_normals.rightCols(n) = -Eigen::MatrixXd::Identity(n, n);
  qp.ineq_rhs.tail(n) = -r;

  const optim::QpSolution sol = optim::solve_strictly_convex_qp(qp);
  Deployment d;
  if (!sol.feasible) {
    d.max_violation = sol.max_violation;
    d.y = sol.x;
    return d;
  }
  d.y = sol.x;
  d.max_violation = optim::max_violation(qp, d.y);
  const double scale = 1.0 + std::max({inf_norm(eta), inf_norm(r), inf_norm(ptdf.c)});
  d.feasible = d.max_violation <= 1e-9 * scale;
  return d;
}

AdequacyReport verify_reserve_adequacy(const Ptdf& ptdf, const Eigen::VectorXd& r,
                                       const std::vector<Eigen::VectorXd>& etas, int threads) {
  AdequacyReport rep;
  rep.samples = static_cast<int>(etas.size());
  std::vector<char> ok(etas.size(), 0);
  rep.violations.assign(etas.size(), 0.0);
  detail::parallel_for(rep.samples, threads, [&](int i) {
    const auto idx = static_cast<std::size_t>(i);
    const Deployment d = deploy_reserve(ptdf, etas[idx], r);
    ok[idx] = d.feasible ? 1 : 0;
    rep.violations[idx] = d.feasible ? 0.0 : std::max(d.max_violation, 1e-300);
  });
  for (int i = 0; i < rep.samples; ++i) {
    if (ok[static_cast<std::size_t>(i)]) {
      ++rep.feasible;
    } else {
      rep.failing.push_back(i);
    }
  }
  rep.fraction = rep.samples ? static_cast<double>(rep.feasible) / rep.samples : 1.0;
  return rep;
}

}  // namespace evnet
