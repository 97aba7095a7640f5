#include "evnet/power.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "evnet/error.hpp"
#include "evnet/optim.hpp"

namespace evnet {

void validate_network(const PowerNetwork& net) {
  const int n = net.bus_count();
  if (n == 0) throw ValidationError("power network has no buses");
  if (static_cast<int>(net.generators.size()) != n || static_cast<int>(net.baseload.size()) != n) {
    throw ValidationError("power network: need one generator and one baseload entry per bus");
  }
  if (net.slack < 0 || net.slack >= n) throw ValidationError("power network: slack bus out of range");
  for (int v = 0; v < n; ++v) {
    const Generator& g = net.generators[static_cast<std::size_t>(v)];
    const std::string where = "bus '" + net.bus_names[static_cast<std::size_t>(v)] + "'";
    if (!(g.a > 0.0)) throw ValidationError(where + ": quadratic cost coefficient must be > 0");
    if (g.g_min > g.g_max) throw ValidationError(where + ": g_min exceeds g_max");
    if (net.baseload[static_cast<std::size_t>(v)] < 0.0) {
      throw ValidationError(where + ": baseload must be >= 0");
    }
  }
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const Line& l : net.lines) {
    if (l.from < 0 || l.from >= n || l.to < 0 || l.to >= n || l.from == l.to) {
      throw ValidationError("power network: line endpoints invalid");
    }
    if (!(l.susceptance > 0.0)) throw ValidationError("power network: susceptance must be > 0");
    if (l.limit_forward < 0.0 || l.limit_backward < 0.0) {
      throw ValidationError("power network: line limits must be >= 0");
    }
    adj[static_cast<std::size_t>(l.from)].push_back(l.to);
    adj[static_cast<std::size_t>(l.to)].push_back(l.from);
  }
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::queue<int> bfs;
  bfs.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!bfs.empty()) {
    const int v = bfs.front();
    bfs.pop();
    for (int w : adj[static_cast<std::size_t>(v)]) {
      if (!seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = 1;
        ++reached;
        bfs.push(w);
      }
    }
  }
  if (reached != n) throw ValidationError("power network is disconnected");
}

Ptdf compute_ptdf(const PowerNetwork& net, int slack) {
  validate_network(net);
  const int n = net.bus_count();
  const int nl = net.line_count();
  if (slack < 0 || slack >= n) throw ValidationError("compute_ptdf: slack bus out of range");

  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  for (const Line& l : net.lines) {
    b(l.from, l.from) += l.susceptance;
    b(l.to, l.to) += l.susceptance;
    b(l.from, l.to) -= l.susceptance;
    b(l.to, l.from) -= l.susceptance;
  }
  // Reduced susceptance matrix without the slack row/column.
  std::vector<int> keep;
  for (int v = 0; v < n; ++v) {
    if (v != slack) keep.push_back(v);
  }
  const int m = n - 1;
  Eigen::MatrixXd reduced(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) reduced(i, j) = b(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
  }
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n);  // angle response to injections
  if (m > 0) {
    Eigen::MatrixXd inv = reduced.fullPivLu().inverse();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        x(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]) = inv(i, j);
      }
    }
  }
  Ptdf out;
  out.h.resize(2 * nl, n);
  out.c.resize(2 * nl);
  for (int k = 0; k < nl; ++k) {
    const Line& l = net.lines[static_cast<std::size_t>(k)];
    // Flow from->to per unit injection; withdrawals are negative injections.
    Eigen::RowVectorXd inj = l.susceptance * (x.row(l.from) - x.row(l.to));
    out.h.row(k) = -inj;
    out.h.row(nl + k) = inj;
    out.c(k) = l.limit_forward;
    out.c(nl + k) = l.limit_backward;
  }
  return out;
}

double generation_cost(const PowerNetwork& net, const Eigen::VectorXd& g) {
  double cost = 0.0;
  for (int v = 0; v < net.bus_count(); ++v) {
    const Generator& gen = net.generators[static_cast<std::size_t>(v)];
    cost += gen.a * g(v) * g(v) + gen.b * g(v);
  }
  return cost;
}

Eigen::VectorXd generator_best_response(const PowerNetwork& net, const Eigen::VectorXd& prices) {
  const int n = net.bus_count();
  if (prices.size() != n) throw ValidationError("generator_best_response: price vector size");
  Eigen::VectorXd g(n);
  for (int v = 0; v < n; ++v) {
    const Generator& gen = net.generators[static_cast<std::size_t>(v)];
    g(v) = std::clamp((prices(v) - gen.b) / (2.0 * gen.a), gen.g_min, gen.g_max);
  }
  return g;
}

namespace {

Eigen::VectorXd withdrawal_base(const PowerNetwork& net, std::span<const double> d) {
  const int n = net.bus_count();
  if (static_cast<int>(d.size()) != n) throw ValidationError("dispatch: demand vector size");
  Eigen::VectorXd w(n);
  for (int v = 0; v < n; ++v) {
    if (d[static_cast<std::size_t>(v)] < 0.0) throw ValidationError("dispatch: negative demand");
    w(v) = d[static_cast<std::size_t>(v)] + net.baseload[static_cast<std::size_t>(v)];
  }
  return w;
}

}  // namespace

double dispatch_kkt_residual(const PowerNetwork& net, const Ptdf& ptdf, std::span<const double> d,
                             const DispatchResult& r) {
  const int n = net.bus_count();
  const Eigen::VectorXd w = withdrawal_base(net, d);
  const Eigen::VectorXd eta = w - r.g;
  const Eigen::VectorXd flow = ptdf.h * eta;
  const double scale_g = 1.0 + w.cwiseAbs().maxCoeff() + r.g.cwiseAbs().maxCoeff();
  double res = 0.0;

  // Primal feasibility.
  res = std::max(res, std::abs(eta.sum()) / scale_g);
  for (Eigen::Index i = 0; i < flow.size(); ++i) {
    res = std::max(res, std::max(0.0, flow(i) - ptdf.c(i)) / (1.0 + std::abs(ptdf.c(i))));
  }
  for (int v = 0; v < n; ++v) {
    const Generator& gen = net.generators[static_cast<std::size_t>(v)];
    res = std::max(res, std::max({0.0, gen.g_min - r.g(v), r.g(v) - gen.g_max}) / scale_g);
  }
  // Dual feasibility and complementarity on the lines.
  const double scale_p = 1.0 + r.prices.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < r.mu.size(); ++i) {
    res = std::max(res, std::max(0.0, -r.mu(i)) / scale_p);
    res = std::max(res, std::abs(r.mu(i) * (flow(i) - ptdf.c(i))) /
                            (scale_p * (1.0 + std::abs(ptdf.c(i)))));
  }
  // Price consistency and stationarity with implied box multipliers.
  const Eigen::VectorXd lmp = r.gamma_bal * Eigen::VectorXd::Ones(n) + ptdf.h.transpose() * r.mu;
  res = std::max(res, (lmp - r.prices).cwiseAbs().maxCoeff() / scale_p);
  for (int v = 0; v < n; ++v) {
    const Generator& gen = net.generators[static_cast<std::size_t>(v)];
    const double s = 2.0 * gen.a * r.g(v) + gen.b - r.prices(v);
    const double band = 1e-9 * scale_g;
    double viol = std::abs(s);
    if (r.g(v) <= gen.g_min + band) viol = std::min(viol, std::max(0.0, -s));
    if (r.g(v) >= gen.g_max - band) viol = std::min(viol, std::max(0.0, s));
    res = std::max(res, viol / scale_p);
  }
  return res;
}

DispatchResult economic_dispatch(const PowerNetwork& net, const Ptdf& ptdf,
                                 std::span<const double> d, const DispatchOptions& options) {
  const int n = net.bus_count();
  const int rows = static_cast<int>(ptdf.h.rows());
  const Eigen::VectorXd w = withdrawal_base(net, d);

  optim::DenseQp qp;
  qp.hessian = Eigen::MatrixXd::Zero(n, n);
  qp.linear.resize(n);
  for (int v = 0; v < n; ++v) {
    const Generator& gen = net.generators[static_cast<std::size_t>(v)];
    qp.hessian(v, v) = 2.0 * gen.a;
    qp.linear(v) = gen.b;
  }
  qp.eq_normals = Eigen::MatrixXd::Ones(n, 1);
  qp.eq_rhs = Eigen::VectorXd::Constant(1, w.sum());
  qp.ineq_normals.resize(n, 2 * n + rows);
  qp.ineq_rhs.resize(2 * n + rows);
  qp.ineq_normals.leftCols(n) = Eigen::MatrixXd::Identity(n, n);
  qp.ineq_normals.middleCols(n, n) = -Eigen::MatrixXd::Identity(n, n);
  for (int v = 0; v < n; ++v) {
    qp.ineq_rhs(v) = net.generators[static_cast<std::size_t>(v)].g_min;
    qp.ineq_rhs(n + v) = -net.generators[static_cast<std::size_t>(v)].g_max;
  }
  // H (w - g) <= c  <=>  H g >= H w - c
  qp.ineq_normals.rightCols(rows) = ptdf.h.transpose();
  qp.ineq_rhs.tail(rows) = ptdf.h * w - ptdf.c;

  const optim::QpSolution sol = optim::solve_strictly_convex_qp(qp);
  if (!sol.feasible) {
    throw InfeasibleError("economic dispatch infeasible (max violation " +
                              std::to_string(sol.max_violation) + " MWh)",
                          sol.max_violation);
  }
  DispatchResult r;
  r.g = sol.x;
  r.gamma_bal = sol.eq_mult(0);
  r.mu = sol.ineq_mult.tail(rows);
  r.prices = r.gamma_bal * Eigen::VectorXd::Ones(n) + ptdf.h.transpose() * r.mu;
  r.flows = ptdf.h * (w - r.g);
  r.cost = generation_cost(net, r.g);
  for (int i = 0; i < rows; ++i) {
    if (r.mu(i) > 0.0 || std::abs(r.flows(i) - ptdf.c(i)) <= 1e-7 * (1.0 + std::abs(ptdf.c(i)))) {
      r.binding_lines.push_back(i);
    }
  }
  r.kkt_residual = dispatch_kkt_residual(net, ptdf, d, r);
  if (r.kkt_residual > options.tolerance) {
    throw ConvergenceError("economic dispatch KKT residual " + std::to_string(r.kkt_residual) +
                           " above tolerance");
  }
  return r;
}

FeasibilityReport validate_feasibility(const PowerNetwork& net, const Ptdf& ptdf,
                                       std::span<const double> d_min,
                                       std::span<const double> d_max, int samples,
                                       std::uint64_t seed) {
  const int n = net.bus_count();
  if (static_cast<int>(d_min.size()) != n || static_cast<int>(d_max.size()) != n) {
    throw ValidationError("validate_feasibility: demand box size");
  }
  std::vector<int> free_buses;
  for (int v = 0; v < n; ++v) {
    const auto i = static_cast<std::size_t>(v);
    if (d_min[i] < 0.0 || d_min[i] > d_max[i]) throw ValidationError("validate_feasibility: bad box");
    if (d_max[i] > d_min[i]) free_buses.push_back(v);
  }
  FeasibilityReport rep;
  Rng rng(seed);
  std::vector<double> point(d_min.begin(), d_min.end());

  auto check = [&](const std::string& label) {
    ++rep.points_checked;
    try {
      economic_dispatch(net, ptdf, point);
      return true;
    } catch (const InfeasibleError& e) {
      rep.feasible = false;
      rep.failing_point = point;
      rep.failing_label = label;
      rep.max_violation = e.max_violation();
      return false;
    }
  };

  const std::size_t k = free_buses.size();
  const bool exhaustive = k <= 12;
  const std::uint64_t corners = exhaustive ? (1ULL << k) : 4096ULL;
  for (std::uint64_t c = 0; c < corners; ++c) {
    const std::uint64_t bits = exhaustive ? c : rng.below(~0ULL);
    std::string label = "corner ";
    for (std::size_t j = 0; j < k; ++j) {
      const bool hi = ((bits >> j) & 1ULL) != 0;
      const auto v = static_cast<std::size_t>(free_buses[j]);
      point[v] = hi ? d_max[v] : d_min[v];
      label += hi ? '1' : '0';
    }
    if (!check(label)) return rep;
  }
  for (int s = 0; s < samples; ++s) {
    for (int v = 0; v < n; ++v) {
      const auto i = static_cast<std::size_t>(v);
      point[i] = rng.uniform(d_min[i], d_max[i]);
    }
    if (!check("sample " + std::to_string(s))) return rep;
  }
  return rep;
}

}  // namespace evnet
