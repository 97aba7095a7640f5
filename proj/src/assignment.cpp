#include "evnet/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "evnet/error.hpp"
#include "evnet/kernels.hpp"

namespace evnet {

DemandMap build_demand_map(const ExtendedGraph& graph, int bus_count) {
  if (graph.max_bus() >= bus_count) {
    throw ValidationError("station bus " + std::to_string(graph.max_bus()) +
                          " outside the power network");
  }
  DemandMap map;
  map.m = Eigen::MatrixXd::Zero(bus_count, graph.arc_count());
  for (const ExtendedArc& a : graph.arcs()) {
    if (a.kind == ArcKind::kChargeAmount) map.m(a.bus, a.id) = a.charge_kwh / 1000.0;
  }
  return map;
}

std::vector<double> flows_to_arc_flow(int arc_count, std::span<const PathSet> sets,
                                      const PathFlows& flows) {
  if (flows.size() != sets.size()) throw ValidationError("flows_to_arc_flow: class count mismatch");
  std::vector<double> lambda(static_cast<std::size_t>(arc_count), 0.0);
  for (std::size_t q = 0; q < sets.size(); ++q) {
    if (flows[q].size() != sets[q].size()) {
      throw ValidationError("flows_to_arc_flow: path count mismatch for class " + std::to_string(q));
    }
    for (std::size_t k = 0; k < sets[q].size(); ++k) {
      const double f = flows[q][k];
      if (f < 0.0) throw ValidationError("flows_to_arc_flow: negative path flow");
      if (f == 0.0) continue;
      for (int id : sets[q].paths[k].arcs) {
        if (id < 0 || id >= arc_count) throw ValidationError("flows_to_arc_flow: arc id out of range");
        lambda[static_cast<std::size_t>(id)] += f;
      }
    }
  }
  return lambda;
}

std::vector<double> arc_flow_to_demand(const DemandMap& map, std::span<const double> arc_flow) {
  if (static_cast<Eigen::Index>(arc_flow.size()) != map.m.cols()) {
    throw ValidationError("arc_flow_to_demand: dimension mismatch");
  }
  std::vector<double> d(static_cast<std::size_t>(map.m.rows()), 0.0);
  std::vector<double> row_major(map.m.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      row_major.data(), map.m.rows(), map.m.cols()) = map.m;
  kernels::gemv(row_major, static_cast<std::size_t>(map.m.rows()),
                static_cast<std::size_t>(map.m.cols()), arc_flow, d);
  return d;
}

std::vector<double> compute_marginal_tolls(const ExtendedGraph& graph,
                                           std::span<const double> arc_flow, double gamma) {
  std::vector<double> tolls(static_cast<std::size_t>(graph.arc_count()), 0.0);
  for (const ExtendedArc& a : graph.arcs()) {
    if (a.kind == ArcKind::kRoad || a.kind == ArcKind::kEntrance) {
      tolls[static_cast<std::size_t>(a.id)] =
          gamma * a.slope * arc_flow[static_cast<std::size_t>(a.id)];
    }
  }
  return tolls;
}

double travel_cost(const ExtendedGraph& graph, std::span<const double> arc_flow, double gamma) {
  double total = 0.0;
  for (const ExtendedArc& a : graph.arcs()) {
    const double x = arc_flow[static_cast<std::size_t>(a.id)];
    if (x != 0.0) total += x * arc_time_cost(a, x, gamma);
  }
  return total;
}

double average_travel_time(const ExtendedGraph& graph, std::span<const double> arc_flow,
                           double total_vehicles) {
  if (total_vehicles <= 0.0) return 0.0;
  return travel_cost(graph, arc_flow, 1.0) / total_vehicles;
}

namespace {

// Minimizes sum_a lin_a x_a + quad_a x_a^2 over the path-flow polytope.
class PathFlowSolver {
 public:
  PathFlowSolver(int arc_count, std::span<const PathSet> sets,
                 std::span<const VehicleClass> classes, std::vector<double> lin,
                 std::vector<double> quad, const AssignmentOptions& options)
      : sets_(sets), classes_(classes), lin_(std::move(lin)), quad_(std::move(quad)),
        options_(options), arc_count_(arc_count) {
    if (sets.size() != classes.size()) {
      throw ValidationError("assignment: path sets and classes differ in length");
    }
    marginal_.assign(static_cast<std::size_t>(arc_count), 0.0);
  }

  AssignmentResult run() {
    initialize();
    AssignmentResult res;
    int it = 0;
    for (;; ++it) {
      refresh_marginal();
      const double obj = objective();
      const double gap = relative_gap(obj);
      if (options_.trace) options_.trace(it, obj, gap);
      if (gap <= options_.tolerance) {
        res.objective = obj;
        res.relative_gap = gap;
        break;
      }
      if (it >= options_.max_iterations) {
        throw ConvergenceError("assignment did not reach relative gap " +
                               std::to_string(options_.tolerance) + " in " +
                               std::to_string(options_.max_iterations) + " iterations (gap " +
                               std::to_string(gap) + ")");
      }
      if (options_.method == AssignmentMethod::kPairwise) {
        pairwise_sweep();
      } else {
        frank_wolfe_step();
      }
    }
    res.iterations = it;
    res.wardrop_residual = wardrop_residual();
    res.state.path_flows = flows_;
    res.state.arc_flow = lambda_;
    return res;
  }

 private:
  double path_marginal(const Path& p) const {
    double c = 0.0;
    for (int id : p.arcs) c += marginal_[static_cast<std::size_t>(id)];
    return c;
  }

  std::size_t cheapest(std::size_t q) const {
    std::size_t best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < sets_[q].size(); ++k) {
      const double c = path_marginal(sets_[q].paths[k]);
      if (c < best_cost) {
        best_cost = c;
        best = k;
      }
    }
    return best;
  }

  void initialize() {
    flows_.assign(sets_.size(), {});
    for (std::size_t q = 0; q < sets_.size(); ++q) {
      const double m = classes_[q].demand_rate;
      if (m > 0.0 && sets_[q].empty()) {
        throw ValidationError("class '" + classes_[q].name + "' has no feasible path");
      }
      flows_[q].assign(sets_[q].size(), 0.0);
    }
    if (options_.warm_start != nullptr) {
      const PathFlows& w = *options_.warm_start;
      if (w.size() != sets_.size()) throw ValidationError("assignment: warm start shape mismatch");
      for (std::size_t q = 0; q < sets_.size(); ++q) {
        if (w[q].size() != sets_[q].size()) {
          throw ValidationError("assignment: warm start shape mismatch");
        }
        double sum = 0.0;
        for (double f : w[q]) sum += std::max(f, 0.0);
        const double m = classes_[q].demand_rate;
        for (std::size_t k = 0; k < w[q].size(); ++k) {
          flows_[q][k] = sum > 0.0 ? std::max(w[q][k], 0.0) * (m / sum) : 0.0;
        }
        if (sum <= 0.0 && m > 0.0) flows_[q][0] = m;
      }
      lambda_ = flows_to_arc_flow(arc_count_, sets_, flows_);
      return;
    }
    // All-or-nothing at zero flow.
    lambda_.assign(static_cast<std::size_t>(arc_count_), 0.0);
    refresh_marginal();
    for (std::size_t q = 0; q < sets_.size(); ++q) {
      const double m = classes_[q].demand_rate;
      if (m <= 0.0) continue;
      flows_[q][cheapest(q)] = m;
    }
    lambda_ = flows_to_arc_flow(arc_count_, sets_, flows_);
  }

  void refresh_marginal() { kernels::affine(lin_, quad_, lambda_, 2.0, marginal_); }

  double objective() const {
    double v = 0.0;
    for (std::size_t a = 0; a < lambda_.size(); ++a) {
      v += lambda_[a] * (lin_[a] + quad_[a] * lambda_[a]);
    }
    return v;
  }

  double relative_gap(double obj) const {
    double gap = 0.0;
    for (std::size_t q = 0; q < sets_.size(); ++q) {
      const double m = classes_[q].demand_rate;
      if (m <= 0.0) continue;
      double used = 0.0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < sets_[q].size(); ++k) {
        const double c = path_marginal(sets_[q].paths[k]);
        best = std::min(best, c);
        used += flows_[q][k] * c;
      }
      gap += used - m * best;
    }
    return std::max(gap, 0.0) / std::max(1.0, std::abs(obj));
  }

  double wardrop_residual() const {
    double worst = 0.0;
    for (std::size_t q = 0; q < sets_.size(); ++q) {
      const double m = classes_[q].demand_rate;
      if (m <= 0.0) continue;
      std::vector<double> c(sets_[q].size());
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < c.size(); ++k) {
        c[k] = path_marginal(sets_[q].paths[k]);
        best = std::min(best, c[k]);
      }
      for (std::size_t k = 0; k < c.size(); ++k) {
        if (flows_[q][k] > 1e-6 * m) {
          worst = std::max(worst, (c[k] - best) / (1.0 + std::abs(best)));
        }
      }
    }
    return worst;
  }

  void shift(std::size_t q, std::size_t from, std::size_t to, double delta) {
    flows_[q][from] -= delta;
    flows_[q][to] += delta;
    for (int id : sets_[q].paths[from].arcs) {
      lambda_[static_cast<std::size_t>(id)] -= delta;
    }
    for (int id : sets_[q].paths[to].arcs) {
      lambda_[static_cast<std::size_t>(id)] += delta;
    }
    for (const Path* p : {&sets_[q].paths[from], &sets_[q].paths[to]}) {
      for (int id : p->arcs) {
        const auto a = static_cast<std::size_t>(id);
        lambda_[a] = std::max(lambda_[a], 0.0);
        marginal_[a] = lin_[a] + 2.0 * quad_[a] * lambda_[a];
      }
    }
  }

  // Equilibrate each class by moving flow from its costliest used path to its cheapest path.
  void pairwise_sweep() {
    for (std::size_t q = 0; q < sets_.size(); ++q) {
      if (classes_[q].demand_rate <= 0.0) continue;
      const std::size_t paths = sets_[q].size();
      for (std::size_t inner = 0; inner < paths; ++inner) {
        std::size_t lo = 0;
        std::size_t hi = 0;
        double lo_cost = std::numeric_limits<double>::infinity();
        double hi_cost = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < paths; ++k) {
          const double c = path_marginal(sets_[q].paths[k]);
          if (c < lo_cost) {
            lo_cost = c;
            lo = k;
          }
          if (flows_[q][k] > 0.0 && c > hi_cost) {
            hi_cost = c;
            hi = k;
          }
        }
        const double diff = hi_cost - lo_cost;
        if (lo == hi || !(diff > 1e-15 * (1.0 + std::abs(lo_cost)))) break;
        double curvature = 0.0;
        symmetric_difference(sets_[q].paths[hi], sets_[q].paths[lo], curvature);
        const double cap = flows_[q][hi];
        const double delta = curvature > 0.0 ? std::min(cap, diff / (2.0 * curvature)) : cap;
        if (delta <= 0.0) break;
        shift(q, hi, lo, delta);
        if (delta == cap) flows_[q][hi] = 0.0;
      }
    }
  }

  void symmetric_difference(const Path& a, const Path& b, double& curvature) const {
    // Paths are loop-free, so each arc appears at most once per path.
    for (int id : a.arcs) {
      if (std::find(b.arcs.begin(), b.arcs.end(), id) == b.arcs.end()) {
        curvature += quad_[static_cast<std::size_t>(id)];
      }
    }
    for (int id : b.arcs) {
      if (std::find(a.arcs.begin(), a.arcs.end(), id) == a.arcs.end()) {
        curvature += quad_[static_cast<std::size_t>(id)];
      }
    }
  }

  void frank_wolfe_step() {
    PathFlows target(sets_.size());
    for (std::size_t q = 0; q < sets_.size(); ++q) {
      target[q].assign(sets_[q].size(), 0.0);
      const double m = classes_[q].demand_rate;
      if (m > 0.0) target[q][cheapest(q)] = m;
    }
    const std::vector<double> y = flows_to_arc_flow(arc_count_, sets_, target);
    double slope = 0.0;
    double curvature = 0.0;
    for (std::size_t a = 0; a < y.size(); ++a) {
      const double dir = y[a] - lambda_[a];
      slope += marginal_[a] * dir;
      curvature += quad_[a] * dir * dir;
    }
    if (slope >= 0.0) return;
    const double t = curvature > 0.0 ? std::min(1.0, -slope / (2.0 * curvature)) : 1.0;
    for (std::size_t q = 0; q < sets_.size(); ++q) {
      for (std::size_t k = 0; k < flows_[q].size(); ++k) {
        flows_[q][k] = (1.0 - t) * flows_[q][k] + t * target[q][k];
      }
    }
    for (std::size_t a = 0; a < y.size(); ++a) {
      lambda_[a] = std::max(0.0, (1.0 - t) * lambda_[a] + t * y[a]);
    }
  }

  std::span<const PathSet> sets_;
  std::span<const VehicleClass> classes_;
  std::vector<double> lin_;
  std::vector<double> quad_;
  const AssignmentOptions& options_;
  int arc_count_;
  PathFlows flows_;
  std::vector<double> lambda_;
  std::vector<double> marginal_;
};

void check_prices(const ExtendedGraph& graph, std::span<const double> prices) {
  if (graph.max_bus() >= static_cast<int>(prices.size())) {
    throw ValidationError("assignment: missing price for bus " + std::to_string(graph.max_bus()));
  }
}

AssignmentResult finish(const ExtendedGraph& graph, std::size_t bus_count, AssignmentResult res) {
  const DemandMap map = build_demand_map(graph, static_cast<int>(bus_count));
  res.state.demand = arc_flow_to_demand(map, res.state.arc_flow);
  return res;
}

}  // namespace

AssignmentResult solve_ctap(const ExtendedGraph& graph, std::span<const PathSet> sets,
                            std::span<const VehicleClass> classes,
                            std::span<const double> prices_per_mwh, double gamma,
                            const AssignmentOptions& options) {
  check_prices(graph, prices_per_mwh);
  const auto n = static_cast<std::size_t>(graph.arc_count());
  std::vector<double> lin(n);
  std::vector<double> quad(n);
  for (const ExtendedArc& a : graph.arcs()) {
    const auto i = static_cast<std::size_t>(a.id);
    lin[i] = arc_time_cost(a, 0.0, gamma);
    if (a.kind == ArcKind::kChargeAmount) {
      lin[i] += prices_per_mwh[static_cast<std::size_t>(a.bus)] * a.charge_kwh / 1000.0;
    }
    quad[i] = gamma * a.slope;
  }
  PathFlowSolver solver(graph.arc_count(), sets, classes, std::move(lin), std::move(quad), options);
  return finish(graph, prices_per_mwh.size(), solver.run());
}

AssignmentResult solve_user_equilibrium(const ExtendedGraph& graph, std::span<const PathSet> sets,
                                        std::span<const VehicleClass> classes,
                                        std::span<const double> prices_per_mwh,
                                        std::span<const double> tolls, double gamma,
                                        const AssignmentOptions& options) {
  check_prices(graph, prices_per_mwh);
  if (!tolls.empty() && static_cast<int>(tolls.size()) != graph.arc_count()) {
    throw ValidationError("solve_user_equilibrium: toll vector length mismatch");
  }
  const auto n = static_cast<std::size_t>(graph.arc_count());
  std::vector<double> lin(n);
  std::vector<double> quad(n);
  for (const ExtendedArc& a : graph.arcs()) {
    const auto i = static_cast<std::size_t>(a.id);
    lin[i] = arc_time_cost(a, 0.0, gamma) + arc_money_cost(a, prices_per_mwh, tolls);
    quad[i] = 0.5 * gamma * a.slope;
  }
  PathFlowSolver solver(graph.arc_count(), sets, classes, std::move(lin), std::move(quad), options);
  return finish(graph, prices_per_mwh.size(), solver.run());
}

}  // namespace evnet
