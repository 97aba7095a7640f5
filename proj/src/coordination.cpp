#include "evnet/coordination.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "evnet/error.hpp"
#include "evnet/optim.hpp"

namespace evnet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

AssignmentOptions assignment_options(const Model& model) {
  AssignmentOptions o;
  o.tolerance = model.scenario.params.assignment_tolerance;
  o.max_iterations = model.scenario.params.assignment_max_iterations;
  return o;
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Infeasibility primal_infeasibility(const PowerNetwork& net, const Ptdf& ptdf,
                                   std::span<const double> demand, const Eigen::VectorXd& g) {
  const int n = net.bus_count();
  if (static_cast<int>(demand.size()) != n || g.size() != n) {
    throw ValidationError("primal_infeasibility: vector sizes");
  }
  Eigen::VectorXd eta(n);
  for (int v = 0; v < n; ++v) {
    eta(v) = demand[static_cast<std::size_t>(v)] + net.baseload[static_cast<std::size_t>(v)] - g(v);
  }
  Infeasibility out;
  out.balance = std::abs(eta.sum());
  out.line_excess = ptdf.h * eta - ptdf.c;
  const Eigen::VectorXd pos = out.line_excess.cwiseMax(0.0);
  out.l2 = std::sqrt(out.balance * out.balance + pos.squaredNorm());
  out.linf = std::max(out.balance, pos.size() > 0 ? pos.maxCoeff() : 0.0);
  return out;
}

double infeasibility_bound(int k, double alpha, double dual_distance) {
  if (k < 1) throw ValidationError("infeasibility_bound: k must be >= 1");
  if (!(alpha > 0.0)) throw ValidationError("infeasibility_bound: alpha must be > 0");
  if (dual_distance < 0.0) throw ValidationError("infeasibility_bound: distance must be >= 0");
  return 3.0 * dual_distance / (alpha * std::sqrt(static_cast<double>(k)));
}

SocialOptimum solve_social_optimum(const Model& model) {
  const Scenario& sc = model.scenario;
  const PowerNetwork& net = sc.power;
  const ExtendedGraph& graph = model.graph;
  const double gamma = sc.params.gamma;
  const int arcs = graph.arc_count();
  const int nb = net.bus_count();
  const int rows = static_cast<int>(model.ptdf.h.rows());
  const int nq = static_cast<int>(model.paths.size());

  std::vector<Eigen::Index> offset(static_cast<std::size_t>(nq) + 1, 0);
  for (int q = 0; q < nq; ++q) {
    offset[static_cast<std::size_t>(q) + 1] =
        offset[static_cast<std::size_t>(q)] + static_cast<Eigen::Index>(model.paths[static_cast<std::size_t>(q)].size());
  }
  const Eigen::Index np = offset.back();
  Eigen::MatrixXd inc(arcs, np);
  for (int q = 0; q < nq; ++q) {
    inc.middleCols(offset[static_cast<std::size_t>(q)], static_cast<Eigen::Index>(model.paths[static_cast<std::size_t>(q)].size())) =
        incidence_matrix(model.paths[static_cast<std::size_t>(q)], arcs);
  }

  // Variable scaling: path flows in units of the largest class demand, generation in units of
  // the largest capacity.
  double sf = 1.0;
  for (const VehicleClass& c : sc.classes) sf = std::max(sf, c.demand_rate);
  double sg = 1.0;
  for (const Generator& g : net.generators) sg = std::max(sg, std::abs(g.g_max));

  Eigen::VectorXd t0(arcs);
  Eigen::VectorXd curv(arcs);  // coefficient of lambda^2 in lambda * s(lambda)
  for (const ExtendedArc& a : graph.arcs()) {
    t0(a.id) = arc_time_cost(a, 0.0, gamma);
    curv(a.id) = gamma * a.slope;
  }
  const Eigen::MatrixXd af = sf * inc;  // lambda = af * xf
  const Eigen::MatrixXd dmap = model.demand_map.m * af;  // d = dmap * xf

  // Generators with g_min == g_max are constants; the rest are variables.
  const Eigen::VectorXd u = as_vector(net.baseload);
  std::vector<int> free_gen;
  Eigen::VectorXd fixed_g = Eigen::VectorXd::Zero(nb);
  for (int v = 0; v < nb; ++v) {
    const Generator& g = net.generators[static_cast<std::size_t>(v)];
    if (g.g_max > g.g_min) {
      free_gen.push_back(v);
    } else {
      fixed_g(v) = g.g_min;
    }
  }
  const auto ng = static_cast<Eigen::Index>(free_gen.size());
  Eigen::MatrixXd gsel = Eigen::MatrixXd::Zero(nb, ng);  // g = fixed_g + sg * gsel * xg
  for (Eigen::Index j = 0; j < ng; ++j) gsel(free_gen[static_cast<std::size_t>(j)], j) = 1.0;
  const Eigen::VectorXd load = u - fixed_g;
  const Eigen::Index n = np + ng;

  optim::ConvexQp qp;
  qp.p = Eigen::MatrixXd::Zero(n, n);
  qp.p.topLeftCorner(np, np) = 2.0 * af.transpose() * curv.asDiagonal() * af;
  qp.q = Eigen::VectorXd::Zero(n);
  qp.q.head(np) = af.transpose() * t0;
  for (Eigen::Index j = 0; j < ng; ++j) {
    const Generator& g = net.generators[static_cast<std::size_t>(free_gen[static_cast<std::size_t>(j)])];
    qp.p(np + j, np + j) = 2.0 * g.a * sg * sg;
    qp.q(np + j) = g.b * sg;
  }
  // Equalities: class totals, then power balance 1'(d + u - g) = 0.
  qp.a = Eigen::MatrixXd::Zero(nq + 1, n);
  qp.b = Eigen::VectorXd::Zero(nq + 1);
  for (int q = 0; q < nq; ++q) {
    const auto qs = static_cast<std::size_t>(q);
    qp.a.block(q, offset[qs], 1, offset[qs + 1] - offset[qs]).setOnes();
    qp.b(q) = sc.classes[qs].demand_rate / sf;
  }
  qp.a.block(nq, 0, 1, np) = dmap.colwise().sum();
  qp.a.block(nq, np, 1, ng).setConstant(-sg);
  qp.b(nq) = -load.sum();
  // Inequalities: -x_f <= 0, g <= g_max, -g <= -g_min, H(d + u - g) <= c.
  const Eigen::Index mi = np + 2 * ng + rows;
  qp.g = Eigen::MatrixXd::Zero(mi, n);
  qp.h = Eigen::VectorXd::Zero(mi);
  qp.g.topLeftCorner(np, np) = -Eigen::MatrixXd::Identity(np, np);
  for (Eigen::Index j = 0; j < ng; ++j) {
    const Generator& g = net.generators[static_cast<std::size_t>(free_gen[static_cast<std::size_t>(j)])];
    qp.g(np + j, np + j) = sg;
    qp.h(np + j) = g.g_max;
    qp.g(np + ng + j, np + j) = -sg;
    qp.h(np + ng + j) = -g.g_min;
  }
  qp.g.block(np + 2 * ng, 0, rows, np) = model.ptdf.h * dmap;
  qp.g.block(np + 2 * ng, np, rows, ng) = -sg * model.ptdf.h * gsel;
  qp.h.tail(rows) = model.ptdf.c - model.ptdf.h * load;

  optim::IpmOptions io;
  io.tolerance = sc.params.social_optimum_tolerance;
  io.max_iterations = 300;
  const optim::IpmSolution sol = optim::solve_convex_qp(qp, io);
  const double kkt = std::max({sol.primal_residual, sol.dual_residual, sol.complementarity});
  if (!sol.converged) {
    throw ConvergenceError("social optimum: interior point stopped with KKT residual " +
                           std::to_string(kkt));
  }

  SocialOptimum so;
  so.iterations = sol.iterations;
  so.kkt_residual = kkt;
  so.path_flows.resize(static_cast<std::size_t>(nq));
  for (int q = 0; q < nq; ++q) {
    const auto qs = static_cast<std::size_t>(q);
    for (Eigen::Index k = offset[qs]; k < offset[qs + 1]; ++k) {
      so.path_flows[qs].push_back(std::max(0.0, sf * sol.x(k)));
    }
  }
  so.arc_flow = flows_to_arc_flow(arcs, model.paths, so.path_flows);
  so.demand = arc_flow_to_demand(model.demand_map, so.arc_flow);
  so.g = fixed_g + sg * gsel * sol.x.tail(ng);
  so.gamma_bal = sol.y(nq);
  so.mu = sol.z.tail(rows);
  so.prices = so.gamma_bal * Eigen::VectorXd::Ones(nb) + model.ptdf.h.transpose() * so.mu;
  so.travel_cost = travel_cost(graph, so.arc_flow, gamma);
  so.generation_cost = generation_cost(net, so.g);
  so.objective = so.travel_cost + so.generation_cost;
  return so;
}

std::uint64_t quantized_state_hash(const Eigen::VectorXd& prices, const std::vector<double>& demand) {
  // FNV-1a over the rounded integers.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](long long v) {
    auto x = static_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (x >> (8 * i)) & 0xffULL;
      h *= 1099511628211ULL;
    }
  };
  for (Eigen::Index i = 0; i < prices.size(); ++i) mix(std::llround(prices(i) / 1e-4));
  mix(-1);
  for (double d : demand) mix(std::llround(d / 1e-3));
  return h;
}

GreedyReport run_greedy_pricing(const Model& model, int max_iterations) {
  const Scenario& sc = model.scenario;
  const PowerNetwork& net = sc.power;
  const int nb = net.bus_count();
  const double gamma = sc.params.gamma;
  DispatchOptions dopt;
  dopt.tolerance = sc.params.dispatch_tolerance;

  GreedyReport rep;
  rep.trace.scheme = "greedy";
  Eigen::VectorXd prices = Eigen::VectorXd::Constant(nb, sc.params.greedy_initial_price);
  double gamma_bal = sc.params.greedy_initial_price;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(model.ptdf.h.rows());
  std::vector<std::uint64_t> history;

  for (int i = 0; i < max_iterations; ++i) {
    const std::vector<double> p(prices.data(), prices.data() + nb);
    const AssignmentResult ar =
        solve_ctap(model.graph, model.paths, sc.classes, p, gamma, assignment_options(model));

    CoordinationRow row;
    row.k = i;
    row.gamma_bal = gamma_bal;
    row.mu = mu;
    row.prices = prices;
    row.demand = ar.state.demand;
    row.arc_flow = ar.state.arc_flow;
    row.travel_cost = travel_cost(model.graph, row.arc_flow, gamma);
    row.itso_objective = row.travel_cost + prices.dot(as_vector(row.demand));
    row.bound = kNaN;

    // Ex-post dispatch of the realized demand; its LMPs are next period's posted prices.
    DispatchResult dr;
    try {
      dr = economic_dispatch(net, model.ptdf, row.demand, dopt);
    } catch (const InfeasibleError& e) {
      row.dispatch_feasible = false;
      row.g = Eigen::VectorXd::Constant(nb, kNaN);
      row.line_excess = Eigen::VectorXd::Constant(model.ptdf.h.rows(), kNaN);
      row.balance = kNaN;
      row.infeasibility_l2 = row.infeasibility_inf = e.max_violation();
      row.ipso_objective = row.combined_objective = kNaN;
      rep.trace.rows.push_back(row);
      rep.infeasible = true;
      rep.infeasible_iteration = i;
      rep.infeasible_violation = e.max_violation();
      break;
    }
    row.g = dr.g;
    const Infeasibility inf = primal_infeasibility(net, model.ptdf, row.demand, row.g);
    row.balance = inf.balance;
    row.line_excess = inf.line_excess;
    row.infeasibility_l2 = inf.l2;
    row.infeasibility_inf = inf.linf;
    row.ipso_objective = dr.cost;
    row.combined_objective = row.travel_cost + dr.cost;
    row.dual_objective = kNaN;
    rep.trace.rows.push_back(row);

    const std::uint64_t h = quantized_state_hash(prices, row.demand);
    if (!rep.cycle_found) {
      for (int period = 1; period <= 8 && period <= static_cast<int>(history.size()); ++period) {
        if (history[history.size() - static_cast<std::size_t>(period)] == h) {
          rep.cycle_found = true;
          rep.cycle_period = period;
          rep.cycle_start = i - period;
          rep.detected_at = i;
          for (int j = i - period; j < i; ++j) {
            rep.phase_objectives.push_back(rep.trace.rows[static_cast<std::size_t>(j)].combined_objective);
          }
          break;
        }
      }
    }
    history.push_back(h);
    if (rep.cycle_found) break;

    prices = dr.prices;
    gamma_bal = dr.gamma_bal;
    mu = dr.mu;
  }
  return rep;
}

DualDecompositionOptions dual_decomposition_defaults(const Model& model) {
  const Parameters& p = model.scenario.params;
  DualDecompositionOptions o;
  o.alpha = p.alpha;
  o.step_scale_mwh = p.step_scale_mwh;
  o.max_iterations = p.dd_max_iterations;
  o.tolerance = p.dd_tolerance;
  o.divergence_norm = p.dd_divergence_norm;
  o.gamma0 = p.dd_gamma0;
  o.mu0 = p.dd_mu0;
  return o;
}

CoordinationTrace run_dual_decomposition(const Model& model, const DualDecompositionOptions& opts) {
  const Scenario& sc = model.scenario;
  const PowerNetwork& net = sc.power;
  const int nb = net.bus_count();
  const Eigen::Index rows = model.ptdf.h.rows();
  const double gamma = sc.params.gamma;
  if (!(opts.alpha > 0.0) || !(opts.step_scale_mwh > 0.0)) {
    throw ValidationError("dual decomposition: alpha and step scale must be > 0");
  }
  if (opts.tolerance > 0.0 && !opts.reference_objective) {
    throw ValidationError("dual decomposition: a tolerance needs the reference objective");
  }
  const double step = opts.alpha / opts.step_scale_mwh;

  CoordinationTrace trace;
  trace.scheme = "dual-decomp";
  double gamma_bal = opts.gamma0;
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(rows, opts.mu0);
  PathFlows flows;
  AssignmentOptions aopt = assignment_options(model);

  for (int k = 0; k < opts.max_iterations; ++k) {
    const Eigen::VectorXd prices = gamma_bal * Eigen::VectorXd::Ones(nb) + model.ptdf.h.transpose() * mu;
    const std::vector<double> p(prices.data(), prices.data() + nb);
    aopt.warm_start = flows.empty() ? nullptr : &flows;
    const AssignmentResult ar = solve_ctap(model.graph, model.paths, sc.classes, p, gamma, aopt);
    flows = ar.state.path_flows;
    const Eigen::VectorXd g = generator_best_response(net, prices);

    CoordinationRow row;
    row.k = k;
    row.gamma_bal = gamma_bal;
    row.mu = mu;
    row.prices = prices;
    row.demand = ar.state.demand;
    row.arc_flow = ar.state.arc_flow;
    row.g = g;
    const Infeasibility inf = primal_infeasibility(net, model.ptdf, row.demand, g);
    Eigen::VectorXd eta(nb);
    for (int v = 0; v < nb; ++v) {
      eta(v) = row.demand[static_cast<std::size_t>(v)] + net.baseload[static_cast<std::size_t>(v)] - g(v);
    }
    const double signed_balance = eta.sum();
    row.balance = signed_balance;
    row.line_excess = inf.line_excess;
    row.infeasibility_l2 = inf.l2;
    row.infeasibility_inf = inf.linf;
    row.bound = (k >= 1 && opts.dual_distance)
                    ? opts.step_scale_mwh * infeasibility_bound(k, opts.alpha, *opts.dual_distance)
                    : kNaN;
    row.travel_cost = travel_cost(model.graph, row.arc_flow, gamma);
    const double gen = generation_cost(net, g);
    row.itso_objective = row.travel_cost + prices.dot(as_vector(row.demand));
    row.ipso_objective = gen - prices.dot(g);
    row.combined_objective = row.travel_cost + gen;
    row.dual_objective = row.combined_objective + gamma_bal * signed_balance + mu.dot(inf.line_excess);
    row.reserve_cost = (k >= 1 && opts.reserve_cost) ? opts.reserve_cost(k) : kNaN;
    trace.rows.push_back(row);

    if (opts.tolerance > 0.0 &&
        std::abs(row.combined_objective - *opts.reference_objective) <=
            opts.tolerance * std::abs(*opts.reference_objective)) {
      break;
    }

    gamma_bal += step * signed_balance;
    mu = (mu + step * inf.line_excess).cwiseMax(0.0);
    const double norm = std::sqrt(gamma_bal * gamma_bal + mu.squaredNorm());
    if (!std::isfinite(norm) || norm > opts.divergence_norm) {
      throw ConvergenceError("dual decomposition diverged at iteration " + std::to_string(k) +
                             " (dual norm " + std::to_string(norm) + "); reduce alpha");
    }
  }
  return trace;
}

}  // namespace evnet
