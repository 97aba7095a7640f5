#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "evnet/assignment.hpp"
#include "evnet/coordination.hpp"
#include "evnet/error.hpp"

namespace evnet::testkit {

namespace {

Generator no_unit() { return Generator{1.0, 0.0, 0.0, 0.0}; }

}  // namespace

PowerNetwork random_small_network(Rng& rng) {
  PowerNetwork net;
  const double u = rng.uniform();
  const int n = u < 0.15 ? 1 : (u < 0.5 ? 2 : 3);
  for (int v = 0; v < n; ++v) {
    net.bus_names.push_back("b" + std::to_string(v));
    if (v > 0 && rng.uniform() < 0.25) {
      net.generators.push_back(no_unit());
    } else {
      Generator g;
      g.a = rng.uniform(0.02, 0.3);
      g.b = rng.uniform(0.0, 40.0);
      g.g_min = rng.uniform(0.0, 15.0);
      g.g_max = g.g_min + rng.uniform(30.0, 150.0);
      net.generators.push_back(g);
    }
    net.baseload.push_back(rng.uniform(0.0, 50.0));
  }
  auto add_line = [&](int f, int t) {
    Line l;
    l.from = f;
    l.to = t;
    l.susceptance = rng.uniform(1.0, 10.0);
    l.limit_forward = rng.uniform(5.0, 80.0);
    l.limit_backward = rng.uniform() < 0.5 ? l.limit_forward : rng.uniform(5.0, 80.0);
    net.lines.push_back(l);
  };
  if (n >= 2) add_line(0, 1);
  if (n == 3) {
    add_line(1, 2);
    if (rng.uniform() < 0.6) add_line(2, 0);
  }
  net.slack = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  return net;
}

std::vector<double> random_demand(Rng& rng, int buses, double hi) {
  std::vector<double> d(static_cast<std::size_t>(buses));
  for (double& x : d) x = rng.uniform(0.0, hi);
  return d;
}

Eigen::MatrixXd oracle_ptdf(const PowerNetwork& net) {
  const int n = net.bus_count();
  const int nl = net.line_count();
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (const Line& l : net.lines) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e(l.from) = 1.0;
    e(l.to) = -1.0;
    lap += l.susceptance * e * e.transpose();
  }
  const Eigen::MatrixXd pinv = lap.completeOrthogonalDecomposition().pseudoInverse();
  Eigen::MatrixXd h(2 * nl, n);
  for (int j = 0; j < n; ++j) {
    // Withdraw one unit at j, inject it at the slack.
    Eigen::VectorXd inj = Eigen::VectorXd::Zero(n);
    inj(j) -= 1.0;
    inj(net.slack) += 1.0;
    const Eigen::VectorXd theta = pinv * inj;
    for (int k = 0; k < nl; ++k) {
      const Line& l = net.lines[static_cast<std::size_t>(k)];
      const double f = l.susceptance * (theta(l.from) - theta(l.to));
      h(k, j) = f;
      h(nl + k, j) = -f;
    }
  }
  return h;
}

std::optional<OracleDispatch> oracle_dispatch(const PowerNetwork& net, const std::vector<double>& d) {
  const int n = net.bus_count();
  const int nl = net.line_count();
  const Eigen::MatrixXd h = oracle_ptdf(net);
  Eigen::VectorXd c(2 * nl);
  for (int k = 0; k < nl; ++k) {
    c(k) = net.lines[static_cast<std::size_t>(k)].limit_forward;
    c(nl + k) = net.lines[static_cast<std::size_t>(k)].limit_backward;
  }
  Eigen::VectorXd load(n);
  for (int v = 0; v < n; ++v) load(v) = d[static_cast<std::size_t>(v)] + net.baseload[static_cast<std::size_t>(v)];
  const double tol = 1e-9;

  int gen_states = 1;
  for (int v = 0; v < n; ++v) gen_states *= 3;
  int line_states = 1;
  for (int k = 0; k < nl; ++k) line_states *= 3;

  for (int gs = 0; gs < gen_states; ++gs) {
    // 0 free, 1 lower, 2 upper
    std::vector<int> st(static_cast<std::size_t>(n));
    for (int v = 0, x = gs; v < n; ++v, x /= 3) st[static_cast<std::size_t>(v)] = x % 3;
    for (int ls = 0; ls < line_states; ++ls) {
      std::vector<int> rows;
      for (int k = 0, x = ls; k < nl; ++k, x /= 3) {
        if (x % 3 == 1) rows.push_back(k);
        if (x % 3 == 2) rows.push_back(nl + k);
      }
      std::vector<int> free;
      Eigen::VectorXd fixed = Eigen::VectorXd::Zero(n);
      for (int v = 0; v < n; ++v) {
        const Generator& g = net.generators[static_cast<std::size_t>(v)];
        const int s = st[static_cast<std::size_t>(v)];
        if (s == 0) free.push_back(v);
        if (s == 1) fixed(v) = g.g_min;
        if (s == 2) fixed(v) = g.g_max;
      }
      const int nf = static_cast<int>(free.size());
      const int na = static_cast<int>(rows.size());
      const int m = nf + 1 + na;
      // unknowns [g_F, gamma, mu_A]
      Eigen::MatrixXd k = Eigen::MatrixXd::Zero(m, m);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
      for (int i = 0; i < nf; ++i) {
        const int v = free[static_cast<std::size_t>(i)];
        const Generator& g = net.generators[static_cast<std::size_t>(v)];
        k(i, i) = 2.0 * g.a;
        k(i, nf) = -1.0;
        for (int j = 0; j < na; ++j) k(i, nf + 1 + j) = -h(rows[static_cast<std::size_t>(j)], v);
        rhs(i) = -g.b;
      }
      for (int i = 0; i < nf; ++i) k(nf, i) = 1.0;
      rhs(nf) = load.sum() - fixed.sum();
      for (int j = 0; j < na; ++j) {
        const int r = rows[static_cast<std::size_t>(j)];
        for (int i = 0; i < nf; ++i) k(nf + 1 + j, i) = -h(r, free[static_cast<std::size_t>(i)]);
        rhs(nf + 1 + j) = c(r) - h.row(r).dot(load - fixed);
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
      if (lu.rank() < m) continue;
      const Eigen::VectorXd x = lu.solve(rhs);

      Eigen::VectorXd g = fixed;
      for (int i = 0; i < nf; ++i) g(free[static_cast<std::size_t>(i)]) = x(i);
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(2 * nl);
      for (int j = 0; j < na; ++j) mu(rows[static_cast<std::size_t>(j)]) = x(nf + 1 + j);
      const double gamma = x(nf);

      bool ok = na == 0 || mu.minCoeff() >= -tol;
      for (int v = 0; v < n && ok; ++v) {
        const Generator& gen = net.generators[static_cast<std::size_t>(v)];
        ok = g(v) >= gen.g_min - tol && g(v) <= gen.g_max + tol;
      }
      if (!ok) continue;
      if (nl > 0 && (h * (load - g) - c).maxCoeff() > tol * (1.0 + c.maxCoeff())) continue;
      const Eigen::VectorXd p = Eigen::VectorXd::Constant(n, gamma) + h.transpose() * mu;
      for (int v = 0; v < n && ok; ++v) {
        const Generator& gen = net.generators[static_cast<std::size_t>(v)];
        const double marginal = 2.0 * gen.a * g(v) + gen.b - p(v);
        if (st[static_cast<std::size_t>(v)] == 1) ok = marginal >= -tol * (1.0 + std::abs(p(v)));
        if (st[static_cast<std::size_t>(v)] == 2) ok = marginal <= tol * (1.0 + std::abs(p(v)));
      }
      if (!ok) continue;
      return OracleDispatch{g, gamma, mu, p};
    }
  }
  return std::nullopt;
}

PowerNetwork ieee9(double limit) {
  PowerNetwork net;
  for (int v = 1; v <= 9; ++v) net.bus_names.push_back("bus" + std::to_string(v));
  net.generators.assign(9, no_unit());
  net.generators[0] = {0.11, 5.0, 10.0, 250.0};
  net.generators[1] = {0.085, 1.2, 10.0, 300.0};
  net.generators[2] = {0.1225, 1.0, 10.0, 270.0};
  net.baseload.assign(9, 0.0);
  net.baseload[4] = 90.0;
  net.baseload[6] = 100.0;
  net.baseload[8] = 125.0;
  const int ends[9][2] = {{0, 3}, {3, 4}, {4, 5}, {2, 5}, {5, 6}, {6, 7}, {7, 1}, {7, 8}, {8, 3}};
  const double b[9] = {17.361, 10.870, 5.882, 17.065, 9.921, 13.889, 16.0, 6.211, 11.765};
  for (int k = 0; k < 9; ++k) net.lines.push_back({ends[k][0], ends[k][1], b[k], limit, limit});
  net.slack = 0;
  return net;
}

RandomTransport random_transport(Rng& rng, int max_nodes, int max_stations, int buses) {
  RandomTransport t;
  const int n = 3 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_nodes - 2)));
  for (int v = 0; v < n; ++v) t.road.node_names.push_back("n" + std::to_string(v));
  auto arc = [&](int a, int b) {
    RoadArc r;
    r.tail = a;
    r.head = b;
    r.free_flow_time = rng.uniform(5.0, 30.0);
    r.latency_slope = rng.uniform(0.001, 0.01);
    r.energy = rng.uniform(1.0, 8.0);
    t.road.arcs.push_back(r);
  };
  // Chain 0 -> ... -> n-1 through a random subset of the middle nodes, then extra arcs.
  int prev = 0;
  for (int v = 1; v < n - 1; ++v) {
    if (rng.uniform() < 0.6) {
      arc(prev, v);
      prev = v;
    }
  }
  arc(prev, n - 1);
  const int extra = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * n)));
  for (int i = 0; i < extra; ++i) {
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    if (a != b) arc(a, b);
  }

  std::vector<int> nodes(static_cast<std::size_t>(n));
  std::iota(nodes.begin(), nodes.end(), 0);
  const int ns = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_stations + 1)));
  for (int s = 0; s < ns; ++s) {
    const auto pick = static_cast<std::size_t>(rng.below(nodes.size()));
    const int v = nodes[pick];
    nodes.erase(nodes.begin() + static_cast<std::ptrdiff_t>(pick));
    ChargingStation st;
    st.node = v;
    st.bus = static_cast<int>(rng.below(static_cast<std::uint64_t>(buses)));
    st.rate = rng.uniform(0.1, 1.0);
    for (double e : {0.0, 2.0, 4.0, 6.0, 10.0}) {
      if (rng.uniform() < 0.6) st.options.push_back(e);
    }
    if (st.options.empty()) st.options.push_back(5.0);
    st.entrance_free_flow_wait = rng.uniform(0.0, 10.0);
    st.entrance_wait_slope = rng.uniform(0.001, 0.01);
    st.is_trip_origin_facility = v == 0 && rng.uniform() < 0.5;
    t.stations.push_back(st);
  }

  const int nc = 1 + static_cast<int>(rng.below(2));
  for (int q = 0; q < nc; ++q) {
    VehicleClass c;
    c.name = "c" + std::to_string(q);
    c.origin = 0;
    c.destination = n - 1;
    c.demand_rate = rng.uniform(10.0, 100.0);
    c.battery_capacity = rng.uniform(10.0, 30.0);
    c.initial_charge = rng.uniform(0.0, c.battery_capacity);
    c.kind = rng.uniform() < 0.25 ? VehicleKind::kIcev : VehicleKind::kEv;
    t.classes.push_back(c);
  }
  return t;
}

std::set<std::vector<int>> oracle_paths(const ExtendedGraph& graph, const VehicleClass& cls) {
  const RoadGraph& base = graph.base();
  const bool ev = cls.kind == VehicleKind::kEv;
  std::vector<int> station_at(static_cast<std::size_t>(base.node_count()), -1);
  for (std::size_t s = 0; s < graph.stations().size(); ++s) {
    station_at[static_cast<std::size_t>(graph.stations()[s].node)] = static_cast<int>(s);
  }
  auto find_arc = [&](ArcKind kind, int station, double kwh, bool origin) {
    for (const ExtendedArc& a : graph.arcs()) {
      if (a.kind == kind && a.station == station && a.charge_kwh == kwh && a.at_origin == origin) {
        return a.id;
      }
    }
    throw Error("oracle: arc not found");
  };

  // Station choices at a node: each is a (possibly empty) arc sequence.
  auto choices_at = [&](int v, bool origin) {
    std::vector<std::vector<int>> out;
    const int s = station_at[static_cast<std::size_t>(v)];
    if (s < 0) return std::vector<std::vector<int>>{{}};
    const ChargingStation& st = graph.stations()[static_cast<std::size_t>(s)];
    if (st.is_trip_origin_facility) {
      out.push_back({});
      if (origin && ev && !graph.origin_charge_arcs(v).empty()) {
        for (double e : st.options) {
          if (e > 0.0) out.push_back({find_arc(ArcKind::kChargeAmount, s, e, true)});
        }
      }
      return out;
    }
    out.push_back({find_arc(ArcKind::kBypass, s, 0.0, false)});
    if (ev) {
      const int entrance = find_arc(ArcKind::kEntrance, s, 0.0, false);
      for (double e : st.options) {
        if (e > 0.0) out.push_back({entrance, find_arc(ArcKind::kChargeAmount, s, e, false)});
      }
    }
    return out;
  };

  // Loop-free base routes as road-arc indices; road arc k is extended arc k.
  std::vector<std::vector<int>> routes;
  std::vector<int> route;
  std::vector<char> seen(static_cast<std::size_t>(base.node_count()), 0);
  std::function<void(int)> walk = [&](int v) {
    if (v == cls.destination) {
      routes.push_back(route);
      return;
    }
    for (std::size_t k = 0; k < base.arcs.size(); ++k) {
      const RoadArc& r = base.arcs[k];
      if (r.tail != v || seen[static_cast<std::size_t>(r.head)]) continue;
      seen[static_cast<std::size_t>(r.head)] = 1;
      route.push_back(static_cast<int>(k));
      walk(r.head);
      route.pop_back();
      seen[static_cast<std::size_t>(r.head)] = 0;
    }
  };
  seen[static_cast<std::size_t>(cls.origin)] = 1;
  walk(cls.origin);

  std::set<std::vector<int>> out;
  for (const std::vector<int>& r : routes) {
    // Segments: origin choices, then per road arc [arc] + choices at its head (none at the end).
    std::vector<std::vector<std::vector<int>>> segments;
    std::vector<std::vector<int>> first;
    const int s0 = station_at[static_cast<std::size_t>(cls.origin)];
    if (s0 >= 0 && graph.stations()[static_cast<std::size_t>(s0)].is_trip_origin_facility) {
      first = choices_at(cls.origin, true);
    } else {
      first = choices_at(cls.origin, false);
    }
    segments.push_back(first);
    for (std::size_t i = 0; i < r.size(); ++i) {
      const int k = r[i];
      if (graph.arc(k).kind != ArcKind::kRoad) throw Error("oracle: road id mismatch");
      std::vector<std::vector<int>> seg;
      const int head = base.arcs[static_cast<std::size_t>(k)].head;
      const auto after = i + 1 == r.size() ? std::vector<std::vector<int>>{{}} : choices_at(head, false);
      for (const auto& c : after) {
        std::vector<int> s{k};
        s.insert(s.end(), c.begin(), c.end());
        seg.push_back(s);
      }
      segments.push_back(seg);
    }
    std::vector<int> cur;
    std::function<void(std::size_t)> expand = [&](std::size_t i) {
      if (i == segments.size()) {
        if (ev) {
          double soc = cls.initial_charge;
          for (int id : cur) {
            soc -= graph.arc(id).energy;
            if (soc < 0.0 || soc > cls.battery_capacity) return;
          }
        }
        out.insert(cur);
        return;
      }
      for (const auto& s : segments[i]) {
        cur.insert(cur.end(), s.begin(), s.end());
        expand(i + 1);
        cur.resize(cur.size() - s.size());
      }
    };
    expand(0);
  }
  return out;
}

Scenario random_scenario(Rng& rng) {
  for (;;) {
    Scenario s;
    s.name = "random";
    s.power = random_small_network(rng);
    const int buses = s.power.bus_count();
    RandomTransport t = random_transport(rng, 6, 2, buses);
    s.road = t.road;
    s.stations = t.stations;
    s.classes = t.classes;
    double load = 0.0;
    for (double u : s.power.baseload) load += u;
    for (Line& l : s.power.lines) {
      l.limit_forward += 60.0;
      l.limit_backward += 60.0;
    }
    Generator& g0 = s.power.generators[0];
    g0.g_min = 0.0;
    g0.g_max = load + 200.0;
    s.demand_min.assign(static_cast<std::size_t>(buses), 0.0);
    s.demand_max.assign(static_cast<std::size_t>(buses), 5.0);
    s.params.seed = rng.below(1u << 30);
    try {
      const Model m = build_model(s);
      std::size_t paths = 0;
      for (const PathSet& ps : m.paths) paths += ps.size();
      if (paths >= 4 && !s.stations.empty()) return s;
    } catch (const ValidationError&) {
      // no path for some class or an undispatchable box; draw again
    }
  }
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

TollCheck toll_equivalence(const Model& model) {
  const Scenario& s = model.scenario;
  const SocialOptimum so = solve_social_optimum(model);
  const std::vector<double> tolls = compute_marginal_tolls(model.graph, so.arc_flow, s.params.gamma);
  const std::vector<double> prices(so.prices.data(), so.prices.data() + so.prices.size());
  AssignmentOptions opt;
  opt.tolerance = s.params.assignment_tolerance;
  opt.max_iterations = s.params.assignment_max_iterations;
  const AssignmentResult ue = solve_user_equilibrium(model.graph, model.paths, s.classes, prices,
                                                     tolls, s.params.gamma, opt);
  TollCheck out;
  for (std::size_t a = 0; a < so.arc_flow.size(); ++a) {
    out.max_diff = std::max(out.max_diff, std::abs(ue.state.arc_flow[a] - so.arc_flow[a]));
  }
  for (const VehicleClass& c : s.classes) out.scale += c.demand_rate;
  return out;
}

}  // namespace evnet::testkit
