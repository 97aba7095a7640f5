#include <set>

#include <gtest/gtest.h>

#include "evnet/error.hpp"
#include "evnet/espp.hpp"
#include "evnet/scenario.hpp"
#include "evnet/transport_graph.hpp"
#include "support.hpp"

using namespace evnet;

namespace {

// a -> b -> c with a station at b (options 0, 5, 10 kWh).
RoadGraph line3() {
  RoadGraph g;
  g.node_names = {"a", "b", "c"};
  g.arcs = {{0, 1, 10.0, 0.01, 6.0, 0.0}, {1, 2, 20.0, 0.02, 8.0, 1.5}};
  return g;
}

ChargingStation station_b() {
  ChargingStation s;
  s.node = 1;
  s.bus = 0;
  s.rate = 0.5;
  s.options = {0.0, 5.0, 10.0};
  s.entrance_free_flow_wait = 3.0;
  s.entrance_wait_slope = 0.01;
  return s;
}

VehicleClass ev(double soc, double cap) {
  VehicleClass c;
  c.name = "ev";
  c.origin = 0;
  c.destination = 2;
  c.demand_rate = 10.0;
  c.initial_charge = soc;
  c.battery_capacity = cap;
  return c;
}

}  // namespace

TEST(ExtendedGraph, ArcLayout) {
  const std::vector<ChargingStation> st{station_b()};
  const ExtendedGraph g = ExtendedGraph::build(line3(), st, {0});
  EXPECT_EQ(g.count(ArcKind::kRoad), 2);
  EXPECT_EQ(g.count(ArcKind::kEntrance), 1);
  EXPECT_EQ(g.count(ArcKind::kBypass), 1);
  EXPECT_EQ(g.count(ArcKind::kChargeAmount), 2);  // the 0 option is the bypass
  EXPECT_EQ(g.node_count(), 3 + 2);
  for (const ExtendedArc& a : g.arcs()) {
    if (a.kind == ArcKind::kChargeAmount) {
      EXPECT_DOUBLE_EQ(a.energy, -a.charge_kwh);
      EXPECT_DOUBLE_EQ(a.free_flow_time, a.charge_kwh / 0.5);
      EXPECT_EQ(a.bus, 0);
    }
  }
  EXPECT_EQ(g.max_bus(), 0);
}

TEST(ExtendedGraph, OriginFacility) {
  ChargingStation home = station_b();
  home.node = 0;
  home.is_trip_origin_facility = true;
  const std::vector<ChargingStation> st{home};
  const ExtendedGraph g = ExtendedGraph::build(line3(), st, {0});
  ASSERT_EQ(g.origin_charge_arcs(0).size(), 2u);
  for (int id : g.origin_charge_arcs(0)) {
    EXPECT_TRUE(g.arc(id).at_origin);
    EXPECT_DOUBLE_EQ(arc_time_cost(g.arc(id), 0.0, 1.0), 0.0);
  }
  EXPECT_EQ(g.count(ArcKind::kEntrance), 0);
}

TEST(ExtendedGraph, ValidationErrors) {
  ChargingStation s = station_b();
  s.options = {5.0, 5.0};
  std::vector<ChargingStation> st{s};
  EXPECT_THROW(ExtendedGraph::build(line3(), st, {0}), ValidationError);
  s = station_b();
  s.rate = 0.0;
  st = {s};
  EXPECT_THROW(ExtendedGraph::build(line3(), st, {0}), ValidationError);
  st = {station_b(), station_b()};
  EXPECT_THROW(ExtendedGraph::build(line3(), st, {0}), ValidationError);
  s = station_b();
  s.node = 7;
  st = {s};
  EXPECT_THROW(ExtendedGraph::build(line3(), st, {0}), ValidationError);
  RoadGraph loop = line3();
  loop.arcs.push_back({2, 2, 1.0, 0.0, 0.0, 0.0});
  EXPECT_THROW(ExtendedGraph::build(loop, {}, {0}), ValidationError);
}

TEST(ArcCosts, TimeAndMoney) {
  const std::vector<ChargingStation> st{station_b()};
  const ExtendedGraph g = ExtendedGraph::build(line3(), st, {0});
  const std::vector<double> prices{80.0};
  for (const ExtendedArc& a : g.arcs()) {
    switch (a.kind) {
      case ArcKind::kRoad:
        EXPECT_DOUBLE_EQ(arc_time_cost(a, 100.0, 0.5), 0.5 * (a.free_flow_time + a.slope * 100.0));
        EXPECT_DOUBLE_EQ(arc_money_cost(a, prices, {}), a.toll);
        break;
      case ArcKind::kChargeAmount:
        EXPECT_DOUBLE_EQ(arc_money_cost(a, prices, {}), 80.0 * a.charge_kwh / 1000.0);
        break;
      case ArcKind::kBypass:
        EXPECT_DOUBLE_EQ(arc_time_cost(a, 5.0, 1.0), 0.0);
        break;
      case ArcKind::kEntrance:
        EXPECT_DOUBLE_EQ(arc_time_cost(a, 10.0, 1.0), 3.0 + 0.1);
        break;
    }
  }
  EXPECT_THROW(arc_time_cost(g.arc(0), -1.0, 1.0), ValidationError);
  EXPECT_THROW(arc_money_cost(g.arc(4), std::vector<double>{}, {}), ValidationError);
}

TEST(EnergyFeasibility, PrefixCheck) {
  const std::vector<double> e{3.0, -5.0, 4.0};
  EXPECT_TRUE(is_energy_feasible(e, 3.0, 10.0));
  EXPECT_FALSE(is_energy_feasible(e, 2.9, 10.0));   // empty after the first arc
  EXPECT_FALSE(is_energy_feasible(e, 8.5, 10.0));   // overfull after charging
  EXPECT_TRUE(is_energy_feasible(std::vector<double>{}, 0.0, 0.0));
}

TEST(Enumeration, SmallCorridor) {
  const std::vector<ChargingStation> st{station_b()};
  const ExtendedGraph g = ExtendedGraph::build(line3(), st, {0});
  // 6 kWh to b, 8 more to c. With 10 kWh: bypass fails (needs 14), charge 5 works, charge 10
  // overflows a 12 kWh battery (4 + 10 = 14).
  const PathSet s = enumerate_feasible_paths(g, ev(10.0, 12.0), 0);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s.paths[0].energy_charged, 5.0);
  EXPECT_DOUBLE_EQ(s.paths[0].energy_drawn, 14.0);
  EXPECT_DOUBLE_EQ(s.paths[0].min_soc, 1.0);
  const PathSet big = enumerate_feasible_paths(g, ev(20.0, 30.0), 0);
  EXPECT_EQ(big.size(), 3u);
  VehicleClass ice = ev(0.0, 0.0);
  ice.kind = VehicleKind::kIcev;
  EXPECT_EQ(enumerate_feasible_paths(g, ice, 0).size(), 1u);
  EnumerationOptions tight;
  tight.max_paths = 2;
  EXPECT_THROW(enumerate_feasible_paths(g, ev(20.0, 30.0), 0, tight), ConvergenceError);
  VehicleClass bad = ev(20.0, 10.0);
  EXPECT_THROW(enumerate_feasible_paths(g, bad, 0), ValidationError);
}

// Independent DFS oracle on 100 random graphs with up to 8 nodes and 2 stations.
TEST(Enumeration, MatchesOracleOnRandomGraphs) {
  Rng rng(41);
  int nonempty = 0;
  for (int t = 0; t < 100; ++t) {
    const testkit::RandomTransport tr = testkit::random_transport(rng, 8, 2, 2);
    std::set<int> origins;
    for (const VehicleClass& c : tr.classes) origins.insert(c.origin);
    const ExtendedGraph g = ExtendedGraph::build(tr.road, tr.stations, origins);
    for (std::size_t q = 0; q < tr.classes.size(); ++q) {
      const VehicleClass& c = tr.classes[q];
      const PathSet s = enumerate_feasible_paths(g, c, static_cast<int>(q));
      std::set<std::vector<int>> got;
      for (const Path& p : s.paths) {
        got.insert(p.arcs);
        if (c.kind == VehicleKind::kEv) {
          EXPECT_TRUE(is_energy_feasible(g, p.arcs, c.initial_charge, c.battery_capacity));
        }
      }
      EXPECT_EQ(got.size(), s.size()) << "duplicate paths, trial " << t;
      EXPECT_EQ(got, testkit::oracle_paths(g, c)) << "trial " << t << " class " << q;
      if (!s.empty()) ++nonempty;
    }
  }
  EXPECT_GT(nonempty, 50);
}

TEST(Espp, PicksCheapestWithLowestIndexTies) {
  const std::vector<ChargingStation> st{station_b()};
  const ExtendedGraph g = ExtendedGraph::build(line3(), st, {0});
  const PathSet s = enumerate_feasible_paths(g, ev(20.0, 30.0), 0);
  const std::vector<double> flows(static_cast<std::size_t>(g.arc_count()), 0.0);
  // Cheap power and no value of time: the largest charge is cheapest only if the price is
  // negative, otherwise the bypass path wins.
  EsppChoice c = solve_espp(g, s, flows, std::vector<double>{50.0}, {}, 0.0);
  EXPECT_EQ(g.arc(s.paths[c.index].arcs[1]).kind, ArcKind::kBypass);
  c = solve_espp(g, s, flows, std::vector<double>{-50.0}, {}, 0.0);
  EXPECT_DOUBLE_EQ(s.paths[c.index].energy_charged, 10.0);
  c = solve_espp(g, s, flows, std::vector<double>{0.0}, {}, 0.0);
  EXPECT_EQ(c.index, 0u);
  for (std::size_t k = 0; k < s.size(); ++k) {
    EXPECT_GE(path_cost(g, s.paths[k], flows, std::vector<double>{0.0}, {}, 0.0), c.cost);
  }
  EXPECT_THROW(solve_espp(g, PathSet{}, flows, std::vector<double>{0.0}, {}, 0.0), ValidationError);
}

TEST(Enumeration, BundledScenarioPaths) {
  const Model m = build_model(load_scenario(EVNET_SCENARIO));
  for (std::size_t q = 0; q < m.paths.size(); ++q) {
    const VehicleClass& c = m.scenario.classes[q];
    EXPECT_FALSE(m.paths[q].empty());
    EXPECT_EQ(std::set<std::vector<int>>(), [&] {
      std::set<std::vector<int>> diff = testkit::oracle_paths(m.graph, c);
      for (const Path& p : m.paths[q].paths) diff.erase(p.arcs);
      return diff;
    }());
    EXPECT_EQ(testkit::oracle_paths(m.graph, c).size(), m.paths[q].size());
  }
}
