// evnet: command-line driver for the coupled transport/power models.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "evnet/assignment.hpp"
#include "evnet/coordination.hpp"
#include "evnet/error.hpp"
#include "evnet/kernels.hpp"
#include "evnet/reserves.hpp"
#include "evnet/scenario.hpp"
#include "evnet/study.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kValidation = 2, kNonConvergence = 3, kInfeasible = 4, kIo = 5 };

struct Common {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<int> iters;
  std::optional<double> tol;
  bool trace = false;
  std::string out_dir = ".";
  int parallel = 1;
  std::vector<std::string> sets;
};

std::string num(double v) { return fmt::format("{:.17g}", v); }

class Csv {
 public:
  explicit Csv(const fs::path& path) : path_(path), out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  Csv& cell(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
  }
  Csv& cell(double v) { return cell(num(v)); }
  Csv& cell(int v) { return cell(std::to_string(v)); }
  void end() {
    out_ << '\n';
    first_ = true;
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::ofstream out_;
  bool first_ = true;
};

std::string arc_label(const evnet::ExtendedGraph& g, const evnet::ExtendedArc& a) {
  const auto& names = g.base().node_names;
  auto station_node = [&]() {
    return names[static_cast<std::size_t>(g.stations()[static_cast<std::size_t>(a.station)].node)];
  };
  switch (a.kind) {
    case evnet::ArcKind::kRoad: {
      const evnet::RoadArc& r = g.base().arcs[static_cast<std::size_t>(a.id)];
      return "road:" + names[static_cast<std::size_t>(r.tail)] + ">" +
             names[static_cast<std::size_t>(r.head)];
    }
    case evnet::ArcKind::kEntrance:
      return "entrance:" + station_node();
    case evnet::ArcKind::kBypass:
      return "bypass:" + station_node();
    case evnet::ArcKind::kChargeAmount:
      return fmt::format("charge:{}:{:g}kWh{}", station_node(), a.charge_kwh,
                         a.at_origin ? "@origin" : "");
  }
  return "?";
}

std::vector<std::string> line_row_names(const evnet::Scenario& s) {
  const auto& net = s.power;
  std::vector<std::string> out;
  for (int dir = 0; dir < 2; ++dir) {
    for (const evnet::Line& l : net.lines) {
      const auto& a = net.bus_names[static_cast<std::size_t>(dir == 0 ? l.from : l.to)];
      const auto& b = net.bus_names[static_cast<std::size_t>(dir == 0 ? l.to : l.from)];
      out.push_back(a + ">" + b);
    }
  }
  return out;
}

void write_trace(const fs::path& path, const evnet::Model& model,
                 const evnet::CoordinationTrace& trace) {
  const evnet::Scenario& s = model.scenario;
  const auto& buses = s.power.bus_names;
  const auto rows = line_row_names(s);
  Csv csv(path);
  csv.cell("k").cell("gamma_bal");
  for (const auto& b : buses) csv.cell("price_" + b);
  for (const auto& r : rows) csv.cell("mu_" + r);
  for (const auto& b : buses) csv.cell("demand_" + b);
  for (const auto& b : buses) csv.cell("g_" + b);
  for (const auto& r : rows) csv.cell("excess_" + r);
  for (const char* c : {"balance", "infeasibility_l2", "infeasibility_inf", "bound", "travel_cost",
                        "itso_objective", "ipso_objective", "combined_objective",
                        "dual_objective", "reserve_cost", "dispatch_feasible"}) {
    csv.cell(c);
  }
  csv.end();
  for (const evnet::CoordinationRow& r : trace.rows) {
    csv.cell(r.k).cell(r.gamma_bal);
    for (Eigen::Index i = 0; i < r.prices.size(); ++i) csv.cell(r.prices(i));
    for (Eigen::Index i = 0; i < r.mu.size(); ++i) csv.cell(r.mu(i));
    for (double d : r.demand) csv.cell(d);
    for (Eigen::Index i = 0; i < r.g.size(); ++i) csv.cell(r.g(i));
    for (Eigen::Index i = 0; i < r.line_excess.size(); ++i) csv.cell(r.line_excess(i));
    csv.cell(r.balance).cell(r.infeasibility_l2).cell(r.infeasibility_inf).cell(r.bound);
    csv.cell(r.travel_cost).cell(r.itso_objective).cell(r.ipso_objective);
    csv.cell(r.combined_objective).cell(r.dual_objective).cell(r.reserve_cost);
    csv.cell(r.dispatch_feasible ? 1 : 0);
    csv.end();
  }
}

void write_flows(const fs::path& path, const evnet::Model& model,
                 const std::vector<std::pair<int, const std::vector<double>*>>& rows) {
  Csv csv(path);
  csv.cell("k");
  for (const evnet::ExtendedArc& a : model.graph.arcs()) csv.cell(arc_label(model.graph, a));
  csv.end();
  for (const auto& [k, flows] : rows) {
    csv.cell(k);
    for (double f : *flows) csv.cell(f);
    csv.end();
  }
}

std::string path_label(const evnet::Model& m, const evnet::Path& p) {
  std::string s;
  for (int id : p.arcs) {
    const evnet::ExtendedArc& a = m.graph.arc(id);
    if (a.kind == evnet::ArcKind::kBypass || a.kind == evnet::ArcKind::kEntrance) continue;
    if (!s.empty()) s += ' ';
    s += arc_label(m.graph, a);
  }
  return s;
}

void write_path_flows(const fs::path& path, const evnet::Model& m, const evnet::PathFlows& flows) {
  Csv csv(path);
  csv.cell("class").cell("path").cell("flow").cell("route").end();
  for (std::size_t q = 0; q < m.paths.size(); ++q) {
    for (std::size_t k = 0; k < m.paths[q].size(); ++k) {
      if (flows[q][k] <= 0.0) continue;
      csv.cell(m.scenario.classes[q].name).cell(static_cast<int>(k)).cell(flows[q][k]);
      csv.cell(path_label(m, m.paths[q].paths[k])).end();
    }
  }
}

struct Run {
  Common opt;
  evnet::Scenario scenario;
  json report;
  std::vector<std::string> outputs;
  fs::path out;

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
};

void load(Run& run) {
  run.scenario = evnet::load_scenario(run.opt.scenario);
  for (const std::string& s : run.opt.sets) evnet::apply_override(run.scenario, s);
  evnet::Parameters& p = run.scenario.params;
  if (run.opt.seed) p.seed = *run.opt.seed;
  if (run.opt.alpha) p.alpha = *run.opt.alpha;
  if (run.opt.parallel < 1) throw evnet::ValidationError("--parallel-samples must be >= 1");
  run.out = run.opt.out_dir;
  fs::create_directories(run.out);
}

evnet::Model model_of(const Run& run) { return evnet::build_model(run.scenario); }

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// ---------------------------------------------------------------------------------------

std::string cmd_enumerate(Run& run) {
  const evnet::Model m = model_of(run);
  Csv csv(run.file("paths.csv"));
  csv.cell("class").cell("path").cell("energy_drawn_kwh").cell("energy_charged_kwh");
  csv.cell("min_soc_kwh").cell("max_soc_kwh").cell("free_flow_time_min").cell("route").end();
  std::size_t total = 0;
  json per_class = json::object();
  for (std::size_t q = 0; q < m.paths.size(); ++q) {
    per_class[m.scenario.classes[q].name] = m.paths[q].size();
    total += m.paths[q].size();
    for (std::size_t k = 0; k < m.paths[q].size(); ++k) {
      const evnet::Path& p = m.paths[q].paths[k];
      double t = 0.0;
      for (int id : p.arcs) t += evnet::arc_time_cost(m.graph.arc(id), 0.0, 1.0);
      csv.cell(m.scenario.classes[q].name).cell(static_cast<int>(k)).cell(p.energy_drawn);
      csv.cell(p.energy_charged).cell(p.min_soc).cell(p.max_soc).cell(t);
      csv.cell(path_label(m, p)).end();
    }
  }
  run.report["metrics"] = {{"paths", total}, {"paths_per_class", per_class},
                           {"extended_arcs", m.graph.arc_count()}};
  return fmt::format("enumerate-paths: classes={} paths={} extended_arcs={}", m.paths.size(),
                     total, m.graph.arc_count());
}

std::string cmd_social_optimum(Run& run) {
  if (run.opt.tol) run.scenario.params.social_optimum_tolerance = *run.opt.tol;
  const evnet::Model m = model_of(run);
  const evnet::SocialOptimum so = evnet::solve_social_optimum(m);
  const evnet::Scenario& s = m.scenario;

  // Re-dispatch at the optimal demand: the market view of the same point.
  evnet::DispatchOptions dopt;
  dopt.tolerance = s.params.dispatch_tolerance;
  const evnet::DispatchResult dr = evnet::economic_dispatch(s.power, m.ptdf, so.demand, dopt);

  evnet::CoordinationTrace trace;
  trace.scheme = "social-optimum";
  evnet::CoordinationRow row;
  row.gamma_bal = so.gamma_bal;
  row.mu = so.mu;
  row.prices = so.prices;
  row.demand = so.demand;
  row.g = so.g;
  row.arc_flow = so.arc_flow;
  const evnet::Infeasibility inf = evnet::primal_infeasibility(s.power, m.ptdf, so.demand, so.g);
  row.balance = inf.balance;
  row.line_excess = inf.line_excess;
  row.infeasibility_l2 = inf.l2;
  row.infeasibility_inf = inf.linf;
  row.bound = std::nan("");
  row.travel_cost = so.travel_cost;
  row.itso_objective = so.travel_cost + so.prices.dot(Eigen::Map<const Eigen::VectorXd>(
                                             so.demand.data(), static_cast<Eigen::Index>(so.demand.size())));
  row.ipso_objective = so.generation_cost;
  row.combined_objective = so.objective;
  row.dual_objective = so.objective;
  row.reserve_cost = std::nan("");
  trace.rows.push_back(row);
  write_trace(run.file("trace.csv"), m, trace);

  Csv disp(run.file("dispatch.csv"));
  disp.cell("bus").cell("demand_mwh").cell("baseload_mwh").cell("g_mwh").cell("price");
  disp.cell("dispatch_g_mwh").cell("dispatch_price").end();
  for (int v = 0; v < s.power.bus_count(); ++v) {
    const auto i = static_cast<std::size_t>(v);
    disp.cell(s.power.bus_names[i]).cell(so.demand[i]).cell(s.power.baseload[i]).cell(so.g(v));
    disp.cell(so.prices(v)).cell(dr.g(v)).cell(dr.prices(v)).end();
  }

  const std::vector<double> tolls = evnet::compute_marginal_tolls(m.graph, so.arc_flow, s.params.gamma);
  Csv arcs(run.file("flows.csv"));
  arcs.cell("arc").cell("label").cell("flow").cell("marginal_toll").end();
  for (const evnet::ExtendedArc& a : m.graph.arcs()) {
    const auto i = static_cast<std::size_t>(a.id);
    arcs.cell(a.id).cell(arc_label(m.graph, a)).cell(so.arc_flow[i]).cell(tolls[i]).end();
  }
  write_path_flows(run.file("path_flows.csv"), m, so.path_flows);

  const double avg_time = evnet::average_travel_time(m.graph, so.arc_flow, s.total_demand());
  run.report["metrics"] = {{"objective", so.objective},
                           {"travel_cost", so.travel_cost},
                           {"generation_cost", so.generation_cost},
                           {"gamma_bal", so.gamma_bal},
                           {"prices", vec_json(so.prices)},
                           {"average_travel_time_min", avg_time},
                           {"kkt_residual", so.kkt_residual},
                           {"dispatch_kkt_residual", dr.kkt_residual},
                           {"ipm_iterations", so.iterations}};
  return fmt::format("social-optimum: objective={:.2f} travel={:.2f} generation={:.2f} "
                     "gamma={:.4f} avg_time={:.2f}min kkt={:.1e}",
                     so.objective, so.travel_cost, so.generation_cost, so.gamma_bal, avg_time,
                     so.kkt_residual);
}

std::string cmd_greedy(Run& run) {
  if (run.opt.iters) run.scenario.params.greedy_max_iterations = *run.opt.iters;
  const evnet::Model m = model_of(run);
  const evnet::GreedyReport rep = evnet::run_greedy_pricing(m, m.scenario.params.greedy_max_iterations);
  write_trace(run.file("trace.csv"), m, rep.trace);
  if (run.opt.trace) {
    std::vector<std::pair<int, const std::vector<double>*>> rows;
    for (const auto& r : rep.trace.rows) rows.emplace_back(r.k, &r.arc_flow);
    write_flows(run.file("flows.csv"), m, rows);
  }
  json metrics = {{"iterations", rep.trace.rows.size()},
                  {"cycle_found", rep.cycle_found},
                  {"cycle_period", rep.cycle_period},
                  {"cycle_start", rep.cycle_start},
                  {"detected_at", rep.detected_at},
                  {"phase_objectives", rep.phase_objectives},
                  {"infeasible", rep.infeasible}};
  if (rep.infeasible) {
    metrics["infeasible_iteration"] = rep.infeasible_iteration;
    metrics["infeasible_violation_mwh"] = rep.infeasible_violation;
  }
  run.report["metrics"] = metrics;
  std::string phases;
  for (double o : rep.phase_objectives) phases += fmt::format("{}{:.2f}", phases.empty() ? "" : "/", o);
  if (rep.infeasible) {
    return fmt::format("greedy: dispatch infeasible at iteration {} (violation {:.4g} MWh, load "
                       "shedding needed)",
                       rep.infeasible_iteration, rep.infeasible_violation);
  }
  if (!rep.cycle_found) {
    return fmt::format("greedy: no cycle within {} iterations", rep.trace.rows.size());
  }
  return fmt::format("greedy: cycle period={} start={} detected_at={} phase_objectives={}",
                     rep.cycle_period, rep.cycle_start, rep.detected_at, phases);
}

std::string cmd_dual_decomp(Run& run, bool with_reserves) {
  evnet::Parameters& p = run.scenario.params;
  if (run.opt.iters) p.dd_max_iterations = *run.opt.iters;
  if (run.opt.tol) p.dd_tolerance = *run.opt.tol;
  const evnet::Model m = model_of(run);
  const evnet::SocialOptimum so = evnet::solve_social_optimum(m);
  const evnet::DualBoundEstimate dual = evnet::estimate_dual_bound(m, run.opt.parallel);

  evnet::DualDecompositionOptions o = evnet::dual_decomposition_defaults(m);
  o.reference_objective = so.objective;
  o.dual_distance = dual.d_hat;
  std::optional<evnet::ReserveStudy> study;
  if (with_reserves) {
    evnet::ReserveStudyOptions ro = evnet::reserve_study_defaults(m);
    ro.threads = run.opt.parallel;
    study.emplace(m, ro);
    o.reserve_cost = [&](int k) {
      const double bound = p.step_scale_mwh * evnet::infeasibility_bound(k, p.alpha, dual.d_hat);
      return study->at_bound(bound, false).plan.cost;
    };
  }
  const evnet::CoordinationTrace trace = evnet::run_dual_decomposition(m, o);
  write_trace(run.file("trace.csv"), m, trace);
  if (run.opt.trace) {
    std::vector<std::pair<int, const std::vector<double>*>> rows;
    for (const auto& r : trace.rows) rows.emplace_back(r.k, &r.arc_flow);
    write_flows(run.file("flows.csv"), m, rows);
  }
  const evnet::CoordinationRow& last = trace.rows.back();
  const double gap = (last.combined_objective - so.objective) / std::abs(so.objective);
  run.report["metrics"] = {{"iterations", trace.rows.size()},
                           {"so_objective", so.objective},
                           {"final_combined_objective", last.combined_objective},
                           {"final_dual_objective", last.dual_objective},
                           {"relative_gap", gap},
                           {"final_infeasibility_l2", last.infeasibility_l2},
                           {"final_infeasibility_inf", last.infeasibility_inf},
                           {"dual_bound", dual.d_hat},
                           {"alpha", p.alpha},
                           {"step_scale_mwh", p.step_scale_mwh}};
  if (with_reserves) run.report["metrics"]["final_reserve_cost"] = last.reserve_cost;
  return fmt::format("dual-decomp: iterations={} combined={:.2f} so={:.2f} gap={:.4f}% "
                     "infeasibility={:.4g} MWh D={:.3f}",
                     trace.rows.size(), last.combined_objective, so.objective, 100.0 * gap,
                     last.infeasibility_l2, dual.d_hat);
}

std::string cmd_reserves(Run& run, const std::vector<int>& ks, std::optional<double> bound) {
  const evnet::Model m = model_of(run);
  const evnet::Parameters& p = m.scenario.params;
  evnet::ReserveStudyOptions ro = evnet::reserve_study_defaults(m);
  ro.threads = run.opt.parallel;
  const evnet::ReserveStudy study(m, ro);

  std::vector<std::pair<int, double>> cases;
  double d_hat = std::nan("");
  if (bound) {
    cases.emplace_back(0, *bound);
  } else {
    d_hat = evnet::estimate_dual_bound(m, run.opt.parallel).d_hat;
    for (int k : ks) cases.emplace_back(k, p.step_scale_mwh * evnet::infeasibility_bound(k, p.alpha, d_hat));
  }

  Csv res(run.file("reserves.csv"));
  res.cell("k").cell("bound_mwh").cell("bus").cell("r_mwh").cell("xi").cell("cost").end();
  Csv ade(run.file("adequacy.csv"));
  ade.cell("k").cell("sample").cell("feasible").cell("violation").end();
  json per_case = json::array();
  std::string summary;
  for (const auto& [k, b] : cases) {
    const evnet::ReserveStudyResult r = study.at_bound(b, true);
    for (int v = 0; v < m.scenario.power.bus_count(); ++v) {
      res.cell(k).cell(b).cell(m.scenario.power.bus_names[static_cast<std::size_t>(v)]);
      res.cell(r.plan.r(v)).cell(r.plan.xi(v)).cell(r.plan.xi(v) * r.plan.r(v)).end();
    }
    const evnet::AdequacyReport& a = *r.adequacy;
    for (int i = 0; i < a.samples; ++i) {
      const double viol = a.violations[static_cast<std::size_t>(i)];
      ade.cell(k).cell(i).cell(viol == 0.0 ? 1 : 0).cell(viol).end();
    }
    per_case.push_back({{"k", k},
                        {"bound_mwh", b},
                        {"cost", r.plan.cost},
                        {"r", vec_json(r.plan.r)},
                        {"adequacy", a.fraction},
                        {"lp_residual", r.plan.optimality_residual()},
                        {"cone_samples", r.plan.cone_samples},
                        {"uncertainty_samples", r.plan.uncertainty_samples}});
    summary += fmt::format(" [k={} bound={:.4g} cost={:.2f} adequacy={:.3f}]", k, b, r.plan.cost,
                           a.fraction);
  }
  run.report["metrics"] = {{"dual_bound", d_hat}, {"cases", per_case}};
  return "reserves:" + summary;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("scenario", c.scenario, "Scenario file (.scn)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Random seed (overrides parameters.seed)");
  sub->add_option("--alpha", c.alpha, "Dual step size");
  sub->add_option("--iters", c.iters, "Iteration cap");
  sub->add_option("--tol", c.tol, "Stopping tolerance");
  sub->add_flag("--trace", c.trace, "Also write per-iteration arc flows (flows.csv)");
  sub->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  sub->add_option("--parallel-samples", c.parallel, "Worker threads for sample sweeps")
      ->capture_default_str();
  sub->add_option("--set", c.sets, "Override key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled EV transport / power network models"};
  app.require_subcommand(1);
  Common common;
  bool with_reserves = false;
  std::vector<int> ks{1, 4, 16, 64};
  std::optional<double> bound;

  auto* enumerate = app.add_subcommand("enumerate-paths", "List energy-feasible paths per class");
  auto* so = app.add_subcommand("social-optimum", "Joint optimum of flows and dispatch");
  auto* greedy = app.add_subcommand("greedy", "Lagged (greedy) price iteration");
  auto* dd = app.add_subcommand("dual-decomp", "Dual decomposition price iteration");
  auto* reserves = app.add_subcommand("reserves", "Reserve procurement and adequacy");
  for (auto* s : {enumerate, so, greedy, dd, reserves}) add_common(s, common);
  dd->add_flag("--reserves", with_reserves, "Attach the reserve cost for each iteration's bound");
  auto* kopt = reserves->add_option("--k", ks, "Iterations whose bound 3D/(alpha sqrt k) is covered")
                   ->capture_default_str();
  reserves->add_option("--bound", bound, "Explicit a = w bound in MWh")->excludes(kopt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  Run run;
  run.opt = common;
  const auto start = std::chrono::steady_clock::now();
  std::string command;
  try {
    load(run);
    std::string summary;
    if (*enumerate) {
      command = "enumerate-paths";
      summary = cmd_enumerate(run);
    } else if (*so) {
      command = "social-optimum";
      summary = cmd_social_optimum(run);
    } else if (*greedy) {
      command = "greedy";
      summary = cmd_greedy(run);
    } else if (*dd) {
      command = "dual-decomp";
      summary = cmd_dual_decomp(run, with_reserves);
    } else {
      command = "reserves";
      summary = cmd_reserves(run, ks, bound);
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json report;
    report["command"] = command;
    report["scenario"] = run.opt.scenario;
    report["scenario_name"] = run.scenario.name;
    report["scenario_hash"] = evnet::scenario_hash(run.scenario);
    report["seed"] = run.scenario.params.seed;
    report["kernels"] = std::string(evnet::kernels::isa_name(evnet::kernels::active_isa()));
    report["wall_time_s"] = wall;
    report["outputs"] = run.outputs;
    report["metrics"] = run.report["metrics"];
    std::ofstream(run.out / "report.json") << report.dump(2) << '\n';
    std::cout << summary << " hash=" << report["scenario_hash"].get<std::string>().substr(0, 12)
              << '\n';
    return kOk;
  } catch (const evnet::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const evnet::ConvergenceError& e) {
    std::cerr << "not converged: " << e.what() << '\n';
    return kNonConvergence;
  } catch (const evnet::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
}
