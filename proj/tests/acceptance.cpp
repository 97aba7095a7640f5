// Acceptance runner: one PASS/FAIL line per top-level criterion, exit status 1 if any fail.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "CLI11.hpp"

#include "evnet/assignment.hpp"
#include "evnet/coordination.hpp"
#include "evnet/error.hpp"
#include "evnet/espp.hpp"
#include "evnet/reserves.hpp"
#include "evnet/scenario.hpp"
#include "evnet/study.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace evnet;

namespace {

// Pinned tolerances.
constexpr double kTollTol = 1e-4;            // x sum of class demands
constexpr int kTollRandomScenarios = 20;
constexpr int kDispatchNetworks = 500;
constexpr double kOracleTol = 1e-8;
constexpr double kKktTol = 1e-6;
constexpr double kUniformTol = 1e-8;
constexpr int kGreedyMaxIter = 10;
constexpr double kDdAlpha = 20.0;
constexpr int kDdIterations = 200;
constexpr double kDdGap = 0.005;
constexpr double kSlopeLo = -1.2;
constexpr double kSlopeHi = -0.25;
constexpr int kPathGraphs = 100;
constexpr int kMinConeSamples = 500;
constexpr int kMinEtaSamples = 500;
constexpr int kFreshSamples = 1000;
constexpr double kAdequacy = 0.99;
constexpr double kLpResidual = 1e-8;
constexpr std::array<int, 4> kReserveKs{1, 4, 16, 64};

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  fmt::print("{} {:<22} {} ({:.1f}s)\n", o.pass ? "PASS" : "FAIL", name, o.detail, s);
  std::fflush(stdout);
}

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

struct Shared {
  const Model* model = nullptr;
  const SocialOptimum* so = nullptr;
  DualBoundEstimate dual;
  CoordinationTrace dd;
};

// ---------------------------------------------------------------------------------------

Outcome toll_equivalence(const Model& bundled) {
  double worst = 0.0;
  std::string where;
  auto one = [&](const Model& m, const std::string& tag) {
    const testkit::TollCheck c = testkit::toll_equivalence(m);
    const double ratio = c.max_diff / (kTollTol * c.scale);
    if (ratio > worst) {
      worst = ratio;
      where = fmt::format("{} diff={:.3g} limit={:.3g}", tag, c.max_diff, kTollTol * c.scale);
    }
  };
  one(bundled, "corridor");
  Rng rng(20240);
  for (int t = 0; t < kTollRandomScenarios; ++t) {
    one(build_model(testkit::random_scenario(rng), false), fmt::format("random#{}", t));
  }
  return {worst <= 1.0, fmt::format("1+{} scenarios, worst {:.3f} of limit ({})", kTollRandomScenarios,
                                    worst, where)};
}

struct DispatchStats {
  double oracle_err = 0.0;
  int solved = 0;
  int infeasible = 0;
  int mismatched_status = 0;
  double kkt = 0.0;
  int kkt_points = 0;
  double spread = 0.0;
  int uncongested = 0;
};

DispatchStats dispatch_sweep(const Model& bundled) {
  DispatchStats st;
  auto uniform = [&](const DispatchResult& r) {
    if (!r.binding_lines.empty()) return;
    ++st.uncongested;
    st.spread = std::max(st.spread, r.prices.maxCoeff() - r.prices.minCoeff());
  };
  Rng rng(20241);
  for (int t = 0; t < kDispatchNetworks; ++t) {
    const PowerNetwork net = testkit::random_small_network(rng);
    const Ptdf p = compute_ptdf(net);
    const std::vector<double> d = testkit::random_demand(rng, net.bus_count(), 40.0);
    const auto o = testkit::oracle_dispatch(net, d);
    DispatchResult r;
    bool feasible = true;
    try {
      r = economic_dispatch(net, p, d);
    } catch (const InfeasibleError&) {
      feasible = false;
    }
    if (feasible != o.has_value()) {
      ++st.mismatched_status;
      continue;
    }
    if (!feasible) {
      ++st.infeasible;
      continue;
    }
    ++st.solved;
    double e = (r.g - o->g).lpNorm<Eigen::Infinity>();
    e = std::max(e, std::abs(r.gamma_bal - o->gamma));
    if (net.line_count() > 0) e = std::max(e, (r.mu - o->mu).lpNorm<Eigen::Infinity>());
    e = std::max(e, (r.prices - o->prices).lpNorm<Eigen::Infinity>());
    st.oracle_err = std::max(st.oracle_err, e);
    uniform(r);
  }
  // 9-bus grid: every box corner plus random interior points.
  const Scenario& s = bundled.scenario;
  const int nb = s.power.bus_count();
  std::vector<int> wide;
  for (int v = 0; v < nb; ++v) {
    if (s.demand_max[static_cast<std::size_t>(v)] > s.demand_min[static_cast<std::size_t>(v)]) wide.push_back(v);
  }
  std::vector<std::vector<double>> points;
  for (int mask = 0; mask < (1 << wide.size()); ++mask) {
    std::vector<double> d = s.demand_min;
    for (std::size_t i = 0; i < wide.size(); ++i) {
      if (mask & (1 << i)) d[static_cast<std::size_t>(wide[i])] = s.demand_max[static_cast<std::size_t>(wide[i])];
    }
    points.push_back(d);
  }
  for (int t = 0; t < 200; ++t) {
    std::vector<double> d(static_cast<std::size_t>(nb));
    for (std::size_t v = 0; v < d.size(); ++v) d[v] = rng.uniform(s.demand_min[v], s.demand_max[v]);
    points.push_back(d);
  }
  for (const auto& d : points) {
    const DispatchResult r = economic_dispatch(s.power, bundled.ptdf, d);
    st.kkt = std::max({st.kkt, r.kkt_residual, dispatch_kkt_residual(s.power, bundled.ptdf, d, r)});
    ++st.kkt_points;
    uniform(r);
  }
  // Roomy 9-bus grid: uncongested by construction.
  const PowerNetwork roomy = testkit::ieee9(1000.0);
  const Ptdf rp = compute_ptdf(roomy);
  for (int t = 0; t < 100; ++t) uniform(economic_dispatch(roomy, rp, testkit::random_demand(rng, 9, 30.0)));
  return st;
}

Outcome greedy(const Shared& sh) {
  const GreedyReport g = run_greedy_pricing(*sh.model, kGreedyMaxIter);
  bool ok = g.cycle_found && g.cycle_period == 2 && g.detected_at < kGreedyMaxIter && !g.infeasible;
  std::string phases;
  for (double o : g.phase_objectives) {
    ok = ok && o >= sh.so->objective;
    phases += fmt::format("{}{:.2f}", phases.empty() ? "" : "/", o);
  }
  return {ok, fmt::format("cycle={} period={} detected_at={} phases={} SO={:.2f}", g.cycle_found,
                          g.cycle_period, g.detected_at, phases, sh.so->objective)};
}

Outcome dual_decomposition(const Shared& sh) {
  const double j = sh.so->objective;
  const CoordinationRow& last = sh.dd.rows.back();
  const double gap = std::abs(last.combined_objective - j) / std::abs(j);
  std::vector<double> lk, li;
  double worst_bound = 0.0;  // max l2 / bound over k >= 1
  for (const CoordinationRow& r : sh.dd.rows) {
    if (r.k < 1) continue;
    worst_bound = std::max(worst_bound, r.infeasibility_l2 / r.bound);
    if (r.infeasibility_l2 > 1e-12) {
      lk.push_back(std::log(static_cast<double>(r.k)));
      li.push_back(std::log(r.infeasibility_l2));
    }
  }
  const double slope = testkit::fit_slope(lk, li);
  const bool ok = static_cast<int>(sh.dd.rows.size()) == kDdIterations && gap <= kDdGap &&
                  slope >= kSlopeLo && slope <= kSlopeHi && worst_bound <= 1.0;
  return {ok, fmt::format("alpha={} iters={} gap={:.4f}% slope={:.3f} max(inf/bound)={:.3f} D={:.3f}",
                          kDdAlpha, sh.dd.rows.size(), 100.0 * gap, slope, worst_bound, sh.dual.d_hat)};
}

Outcome path_oracle() {
  Rng rng(20242);
  int classes = 0;
  int paths = 0;
  int mismatches = 0;
  int infeasible = 0;
  for (int t = 0; t < kPathGraphs; ++t) {
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
        if (c.kind == VehicleKind::kEv && !is_energy_feasible(g, p.arcs, c.initial_charge, c.battery_capacity)) {
          ++infeasible;
        }
      }
      if (got.size() != s.size() || got != testkit::oracle_paths(g, c)) ++mismatches;
      ++classes;
      paths += static_cast<int>(s.size());
    }
  }
  return {mismatches == 0 && infeasible == 0,
          fmt::format("{} graphs, {} classes, {} paths, {} set mismatches, {} energy-infeasible",
                      kPathGraphs, classes, paths, mismatches, infeasible)};
}

Outcome reserve_adequacy(const Shared& sh) {
  const Model& m = *sh.model;
  ReserveStudyOptions o = reserve_study_defaults(m);
  o.cone_samples = std::max(o.cone_samples, kMinConeSamples);
  o.uncertainty_samples = std::max(o.uncertainty_samples, kMinEtaSamples);
  o.adequacy_samples = kFreshSamples;
  const ReserveStudy study(m, o);
  const Parameters& p = m.scenario.params;
  bool ok = true;
  std::string cases;
  std::vector<std::pair<double, double>> bound_cost;
  double prev_cost = INFINITY;
  for (int k : kReserveKs) {
    const double b = p.step_scale_mwh * infeasibility_bound(k, p.alpha, sh.dual.d_hat);
    const ReserveStudyResult r = study.at_bound(b, true);
    const double res = r.plan.optimality_residual();
    const bool case_ok = r.adequacy->fraction >= kAdequacy && res <= kLpResidual &&
                         r.plan.cone_samples >= kMinConeSamples && r.plan.uncertainty_samples >= kMinEtaSamples &&
                         r.adequacy->samples == kFreshSamples;
    // Reported cost non-increasing in k.
    ok = ok && case_ok && r.plan.cost <= prev_cost + 1e-9 * (1.0 + std::abs(prev_cost));
    prev_cost = r.plan.cost;
    bound_cost.emplace_back(b, r.plan.cost);
    cases += fmt::format(" k={}:bound={:.1f},cost={:.2f},adequacy={:.3f},lp={:.1e},samples={}x{}", k, b,
                         r.plan.cost, r.adequacy->fraction, res, r.plan.cone_samples,
                         r.plan.uncertainty_samples);
  }
  // Cost non-decreasing in the bound.
  std::sort(bound_cost.begin(), bound_cost.end());
  for (std::size_t i = 1; i < bound_cost.size(); ++i) {
    ok = ok && bound_cost[i].second >= bound_cost[i - 1].second - 1e-9 * (1.0 + bound_cost[i - 1].second);
  }
  return {ok, cases.substr(1)};
}

Outcome reserve_overlay(const Shared& sh) {
  const double j = sh.so->objective;
  std::vector<double> ks, gaps;
  double min_gap = INFINITY;
  for (const CoordinationRow& r : sh.dd.rows) {
    if (r.k < 1) continue;
    const double g = r.dual_objective + r.reserve_cost - j;
    min_gap = std::min(min_gap, g);
    ks.push_back(r.k);
    gaps.push_back(g);
  }
  const std::size_t q = ks.size() - ks.size() / 4;
  const std::vector<double> kq(ks.begin() + static_cast<std::ptrdiff_t>(q), ks.end());
  const std::vector<double> gq(gaps.begin() + static_cast<std::ptrdiff_t>(q), gaps.end());
  const double slope = testkit::fit_slope(kq, gq);
  return {min_gap >= 0.0 && slope <= 0.0,
          fmt::format("min(dual+reserve-SO)={:.2f} final-quartile slope={:.3f} over k={}..{}", min_gap,
                      slope, kq.front(), kq.back())};
}

Outcome determinism(const std::string& cli, const std::string& scenario, const fs::path& work) {
  const std::vector<std::pair<std::string, std::string>> commands{
      {"enumerate", "enumerate-paths"},
      {"so", "social-optimum"},
      {"greedy", "greedy --trace"},
      {"dd", "dual-decomp --reserves --trace"},
      {"reserves", "reserves"},
  };
  int files = 0;
  std::string bad;
  for (const auto& [tag, cmd] : commands) {
    std::map<std::string, std::string> digests[2];
    for (int i = 0; i < 2; ++i) {
      const fs::path out = work / fmt::format("{}_{}", tag, i);
      fs::remove_all(out);
      const std::string sub = cmd.substr(0, cmd.find(' '));
      const std::string rest = cmd.find(' ') == std::string::npos ? "" : cmd.substr(cmd.find(' '));
      const std::string line = fmt::format("{} {} {}{} --out-dir {} >/dev/null 2>&1", cli, sub, scenario,
                                           rest, out.string());
      const int rc = std::system(line.c_str());
      if (!WIFEXITED(rc) || WEXITSTATUS(rc) != 0) {
        bad += fmt::format(" {}:exit", tag);
        break;
      }
      for (const auto& e : fs::directory_iterator(out)) {
        if (e.path().extension() == ".csv") digests[i][e.path().filename().string()] = sha256_file(e.path());
      }
    }
    if (digests[0].empty() || digests[0] != digests[1]) {
      bad += " " + tag;
    } else {
      files += static_cast<int>(digests[0].size());
    }
  }
  return {bad.empty(), fmt::format("{} commands x2, {} CSVs identical{}", commands.size(), files,
                                   bad.empty() ? "" : "; differing:" + bad)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::string scenario;
  std::string cli;
  std::string work = (fs::temp_directory_path() / "evnet_acceptance").string();
  app.add_option("--scenario", scenario, "Bundled scenario")->required()->check(CLI::ExistingFile);
  app.add_option("--cli", cli, "evnet executable")->required()->check(CLI::ExistingFile);
  app.add_option("--work-dir", work, "Scratch directory for CLI runs");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  Scenario sc = load_scenario(scenario);
  sc.params.alpha = kDdAlpha;
  sc.params.dd_max_iterations = kDdIterations;
  const Model model = build_model(sc);
  const SocialOptimum so = solve_social_optimum(model);
  Shared sh;
  sh.model = &model;
  sh.so = &so;
  sh.dual = estimate_dual_bound(model);

  // One instrumented dual-decomposition run serves the convergence and overlay criteria.
  {
    DualDecompositionOptions o = dual_decomposition_defaults(model);
    o.reference_objective = so.objective;
    o.dual_distance = sh.dual.d_hat;
    const ReserveStudy study(model, reserve_study_defaults(model));
    const Parameters& p = model.scenario.params;
    o.reserve_cost = [&](int k) {
      return study.at_bound(p.step_scale_mwh * infeasibility_bound(k, p.alpha, sh.dual.d_hat), false).plan.cost;
    };
    sh.dd = run_dual_decomposition(model, o);
  }

  fmt::print("scenario {} ({}), SO objective {:.2f}\n", model.scenario.name,
             scenario_hash(model.scenario).substr(0, 12), so.objective);
  report("toll_equivalence", [&] { return toll_equivalence(model); });
  const DispatchStats ds = dispatch_sweep(model);
  report("dispatch_oracle", [&] {
    return Outcome{ds.mismatched_status == 0 && ds.oracle_err <= kOracleTol && ds.kkt <= kKktTol,
                   fmt::format("{} networks ({} solved, {} infeasible, {} status mismatches), max oracle "
                               "diff {:.2e}; 9-bus KKT max {:.2e} over {} points",
                               kDispatchNetworks, ds.solved, ds.infeasible, ds.mismatched_status,
                               ds.oracle_err, ds.kkt, ds.kkt_points)};
  });
  report("uniform_price", [&] {
    return Outcome{ds.uncongested > 0 && ds.spread <= kUniformTol,
                   fmt::format("{} uncongested dispatches, max price spread {:.2e}", ds.uncongested, ds.spread)};
  });
  report("greedy_oscillation", [&] { return greedy(sh); });
  report("dual_decomposition", [&] { return dual_decomposition(sh); });
  report("path_enumeration", [&] { return path_oracle(); });
  report("reserve_adequacy", [&] { return reserve_adequacy(sh); });
  report("reserve_overlay", [&] { return reserve_overlay(sh); });
  report("determinism", [&] { return determinism(cli, scenario, work); });
  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
