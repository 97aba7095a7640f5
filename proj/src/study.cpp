#include "evnet/study.hpp"

#include "evnet/error.hpp"
#include "evnet/rng.hpp"
#include "parallel.hpp"

namespace evnet {

ReserveStudyOptions reserve_study_defaults(const Model& model) {
  const Parameters& p = model.scenario.params;
  ReserveStudyOptions o;
  o.xi = p.reserve_price;
  o.cone_samples = p.cone_samples;
  o.uncertainty_samples = p.uncertainty_samples;
  o.adequacy_samples = p.adequacy_samples;
  o.seed = p.seed;
  return o;
}

DualBoundEstimate estimate_dual_bound(const Model& model, int threads) {
  const Scenario& s = model.scenario;
  return estimate_dual_bound(s.power, model.ptdf, s.demand_min, s.demand_max,
                             s.params.dual_bound_samples, s.params.dual_bound_safety,
                             s.params.seed, threads);
}

ReserveStudy::ReserveStudy(const Model& model, const ReserveStudyOptions& options)
    : model_(model), options_(options) {
  if (options.xi < 0.0) throw ValidationError("reserve price must be >= 0");
  Rng root(options.seed);
  cone_ = sample_dual_cone(model.ptdf, options.cone_samples, root.split(1).below(~0ULL));
  const int rays = deterministic_ray_count(model.ptdf);
  const Eigen::Index n = model.ptdf.h.cols();
  directions_.resize(n, rays);
  for (int i = 0; i < rays; ++i) {
    const DualConeSample& t = cone_[static_cast<std::size_t>(i)];
    directions_.col(i) = -t.theta1 * Eigen::VectorXd::Ones(n) + model.ptdf.h.transpose() * t.theta2;
  }
}

ReserveStudyResult ReserveStudy::at_bound(double bound, bool check_adequacy) const {
  const Scenario& s = model_.scenario;
  ReserveStudyResult res;
  res.bound = bound;
  res.set = uncertainty_set(s.power, model_.ptdf, s.demand_min, s.demand_max, bound);

  Rng root(options_.seed);
  UncertaintySampleOptions uo;
  uo.samples = options_.uncertainty_samples;
  uo.seed = root.split(2).below(~0ULL);
  uo.extreme_directions = directions_;
  std::vector<Eigen::VectorXd> etas = sample_uncertainty_set(model_.ptdf, res.set, uo);

  const Eigen::VectorXd xi = Eigen::VectorXd::Constant(model_.ptdf.h.cols(), options_.xi);
  std::vector<DualConeSample> cone = cone_;
  res.plan = procure_reserves(model_.ptdf, xi, cone, etas);
  // Cut rounds: add the most violated ray of every pool point the plan leaves uncovered.
  const double tol = 1e-9 * (1.0 + bound + model_.ptdf.c.cwiseAbs().maxCoeff());
  for (int round = 0; round < options_.cut_rounds; ++round) {
    std::vector<DualConeSample> found(etas.size());
    std::vector<double> value(etas.size(), 0.0);
    detail::parallel_for(static_cast<int>(etas.size()), options_.threads, [&](int j) {
      value[static_cast<std::size_t>(j)] = most_violated_ray(
          model_.ptdf, etas[static_cast<std::size_t>(j)], res.plan.r, found[static_cast<std::size_t>(j)]);
    });
    int added = 0;
    for (std::size_t j = 0; j < etas.size(); ++j) {
      if (value[j] > tol) {
        cone.push_back(found[j]);
        ++added;
      }
    }
    if (added == 0) break;
    res.cut_rays += added;
    res.plan = procure_reserves(model_.ptdf, xi, cone, etas);
  }

  if (check_adequacy) {
    UncertaintySampleOptions fresh;
    fresh.samples = options_.adequacy_samples;
    fresh.seed = root.split(3).below(~0ULL);
    fresh.include_deterministic = false;
    const std::vector<Eigen::VectorXd> test = sample_uncertainty_set(model_.ptdf, res.set, fresh);
    res.adequacy = verify_reserve_adequacy(model_.ptdf, res.plan.r, test, options_.threads);
  }
  return res;
}

}  // namespace evnet
