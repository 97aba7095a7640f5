#pragma once

// Reserve procurement for a loaded scenario: dual-distance estimate, one set of cone samples
// reused across bounds, and the plan (plus adequacy check) for a given uniform bound.

#include <optional>
#include <vector>

#include "evnet/reserves.hpp"
#include "evnet/scenario.hpp"

namespace evnet {

struct ReserveStudyOptions {
  double xi = 55.0;  // $/MWh at every bus
  int cone_samples = 500;
  int uncertainty_samples = 500;
  int adequacy_samples = 1000;
  int cut_rounds = 10;  // separation rounds over the pool after the sampled LP
  std::uint64_t seed = 1;
  int threads = 1;
};

ReserveStudyOptions reserve_study_defaults(const Model& model);

// safety * max ||(gamma_bal, mu)|| over the scenario's demand box.
DualBoundEstimate estimate_dual_bound(const Model& model, int threads = 1);

struct ReserveStudyResult {
  double bound = 0.0;  // a = w, MWh
  UncertaintySet set;
  ReservePlan plan;
  int cut_rays = 0;
  std::optional<AdequacyReport> adequacy;
};

class ReserveStudy {
 public:
  ReserveStudy(const Model& model, const ReserveStudyOptions& options);

  // Procurement for a = w = bound. The uncertainty pool is drawn with the same seed at every
  // bound, so pools for nested sets share their random points.
  ReserveStudyResult at_bound(double bound, bool check_adequacy) const;

  const std::vector<DualConeSample>& cone() const { return cone_; }

 private:
  const Model& model_;
  ReserveStudyOptions options_;
  std::vector<DualConeSample> cone_;
  Eigen::MatrixXd directions_;  // eta objective of each deterministic ray
};

}  // namespace evnet
