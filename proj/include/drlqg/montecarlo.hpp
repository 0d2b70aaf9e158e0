#pragma once

#include "drlqg/divergence.hpp"
#include "drlqg/endogenous.hpp"
#include "drlqg/saddle.hpp"
#include "drlqg/stacked.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace drlqg {

struct TrialResult {
  int trial = 0;
  std::uint64_t seed = 0;
  double cost = 0.0;
};

struct CostSummary {
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;
  double q05 = 0.0, q50 = 0.0, q95 = 0.0;
};

// Sampling law for the exogenous uncertainties; W[0] is the x0 block.
struct DisturbanceModel {
  std::vector<GaussianBlock> W;  // T+1 blocks
  std::vector<GaussianBlock> V;  // T blocks
};

DisturbanceModel nominal_disturbances(const ProblemSpec& spec);
DisturbanceModel covariance_disturbances(const BlockCovariance& sigma);

// Random zero-mean Gaussian with KL distance fraction * radius from the
// center: draws a symmetric direction, then bisects the radial coordinate on
// the PD segment until the KL target is met within 1e-8. Falls back to the
// largest PD-feasible point if round-off exhausts the segment first.
GaussianBlock sample_ball_distribution(const KLBall& ball, double fraction,
                                       std::uint64_t rng_seed);

// One boundary/interior sample per block (fraction applied to every budget).
DisturbanceModel sample_adversarial_disturbances(const ProblemSpec& spec, double fraction,
                                                 std::uint64_t seed);

// Per-trial controller; y_t is available when input(t) is asked, but
// predictor-style controllers are free to ignore it until after acting.
class TrialController {
 public:
  virtual ~TrialController() = default;
  virtual Vector act(int t, const Vector& y_t) = 0;
};

using ControllerFactory = std::function<std::unique_ptr<TrialController>()>;

ControllerFactory policy_controller(const ProblemSpec& spec, const CausalPolicy& policy);
ControllerFactory online_controller(const ProblemSpec& spec, const EndogenousSolution& sol,
                                    Vector x0_mean);

struct SimOptions {
  int trials = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  std::optional<Matrix> A_true;  // plant override for model-mismatch studies
};

// Rolls the closed loop, accumulating x^T Q x + u^T R u + terminal cost.
// Deterministic per (seed, trial) via counter-based substreams; trials may
// run in parallel without changing any result.
CostSummary simulate(const ProblemSpec& spec, const ControllerFactory& make,
                     const DisturbanceModel& dist, const SimOptions& opts,
                     std::vector<TrialResult>* out_trials = nullptr);
CostSummary simulate(const ProblemSpec& spec, const CausalPolicy& policy,
                     const DisturbanceModel& dist, const SimOptions& opts,
                     std::vector<TrialResult>* out_trials = nullptr);

CostSummary summarize(const std::vector<TrialResult>& trials);

// Classical finite-horizon LQG for the nominal model (time-varying Riccati
// plus Kalman filter), assembled into an Output-parametrized causal policy.
CausalPolicy lqg_baseline(const ProblemSpec& spec);

}  // namespace drlqg
