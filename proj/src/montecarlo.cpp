#include "drlqg/montecarlo.hpp"

#include "drlqg/log.hpp"
#include "drlqg/parallel.hpp"
#include "drlqg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drlqg {

DisturbanceModel nominal_disturbances(const ProblemSpec& spec) {
  DisturbanceModel dist;
  for (const auto& w : spec.noise.W_hat) dist.W.push_back(zero_mean_block(w));
  for (const auto& v : spec.noise.V_hat) dist.V.push_back(zero_mean_block(v));
  return dist;
}

DisturbanceModel covariance_disturbances(const BlockCovariance& sigma) {
  DisturbanceModel dist;
  for (const auto& w : sigma.W) dist.W.push_back(zero_mean_block(w));
  for (const auto& v : sigma.V) dist.V.push_back(zero_mean_block(v));
  return dist;
}

GaussianBlock sample_ball_distribution(const KLBall& ball, double fraction,
                                       std::uint64_t rng_seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("sample_ball_distribution: fraction outside [0, 1]");
  const int d = ball.center.dim();
  const double target = fraction * ball.radius;
  if (target == 0.0) return zero_mean_block(ball.center.cov);

  Rng rng(rng_seed);
  Matrix dir(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) dir(i, j) = rng.normal();
  dir = 0.5 * (dir + dir.transpose()).eval();
  dir /= dir.norm();

  // Sigma(s) = Sigma_hat^{1/2} (I + s dir) Sigma_hat^{1/2}: the KL from the
  // center is 0.5 sum_i (s d_i - log(1 + s d_i)) over the eigenvalues d_i of
  // dir, strictly increasing in s and unbounded on the PD segment.
  Eigen::SelfAdjointEigenSolver<Matrix> es(dir);
  const Vector ev = es.eigenvalues();
  auto kl_of = [&](double s) {
    double kl = 0.0;
    for (int i = 0; i < d; ++i) {
      const double g = 1.0 + s * ev[i];
      if (!(g > 0.0)) return std::numeric_limits<double>::infinity();
      kl += 0.5 * (s * ev[i] - std::log(g));
    }
    return kl;
  };

  // Largest s keeping I + s dir comfortably PD.
  double s_pd = std::numeric_limits<double>::infinity();
  for (int i = 0; i < d; ++i)
    if (ev[i] < 0.0) s_pd = std::min(s_pd, -(1.0 - 1e-12) / ev[i]);

  double hi = 1.0;
  int doublings = 0;
  while (kl_of(std::min(hi, s_pd)) < target && doublings++ < 400) {
    if (hi >= s_pd) break;
    hi *= 2.0;
  }
  hi = std::min(hi, s_pd);
  double lo = 0.0;
  if (kl_of(hi) < target) {
    log_info("sample_ball_distribution: KL target unreachable on the PD segment; "
             "returning the largest feasible point");
    lo = hi;
  } else {
    for (int it = 0; it < 200 && std::abs(kl_of(0.5 * (lo + hi)) - target) > 1e-10; ++it) {
      const double mid = 0.5 * (lo + hi);
      (kl_of(mid) < target ? lo : hi) = mid;
    }
  }
  const double s = 0.5 * (lo + hi);
  const Matrix root = spd_sqrt(ball.center.cov);
  Matrix cov = root * (Matrix::Identity(d, d) + s * dir) * root;
  return zero_mean_block(0.5 * (cov + cov.transpose()));
}

DisturbanceModel sample_adversarial_disturbances(const ProblemSpec& spec, double fraction,
                                                 std::uint64_t seed) {
  DisturbanceModel dist;
  const int T = spec.horizon;
  for (int t = 0; t <= T; ++t) {
    const KLBall ball{zero_mean_block(spec.noise.W_hat[t]), spec.radii.rho_w[t]};
    dist.W.push_back(sample_ball_distribution(ball, fraction, substream(seed, t).next_u64()));
  }
  for (int t = 0; t < T; ++t) {
    const KLBall ball{zero_mean_block(spec.noise.V_hat[t]), spec.radii.rho_v[t]};
    dist.V.push_back(
        sample_ball_distribution(ball, fraction, substream(seed, T + 1 + t).next_u64()));
  }
  return dist;
}

namespace {

// u_t = sum_{s<=t} U[t,s] y_s + q_t (Output) or the same on purified
// residuals eta_s maintained against a noise-free model copy.
class LinearPolicyController : public TrialController {
 public:
  LinearPolicyController(const ProblemSpec& spec, const CausalPolicy& policy)
      : policy_(policy),
        A_(spec.system.A),
        B_(spec.system.B),
        C_(spec.system.C_out),
        m_(spec.system.m()),
        p_(spec.system.p()),
        hist_(Vector::Zero(spec.system.p() * spec.horizon)),
        x_model_(Vector::Zero(spec.system.n())) {}

  Vector act(int t, const Vector& y) override {
    Vector signal = y;
    if (policy_.parametrization == Parametrization::Purified) signal -= C_ * x_model_;
    hist_.segment(t * p_, p_) = signal;
    Vector u = policy_.q.segment(t * m_, m_);
    u += policy_.U.block(t * m_, 0, m_, (t + 1) * p_) * hist_.head((t + 1) * p_);
    if (policy_.parametrization == Parametrization::Purified)
      x_model_ = A_ * x_model_ + B_ * u;
    return u;
  }

 private:
  const CausalPolicy& policy_;
  Matrix A_, B_, C_;
  int m_, p_;
  Vector hist_;
  Vector x_model_;
};

// Predictor-form online controller: acts before folding in y_t.
class OnlineTrialController : public TrialController {
 public:
  OnlineTrialController(const EndogenousSolution& sol, const ProblemSpec& spec,
                        Vector x0_mean)
      : ctrl_(sol, spec, std::move(x0_mean)) {}

  Vector act(int, const Vector& y) override {
    Vector u = ctrl_.input();
    ctrl_.step(y);
    return u;
  }

 private:
  OnlineController ctrl_;
};

}  // namespace

ControllerFactory policy_controller(const ProblemSpec& spec, const CausalPolicy& policy) {
  return [&spec, &policy] { return std::make_unique<LinearPolicyController>(spec, policy); };
}

ControllerFactory online_controller(const ProblemSpec& spec, const EndogenousSolution& sol,
                                    Vector x0_mean) {
  return [&spec, &sol, x0_mean] {
    return std::make_unique<OnlineTrialController>(sol, spec, x0_mean);
  };
}

CostSummary summarize(const std::vector<TrialResult>& trials) {
  CostSummary s;
  s.count = static_cast<int>(trials.size());
  if (s.count == 0) return s;

  // Pairwise summation keeps the aggregate independent of evaluation order.
  std::function<double(int, int, const std::function<double(int)>&)> pairwise =
      [&](int lo, int hi, const std::function<double(int)>& term) -> double {
    if (hi - lo <= 8) {
      double acc = 0.0;
      for (int i = lo; i < hi; ++i) acc += term(i);
      return acc;
    }
    const int mid = lo + (hi - lo) / 2;
    return pairwise(lo, mid, term) + pairwise(mid, hi, term);
  };

  s.mean = pairwise(0, s.count, [&](int i) { return trials[i].cost; }) / s.count;
  if (s.count > 1) {
    const double ss = pairwise(0, s.count, [&](int i) {
      const double d = trials[i].cost - s.mean;
      return d * d;
    });
    s.stddev = std::sqrt(ss / (s.count - 1));
  }

  std::vector<double> sorted(trials.size());
  for (size_t i = 0; i < trials.size(); ++i) sorted[i] = trials[i].cost;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * (sorted.size() - 1);
    const size_t k = static_cast<size_t>(pos);
    if (k + 1 >= sorted.size()) return sorted.back();
    const double w = pos - k;
    return (1.0 - w) * sorted[k] + w * sorted[k + 1];
  };
  s.q05 = quantile(0.05);
  s.q50 = quantile(0.50);
  s.q95 = quantile(0.95);
  return s;
}

CostSummary simulate(const ProblemSpec& spec, const ControllerFactory& make,
                     const DisturbanceModel& dist, const SimOptions& opts,
                     std::vector<TrialResult>* out_trials) {
  const int T = spec.horizon;
  const int n = spec.system.n();
  const int p = spec.system.p();
  if (static_cast<int>(dist.W.size()) != T + 1 || static_cast<int>(dist.V.size()) != T)
    throw std::invalid_argument("simulate: disturbance model block counts mismatch");
  if (opts.trials < 1) throw std::invalid_argument("simulate: trials must be >= 1");

  const Matrix& A = opts.A_true ? *opts.A_true : spec.system.A;
  const Matrix& B = spec.system.B;
  const Matrix& C = spec.system.C_out;
  const Matrix& Q = spec.cost.Q;
  const Matrix& R = spec.cost.R;
  const Matrix& QT = spec.cost.QT;

  std::vector<GaussianSampler> w_samplers, v_samplers;
  w_samplers.reserve(dist.W.size());
  v_samplers.reserve(dist.V.size());
  for (const auto& b : dist.W) w_samplers.emplace_back(b);
  for (const auto& b : dist.V) v_samplers.emplace_back(b);

  std::vector<TrialResult> trials(opts.trials);
  parallel_for(opts.trials, opts.threads, [&](int k) {
    Rng rng = substream(opts.seed, static_cast<std::uint64_t>(k));
    const std::uint64_t trial_seed = rng.next_u64();

    // Fixed draw order: x0, then (w_t, v_t) per step.
    Vector x = w_samplers[0].draw(rng);
    Matrix w_draws(n, T);
    Matrix v_draws(p, T);
    for (int t = 0; t < T; ++t) {
      w_draws.col(t) = w_samplers[t + 1].draw(rng);
      v_draws.col(t) = v_samplers[t].draw(rng);
    }

    auto ctrl = make();
    double cost = 0.0;
    for (int t = 0; t < T; ++t) {
      const Vector y = C * x + v_draws.col(t);
      const Vector u = ctrl->act(t, y);
      cost += x.dot(Q * x) + u.dot(R * u);
      x = A * x + B * u + w_draws.col(t);
    }
    cost += x.dot(QT * x);
    if (!std::isfinite(cost))
      throw std::runtime_error("simulate: NaN in trajectory, trial seed " +
                               std::to_string(trial_seed));
    trials[k] = TrialResult{k, trial_seed, cost};
  });

  if (out_trials) *out_trials = trials;
  return summarize(trials);
}

CostSummary simulate(const ProblemSpec& spec, const CausalPolicy& policy,
                     const DisturbanceModel& dist, const SimOptions& opts,
                     std::vector<TrialResult>* out_trials) {
  return simulate(spec, policy_controller(spec, policy), dist, opts, out_trials);
}

CausalPolicy lqg_baseline(const ProblemSpec& spec) {
  const int T = spec.horizon;
  const int n = spec.system.n();
  const int m = spec.system.m();
  const int p = spec.system.p();
  const Matrix& A = spec.system.A;
  const Matrix& B = spec.system.B;
  const Matrix& C = spec.system.C_out;

  // Control Riccati backward pass.
  std::vector<Matrix> K(T);
  Matrix P = spec.cost.QT;
  for (int t = T - 1; t >= 0; --t) {
    const Matrix BtP = B.transpose() * P;
    const Matrix gain_denom = spec.cost.R + BtP * B;
    K[t] = -gain_denom.ldlt().solve(BtP * A);
    P = spec.cost.Q + A.transpose() * P * A + A.transpose() * BtP.transpose() * K[t];
    P = 0.5 * (P + P.transpose()).eval();
  }

  // Filtered Kalman gains, prediction covariance seeded at the x0 prior.
  std::vector<Matrix> F(T);
  Matrix Sigma = spec.noise.W_hat[0];
  for (int t = 0; t < T; ++t) {
    const Matrix innov = C * Sigma * C.transpose() + spec.noise.V_hat[t];
    F[t] = innov.llt().solve(C * Sigma).transpose();  // Sigma C^T innov^{-1}
    const Matrix M = Sigma - F[t] * C * Sigma;
    Sigma = A * M * A.transpose() + spec.noise.W_hat[t + 1];
    Sigma = 0.5 * (Sigma + Sigma.transpose()).eval();
  }

  // u_t = K_t xhat_{t|t}: propagate the estimator's linear dependence on the
  // measurements to assemble the output-feedback matrix.
  CausalPolicy policy;
  policy.parametrization = Parametrization::Output;
  policy.U = Matrix::Zero(m * T, p * T);
  policy.q = Vector::Zero(m * T);
  Matrix coef_pred = Matrix::Zero(n, p * T);  // xhat_{t|t-1} = coef_pred * y
  const Matrix I = Matrix::Identity(n, n);
  for (int t = 0; t < T; ++t) {
    Matrix coef_filt = (I - F[t] * C) * coef_pred;
    coef_filt.block(0, t * p, n, p) += F[t];
    policy.U.block(t * m, 0, m, p * T) = K[t] * coef_filt;
    coef_pred = (A + B * K[t]) * coef_filt;
  }
  return policy;
}

}  // namespace drlqg
