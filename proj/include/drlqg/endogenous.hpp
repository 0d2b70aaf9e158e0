#pragma once

#include "drlqg/model.hpp"

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace drlqg {

// Nominal (tau-independent) filtering quantities: Sigma_hat[t] is the
// one-step prediction error covariance under the nominal model with
// Sigma_hat[0] = W_hat[0], and M[t] = (Sigma_hat[t]^{-1} + C^T V_hat[t]^{-1} C)^{-1}
// the corresponding filtered covariance.
struct NominalPredictionPass {
  std::vector<Matrix> Sigma_hat;  // 0..T
  std::vector<Matrix> M;          // 0..T-1
};

NominalPredictionPass nominal_prediction_pass(const ProblemSpec& spec);

// Thrown when a tau violates its feasibility set T_t; reports which of the
// two matrix conditions failed first.
struct TauInfeasible : std::runtime_error {
  TauInfeasible(int t_, int condition_, double needed_)
      : std::runtime_error("tau infeasible at t=" + std::to_string(t_) +
                           " (condition " + std::to_string(condition_) +
                           ", needs tau > " + std::to_string(needed_) + ")"),
        t(t_),
        condition(condition_),
        needed(needed_) {}
  int t;
  int condition;  // 1: W^{-1} - P/tau, 2: W^{-1} - (P + Sbar)/tau
  double needed;
};

struct EndogenousSolution {
  // Backward pass, indices 0..T (gains 0..T-1). P[T] = QT, S_bar[T] = 0,
  // z_bar[T] = c_bar[T] = 0.
  std::vector<Matrix> P;
  std::vector<Matrix> S_bar;
  std::vector<double> z_bar;
  std::vector<double> c_bar;
  std::vector<Matrix> K;        // control gains, m x n
  std::vector<Matrix> mu_gain;  // maps (A x~ + B u) to the worst-case mean
  std::vector<Matrix> W_star;   // worst-case process covariances
  std::vector<Matrix> G_lin;    // gradient of the prediction cost term at Sigma_hat
  std::vector<Matrix> Sigma_hat;
  std::vector<Matrix> M;
  // Forward pass (filled by forward_pass / evaluate / solve).
  std::vector<Matrix> Sigma_star;  // worst-case prediction covariances, 0..T
  std::vector<Matrix> L;           // gains A Sigma*_t C^T (C Sigma*_t C^T + V_t)^{-1}
  std::vector<double> tau;
  double value = std::numeric_limits<double>::quiet_NaN();
};

// Conditioning information at time 0: x0 | I0 ~ N(x_mean0, Sigma0). The
// default is the prior (zero mean, W_hat[0]), matching an estimator that has
// seen no measurements yet.
struct InfoState {
  Vector x_mean0;
  Matrix Sigma0;
};
InfoState default_info_state(const ProblemSpec& spec);

// Process-noise budgets used by this solver: the endogenous rho list when
// present, otherwise rho_w[1..T] (x0 and measurement ambiguity are out of
// scope for this path).
std::vector<double> endogenous_radii(const ProblemSpec& spec);

// Backward recursions at fixed tau with stage weights Q + tau_t E1^T E1 and
// R + tau_t E2^T E2. Throws TauInfeasible.
EndogenousSolution backward_pass(const ProblemSpec& spec, const std::vector<double>& tau);

// Worst-case covariance/gain forward pass from Sigma0.
void forward_pass(const ProblemSpec& spec, EndogenousSolution& sol, const Matrix& Sigma0);

// Dual value W0(I0, tau) = V0(I0, tau) + sum_t tau_t rho_t with
// V0 = 0.5 x~0^T P0 x~0 + 0.5 Tr((P0 + S_bar0) Sigma0) + z_bar0 + c_bar0.
// Note the 1/2 stage-cost convention: the exogenous path's quadratic cost is
// twice this value.
double evaluate_dual(const ProblemSpec& spec, const std::vector<double>& tau,
                     const InfoState& I0);

struct EndoOptions {
  double tol_dual = 1e-8;  // relative per-sweep improvement threshold
  int max_sweeps = 200;
  int seed = 0;
  bool randomized_order = false;  // seeded permutation per sweep
};

struct EndoTrace {
  std::vector<double> sweep_objective;  // objective after each sweep, [0] = initial
};

// Cyclic coordinate descent over tau (golden-section per coordinate on a
// bracket expanded from the current value, restricted above the feasibility
// threshold). Throws if no feasible initialization is found.
EndogenousSolution solve_endogenous(const ProblemSpec& spec, const EndoOptions& opts = {},
                                    const InfoState* I0 = nullptr,
                                    EndoTrace* trace = nullptr);

// r_t(X) = 0.5 Tr(S_next (A X A^T - A X C^T (C X C^T + V)^{-1} C X A^T)),
// the nonlinear prediction cost term that the backward pass linearizes.
double prediction_cost_term(const Matrix& S_next, const Matrix& A, const Matrix& C,
                            const Matrix& V_hat, const Matrix& X);

// Worst-case certainty-equivalent output feedback in one-step-predictor form:
// u_t = K_t x~_t where x~_t uses y_0..y_{t-1}, updated as
//   x~_{t+1} = A x~_t + B u_t + mu~_t + L_t (y_t - C x~_t),
// with mu~_t = mu_gain_t (A x~_t + B u_t).
class OnlineController {
 public:
  OnlineController(const EndogenousSolution& sol, const ProblemSpec& spec,
                   Vector x0_mean);

  // u_t for the current time step; valid while time() < T.
  Vector input() const;

  // Consume y_t and advance; returns u_{t+1}, or an empty vector after the
  // final measurement. Throws once called more than T times.
  Vector step(const Vector& y);

  int time() const { return t_; }

 private:
  Matrix A_, B_, C_;
  std::vector<Matrix> K_, mu_gain_, L_;
  int T_;
  int t_ = 0;
  Vector x_est_;
  Vector u_;
};

}  // namespace drlqg
