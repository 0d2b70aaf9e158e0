#pragma once

#include "drlqg/divergence.hpp"
#include "drlqg/stacked.hpp"

#include <string>
#include <vector>

namespace drlqg {

// Adversary variable Sigma = diag(W_0..W_T, V_0..V_{T-1}); W[0] is the x0
// block, matching NominalNoise.
struct BlockCovariance {
  std::vector<Matrix> W;  // T+1 blocks, n x n, PD
  std::vector<Matrix> V;  // T blocks, p x p, PD
};

BlockCovariance nominal_covariance(const ProblemSpec& spec);

struct SolverOptions {
  double h = 0.5;         // Euler step in (0, 1]
  double tol_gap = 1e-6;  // stop when gap <= tol_gap * max(1, |value|)
  int max_iters = 5000;
  int seed = 0;           // reserved for randomized variants
  int threads = 1;
};

struct GapTracePoint {
  int iter;
  double lambda;  // virtual time iter * h
  double gap;
  double value;
};

struct SaddleSolution {
  CausalPolicy policy_output;
  CausalPolicy policy_purified;
  BlockCovariance sigma;
  double value = 0.0;
  std::vector<GapTracePoint> gap_trace;
  bool converged = false;
  std::string diagnostic;
};

// J(U, Sigma) = Tr(F1(U) W) + Tr(F2(U) V).
double expected_cost(const StackedOperators& ops, const CausalPolicy& policy,
                     const BlockCovariance& sigma);
double cost_from_forms(const QuadraticForms& forms, const BlockCovariance& sigma);

// Controller best response: unique causal minimizer of J(., Sigma), solved
// from the causality-projected stationarity condition
//   Pi_causal[(Rs + H^T Qs H) U (D W D^T + V) + H^T Qs G W D^T] = 0
// as one linear system over the free block-lower-triangular entries; q = 0.
CausalPolicy br_controller(const StackedOperators& ops, const BlockCovariance& sigma);

// Adversary best response: closed-form worst case on each of the 2T+1
// diagonal blocks of F(U) = diag(F1, F2). Blocks with zero budget or zero
// F-block stay at the nominal covariance.
BlockCovariance br_adversary(const StackedOperators& ops, const CausalPolicy& policy,
                             const AmbiguityRadii& radii, const NominalNoise& noise,
                             int threads = 1);

// Phi(U, Sigma) = J(U, BR2(U)) - J(BR1(Sigma), Sigma), clamped to 0 above
// -1e-7; a larger violation of weak duality throws.
double duality_gap(const StackedOperators& ops, const CausalPolicy& policy,
                   const BlockCovariance& sigma, const AmbiguityRadii& radii,
                   const NominalNoise& noise);

// Max KL overshoot across blocks; <= 0 means Sigma is feasible.
double feasibility_slack(const BlockCovariance& sigma, const AmbiguityRadii& radii,
                         const NominalNoise& noise);

// Coercivity bound: no best-response iterate can exceed this Frobenius norm.
double controller_norm_bound(const StackedOperators& ops, const AmbiguityRadii& radii,
                             const NominalNoise& noise);

// Regularized best-response dynamics, explicit Euler from (U, Sigma) =
// (0, nominal). Iterates stay feasible because each step is a convex
// combination inside the per-block KL balls.
SaddleSolution solve_exogenous(const ProblemSpec& spec, const SolverOptions& opts = {});

}  // namespace drlqg
