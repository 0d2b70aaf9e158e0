#pragma once

#include "drlqg/model.hpp"

namespace drlqg {

struct GaussianBlock {
  Vector mean;
  Matrix cov;  // symmetric PD
  int dim() const { return static_cast<int>(cov.rows()); }
};

GaussianBlock zero_mean_block(const Matrix& cov);

// KL ball centered at a zero-mean Gaussian.
struct KLBall {
  GaussianBlock center;
  double radius = 0.0;
};

// R(p2 || p1) = 0.5 * ((mu2-mu1)^T S1^{-1} (mu2-mu1) + Tr(S1^{-1} S2) - d
//               + ln det S1 - ln det S2). Throws on singular covariances.
double kl_gaussian(const GaussianBlock& p2, const GaussianBlock& p1);

// Covariance-only lower bound on R(P || N(0, S_q)) for zero-mean P:
// 0.5 * (Tr(S_q^{-1} S_p) - d + log det S_q - log det S_p).
double kl_lower_bound(const Matrix& cov_p, const GaussianBlock& gaussian_q);

struct WorstCaseBlock {
  Matrix sigma;   // maximizer of Tr(F Sigma) over the KL ball
  double tau;     // multiplier solving the slackness equation; +inf when inactive
  double value;   // Tr(F sigma)
};

// Maximizes Tr(F Sigma) over {Sigma > 0 : KL(N(0,Sigma) || N(0,Sigma_hat)) <= rho}.
// Closed form Sigma*(tau) = (Sigma_hat^{-1} - 2F/tau)^{-1}; tau solved by
// bisection so the KL constraint is active (within 1e-8). radius = 0 or F = 0
// returns the nominal covariance with an infinite-tau sentinel.
WorstCaseBlock worst_case_block(const Matrix& F, const KLBall& ball);

// Range [lo, hi] of generalized eigenvalues of Sigma_hat^{-1/2} Sigma
// Sigma_hat^{-1/2} attainable inside a KL ball of radius rho in dimension dim:
// each g satisfies g - log g <= 2 rho + 1.
struct EigenRange {
  double lo;
  double hi;
};
EigenRange kl_generalized_eigen_range(double rho, int dim);

// Internal-but-tested kernels.
double log_det_spd(const Matrix& x);          // via Cholesky; throws if not PD
Matrix spd_sqrt(const Matrix& x);             // symmetric square root

}  // namespace drlqg
