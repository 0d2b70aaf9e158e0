#include "drlqg/divergence.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace drlqg {

namespace {

Eigen::LLT<Matrix> cholesky_or_throw(const Matrix& x, const char* what) {
  Eigen::LLT<Matrix> llt(0.5 * (x + x.transpose()));
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument(std::string(what) + ": matrix not positive definite");
  return llt;
}

double log_det_from_llt(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
}

}  // namespace

double log_det_spd(const Matrix& x) {
  return log_det_from_llt(cholesky_or_throw(x, "log_det_spd"));
}

Matrix spd_sqrt(const Matrix& x) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (x + x.transpose()));
  if (es.info() != Eigen::Success)
    throw std::runtime_error("spd_sqrt: eigendecomposition failed");
  return es.operatorSqrt();
}

GaussianBlock zero_mean_block(const Matrix& cov) {
  return GaussianBlock{Vector::Zero(cov.rows()), cov};
}

double kl_gaussian(const GaussianBlock& p2, const GaussianBlock& p1) {
  const int d = p1.dim();
  if (p2.dim() != d || p1.mean.size() != d || p2.mean.size() != d)
    throw std::invalid_argument("kl_gaussian: dimension mismatch");
  const auto llt1 = cholesky_or_throw(p1.cov, "kl_gaussian: Sigma1");
  const auto llt2 = cholesky_or_throw(p2.cov, "kl_gaussian: Sigma2");
  const Vector dm = p2.mean - p1.mean;
  const double maha = dm.dot(llt1.solve(dm));
  const double tr = llt1.solve(p2.cov).trace();
  const double log_ratio = log_det_from_llt(llt1) - log_det_from_llt(llt2);
  const double kl = 0.5 * (maha + tr - d + log_ratio);
  // Round-off on near-identical blocks can land a hair below zero.
  const double slack = 1e-12 * (1.0 + std::abs(maha) + std::abs(tr - d) + std::abs(log_ratio));
  return (kl < 0.0 && kl > -slack) ? 0.0 : kl;
}

double kl_lower_bound(const Matrix& cov_p, const GaussianBlock& gaussian_q) {
  const int d = gaussian_q.dim();
  if (cov_p.rows() != d || cov_p.cols() != d)
    throw std::invalid_argument("kl_lower_bound: dimension mismatch");
  const auto lltq = cholesky_or_throw(gaussian_q.cov, "kl_lower_bound: Sigma_q");
  const auto lltp = cholesky_or_throw(cov_p, "kl_lower_bound: Sigma_p");
  const double tr = lltq.solve(cov_p).trace();
  return 0.5 * (tr - d + log_det_from_llt(lltq) - log_det_from_llt(lltp));
}

namespace {

// KL(N(0, Sigma*(tau)) || N(0, Sigma_hat)) - rho for the closed-form
// maximizer, expressed through the whitened spectrum of F: with
// phi_i = eigenvalues of Sigma_hat^{1/2} F Sigma_hat^{1/2}, the generalized
// eigenvalue of Sigma*(tau) is g_i = 1/(1 - 2 phi_i / tau) and
// KL = 0.5 * sum_i (g_i - 1 - log g_i).
double slackness_gap(const Vector& phi, double tau, double rho) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    const double r = 1.0 - 2.0 * phi[i] / tau;
    if (!(r > 0.0)) return std::numeric_limits<double>::infinity();
    const double g = 1.0 / r;
    kl += 0.5 * (g - 1.0 - std::log(g));
  }
  return kl - rho;
}

}  // namespace

WorstCaseBlock worst_case_block(const Matrix& F, const KLBall& ball) {
  const int d = ball.center.dim();
  if (F.rows() != d || F.cols() != d)
    throw std::invalid_argument("worst_case_block: dimension mismatch");
  if (ball.radius < 0.0)
    throw std::invalid_argument("worst_case_block: negative radius");
  const Matrix& sigma_hat = ball.center.cov;
  const Matrix Fs = 0.5 * (F + F.transpose());

  const Matrix root = spd_sqrt(sigma_hat);
  Eigen::SelfAdjointEigenSolver<Matrix> es(root * Fs * root);
  const Vector phi = es.eigenvalues();
  const double scale = std::max(1.0, Fs.cwiseAbs().maxCoeff());
  if (phi.minCoeff() < -1e-9 * scale)
    throw std::invalid_argument("worst_case_block: F not positive semidefinite");

  WorstCaseBlock out;
  const double phi_max = phi.maxCoeff();
  if (ball.radius == 0.0 || phi_max <= 0.0) {
    out.sigma = sigma_hat;
    out.tau = std::numeric_limits<double>::infinity();
    out.value = (Fs * sigma_hat).trace();
    return out;
  }

  // KL(tau) decreases strictly from +inf at tau_min to 0 as tau -> inf.
  const double tau_min = 2.0 * phi_max;
  double lo = tau_min * (1.0 + 1e-10);
  double hi = tau_min * 2.0;
  int doublings = 0;
  while (slackness_gap(phi, hi, ball.radius) > 0.0) {
    hi *= 2.0;
    if (++doublings > 200)
      throw std::runtime_error("worst_case_block: bisection bracket failure");
  }
  for (int it = 0; it < 120 && (hi - lo) > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (slackness_gap(phi, mid, ball.radius) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  out.tau = 0.5 * (lo + hi);

  // Sigma*(tau) = (Sigma_hat^{-1} - 2F/tau)^{-1}; the inner matrix is PD for
  // tau > tau_min by construction.
  const Matrix inner =
      cholesky_or_throw(sigma_hat, "worst_case_block: Sigma_hat")
          .solve(Matrix::Identity(d, d)) -
      (2.0 / out.tau) * Fs;
  out.sigma = cholesky_or_throw(inner, "worst_case_block: certificate")
                  .solve(Matrix::Identity(d, d));
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
  out.value = (Fs * out.sigma).trace();
  return out;
}

EigenRange kl_generalized_eigen_range(double rho, int dim) {
  if (rho < 0.0 || dim < 1)
    throw std::invalid_argument("kl_generalized_eigen_range: bad arguments");
  // Solve g - log g = c on both sides of g = 1.
  const double c = 2.0 * rho + 1.0;
  auto f = [](double g) { return g - std::log(g); };
  double lo = 1.0, hi = 1.0;
  {
    double a = 1e-300, b = 1.0;
    for (int it = 0; it < 200; ++it) {
      const double m = std::sqrt(a * b);  // geometric mid on (0, 1]
      (f(m) > c ? a : b) = m;
    }
    lo = a;
  }
  {
    double a = 1.0, b = 2.0;
    while (f(b) < c) b *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double m = 0.5 * (a + b);
      (f(m) > c ? b : a) = m;
    }
    hi = b;
  }
  return {lo, hi};
}

}  // namespace drlqg
