#include "drlqg/saddle.hpp"

#include "drlqg/log.hpp"
#include "drlqg/parallel.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace drlqg {

BlockCovariance nominal_covariance(const ProblemSpec& spec) {
  return BlockCovariance{spec.noise.W_hat, spec.noise.V_hat};
}

namespace {

Matrix assemble_block_diag(const std::vector<Matrix>& blocks, int dim) {
  Matrix full = Matrix::Zero(dim, dim);
  int at = 0;
  for (const auto& b : blocks) {
    full.block(at, at, b.rows(), b.cols()) = b;
    at += static_cast<int>(b.rows());
  }
  return full;
}

}  // namespace

double cost_from_forms(const QuadraticForms& forms, const BlockCovariance& sigma) {
  double total = 0.0;
  int at = 0;
  for (const auto& w : sigma.W) {
    const int d = static_cast<int>(w.rows());
    total += (forms.F1.block(at, at, d, d) * w).trace();
    at += d;
  }
  at = 0;
  for (const auto& v : sigma.V) {
    const int d = static_cast<int>(v.rows());
    total += (forms.F2.block(at, at, d, d) * v).trace();
    at += d;
  }
  return total;
}

double expected_cost(const StackedOperators& ops, const CausalPolicy& policy,
                     const BlockCovariance& sigma) {
  CausalPolicy purified = policy.parametrization == Parametrization::Purified
                              ? policy
                              : convert_policy(ops, policy, Parametrization::Purified);
  return cost_from_forms(quadratic_forms(ops, purified), sigma);
}

CausalPolicy br_controller(const StackedOperators& ops, const BlockCovariance& sigma) {
  const int n = ops.n, m = ops.m, p = ops.p, T = ops.T;
  const Matrix Wfull = assemble_block_diag(sigma.W, n * (T + 1));
  const Matrix Vfull = assemble_block_diag(sigma.V, p * T);

  const Matrix M = ops.Rs + ops.H.transpose() * ops.Qs * ops.H;           // mT x mT
  const Matrix S = ops.D * Wfull * ops.D.transpose() + Vfull;             // pT x pT
  const Matrix N = ops.H.transpose() * ops.Qs * ops.G * Wfull * ops.D.transpose();

  // Free entries of U enumerated block row by block row.
  struct Entry {
    int r, c;
  };
  std::vector<Entry> free_entries;
  free_entries.reserve(static_cast<size_t>(m) * p * T * (T + 1) / 2);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j <= i; ++j)
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < p; ++b)
          free_entries.push_back({i * m + a, j * p + b});

  const int nf = static_cast<int>(free_entries.size());
  Matrix K(nf, nf);
  Vector rhs(nf);
  for (int e = 0; e < nf; ++e) {
    const auto [r1, c1] = free_entries[e];
    rhs[e] = -N(r1, c1);
    for (int f = 0; f < nf; ++f) {
      const auto [r2, c2] = free_entries[f];
      K(e, f) = M(r1, r2) * S(c2, c1);
    }
  }

  // K is the restriction of the PD operator S (x) M to the causal subspace.
  Eigen::LDLT<Matrix> ldlt(K);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("br_controller: singular normal system");
  const Vector sol = ldlt.solve(rhs);

  CausalPolicy policy = zero_policy(ops, Parametrization::Purified);
  for (int e = 0; e < nf; ++e) policy.U(free_entries[e].r, free_entries[e].c) = sol[e];
  return policy;
}

namespace {

BlockCovariance adversary_from_forms(const QuadraticForms& forms,
                                     const AmbiguityRadii& radii,
                                     const NominalNoise& noise, int threads) {
  const int nw = static_cast<int>(noise.W_hat.size());
  const int nv = static_cast<int>(noise.V_hat.size());
  BlockCovariance out;
  out.W.resize(nw);
  out.V.resize(nv);

  // Offsets of the diagonal blocks inside F1 / F2.
  std::vector<int> w_at(nw), v_at(nv);
  int at = 0;
  for (int t = 0; t < nw; ++t) {
    w_at[t] = at;
    at += static_cast<int>(noise.W_hat[t].rows());
  }
  at = 0;
  for (int t = 0; t < nv; ++t) {
    v_at[t] = at;
    at += static_cast<int>(noise.V_hat[t].rows());
  }

  parallel_for(nw + nv, threads, [&](int i) {
    if (i < nw) {
      const int d = static_cast<int>(noise.W_hat[i].rows());
      const KLBall ball{zero_mean_block(noise.W_hat[i]), radii.rho_w[i]};
      out.W[i] = worst_case_block(forms.F1.block(w_at[i], w_at[i], d, d), ball).sigma;
    } else {
      const int t = i - nw;
      const int d = static_cast<int>(noise.V_hat[t].rows());
      const KLBall ball{zero_mean_block(noise.V_hat[t]), radii.rho_v[t]};
      out.V[t] = worst_case_block(forms.F2.block(v_at[t], v_at[t], d, d), ball).sigma;
    }
  });
  return out;
}

}  // namespace

BlockCovariance br_adversary(const StackedOperators& ops, const CausalPolicy& policy,
                             const AmbiguityRadii& radii, const NominalNoise& noise,
                             int threads) {
  if (policy.parametrization != Parametrization::Purified)
    throw std::invalid_argument("br_adversary expects a Purified policy");
  return adversary_from_forms(quadratic_forms(ops, policy), radii, noise, threads);
}

double feasibility_slack(const BlockCovariance& sigma, const AmbiguityRadii& radii,
                         const NominalNoise& noise) {
  double worst = -std::numeric_limits<double>::infinity();
  for (size_t t = 0; t < sigma.W.size(); ++t) {
    const double kl = kl_gaussian(zero_mean_block(sigma.W[t]),
                                  zero_mean_block(noise.W_hat[t]));
    worst = std::max(worst, kl - radii.rho_w[t]);
  }
  for (size_t t = 0; t < sigma.V.size(); ++t) {
    const double kl = kl_gaussian(zero_mean_block(sigma.V[t]),
                                  zero_mean_block(noise.V_hat[t]));
    worst = std::max(worst, kl - radii.rho_v[t]);
  }
  return worst;
}

double duality_gap(const StackedOperators& ops, const CausalPolicy& policy,
                   const BlockCovariance& sigma, const AmbiguityRadii& radii,
                   const NominalNoise& noise) {
  if (feasibility_slack(sigma, radii, noise) > 1e-7)
    throw std::invalid_argument("duality_gap: infeasible sigma");
  CausalPolicy purified = policy.parametrization == Parametrization::Purified
                              ? policy
                              : convert_policy(ops, policy, Parametrization::Purified);
  const double upper =
      cost_from_forms(quadratic_forms(ops, purified),
                      br_adversary(ops, purified, radii, noise));
  const double lower = expected_cost(ops, br_controller(ops, sigma), sigma);
  const double gap = upper - lower;
  if (gap < -1e-7)
    throw std::runtime_error("duality_gap: weak duality violated, gap = " +
                             std::to_string(gap));
  return std::max(gap, 0.0);
}

double controller_norm_bound(const StackedOperators& ops, const AmbiguityRadii& radii,
                             const NominalNoise& noise) {
  // J(U*, Sigma) <= J(0, Sigma) <= max_Sigma J(0, Sigma) and
  // J(U, Sigma) >= lambda_min(R) * lambda_min(Vfull) * ||U||_F^2.
  const CausalPolicy zero = zero_policy(ops);
  const QuadraticForms forms0 = quadratic_forms(ops, zero);
  const double j0max =
      cost_from_forms(forms0, adversary_from_forms(forms0, radii, noise, 1));

  Eigen::SelfAdjointEigenSolver<Matrix> er(ops.Rs.block(0, 0, ops.m, ops.m),
                                           Eigen::EigenvaluesOnly);
  const double lam_r = er.eigenvalues().minCoeff();
  double lam_v = std::numeric_limits<double>::infinity();
  for (size_t t = 0; t < noise.V_hat.size(); ++t) {
    Eigen::SelfAdjointEigenSolver<Matrix> ev(noise.V_hat[t], Eigen::EigenvaluesOnly);
    const double lo =
        kl_generalized_eigen_range(radii.rho_v[t], static_cast<int>(noise.V_hat[t].rows())).lo;
    lam_v = std::min(lam_v, ev.eigenvalues().minCoeff() * lo);
  }
  return std::sqrt(std::max(j0max, 0.0) / (lam_r * lam_v));
}

SaddleSolution solve_exogenous(const ProblemSpec& spec, const SolverOptions& opts) {
  ValidationReport report = validate(spec);
  if (!report.ok) {
    std::string msg = "solve_exogenous: invalid spec:";
    for (const auto& v : report.violations) msg += " " + v + ";";
    throw std::invalid_argument(msg);
  }
  if (!(opts.h > 0.0 && opts.h <= 1.0))
    throw std::invalid_argument("solve_exogenous: step size must lie in (0, 1]");

  const StackedOperators ops = build_stacked(spec);
  const auto& radii = spec.radii;
  const auto& noise = spec.noise;
  const double norm_bound = controller_norm_bound(ops, radii, noise);

  CausalPolicy U = zero_policy(ops);
  BlockCovariance sigma = nominal_covariance(spec);

  SaddleSolution best;
  double best_gap = std::numeric_limits<double>::infinity();
  SaddleSolution result;
  result.gap_trace.reserve(256);

  for (int k = 0; k <= opts.max_iters; ++k) {
    const QuadraticForms forms = quadratic_forms(ops, U);
    const BlockCovariance sigma_star = adversary_from_forms(forms, radii, noise, opts.threads);
    const CausalPolicy u_star = br_controller(ops, sigma);

    const double upper = cost_from_forms(forms, sigma_star);
    const double lower = expected_cost(ops, u_star, sigma);
    double gap = upper - lower;
    if (gap < -1e-7)
      throw std::runtime_error("solve_exogenous: weak duality violated");
    gap = std::max(gap, 0.0);
    const double value = cost_from_forms(forms, sigma);
    result.gap_trace.push_back({k, k * opts.h, gap, value});

    if (U.U.norm() > norm_bound * (1.0 + 1e-6))
      throw std::runtime_error("solve_exogenous: iterate escaped the coercivity bound");
    if (feasibility_slack(sigma, radii, noise) > 1e-7)
      throw std::runtime_error("solve_exogenous: Euler iterate left the ambiguity set");

    if (gap < best_gap) {
      best_gap = gap;
      best.policy_purified = U;
      best.sigma = sigma;
      best.value = value;
    }

    if (gap <= opts.tol_gap * std::max(1.0, std::abs(value))) {
      result.policy_purified = U;
      result.sigma = sigma;
      result.value = value;
      result.converged = true;
      break;
    }
    if (k == opts.max_iters) break;

    U.U = (1.0 - opts.h) * U.U + opts.h * u_star.U;
    for (size_t t = 0; t < sigma.W.size(); ++t)
      sigma.W[t] = (1.0 - opts.h) * sigma.W[t] + opts.h * sigma_star.W[t];
    for (size_t t = 0; t < sigma.V.size(); ++t)
      sigma.V[t] = (1.0 - opts.h) * sigma.V[t] + opts.h * sigma_star.V[t];
  }

  if (!result.converged) {
    result.policy_purified = best.policy_purified;
    result.sigma = best.sigma;
    result.value = best.value;
    std::ostringstream msg;
    msg << "no convergence after " << opts.max_iters << " iterations; best gap "
        << best_gap;
    result.diagnostic = msg.str();
    log_info("solve_exogenous: " + result.diagnostic);
  }
  result.policy_output = convert_policy(ops, result.policy_purified, Parametrization::Output);
  return result;
}

}  // namespace drlqg
