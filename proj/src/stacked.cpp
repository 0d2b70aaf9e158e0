#include "drlqg/stacked.hpp"

#include <stdexcept>
#include <vector>

namespace drlqg {

StackedOperators build_stacked(const ProblemSpec& spec) {
  StackedOperators ops;
  const int n = spec.system.n();
  const int m = spec.system.m();
  const int p = spec.system.p();
  const int T = spec.horizon;
  ops.n = n;
  ops.m = m;
  ops.p = p;
  ops.T = T;

  const Matrix& A = spec.system.A;
  const Matrix& B = spec.system.B;
  const Matrix& C = spec.system.C_out;

  // Powers A^0..A^T.
  std::vector<Matrix> Apow(T + 1);
  Apow[0] = Matrix::Identity(n, n);
  for (int k = 1; k <= T; ++k) Apow[k] = A * Apow[k - 1];

  ops.Qs = Matrix::Zero(n * (T + 1), n * (T + 1));
  for (int t = 0; t < T; ++t) ops.Qs.block(t * n, t * n, n, n) = spec.cost.Q;
  ops.Qs.block(T * n, T * n, n, n) = spec.cost.QT;

  ops.Rs = Matrix::Zero(m * T, m * T);
  for (int t = 0; t < T; ++t) ops.Rs.block(t * m, t * m, m, m) = spec.cost.R;

  ops.Cs = Matrix::Zero(p * T, n * (T + 1));
  for (int t = 0; t < T; ++t) ops.Cs.block(t * p, t * n, p, n) = C;

  ops.G = Matrix::Zero(n * (T + 1), n * (T + 1));
  for (int t = 0; t <= T; ++t)
    for (int s = 0; s <= t; ++s) ops.G.block(t * n, s * n, n, n) = Apow[t - s];

  ops.H = Matrix::Zero(n * (T + 1), m * T);
  for (int t = 1; t <= T; ++t)
    for (int s = 0; s < t; ++s)
      ops.H.block(t * n, s * m, n, m) = Apow[t - 1 - s] * B;

  ops.D = ops.Cs * ops.G;
  return ops;
}

QuadraticForms quadratic_forms(const StackedOperators& ops, const CausalPolicy& policy) {
  if (policy.parametrization != Parametrization::Purified)
    throw std::invalid_argument("quadratic_forms expects a Purified policy");
  QuadraticForms f;
  f.M = ops.Rs + ops.H.transpose() * ops.Qs * ops.H;
  const Matrix UD = policy.U * ops.D;
  const Matrix HUDG = ops.H * UD + ops.G;
  f.F1 = UD.transpose() * ops.Rs * UD + HUDG.transpose() * ops.Qs * HUDG;
  f.F2 = policy.U.transpose() * f.M * policy.U;
  f.F1 = 0.5 * (f.F1 + f.F1.transpose()).eval();
  f.F2 = 0.5 * (f.F2 + f.F2.transpose()).eval();
  return f;
}

CausalPolicy convert_policy(const StackedOperators& ops, const CausalPolicy& policy,
                            Parametrization target) {
  if (policy.parametrization == target) return policy;
  const Matrix CH = ops.Cs * ops.H;  // strictly block lower triangular
  const int mT = ops.m * ops.T;
  Matrix conv(mT, mT);
  if (target == Parametrization::Output)
    conv = Matrix::Identity(mT, mT) + policy.U * CH;
  else
    conv = Matrix::Identity(mT, mT) - policy.U * CH;

  Eigen::PartialPivLU<Matrix> lu(conv);
  // conv is unitriangular for causal U; a vanishing determinant signals
  // corrupted inputs.
  if (!(std::abs(lu.determinant()) > 1e-300))
    throw std::runtime_error("convert_policy: singular conversion matrix");

  CausalPolicy out;
  out.U = lu.solve(policy.U);
  out.q = lu.solve(policy.q);
  out.U = causal_project(std::move(out.U), ops.m, ops.p, ops.T);
  out.parametrization = target;
  return out;
}

bool is_causal(const Matrix& U, int m, int p, int T, double tol) {
  if (U.rows() != m * T || U.cols() != p * T) return false;
  for (int i = 0; i < T; ++i)
    for (int j = i + 1; j < T; ++j)
      if (U.block(i * m, j * p, m, p).cwiseAbs().maxCoeff() > tol) return false;
  return true;
}

Matrix causal_project(Matrix U, int m, int p, int T) {
  for (int i = 0; i < T; ++i)
    for (int j = i + 1; j < T; ++j) U.block(i * m, j * p, m, p).setZero();
  return U;
}

CausalPolicy zero_policy(const StackedOperators& ops, Parametrization par) {
  CausalPolicy policy;
  policy.U = Matrix::Zero(ops.m * ops.T, ops.p * ops.T);
  policy.q = Vector::Zero(ops.m * ops.T);
  policy.parametrization = par;
  return policy;
}

}  // namespace drlqg
