#pragma once

#include "drlqg/model.hpp"

namespace drlqg {

enum class Parametrization { Purified, Output };

// Affine causal policy u = U eta + q (Purified) or u = U y + q (Output).
// U is mT x pT with m x p blocks; block (i,j) may be nonzero only for j <= i,
// so u_t depends on eta_0..eta_t (resp. y_0..y_t). The structural mask, not
// the numeric content, defines causality.
struct CausalPolicy {
  Matrix U;
  Vector q;
  Parametrization parametrization = Parametrization::Purified;
};

// Stacked operators with w = (x0, w_0, ..., w_{T-1}):
//   x = H u + G w,   eta = D w + v,   D = Cs * G.
// G block (t,s) = A^{t-s} for s <= t; H block (t,s) = A^{t-1-s} B for s < t.
struct StackedOperators {
  int n = 0, m = 0, p = 0, T = 0;
  Matrix Qs;  // n(T+1) x n(T+1), diag(Q, ..., Q, QT)
  Matrix Rs;  // mT x mT, diag(R, ..., R)
  Matrix Cs;  // pT x n(T+1), picks C x_t for t = 0..T-1
  Matrix G;   // n(T+1) x n(T+1)
  Matrix H;   // n(T+1) x mT
  Matrix D;   // pT x n(T+1)
};

StackedOperators build_stacked(const ProblemSpec& spec);

// F1 = D^T U^T Rs U D + (H U D + G)^T Qs (H U D + G)
// F2 = U^T (Rs + H^T Qs H) U
// M  = Rs + H^T Qs H
struct QuadraticForms {
  Matrix F1;
  Matrix F2;
  Matrix M;
};

// Requires a Purified policy.
QuadraticForms quadratic_forms(const StackedOperators& ops, const CausalPolicy& policy);

// Purified -> Output: U' = (I + U Cs H)^{-1} U, q' = (I + U Cs H)^{-1} q.
// Output -> Purified: U = (I - U' Cs H)^{-1} U'. Both conversion matrices are
// unitriangular because Cs H is strictly block lower triangular, so the maps
// are always well defined for causal policies.
CausalPolicy convert_policy(const StackedOperators& ops, const CausalPolicy& policy,
                            Parametrization target);

bool is_causal(const Matrix& U, int m, int p, int T, double tol = 0.0);
Matrix causal_project(Matrix U, int m, int p, int T);
CausalPolicy zero_policy(const StackedOperators& ops,
                         Parametrization par = Parametrization::Purified);

}  // namespace drlqg
