#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace drlqg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Discrete-time plant  x_{t+1} = A x_t + B u_t + w_t,  y_t = C x_t + v_t.
struct SystemModel {
  Matrix A;      // n x n state transition
  Matrix B;      // n x m input map
  Matrix C_out;  // p x n output map
  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int p() const { return static_cast<int>(C_out.rows()); }
};

struct CostSpec {
  Matrix Q;   // n x n stage state weight, PSD
  Matrix QT;  // n x n terminal weight, PSD
  Matrix R;   // m x m input weight, PD
};

// Nominal Gaussian noise model. W_hat[0] is the initial-state covariance;
// W_hat[t+1] drives the transition into x_{t+1}. V_hat[t] corrupts y_t.
struct NominalNoise {
  std::vector<Matrix> W_hat;  // T+1 blocks, n x n, PD
  std::vector<Matrix> V_hat;  // T blocks, p x p, PD
};

// Per-block KL budgets, aligned with NominalNoise (rho_w[0] is the x0 budget).
struct AmbiguityRadii {
  std::vector<double> rho_w;  // T+1 entries
  std::vector<double> rho_v;  // T entries
};

// Decision-dependent budget rho_t + 0.5 * ||E1 x_t + E2 u_t||^2 on the
// process-noise block at time t. Requires E1^T E2 = 0.
struct EndogenousSpec {
  Matrix E1;                // q x n
  Matrix E2;                // q x m
  std::vector<double> rho;  // T entries
};

struct ProblemSpec {
  SystemModel system;
  CostSpec cost;
  int horizon = 0;  // T >= 1
  NominalNoise noise;
  AmbiguityRadii radii;
  std::optional<EndogenousSpec> endogenous;
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> violations;
};

// Tolerances shared across the library.
inline constexpr double kSymTol = 1e-10;  // max asymmetry absorbed silently
inline constexpr double kPsdTol = 1e-10;  // eigenvalue slack for PSD weights
inline constexpr double kPdTol = 1e-12;   // eigenvalue floor for R

// Pure check, no mutation. Matrices whose asymmetry is within kSymTol are
// judged on their symmetrized part; larger asymmetry is a violation.
ValidationReport validate(const ProblemSpec& spec);

// X <- (X + X^T)/2 on every weight and covariance. Loaders apply this before
// validate to absorb serialization round-off.
void symmetrize(ProblemSpec& spec);

// JSON problem file: {"system":{"A","B","C"}, "cost":{"Q","QT","R"},
// "horizon", "noise":{"W_hat","V_hat"}, "radii":{"rho_w","rho_v"},
// optional "endogenous":{"E1","E2","rho"}}. Matrices are row-major nested
// arrays of finite doubles.
ProblemSpec problem_from_json(const std::string& text);
std::string problem_to_json(const ProblemSpec& spec);
ProblemSpec load_problem(const std::string& path);

}  // namespace drlqg
