#include "drlqg/endogenous.hpp"

#include "drlqg/divergence.hpp"
#include "drlqg/log.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace drlqg {

NominalPredictionPass nominal_prediction_pass(const ProblemSpec& spec) {
  const int T = spec.horizon;
  const Matrix& A = spec.system.A;
  const Matrix& C = spec.system.C_out;
  NominalPredictionPass pass;
  pass.Sigma_hat.resize(T + 1);
  pass.M.resize(T);
  pass.Sigma_hat[0] = spec.noise.W_hat[0];
  for (int t = 0; t < T; ++t) {
    const Matrix& S = pass.Sigma_hat[t];
    const Matrix& V = spec.noise.V_hat[t];
    const Matrix innov = C * S * C.transpose() + V;
    const Matrix gain = innov.llt().solve(C * S).transpose();  // S C^T innov^{-1}
    Matrix M = S - gain * C * S;
    pass.M[t] = 0.5 * (M + M.transpose());
    Matrix next = A * pass.M[t] * A.transpose() + spec.noise.W_hat[t + 1];
    pass.Sigma_hat[t + 1] = 0.5 * (next + next.transpose());
  }
  return pass;
}

InfoState default_info_state(const ProblemSpec& spec) {
  return InfoState{Vector::Zero(spec.system.n()), spec.noise.W_hat[0]};
}

std::vector<double> endogenous_radii(const ProblemSpec& spec) {
  if (spec.endogenous) return spec.endogenous->rho;
  return std::vector<double>(spec.radii.rho_w.begin() + 1, spec.radii.rho_w.end());
}

double prediction_cost_term(const Matrix& S_next, const Matrix& A, const Matrix& C,
                            const Matrix& V_hat, const Matrix& X) {
  const Matrix innov = C * X * C.transpose() + V_hat;
  const Matrix corr = X * C.transpose() * innov.llt().solve(C * X);
  return 0.5 * (S_next * A * (X - corr) * A.transpose()).trace();
}

namespace {

// tau-independent quantities shared by every backward evaluation.
struct Workspace {
  int n = 0, m = 0, T = 0;
  Matrix A, B, C, Q, QT, R;
  Matrix E1tE1, E2tE2;
  bool has_endo = false;
  std::vector<double> rho;
  std::vector<Matrix> What;   // process noise, What[t] = W_hat[t+1]
  std::vector<Matrix> Wsqrt;  // symmetric square roots of What
  std::vector<Matrix> Vhat;
  std::vector<Matrix> Sigma_hat;  // 0..T
  std::vector<Matrix> M;          // 0..T-1
  std::vector<Matrix> Jlin;       // A (I - M_t C^T V_t^{-1} C)
  std::vector<Matrix> Cc;         // A M_t C^T V_t^{-1} C M_t A^T
};

Workspace make_workspace(const ProblemSpec& spec) {
  Workspace ws;
  ws.n = spec.system.n();
  ws.m = spec.system.m();
  ws.T = spec.horizon;
  ws.A = spec.system.A;
  ws.B = spec.system.B;
  ws.C = spec.system.C_out;
  ws.Q = spec.cost.Q;
  ws.QT = spec.cost.QT;
  ws.R = spec.cost.R;
  ws.has_endo = spec.endogenous.has_value();
  if (ws.has_endo) {
    ws.E1tE1 = spec.endogenous->E1.transpose() * spec.endogenous->E1;
    ws.E2tE2 = spec.endogenous->E2.transpose() * spec.endogenous->E2;
  } else {
    ws.E1tE1 = Matrix::Zero(ws.n, ws.n);
    ws.E2tE2 = Matrix::Zero(ws.m, ws.m);
  }
  ws.rho = endogenous_radii(spec);

  ws.What.resize(ws.T);
  ws.Wsqrt.resize(ws.T);
  ws.Vhat.resize(ws.T);
  for (int t = 0; t < ws.T; ++t) {
    ws.What[t] = spec.noise.W_hat[t + 1];
    ws.Wsqrt[t] = spd_sqrt(ws.What[t]);
    ws.Vhat[t] = spec.noise.V_hat[t];
  }

  const NominalPredictionPass pass = nominal_prediction_pass(spec);
  ws.Sigma_hat = pass.Sigma_hat;
  ws.M = pass.M;
  ws.Jlin.resize(ws.T);
  ws.Cc.resize(ws.T);
  const Matrix I = Matrix::Identity(ws.n, ws.n);
  for (int t = 0; t < ws.T; ++t) {
    const Matrix CtVinvC =
        ws.C.transpose() * ws.Vhat[t].llt().solve(ws.C);
    ws.Jlin[t] = ws.A * (I - ws.M[t] * CtVinvC);
    const Matrix AMC = ws.A * ws.M[t] * ws.C.transpose();
    Matrix cc = AMC * ws.Vhat[t].llt().solve(AMC.transpose());
    ws.Cc[t] = 0.5 * (cc + cc.transpose());
  }
  return ws;
}

struct Stage {
  Matrix P;
  Matrix S;
  double z = 0.0;
  double c = 0.0;
};

Stage terminal_stage(const Workspace& ws) {
  return Stage{ws.QT, Matrix::Zero(ws.n, ws.n), 0.0, 0.0};
}

struct StageGains {
  Matrix K, mu_gain, W_star, G_lin;
};

// One backward step t+1 -> t; fills gains when requested.
Stage backward_step(const Workspace& ws, int t, double tau, const Stage& next,
                    StageGains* gains) {
  const Matrix& Wsq = ws.Wsqrt[t];
  const Matrix PS = next.P + next.S;

  Eigen::SelfAdjointEigenSolver<Matrix> e1(Wsq * next.P * Wsq, Eigen::EigenvaluesOnly);
  const double lam1 = e1.eigenvalues().maxCoeff();
  if (!(tau > lam1)) throw TauInfeasible(t, 1, lam1);
  Eigen::SelfAdjointEigenSolver<Matrix> e2(Wsq * PS * Wsq, Eigen::EigenvaluesOnly);
  const double lam2 = e2.eigenvalues().maxCoeff();
  if (!(tau > lam2)) throw TauInfeasible(t, 2, lam2);

  const Matrix Rt = ws.has_endo ? Matrix(ws.R + tau * ws.E2tE2) : ws.R;
  const Matrix Qt = ws.has_endo ? Matrix(ws.Q + tau * ws.E1tE1) : ws.Q;
  const Eigen::LLT<Matrix> Rt_llt(Rt);
  const Matrix D =
      ws.B * Rt_llt.solve(ws.B.transpose()) - ws.What[t] / tau;

  // X = (P^{-1} + B R^{-1} B^T - W/tau)^{-1}, written as (I + P D)^{-1} P so a
  // merely PSD P (e.g. QT = 0) stays well defined.
  const Matrix I = Matrix::Identity(ws.n, ws.n);
  Matrix X = (I + next.P * D).partialPivLu().solve(next.P);
  X = 0.5 * (X + X.transpose()).eval();

  Stage out;
  out.P = Qt + ws.A.transpose() * X * ws.A;
  out.P = 0.5 * (out.P + out.P.transpose()).eval();

  // S_bar folds the linearized prediction-cost gradient into the error
  // weight: sandwich + Q_t + A^T P_{t+1} A - P_t, with the Q_t cancelling.
  const Matrix sandwich = ws.Jlin[t].transpose() * next.S * ws.Jlin[t];
  out.S = sandwich + ws.A.transpose() * (next.P - X) * ws.A;
  out.S = 0.5 * (out.S + out.S.transpose()).eval();

  // log det(I - W^{1/2}(P+S)W^{1/2}/tau) via log1p keeps precision at the
  // huge tau reached when budgets vanish.
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < e2.eigenvalues().size(); ++i)
    logdet += std::log1p(-e2.eigenvalues()[i] / tau);
  out.z = next.z - 0.5 * tau * logdet;

  out.c = next.c + 0.5 * (next.S * ws.Cc[t]).trace();

  if (gains) {
    gains->K = -Rt_llt.solve(ws.B.transpose() * X * ws.A);
    const Matrix Winv = ws.What[t].llt().solve(I);
    gains->mu_gain = (tau * Winv - next.P).partialPivLu().solve(next.P);
    Matrix wstar = (Winv - PS / tau).llt().solve(I);
    gains->W_star = 0.5 * (wstar + wstar.transpose());
    gains->G_lin = 0.5 * sandwich;
  }
  return out;
}

double assemble_value(const Workspace& ws, const Stage& s0, const InfoState& I0,
                      const std::vector<double>& tau) {
  double v = 0.5 * I0.x_mean0.dot(s0.P * I0.x_mean0) +
             0.5 * ((s0.P + s0.S) * I0.Sigma0).trace() + s0.z + s0.c;
  for (int t = 0; t < ws.T; ++t) v += tau[t] * ws.rho[t];
  return v;
}

void check_spec(const ProblemSpec& spec, const char* who) {
  const ValidationReport report = validate(spec);
  if (!report.ok) {
    std::string msg = std::string(who) + ": invalid spec:";
    for (const auto& v : report.violations) msg += " " + v + ";";
    throw std::invalid_argument(msg);
  }
}

}  // namespace

EndogenousSolution backward_pass(const ProblemSpec& spec, const std::vector<double>& tau) {
  check_spec(spec, "backward_pass");
  const Workspace ws = make_workspace(spec);
  const int T = ws.T;
  if (static_cast<int>(tau.size()) != T)
    throw std::invalid_argument("backward_pass: tau must hold T entries");

  EndogenousSolution sol;
  sol.tau = tau;
  sol.P.resize(T + 1);
  sol.S_bar.resize(T + 1);
  sol.z_bar.assign(T + 1, 0.0);
  sol.c_bar.assign(T + 1, 0.0);
  sol.K.resize(T);
  sol.mu_gain.resize(T);
  sol.W_star.resize(T);
  sol.G_lin.resize(T);
  sol.Sigma_hat = ws.Sigma_hat;
  sol.M = ws.M;

  Stage st = terminal_stage(ws);
  sol.P[T] = st.P;
  sol.S_bar[T] = st.S;
  for (int t = T - 1; t >= 0; --t) {
    StageGains gains;
    st = backward_step(ws, t, tau[t], st, &gains);
    sol.P[t] = st.P;
    sol.S_bar[t] = st.S;
    sol.z_bar[t] = st.z;
    sol.c_bar[t] = st.c;
    sol.K[t] = gains.K;
    sol.mu_gain[t] = gains.mu_gain;
    sol.W_star[t] = gains.W_star;
    sol.G_lin[t] = gains.G_lin;
  }
  return sol;
}

void forward_pass(const ProblemSpec& spec, EndogenousSolution& sol, const Matrix& Sigma0) {
  const int T = spec.horizon;
  const Matrix& A = spec.system.A;
  const Matrix& C = spec.system.C_out;
  sol.Sigma_star.resize(T + 1);
  sol.L.resize(T);
  sol.Sigma_star[0] = 0.5 * (Sigma0 + Sigma0.transpose());
  for (int t = 0; t < T; ++t) {
    const Matrix& S = sol.Sigma_star[t];
    const Matrix& V = spec.noise.V_hat[t];
    const Matrix innov = C * S * C.transpose() + V;
    const Matrix gain = innov.llt().solve(C * S).transpose();  // S C^T innov^{-1}
    sol.L[t] = A * gain;
    Matrix next = A * (S - gain * C * S) * A.transpose() + sol.W_star[t];
    sol.Sigma_star[t + 1] = 0.5 * (next + next.transpose());
  }
}

double evaluate_dual(const ProblemSpec& spec, const std::vector<double>& tau,
                     const InfoState& I0) {
  EndogenousSolution sol = backward_pass(spec, tau);
  forward_pass(spec, sol, I0.Sigma0);
  const Workspace ws = make_workspace(spec);
  Stage s0{sol.P[0], sol.S_bar[0], sol.z_bar[0], sol.c_bar[0]};
  return assemble_value(ws, s0, I0, tau);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Objective of the linearized dual restricted to prefix recomputation: stage
// values for t > i are cached, so changing tau_i costs O(i) steps.
class DualObjective {
 public:
  DualObjective(const Workspace& ws, const InfoState& I0, std::vector<double> tau)
      : ws_(ws), I0_(I0), tau_(std::move(tau)), stages_(ws.T + 1) {
    stages_[ws_.T] = terminal_stage(ws_);
    refresh_from(ws_.T - 1);
    value_ = assemble_value(ws_, stages_[0], I0_, tau_);
  }

  double value() const { return value_; }
  const std::vector<double>& tau() const { return tau_; }

  // Value with coordinate i moved to x; +inf when infeasible.
  double probe(int i, double x) const {
    std::vector<double> tau = tau_;
    tau[i] = x;
    Stage st = stages_[i + 1];
    try {
      for (int t = i; t >= 0; --t) st = backward_step(ws_, t, tau[t], st, nullptr);
    } catch (const TauInfeasible&) {
      return kInf;
    }
    return assemble_value(ws_, st, I0_, tau);
  }

  void accept(int i, double x, double new_value) {
    tau_[i] = x;
    refresh_from(i);
    value_ = new_value;
  }

  // Feasibility threshold for coordinate i given the cached downstream pass.
  double coordinate_lower_bound(int i) const {
    const Matrix& Wsq = ws_.Wsqrt[i];
    const Stage& next = stages_[i + 1];
    Eigen::SelfAdjointEigenSolver<Matrix> e1(Wsq * next.P * Wsq, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Matrix> e2(Wsq * (next.P + next.S) * Wsq,
                                             Eigen::EigenvaluesOnly);
    const double lam = std::max(e1.eigenvalues().maxCoeff(), e2.eigenvalues().maxCoeff());
    return lam > 0.0 ? lam * (1.0 + 1e-8) : 0.0;
  }

 private:
  void refresh_from(int i) {
    for (int t = i; t >= 0; --t)
      stages_[t] = backward_step(ws_, t, tau_[t], stages_[t + 1], nullptr);
  }

  const Workspace& ws_;
  const InfoState& I0_;
  std::vector<double> tau_;
  std::vector<Stage> stages_;
  double value_ = 0.0;
};

struct LineResult {
  double x;
  double f;
};

// Golden-section on [lo, hi]; returns the best point seen.
LineResult golden_section(const std::function<double(double)>& f, double lo, double hi,
                          LineResult best) {
  constexpr double invphi = 0.6180339887498948482;
  double c = hi - invphi * (hi - lo);
  double d = lo + invphi * (hi - lo);
  double fc = f(c), fd = f(d);
  if (fc < best.f) best = {c, fc};
  if (fd < best.f) best = {d, fd};
  for (int it = 0; it < 200 && (hi - lo) > 1e-10 * std::max(hi, 1.0); ++it) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - invphi * (hi - lo);
      fc = f(c);
      if (fc < best.f) best = {c, fc};
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + invphi * (hi - lo);
      fd = f(d);
      if (fd < best.f) best = {d, fd};
    }
  }
  return best;
}

// One-dimensional minimization from x0: geometric bracket expansion clamped
// to [lower, x0 * 2^60], then golden-section.
LineResult minimize_coordinate(const std::function<double(double)>& f, double x0,
                               double f0, double lower) {
  const double floor_x = std::max(lower, x0 * std::pow(2.0, -60));
  const double cap_x = x0 * std::pow(2.0, 60);
  LineResult best{x0, f0};

  double left = x0, right = x0;
  // Walk down while improving.
  {
    double x = x0, fx = f0;
    while (x > floor_x * (1.0 + 1e-14)) {
      const double nx = std::max(0.5 * x, floor_x);
      const double fn = f(nx);
      if (fn < fx) {
        left = std::max(0.5 * nx, floor_x);
        if (fn < best.f) best = {nx, fn};
        x = nx;
        fx = fn;
      } else {
        left = std::min(left, nx);
        break;
      }
    }
  }
  // Walk up while improving.
  {
    double x = x0, fx = f0;
    while (x < cap_x) {
      const double nx = std::min(2.0 * x, cap_x);
      const double fn = f(nx);
      if (fn < fx) {
        right = std::min(2.0 * nx, cap_x);
        if (fn < best.f) best = {nx, fn};
        x = nx;
        fx = fn;
      } else {
        right = std::max(right, nx);
        break;
      }
    }
  }
  if (right > left) best = golden_section(f, left, right, best);
  return best;
}

}  // namespace

EndogenousSolution solve_endogenous(const ProblemSpec& spec, const EndoOptions& opts,
                                    const InfoState* I0, EndoTrace* trace) {
  check_spec(spec, "solve_endogenous");
  const Workspace ws = make_workspace(spec);
  const int T = ws.T;
  const InfoState info = I0 ? *I0 : default_info_state(spec);

  // Initial multipliers: weight-scaled, then doubled until the full backward
  // pass is feasible.
  Eigen::SelfAdjointEigenSolver<Matrix> eq(ws.QT + static_cast<double>(T) * ws.Q,
                                           Eigen::EigenvaluesOnly);
  const double weight_scale = std::max(eq.eigenvalues().maxCoeff(), 1e-8);
  std::vector<double> tau(T);
  for (int t = 0; t < T; ++t) {
    Eigen::SelfAdjointEigenSolver<Matrix> ew(ws.What[t], Eigen::EigenvaluesOnly);
    tau[t] = 10.0 * ew.eigenvalues().maxCoeff() * weight_scale;
  }
  bool feasible = false;
  std::string binding;
  for (int attempt = 0; attempt < 300 && !feasible; ++attempt) {
    try {
      Stage st = terminal_stage(ws);
      for (int t = T - 1; t >= 0; --t) st = backward_step(ws, t, tau[t], st, nullptr);
      feasible = true;
    } catch (const TauInfeasible& e) {
      binding = e.what();
      for (double& x : tau) x *= 2.0;
    }
  }
  if (!feasible)
    throw std::runtime_error("solve_endogenous: no feasible tau found at initialization (" +
                             binding + ")");

  DualObjective obj(ws, info, tau);
  if (trace) trace->sweep_objective.push_back(obj.value());
  log_info("solve_endogenous: initial objective " + std::to_string(obj.value()));

  std::mt19937_64 order_rng(static_cast<std::uint64_t>(opts.seed));
  std::vector<int> order(T);
  std::iota(order.begin(), order.end(), 0);

  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    const double before = obj.value();
    if (opts.randomized_order) std::shuffle(order.begin(), order.end(), order_rng);
    for (int i : order) {
      const double lower = obj.coordinate_lower_bound(i);
      const double x0 = obj.tau()[i];
      auto f = [&](double x) { return obj.probe(i, x); };
      const LineResult best = minimize_coordinate(f, x0, obj.value(), lower);
      if (best.f <= obj.value() && best.x != x0) obj.accept(i, best.x, best.f);
    }
    const double after = obj.value();
    if (trace) trace->sweep_objective.push_back(after);
    if (before - after < opts.tol_dual * std::max(1.0, std::abs(after))) break;
  }

  EndogenousSolution sol = backward_pass(spec, obj.tau());
  forward_pass(spec, sol, info.Sigma0);
  Stage s0{sol.P[0], sol.S_bar[0], sol.z_bar[0], sol.c_bar[0]};
  sol.value = assemble_value(ws, s0, info, obj.tau());
  return sol;
}

OnlineController::OnlineController(const EndogenousSolution& sol, const ProblemSpec& spec,
                                   Vector x0_mean)
    : A_(spec.system.A),
      B_(spec.system.B),
      C_(spec.system.C_out),
      K_(sol.K),
      mu_gain_(sol.mu_gain),
      L_(sol.L),
      T_(spec.horizon),
      x_est_(std::move(x0_mean)) {
  if (static_cast<int>(L_.size()) != T_)
    throw std::invalid_argument("OnlineController: solution lacks the forward pass");
  u_ = K_[0] * x_est_;
}

Vector OnlineController::input() const {
  if (t_ >= T_) throw std::logic_error("OnlineController: horizon exhausted");
  return u_;
}

Vector OnlineController::step(const Vector& y) {
  if (t_ >= T_) throw std::logic_error("OnlineController: step called more than T times");
  const Vector drift = A_ * x_est_ + B_ * u_;
  const Vector mu = mu_gain_[t_] * drift;
  x_est_ = drift + mu + L_[t_] * (y - C_ * x_est_);
  ++t_;
  if (t_ < T_) {
    u_ = K_[t_] * x_est_;
    return u_;
  }
  u_ = Vector();
  return u_;
}

}  // namespace drlqg
