#include "drlqg/model.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace drlqg {

namespace {

using nlohmann::json;

bool all_finite(const Matrix& x) { return x.allFinite(); }

double asymmetry(const Matrix& x) {
  return (x - x.transpose()).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const Matrix& x) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (x + x.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

struct Checker {
  ValidationReport report;

  void fail(const std::string& msg) {
    report.ok = false;
    report.violations.push_back(msg);
  }

  void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
  }

  // Symmetric PSD with slack, or PD with floor when pd_floor > 0.
  void check_weight(const Matrix& x, int dim, const std::string& name,
                    double eig_floor, const std::string& eig_msg) {
    if (x.rows() != dim || x.cols() != dim) {
      fail(name + " has wrong dimensions");
      return;
    }
    if (!all_finite(x)) {
      fail(name + " has non-finite entries");
      return;
    }
    if (asymmetry(x) > kSymTol) {
      fail(name + " not symmetric within tolerance");
      return;
    }
    if (min_eigenvalue(x) < eig_floor) fail(eig_msg);
  }
};

}  // namespace

ValidationReport validate(const ProblemSpec& spec) {
  Checker c;
  const auto& sys = spec.system;
  const int n = sys.n();
  const int m = sys.m();
  const int p = sys.p();
  const int T = spec.horizon;

  c.require(T >= 1, "horizon must be >= 1");
  c.require(n >= 1 && m >= 1 && p >= 1, "state/input/output dimensions must be positive");
  c.require(sys.A.rows() == n && sys.A.cols() == n, "A must be square n x n");
  c.require(sys.B.rows() == n, "B row count must equal n");
  c.require(sys.C_out.cols() == n, "C column count must equal n");
  c.require(all_finite(sys.A) && all_finite(sys.B) && all_finite(sys.C_out),
            "system matrices must be finite");
  if (!c.report.ok) return c.report;

  c.check_weight(spec.cost.Q, n, "Q", -kPsdTol, "Q not positive semidefinite");
  c.check_weight(spec.cost.QT, n, "QT", -kPsdTol, "QT not positive semidefinite");
  c.check_weight(spec.cost.R, m, "R", kPdTol, "R not positive definite");

  c.require(static_cast<int>(spec.noise.W_hat.size()) == T + 1,
            "W_hat must hold T+1 blocks (initial state first)");
  c.require(static_cast<int>(spec.noise.V_hat.size()) == T,
            "V_hat must hold T blocks");
  if (static_cast<int>(spec.noise.W_hat.size()) == T + 1) {
    for (int t = 0; t <= T; ++t)
      c.check_weight(spec.noise.W_hat[t], n, "W_hat[" + std::to_string(t) + "]",
                     kPdTol, "nominal covariance not PD (W_hat[" + std::to_string(t) + "])");
  }
  if (static_cast<int>(spec.noise.V_hat.size()) == T) {
    for (int t = 0; t < T; ++t)
      c.check_weight(spec.noise.V_hat[t], p, "V_hat[" + std::to_string(t) + "]",
                     kPdTol, "nominal covariance not PD (V_hat[" + std::to_string(t) + "])");
  }

  c.require(static_cast<int>(spec.radii.rho_w.size()) == T + 1,
            "rho_w must hold T+1 entries");
  c.require(static_cast<int>(spec.radii.rho_v.size()) == T,
            "rho_v must hold T entries");
  for (double r : spec.radii.rho_w)
    c.require(std::isfinite(r) && r >= 0.0, "negative or non-finite radius in rho_w");
  for (double r : spec.radii.rho_v)
    c.require(std::isfinite(r) && r >= 0.0, "negative or non-finite radius in rho_v");

  if (spec.endogenous) {
    const auto& e = *spec.endogenous;
    const auto q = e.E1.rows();
    c.require(e.E1.cols() == n, "E1 column count must equal n");
    c.require(e.E2.rows() == q, "E1 and E2 must have equal row counts");
    c.require(e.E2.cols() == m, "E2 column count must equal m");
    c.require(all_finite(e.E1) && all_finite(e.E2), "endogenous matrices must be finite");
    c.require(static_cast<int>(e.rho.size()) == T, "endogenous rho must hold T entries");
    for (double r : e.rho)
      c.require(std::isfinite(r) && r >= 0.0, "negative or non-finite endogenous radius");
    if (e.E1.cols() == n && e.E2.cols() == m && e.E2.rows() == q && q > 0) {
      const double cross = (e.E1.transpose() * e.E2).cwiseAbs().maxCoeff();
      c.require(cross <= 1e-10, "E1^T E2 must vanish");
    }
  }

  return c.report;
}

void symmetrize(ProblemSpec& spec) {
  auto sym = [](Matrix& x) {
    if (x.rows() == x.cols()) x = 0.5 * (x + x.transpose()).eval();
  };
  sym(spec.cost.Q);
  sym(spec.cost.QT);
  sym(spec.cost.R);
  for (auto& w : spec.noise.W_hat) sym(w);
  for (auto& v : spec.noise.V_hat) sym(v);
}

namespace {

json mat_to_json(const Matrix& x) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < x.cols(); ++j) row.push_back(x(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix mat_from_json(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw std::invalid_argument(name + ": expected a nested array matrix");
  const auto rows = j.size();
  const auto cols = j.front().size();
  Matrix x(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw std::invalid_argument(name + ": ragged matrix rows");
    for (size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number())
        throw std::invalid_argument(name + ": non-numeric entry");
      x(i, k) = j[i][k].get<double>();
    }
  }
  return x;
}

std::vector<Matrix> mat_list_from_json(const json& j, const std::string& name) {
  if (!j.is_array()) throw std::invalid_argument(name + ": expected an array of matrices");
  std::vector<Matrix> out;
  out.reserve(j.size());
  for (size_t i = 0; i < j.size(); ++i)
    out.push_back(mat_from_json(j[i], name + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<double> num_list_from_json(const json& j, const std::string& name) {
  if (!j.is_array()) throw std::invalid_argument(name + ": expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw std::invalid_argument(name + ": non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

const json& field(const json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument("missing field: " + key);
  return *it;
}

}  // namespace

ProblemSpec problem_from_json(const std::string& text) {
  json j = json::parse(text);  // throws json::parse_error on malformed input
  ProblemSpec spec;
  const json& sys = field(j, "system");
  spec.system.A = mat_from_json(field(sys, "A"), "system.A");
  spec.system.B = mat_from_json(field(sys, "B"), "system.B");
  spec.system.C_out = mat_from_json(field(sys, "C"), "system.C");

  const json& cost = field(j, "cost");
  spec.cost.Q = mat_from_json(field(cost, "Q"), "cost.Q");
  spec.cost.QT = mat_from_json(field(cost, "QT"), "cost.QT");
  spec.cost.R = mat_from_json(field(cost, "R"), "cost.R");

  if (!field(j, "horizon").is_number_integer())
    throw std::invalid_argument("horizon: expected an integer");
  spec.horizon = field(j, "horizon").get<int>();

  const json& noise = field(j, "noise");
  spec.noise.W_hat = mat_list_from_json(field(noise, "W_hat"), "noise.W_hat");
  spec.noise.V_hat = mat_list_from_json(field(noise, "V_hat"), "noise.V_hat");

  const json& radii = field(j, "radii");
  spec.radii.rho_w = num_list_from_json(field(radii, "rho_w"), "radii.rho_w");
  spec.radii.rho_v = num_list_from_json(field(radii, "rho_v"), "radii.rho_v");

  if (j.contains("endogenous") && !j["endogenous"].is_null()) {
    EndogenousSpec e;
    const json& je = j["endogenous"];
    e.E1 = mat_from_json(field(je, "E1"), "endogenous.E1");
    e.E2 = mat_from_json(field(je, "E2"), "endogenous.E2");
    e.rho = num_list_from_json(field(je, "rho"), "endogenous.rho");
    spec.endogenous = std::move(e);
  }

  symmetrize(spec);
  return spec;
}

std::string problem_to_json(const ProblemSpec& spec) {
  json j;
  j["system"] = {{"A", mat_to_json(spec.system.A)},
                 {"B", mat_to_json(spec.system.B)},
                 {"C", mat_to_json(spec.system.C_out)}};
  j["cost"] = {{"Q", mat_to_json(spec.cost.Q)},
               {"QT", mat_to_json(spec.cost.QT)},
               {"R", mat_to_json(spec.cost.R)}};
  j["horizon"] = spec.horizon;
  json wh = json::array(), vh = json::array();
  for (const auto& w : spec.noise.W_hat) wh.push_back(mat_to_json(w));
  for (const auto& v : spec.noise.V_hat) vh.push_back(mat_to_json(v));
  j["noise"] = {{"W_hat", std::move(wh)}, {"V_hat", std::move(vh)}};
  j["radii"] = {{"rho_w", spec.radii.rho_w}, {"rho_v", spec.radii.rho_v}};
  if (spec.endogenous) {
    j["endogenous"] = {{"E1", mat_to_json(spec.endogenous->E1)},
                       {"E2", mat_to_json(spec.endogenous->E2)},
                       {"rho", spec.endogenous->rho}};
  }
  return j.dump(2);
}

ProblemSpec load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open problem file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return problem_from_json(buf.str());
}

}  // namespace drlqg
