#include "drlqg/endogenous.hpp"
#include "drlqg/log.hpp"
#include "drlqg/model.hpp"
#include "drlqg/montecarlo.hpp"
#include "drlqg/saddle.hpp"
#include "drlqg/stacked.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace {

using drlqg::Matrix;
using nlohmann::json;

constexpr int kExitValidation = 2;
constexpr int kExitNoConvergence = 3;

struct CliError {
  int code;
  std::string kind;
  std::string detail;
};

json flat_matrix(const Matrix& x) {
  json data = json::array();
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) data.push_back(x(i, j));
  return json{{"rows", x.rows()}, {"cols", x.cols()}, {"data", std::move(data)}};
}

json flat_vector(const drlqg::Vector& x) {
  json data = json::array();
  for (Eigen::Index i = 0; i < x.size(); ++i) data.push_back(x[i]);
  return data;
}

json matrix_list(const std::vector<Matrix>& xs) {
  json out = json::array();
  for (const auto& x : xs) out.push_back(flat_matrix(x));
  return out;
}

std::string timestamp_line() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::ostringstream out;
  out << "# generated " << std::put_time(std::gmtime(&tt), "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

class OutputDir {
 public:
  OutputDir(std::string dir, bool stamped) : dir_(std::move(dir)), stamped_(stamped) {
    std::filesystem::create_directories(dir_);
  }

  std::string path(const std::string& name) const { return dir_ + "/" + name; }

  void write_json(const std::string& name, const json& j) const {
    std::ofstream out(path(name));
    out << j.dump(2) << "\n";
  }

  std::ofstream open_csv(const std::string& name) const {
    std::ofstream out(path(name));
    out << std::setprecision(17);
    if (stamped_) out << timestamp_line() << "\n";
    return out;
  }

 private:
  std::string dir_;
  bool stamped_;
};

drlqg::ProblemSpec load_or_fail(const std::string& path) {
  drlqg::ProblemSpec spec;
  try {
    spec = drlqg::load_problem(path);
  } catch (const std::exception& e) {
    throw CliError{kExitValidation, "validation", e.what()};
  }
  const auto report = drlqg::validate(spec);
  if (!report.ok) {
    std::string detail;
    for (const auto& v : report.violations) detail += (detail.empty() ? "" : "; ") + v;
    throw CliError{kExitValidation, "validation", detail};
  }
  return spec;
}

json summary_json(const drlqg::CostSummary& s) {
  return json{{"mean", s.mean}, {"std", s.stddev}, {"count", s.count},
              {"q05", s.q05},   {"q50", s.q50},    {"q95", s.q95}};
}

void write_trials_csv(const OutputDir& out, const std::string& name,
                      const std::vector<drlqg::TrialResult>& trials) {
  auto csv = out.open_csv(name);
  csv << "trial,seed,cost\n";
  for (const auto& t : trials) csv << t.trial << "," << t.seed << "," << t.cost << "\n";
}

struct CommonOpts {
  std::string problem;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int trials = 5000;
  double tol = 1e-6;
  int max_iters = 5000;
  int threads = 1;
  bool no_timestamp = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_problem = true) {
  auto* p = cmd->add_option("--problem", o.problem, "problem JSON file");
  if (needs_problem) p->required();
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "master RNG seed");
  cmd->add_option("--trials", o.trials, "Monte-Carlo trial count");
  cmd->add_option("--tol", o.tol, "solver tolerance");
  cmd->add_option("--max-iters", o.max_iters, "iteration cap");
  cmd->add_option("--threads", o.threads, "worker thread cap");
  cmd->add_flag("--no-timestamp", o.no_timestamp, "suppress timestamp header lines");
}

drlqg::SaddleSolution solve_exogenous_or_fail(const drlqg::ProblemSpec& spec,
                                              const CommonOpts& o) {
  drlqg::SolverOptions sopts;
  sopts.tol_gap = o.tol;
  sopts.max_iters = o.max_iters;
  sopts.threads = o.threads;
  sopts.seed = static_cast<int>(o.seed);
  const auto sol = drlqg::solve_exogenous(spec, sopts);
  if (!sol.converged)
    throw CliError{kExitNoConvergence, "non-convergence", sol.diagnostic};
  return sol;
}

int run_solve_exogenous(const CommonOpts& o) {
  const auto spec = load_or_fail(o.problem);
  const auto sol = solve_exogenous_or_fail(spec, o);
  OutputDir out(o.out_dir, !o.no_timestamp);

  json j;
  j["value"] = sol.value;
  j["converged"] = sol.converged;
  j["iterations"] = sol.gap_trace.empty() ? 0 : sol.gap_trace.back().iter;
  j["gap"] = sol.gap_trace.empty() ? 0.0 : sol.gap_trace.back().gap;
  j["policy_output"] = {{"U", flat_matrix(sol.policy_output.U)},
                        {"q", flat_vector(sol.policy_output.q)}};
  j["policy_purified"] = {{"U", flat_matrix(sol.policy_purified.U)},
                          {"q", flat_vector(sol.policy_purified.q)}};
  j["worst_case"] = {{"W", matrix_list(sol.sigma.W)}, {"V", matrix_list(sol.sigma.V)}};
  out.write_json("solution.json", j);

  auto csv = out.open_csv("gap_trace.csv");
  csv << "iter,lambda,gap,value\n";
  for (const auto& pt : sol.gap_trace)
    csv << pt.iter << "," << pt.lambda << "," << pt.gap << "," << pt.value << "\n";
  return 0;
}

int run_solve_endogenous(const CommonOpts& o) {
  const auto spec = load_or_fail(o.problem);
  drlqg::EndoOptions eopts;
  eopts.tol_dual = o.tol;
  eopts.max_sweeps = o.max_iters;
  eopts.seed = static_cast<int>(o.seed);
  drlqg::EndoTrace trace;
  drlqg::EndogenousSolution sol;
  try {
    sol = drlqg::solve_endogenous(spec, eopts, nullptr, &trace);
  } catch (const std::runtime_error& e) {
    throw CliError{kExitNoConvergence, "non-convergence", e.what()};
  }
  OutputDir out(o.out_dir, !o.no_timestamp);

  json j;
  j["value"] = sol.value;
  j["tau"] = sol.tau;
  j["gains"] = {{"K", matrix_list(sol.K)},
                {"L", matrix_list(sol.L)},
                {"mu_gain", matrix_list(sol.mu_gain)}};
  j["worst_case"] = {{"W_star", matrix_list(sol.W_star)},
                     {"Sigma_star", matrix_list(sol.Sigma_star)}};
  j["recursions"] = {{"P", matrix_list(sol.P)},
                     {"S_bar", matrix_list(sol.S_bar)},
                     {"z_bar", sol.z_bar},
                     {"c_bar", sol.c_bar}};
  out.write_json("endogenous.json", j);

  auto csv = out.open_csv("sweep_trace.csv");
  csv << "sweep,objective\n";
  for (size_t i = 0; i < trace.sweep_objective.size(); ++i)
    csv << i << "," << trace.sweep_objective[i] << "\n";
  return 0;
}

int run_simulate(const CommonOpts& o, const std::string& policy_kind, double fraction) {
  const auto spec = load_or_fail(o.problem);
  drlqg::SimOptions sopts;
  sopts.trials = o.trials;
  sopts.seed = o.seed;
  sopts.threads = o.threads;
  const auto dist = fraction > 0.0
                        ? drlqg::sample_adversarial_disturbances(spec, fraction, o.seed + 1)
                        : drlqg::nominal_disturbances(spec);

  std::vector<drlqg::TrialResult> trials;
  drlqg::CostSummary summary;
  drlqg::EndogenousSolution endo_sol;
  if (policy_kind == "lqg") {
    const auto policy = drlqg::lqg_baseline(spec);
    summary = drlqg::simulate(spec, policy, dist, sopts, &trials);
  } else if (policy_kind == "dr-exogenous") {
    const auto sol = solve_exogenous_or_fail(spec, o);
    summary = drlqg::simulate(spec, sol.policy_output, dist, sopts, &trials);
  } else if (policy_kind == "dr-endogenous") {
    drlqg::EndoOptions eopts;
    eopts.seed = static_cast<int>(o.seed);
    endo_sol = drlqg::solve_endogenous(spec, eopts);
    const auto factory =
        drlqg::online_controller(spec, endo_sol, drlqg::Vector::Zero(spec.system.n()));
    summary = drlqg::simulate(spec, factory, dist, sopts, &trials);
  } else {
    throw CliError{kExitValidation, "validation",
                   "unknown policy kind: " + policy_kind};
  }

  OutputDir out(o.out_dir, !o.no_timestamp);
  write_trials_csv(out, "trials.csv", trials);
  out.write_json("summary.json", summary_json(summary));
  return 0;
}

int run_benchmark(const CommonOpts& o, double fraction) {
  const auto spec = load_or_fail(o.problem);
  const auto dr = solve_exogenous_or_fail(spec, o);
  const auto lqg = drlqg::lqg_baseline(spec);

  drlqg::SimOptions sopts;
  sopts.trials = o.trials;
  sopts.seed = o.seed;
  sopts.threads = o.threads;

  const auto nominal = drlqg::nominal_disturbances(spec);
  const auto adversarial =
      drlqg::sample_adversarial_disturbances(spec, fraction, o.seed + 1);

  // Common random numbers: both policies share the per-trial substreams.
  json j;
  j["trials"] = o.trials;
  j["fraction"] = fraction;
  j["dr_nominal"] = summary_json(drlqg::simulate(spec, dr.policy_output, nominal, sopts));
  j["lqg_nominal"] = summary_json(drlqg::simulate(spec, lqg, nominal, sopts));
  j["dr_adversarial"] =
      summary_json(drlqg::simulate(spec, dr.policy_output, adversarial, sopts));
  j["lqg_adversarial"] = summary_json(drlqg::simulate(spec, lqg, adversarial, sopts));
  j["value"] = dr.value;

  OutputDir out(o.out_dir, !o.no_timestamp);
  out.write_json("comparison.json", j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributionally robust LQG solver toolkit"};
  app.require_subcommand(1);

  CommonOpts solve_exo_opts, solve_endo_opts, sim_opts, bench_opts;
  std::string sim_policy = "dr-exogenous";
  double sim_fraction = 0.0;
  double bench_fraction = 1.0;

  auto* solve_exo = app.add_subcommand("solve-exogenous", "saddle-point solver");
  add_common(solve_exo, solve_exo_opts);

  auto* solve_endo = app.add_subcommand("solve-endogenous", "dynamic-programming dual solver");
  add_common(solve_endo, solve_endo_opts);

  auto* sim = app.add_subcommand("simulate", "closed-loop Monte-Carlo runs");
  add_common(sim, sim_opts);
  sim->add_option("--policy", sim_policy, "lqg | dr-exogenous | dr-endogenous");
  sim->add_option("--fraction", sim_fraction,
                  "adversarial sampling fraction of each KL budget (0 = nominal)");

  auto* bench = app.add_subcommand("benchmark", "DR vs nominal LQG comparison");
  add_common(bench, bench_opts);
  bench->add_option("--fraction", bench_fraction,
                    "adversarial sampling fraction of each KL budget");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    nlohmann::json diag{{"error", "validation"}, {"detail", e.what()}};
    std::cerr << diag.dump() << "\n";
    return kExitValidation;
  }

  try {
    if (solve_exo->parsed()) return run_solve_exogenous(solve_exo_opts);
    if (solve_endo->parsed()) return run_solve_endogenous(solve_endo_opts);
    if (sim->parsed()) return run_simulate(sim_opts, sim_policy, sim_fraction);
    if (bench->parsed()) return run_benchmark(bench_opts, bench_fraction);
  } catch (const CliError& e) {
    nlohmann::json diag{{"error", e.kind}, {"detail", e.detail}};
    std::cerr << diag.dump() << "\n";
    return e.code;
  } catch (const std::invalid_argument& e) {
    nlohmann::json diag{{"error", "validation"}, {"detail", e.what()}};
    std::cerr << diag.dump() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    nlohmann::json diag{{"error", "internal"}, {"detail", e.what()}};
    std::cerr << diag.dump() << "\n";
    return 1;
  }
  return 0;
}
