#pragma once

#include <optional>
#include <string>
#include <vector>

#include "invc/classifier.hpp"
#include "invc/problem.hpp"
#include "invc/repair.hpp"
#include "invc/solvers.hpp"

namespace invc {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SyntheticSpec {
  int n = 400;
  int p = 10;
  int k = 2;
  double separation = 4.0;
  uint64_t seed = 7;
};

/// k Gaussian blobs with unit covariance, means pairwise `separation`
/// apart (random orthogonal directions when p >= k, random unit directions
/// otherwise). Labels are balanced round-robin. Deterministic in the seed.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Experiment description, read from a single JSON config file. Every
/// HyperParams field can be overridden from the CLI with --hp.<name>.
struct ExperimentConfig {
  std::optional<SyntheticSpec> synthetic;  // either this or dataset_csv
  std::string dataset_csv;

  std::string classifier_file;  // load instead of training when set
  ClassifierKind clf_kind = ClassifierKind::kMultinomialLogistic;
  int hidden_dim = 8;
  TrainConfig train_cfg;

  double holdout_fraction = 0.5;  // tail share of the dataset used as the candidate pool
  int candidate_count = 60;       // 0 = every eligible sample
  int positive_class = 1;         // the desired class for all candidates

  std::vector<uint8_t> mask;  // empty = all features perturbable
  std::vector<double> budget_levels = {0.4, 0.6, 0.8};
  double scale_budget_level = 0.6;
  std::vector<int> sizes = {30, 45, 60};
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<SolverKind> solvers = {SolverKind::kMs, SolverKind::kBcms,
                                     SolverKind::kCcms, SolverKind::kKl};
  HyperParams hp;
  std::string out_dir = "runs";

  void validate() const;
};

/// Parses and validates a config JSON; relative dataset/classifier paths
/// are resolved against base_dir (usually the config file's directory).
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir);
ExperimentConfig load_config(const std::string& path);

/// A prepared experiment: dataset, trained (or loaded) classifier and the
/// ordered pool of candidate samples. Candidates are holdout samples the
/// classifier predicts correctly into a class other than positive_class;
/// prefixes of the pool give the nested subsets used by the scalability
/// sweep.
struct Instance {
  Dataset data;
  std::shared_ptr<const Classifier> clf;
  std::vector<int> candidates;  // dataset row indices
  int positive_class = 1;
  std::vector<uint8_t> mask;
  double delta = 0.1;
};

Instance build_instance(const ExperimentConfig& cfg);

/// Problem over the first `count` candidates (count <= pool size).
PerturbProblem make_problem(const Instance& inst, std::span<const double> budgets,
                            int count);

/// Reference per-feature budget: runs the kl solver with an effectively
/// unlimited budget (1e9 per feature) and returns the total squared
/// deviation per feature. Budget levels are scale factors of this vector.
std::vector<double> calibrate_budget(const PerturbProblem& prob, const HyperParams& hp);

/// Runs one solver on a problem. Problems carrying a sample partition are
/// split into per-group subproblems with proportionally allocated budgets
/// (group r uses seed + r); results are merged back.
struct SolverRun {
  std::vector<SolverState> states;  // one per group (one entry when ungrouped)
  Matrix xhat;
};
SolverRun run_solver(const PerturbProblem& prob, SolverKind kind, const HyperParams& hp,
                     const Matrix* xhat_init = nullptr);

// ---- reports ----

struct ReportRow {
  std::string sweep;  // budget | scale | single
  std::string solver;
  double budget_level = 0.0;
  int sample_size = 0;
  std::string init = "random";
  uint64_t seed = 0;
  std::string status = "ok";  // ok | failed
  int selected_count = 0;
  double consumption_per_sample = 0.0;
  double mean_budget_residual = 0.0;
  std::optional<double> mean_prediction_gap;
  std::optional<double> rel_improvement_vs_kl;
  bool knapsack_optimal = false;
  std::string problem_path;  // relative to the report directory
  std::string trace_path;
  std::string xhat_path;
  std::string error;
  double wall_time_sec = 0.0;  // summary.json only; kept out of report.csv
                               // so reruns stay byte-identical
};

inline constexpr const char* kReportSchema = "invc-report-v1";

void save_report_csv(const std::string& path, const std::vector<ReportRow>& rows);
std::vector<ReportRow> load_report_csv(const std::string& path);
void save_summary_json(const std::string& path, const std::vector<ReportRow>& rows);

void save_xhat_csv(const std::string& path, const Matrix& xhat);
Matrix load_xhat_csv(const std::string& path);

/// Budget sweep: for each budget level x solver x seed, run, repair and
/// report. Budgets are level * calibration reference (calibrated once with
/// the config's base seed). Solver aborts become failed rows.
std::vector<ReportRow> run_budget_sweep(const ExperimentConfig& cfg);

/// Scalability sweep over nested candidate prefixes at the configured
/// budget level, with both random and warm (previous-subset) feature
/// initialization; reports relative improvement over the kl baseline.
std::vector<ReportRow> run_scalability_sweep(const ExperimentConfig& cfg);

/// Single run (used by the perturb command).
ReportRow run_single(const PerturbProblem& prob, SolverKind kind, const HyperParams& hp,
                     const std::string& out_dir);

/// Replays every ok row of an output directory from its stored problem and
/// xhat artifacts and re-checks exact feasibility (budget sums in index
/// order, zero confidence violations) plus the reported selection size.
/// Returns the number of violating rows, printing one line each.
int verify_runs(const std::string& out_dir);

}  // namespace invc
