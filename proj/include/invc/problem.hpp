#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invc/classifier.hpp"
#include "invc/matrix.hpp"

namespace invc {

/// Disjoint covering partition of sample indices (used when a joint
/// per-feature budget must be split across independently solved subsets).
struct SequenceGroups {
  std::vector<std::vector<int>> groups;

  int num_samples() const;
  void validate(int n) const;
};

/// A frozen perturbation instance: original samples X (|S| rows, p feature
/// columns), a per-feature perturbable mask, per-feature budgets B_i >= 0,
/// a desired class per sample, a confidence margin delta > 0 and the
/// classifier being attacked. Immutable once built; evaluators are pure.
struct PerturbProblem {
  Matrix X;
  std::vector<uint8_t> mask;     // 1 = perturbable, 0 = frozen
  std::vector<double> budgets;   // B_i per feature
  std::vector<int> desired;      // target class per sample
  double delta = 0.1;
  std::shared_ptr<const Classifier> clf;
  std::optional<SequenceGroups> groups;

  int num_samples() const { return X.rows; }
  int num_features() const { return X.cols; }

  /// Validates shapes and, when check_desired is set, that no sample is
  /// already predicted as its desired class (such samples need no
  /// perturbation and are rejected).
  static PerturbProblem make(Matrix X, std::vector<uint8_t> mask,
                             std::vector<double> budgets, std::vector<int> desired,
                             double delta, std::shared_ptr<const Classifier> clf,
                             bool check_desired = true);
};

/// Budget constraint left-hand sides, one per feature:
///   g_i = sum_j z_j (xhat_ij - x_ij)^2 - B_i.
/// z may be fractional in [0,1] (relaxed selections are fine). Throws if a
/// frozen feature deviates from the original.
std::vector<double> budget_lhs(const PerturbProblem& prob, const Matrix& xhat,
                               std::span<const double> z);

/// Confidence violation of sample j at xhat_j:
///   max(0, max_{u != desired_j} f(xhat_j)_u - f(xhat_j)_{desired_j} + delta).
/// Zero exactly when the desired class leads every other class by at least
/// delta.
double confidence_violation(const PerturbProblem& prob,
                            std::span<const double> xhat_j, int j);

/// Subgradient of confidence_violation with respect to xhat_j. At the
/// max(0, .) kink and at ties of the inner max the smallest attaining class
/// index is used; returns zero when the violation is zero.
std::vector<double> confidence_grad(const PerturbProblem& prob,
                                    std::span<const double> xhat_j, int j);

/// Splits a joint per-feature budget across groups proportionally to group
/// size. The last group's share is adjusted so that the left-to-right sum
/// of the allocations reproduces the joint budget bitwise.
std::vector<std::vector<double>> allocate_group_budgets(
    const SequenceGroups& groups, std::span<const double> budgets);

/// Evaluation metrics for a selected subset.
struct MetricsRow {
  int selected_count = 0;
  double consumption_per_sample = 0.0;  // 0 (flagged) when nothing selected
  bool empty_selection = false;
  double mean_budget_residual = 0.0;
  std::optional<double> mean_prediction_gap;  // absent when nothing selected
};

/// Computes (|selected|, consumption per sample, mean budget residual,
/// mean top-two prediction gap) for a candidate xhat and selection.
MetricsRow metrics(const PerturbProblem& prob, const Matrix& xhat,
                   std::span<const int> selected);

// ---- file formats ----

/// CSV with a header row (f0,...,f{p-1},label); one sample per line, final
/// column is the integer label.
Dataset load_dataset_csv(const std::string& path);
void save_dataset_csv(const std::string& path, const Dataset& data);

/// Problem JSON: {X row-major, mask, B, desired, delta, classifier (path
/// relative to the problem file), optional groups}.
PerturbProblem load_problem_json(const std::string& path);
void save_problem_json(const std::string& path, const PerturbProblem& prob,
                       const std::string& classifier_relpath);

/// Fixed 17-significant-digit formatting used by every CSV/JSON artifact so
/// that repeated runs are byte-identical and values round-trip exactly.
std::string format_double(double x);

}  // namespace invc
