#pragma once

#include <span>
#include <vector>

#include "invc/problem.hpp"

namespace invc {

/// Indices of samples whose confidence violation is exactly zero, i.e. the
/// classifier already predicts the desired class with the required margin.
std::vector<int> filter_confident(const PerturbProblem& prob, const Matrix& xhat);

struct KnapsackResult {
  std::vector<uint8_t> take;  // one flag per item
  bool proven_optimal = false;
};

/// Maximum-cardinality multidimensional 0-1 knapsack: pick as many items as
/// possible subject to sum_s w(i,s) <= budget_i in every dimension i.
/// `weights` has one row per dimension and one column per item, all >= 0.
///
/// Instances with at most `exact_threshold` surviving items are solved
/// exactly by depth-first branch and bound (bound: per dimension, the count
/// of remaining items that fit greedily by ascending weight; minimized over
/// dimensions). Larger instances use a greedy fill by ascending normalized
/// weight plus remove-one-refill local search; proven_optimal is false then.
///
/// The returned selection is always feasible under left-to-right summation
/// in item index order.
KnapsackResult knapsack_select(const Matrix& weights, std::span<const double> budgets,
                               int exact_threshold = 40);

/// Exhaustive oracle for small instances (at most 20 items): maximum
/// cardinality, ties resolved toward the lexicographically smallest index
/// set. Throws when the item count exceeds the cap.
std::vector<uint8_t> knapsack_bruteforce(const Matrix& weights,
                                         std::span<const double> budgets);

struct FinalizeResult {
  std::vector<int> selected;  // final feasible set, ascending indices
  MetricsRow report;
  bool knapsack_optimal = false;
};

/// Final-solution extraction from a (possibly infeasible) solver output:
/// keep confident samples, then select a feasible maximum-cardinality
/// subset under the per-feature budgets. The result satisfies both
/// constraint families exactly.
FinalizeResult finalize(const PerturbProblem& prob, const Matrix& xhat);

/// Grouped variant: each group is repaired against its own allocated share
/// of the joint budget; metrics are reported against the joint budgets.
FinalizeResult finalize_grouped(const PerturbProblem& prob, const Matrix& xhat);

}  // namespace invc
