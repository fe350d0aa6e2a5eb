#include "invc/repair.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace invc {

namespace {

// Feasibility under the canonical summation order (ascending item index).
// All feasibility promised by this module is with respect to this order.
bool feasible(const Matrix& weights, std::span<const double> budgets,
              std::span<const uint8_t> take) {
  const int p = weights.rows, n = weights.cols;
  for (int i = 0; i < p; ++i) {
    double acc = 0.0;
    for (int s = 0; s < n; ++s) {
      if (take[s]) acc += weights(i, s);
    }
    if (acc > budgets[i]) return false;
  }
  return true;
}

double total_weight(const Matrix& weights, int s) {
  double acc = 0.0;
  for (int i = 0; i < weights.rows; ++i) acc += weights(i, s);
  return acc;
}

struct BranchAndBound {
  const Matrix& weights;
  std::span<const double> budgets;
  std::vector<int> order;           // items by ascending total weight
  std::vector<uint8_t> cur, best;
  std::vector<double> used;
  int cur_count = 0, best_count = -1;

  BranchAndBound(const Matrix& w, std::span<const double> b, std::vector<int> ord)
      : weights(w), budgets(b), order(std::move(ord)),
        cur(w.cols, 0), best(w.cols, 0), used(w.rows, 0.0) {}

  // Upper bound on how many of order[pos..] can still be added: for each
  // dimension, count remaining items fitting greedily by ascending weight
  // in that dimension alone; take the most restrictive dimension.
  int bound(size_t pos) const {
    const int p = weights.rows;
    int best_dim = weights.cols;
    std::vector<double> dim_weights;
    for (int i = 0; i < p; ++i) {
      dim_weights.clear();
      for (size_t t = pos; t < order.size(); ++t) dim_weights.push_back(weights(i, order[t]));
      std::sort(dim_weights.begin(), dim_weights.end());
      double room = budgets[i] - used[i];
      int count = 0;
      for (double w : dim_weights) {
        if (w > room) break;
        room -= w;
        ++count;
      }
      best_dim = std::min(best_dim, count);
      if (best_dim == 0) break;
    }
    return best_dim;
  }

  void dfs(size_t pos) {
    if (pos == order.size()) {
      if (cur_count > best_count && feasible(weights, budgets, cur)) {
        best_count = cur_count;
        best = cur;
      }
      return;
    }
    if (cur_count + bound(pos) <= best_count) return;
    const int s = order[pos];
    bool fits = true;
    for (int i = 0; i < weights.rows; ++i) {
      if (used[i] + weights(i, s) > budgets[i]) {
        fits = false;
        break;
      }
    }
    if (fits) {
      cur[s] = 1;
      ++cur_count;
      for (int i = 0; i < weights.rows; ++i) used[i] += weights(i, s);
      dfs(pos + 1);
      for (int i = 0; i < weights.rows; ++i) used[i] -= weights(i, s);
      --cur_count;
      cur[s] = 0;
    }
    dfs(pos + 1);
  }
};

// Greedy fill by ascending normalized weight (max_i w/B_i), then try
// removing each selected item and refilling; keep any strict improvement.
std::vector<uint8_t> greedy_with_swaps(const Matrix& weights,
                                       std::span<const double> budgets,
                                       const std::vector<int>& candidates) {
  const int n = weights.cols;
  auto norm_key = [&](int s) {
    double worst = 0.0;
    for (int i = 0; i < weights.rows; ++i) {
      const double b = budgets[i];
      const double w = weights(i, s);
      worst = std::max(worst, b > 0.0 ? w / b : (w > 0.0 ? INFINITY : 0.0));
    }
    return worst;
  };
  std::vector<int> order = candidates;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return norm_key(a) < norm_key(b); });

  auto fill = [&](std::vector<uint8_t> take, int skip) {
    for (int s : order) {
      if (s == skip || take[s]) continue;
      take[s] = 1;
      if (!feasible(weights, budgets, take)) take[s] = 0;
    }
    return take;
  };
  auto count = [](const std::vector<uint8_t>& t) {
    return static_cast<int>(std::count(t.begin(), t.end(), uint8_t{1}));
  };

  std::vector<uint8_t> best = fill(std::vector<uint8_t>(n, 0), -1);
  bool improved = true;
  while (improved) {
    improved = false;
    for (int s = 0; s < n && !improved; ++s) {
      if (!best[s]) continue;
      auto trial = best;
      trial[s] = 0;
      trial = fill(std::move(trial), s);
      trial = fill(std::move(trial), -1);  // the removed item may fit again
      if (count(trial) > count(best)) {
        best = std::move(trial);
        improved = true;
      }
    }
  }
  return best;
}

}  // namespace

std::vector<int> filter_confident(const PerturbProblem& prob, const Matrix& xhat) {
  if (!xhat.same_shape(prob.X)) throw std::invalid_argument("filter_confident: shape mismatch");
  std::vector<int> confident;
  for (int j = 0; j < prob.num_samples(); ++j) {
    if (confidence_violation(prob, xhat.row(j), j) == 0.0) confident.push_back(j);
  }
  return confident;
}

KnapsackResult knapsack_select(const Matrix& weights, std::span<const double> budgets,
                               int exact_threshold) {
  const int p = weights.rows, n = weights.cols;
  if (budgets.size() != static_cast<size_t>(p)) {
    throw std::invalid_argument("knapsack_select: budget size mismatch");
  }
  for (double w : weights.data) {
    if (!(w >= 0.0)) throw std::invalid_argument("knapsack_select: negative weight");
  }

  KnapsackResult result;
  result.take.assign(n, 0);

  // Items that do not even fit alone can never be chosen.
  std::vector<int> viable;
  for (int s = 0; s < n; ++s) {
    bool fits = true;
    for (int i = 0; i < p; ++i) {
      if (weights(i, s) > budgets[i]) {
        fits = false;
        break;
      }
    }
    if (fits) viable.push_back(s);
  }
  if (viable.empty()) {
    result.proven_optimal = true;
    return result;
  }

  if (static_cast<int>(viable.size()) <= exact_threshold) {
    std::vector<int> order = viable;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return total_weight(weights, a) < total_weight(weights, b);
    });
    BranchAndBound bb(weights, budgets, std::move(order));
    bb.dfs(0);
    result.take = std::move(bb.best);
    result.proven_optimal = true;
  } else {
    result.take = greedy_with_swaps(weights, budgets, viable);
    result.proven_optimal = false;
  }
  return result;
}

std::vector<uint8_t> knapsack_bruteforce(const Matrix& weights,
                                         std::span<const double> budgets) {
  const int n = weights.cols;
  if (n > 20) throw std::invalid_argument("knapsack_bruteforce: too many items");
  int best_count = -1;
  uint32_t best_mask = 0;
  std::vector<uint8_t> take(n, 0);
  for (uint32_t m = 0; m < (1u << n); ++m) {
    for (int s = 0; s < n; ++s) take[s] = (m >> s) & 1u;
    if (!feasible(weights, budgets, take)) continue;
    const int count = static_cast<int>(std::popcount(m));
    if (count > best_count) {
      best_count = count;
      best_mask = m;
    }
    // Ties: ascending mask enumeration visits the lexicographically
    // smallest index set first (lower indices used earlier), so keep the
    // first mask seen at each cardinality.
  }
  for (int s = 0; s < n; ++s) take[s] = (best_mask >> s) & 1u;
  return take;
}

namespace {

FinalizeResult finalize_subset(const PerturbProblem& prob, const Matrix& xhat,
                               const std::vector<int>& samples,
                               std::span<const double> budgets) {
  const int p = prob.num_features();
  const auto confident = [&] {
    std::vector<int> keep;
    for (int j : samples) {
      if (confidence_violation(prob, xhat.row(j), j) == 0.0) keep.push_back(j);
    }
    return keep;
  }();

  Matrix weights(p, static_cast<int>(confident.size()));
  for (int s = 0; s < weights.cols; ++s) {
    const int j = confident[s];
    for (int i = 0; i < p; ++i) {
      const double d = xhat(j, i) - prob.X(j, i);
      weights(i, s) = d * d;
    }
  }
  const auto picked = knapsack_select(weights, budgets);

  FinalizeResult result;
  result.knapsack_optimal = picked.proven_optimal;
  for (int s = 0; s < weights.cols; ++s) {
    if (picked.take[s]) result.selected.push_back(confident[s]);
  }
  return result;
}

}  // namespace

FinalizeResult finalize(const PerturbProblem& prob, const Matrix& xhat) {
  if (!xhat.same_shape(prob.X)) throw std::invalid_argument("finalize: shape mismatch");
  std::vector<int> all(prob.num_samples());
  std::iota(all.begin(), all.end(), 0);
  auto result = finalize_subset(prob, xhat, all, prob.budgets);
  result.report = metrics(prob, xhat, result.selected);
  return result;
}

FinalizeResult finalize_grouped(const PerturbProblem& prob, const Matrix& xhat) {
  if (!prob.groups || prob.groups->groups.size() <= 1) return finalize(prob, xhat);
  const auto alloc = allocate_group_budgets(*prob.groups, prob.budgets);

  FinalizeResult merged;
  merged.knapsack_optimal = true;
  for (size_t r = 0; r < prob.groups->groups.size(); ++r) {
    auto part = finalize_subset(prob, xhat, prob.groups->groups[r], alloc[r]);
    merged.knapsack_optimal = merged.knapsack_optimal && part.knapsack_optimal;
    merged.selected.insert(merged.selected.end(), part.selected.begin(),
                           part.selected.end());
  }
  std::sort(merged.selected.begin(), merged.selected.end());
  merged.report = metrics(prob, xhat, merged.selected);
  return merged;
}

}  // namespace invc
