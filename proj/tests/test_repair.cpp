#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "invc/repair.hpp"
#include "testutil.hpp"

using namespace invc;

namespace {

int count_taken(const std::vector<uint8_t>& take) {
  return static_cast<int>(std::count(take.begin(), take.end(), uint8_t{1}));
}

Matrix random_weights(int dims, int items, Rng& rng, double hi = 1.0) {
  Matrix w(dims, items);
  for (double& x : w.data) x = rng.uniform_range(0.0, hi);
  return w;
}

}  // namespace

TEST_CASE("knapsack: zero weights select everything; zero budget nothing") {
  Matrix zeros(2, 5);
  const auto all = knapsack_select(zeros, std::vector<double>{1.0, 1.0});
  CHECK(count_taken(all.take) == 5);
  CHECK(all.proven_optimal);

  Rng rng(1);
  const auto w = random_weights(2, 5, rng);
  const auto none = knapsack_select(w, std::vector<double>{0.0, 0.0});
  CHECK(count_taken(none.take) == 0);
  CHECK(knapsack_bruteforce(w, std::vector<double>{0.0, 0.0}) ==
        std::vector<uint8_t>{0, 0, 0, 0, 0});
}

TEST_CASE("knapsack: single-dimension hand instance") {
  Matrix w(1, 3);
  w(0, 0) = 3.0;
  w(0, 1) = 2.0;
  w(0, 2) = 2.0;
  const auto picked = knapsack_select(w, std::vector<double>{4.0});
  CHECK(picked.take == std::vector<uint8_t>{0, 1, 1});
  CHECK(picked.proven_optimal);
  CHECK(knapsack_bruteforce(w, std::vector<double>{4.0}) == std::vector<uint8_t>{0, 1, 1});
}

TEST_CASE("knapsack bruteforce edge cases") {
  Matrix empty(2, 0);
  CHECK(knapsack_bruteforce(empty, std::vector<double>{1.0, 1.0}).empty());
  Matrix large(1, 21);
  CHECK_THROWS_AS(knapsack_bruteforce(large, std::vector<double>{1.0}),
                  std::invalid_argument);
}

TEST_CASE("knapsack branch and bound matches brute force on 100 instances") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const int items = 1 + rng.uniform_int(12);
    const int dims = std::vector<int>{1, 3, 5}[rng.uniform_int(3)];
    const auto w = random_weights(dims, items, rng);
    std::vector<double> budgets(dims);
    for (double& b : budgets) b = rng.uniform_range(0.5, 0.3 * items);

    const auto exact = knapsack_select(w, budgets);
    const auto oracle = knapsack_bruteforce(w, budgets);
    REQUIRE(exact.proven_optimal);
    CHECK(count_taken(exact.take) == count_taken(oracle));
  }
}

TEST_CASE("knapsack optimum is monotone in the budget") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int items = 4 + rng.uniform_int(8);
    const int dims = 1 + rng.uniform_int(3);
    const auto w = random_weights(dims, items, rng);
    std::vector<double> budgets(dims);
    for (double& b : budgets) b = rng.uniform_range(0.2, 0.25 * items);

    const auto base = knapsack_select(w, budgets);
    auto bigger = budgets;
    bigger[rng.uniform_int(dims)] += rng.uniform_range(0.0, 2.0);
    const auto grown = knapsack_select(w, bigger);
    CHECK(count_taken(grown.take) >= count_taken(base.take));
  }
}

TEST_CASE("knapsack greedy mode stays feasible on large instances") {
  Rng rng(4);
  const int items = 60;
  const auto w = random_weights(3, items, rng);
  std::vector<double> budgets{6.0, 7.0, 5.0};
  const auto picked = knapsack_select(w, budgets);
  CHECK_FALSE(picked.proven_optimal);
  CHECK(count_taken(picked.take) > 0);
  for (int i = 0; i < 3; ++i) {
    double spent = 0.0;
    for (int s = 0; s < items; ++s) {
      if (picked.take[s]) spent += w(i, s);
    }
    CHECK(spent <= budgets[i]);
  }
}

TEST_CASE("filter_confident keeps exactly the zero-violation samples") {
  // Classifier with constant probabilities (0.6, 0.4): desired 0 samples are
  // confident (0.6 >= 0.4 + 0.1), desired 1 samples are not.
  auto clf = std::make_shared<Classifier>(Classifier::logistic(1, 2));
  clf->b1 = {std::log(0.6), std::log(0.4)};
  Matrix X(4, 1);
  for (int j = 0; j < 4; ++j) X(j, 0) = j;
  auto prob =
      PerturbProblem::make(X, {1}, {10.0}, {0, 1, 0, 1}, 0.1,
                           clf, /*check_desired=*/false);
  CHECK(filter_confident(prob, prob.X) == std::vector<int>{0, 2});

  // Unperturbed originals are never confident in a validated problem.
  Rng rng(5);
  const auto rand_prob = testutil::random_problem(6, 3, 2, rng);
  CHECK(filter_confident(rand_prob, rand_prob.X).empty());
}

TEST_CASE("finalize: unbinding budgets keep the whole confident set") {
  auto clf = std::make_shared<Classifier>(Classifier::logistic(1, 2));
  clf->b1 = {std::log(0.9), std::log(0.1)};
  Matrix X(3, 1);
  auto prob = PerturbProblem::make(X, {1}, {100.0}, {0, 0, 0}, 0.1, clf, false);
  Matrix xhat = prob.X;
  for (int j = 0; j < 3; ++j) xhat(j, 0) += 0.1;  // some consumption

  const auto fin = finalize(prob, xhat);
  CHECK(fin.selected == std::vector<int>{0, 1, 2});
  CHECK(fin.report.selected_count == 3);
  CHECK(fin.knapsack_optimal);
}

TEST_CASE("finalize: the budget excludes exactly the heavy sample") {
  auto clf = std::make_shared<Classifier>(Classifier::logistic(1, 2));
  clf->b1 = {std::log(0.9), std::log(0.1)};
  Matrix X(3, 1);
  // deviations 1, 1, 3 -> weights 1, 1, 9; budget 2.5 fits the two light ones
  auto prob = PerturbProblem::make(X, {1}, {2.5}, {0, 0, 0}, 0.1, clf, false);
  Matrix xhat = prob.X;
  xhat(0, 0) += 1.0;
  xhat(1, 0) += 1.0;
  xhat(2, 0) += 3.0;

  const auto fin = finalize(prob, xhat);
  CHECK(fin.selected == std::vector<int>{0, 1});

  // Brute-force oracle agrees on the cardinality.
  Matrix w(1, 3);
  w(0, 0) = 1.0;
  w(0, 1) = 1.0;
  w(0, 2) = 9.0;
  CHECK(count_taken(knapsack_bruteforce(w, std::vector<double>{2.5})) == 2);
}

TEST_CASE("finalize: infeasible-everywhere input selects nothing") {
  Rng rng(6);
  const auto prob = testutil::random_problem(5, 3, 2, rng);
  const auto fin = finalize(prob, prob.X);  // originals: nothing is confident
  CHECK(fin.selected.empty());
  CHECK(fin.report.selected_count == 0);
  CHECK(fin.report.empty_selection);
}

TEST_CASE("finalize output is exactly feasible") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    auto prob = testutil::random_problem(8, 3, 2, rng, rng.uniform_range(0.1, 2.0));
    const auto xhat = testutil::random_xhat(prob, rng, 1.5);
    const auto fin = finalize(prob, xhat);
    for (int i = 0; i < prob.num_features(); ++i) {
      double spent = 0.0;
      for (int j : fin.selected) {
        const double d = xhat(j, i) - prob.X(j, i);
        spent += d * d;
      }
      CHECK(spent <= prob.budgets[i]);
    }
    for (int j : fin.selected) {
      CHECK(confidence_violation(prob, xhat.row(j), j) == 0.0);
    }
  }
}

TEST_CASE("finalize_grouped repairs each group against its allocation") {
  auto clf = std::make_shared<Classifier>(Classifier::logistic(1, 2));
  clf->b1 = {std::log(0.9), std::log(0.1)};
  Matrix X(4, 1);
  auto prob = PerturbProblem::make(X, {1}, {4.0}, {0, 0, 0, 0}, 0.1, clf, false);
  prob.groups = SequenceGroups{{{0, 1}, {2, 3}}};
  Matrix xhat = prob.X;
  // all deviations cost 1.5 -> each group gets budget 2, fits one sample
  for (int j = 0; j < 4; ++j) xhat(j, 0) += std::sqrt(1.5);

  const auto fin = finalize_grouped(prob, xhat);
  CHECK(fin.selected.size() == 2);
  // joint knapsack would have fit two samples anyway; per-group split keeps
  // one from each group
  CHECK(std::count_if(fin.selected.begin(), fin.selected.end(),
                      [](int j) { return j < 2; }) == 1);
}
