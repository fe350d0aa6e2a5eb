#pragma once

// Shared fixtures for the test suites: small random classifiers and
// perturbation instances.

#include <memory>
#include <vector>

#include "invc/classifier.hpp"
#include "invc/numkit.hpp"
#include "invc/problem.hpp"

namespace testutil {

inline invc::Classifier random_logistic(int p, int k, invc::Rng& rng, double scale = 1.0) {
  auto c = invc::Classifier::logistic(p, k);
  for (double& w : c.w1) w = rng.uniform_range(-scale, scale);
  for (double& b : c.b1) b = rng.uniform_range(-scale, scale);
  return c;
}

inline invc::Classifier random_mlp(int p, int k, int h, invc::Rng& rng,
                                   double scale = 1.0) {
  auto c = invc::Classifier::one_hidden_tanh(p, k, h);
  for (double& w : c.w1) w = rng.uniform_range(-scale, scale);
  for (double& b : c.b1) b = rng.uniform_range(-scale, scale);
  for (double& w : c.w2) w = rng.uniform_range(-scale, scale);
  for (double& b : c.b2) b = rng.uniform_range(-scale, scale);
  return c;
}

// A small instance with random data; desired classes are forced to differ
// from the prediction so construction checks pass.
inline invc::PerturbProblem random_problem(int n, int p, int k, invc::Rng& rng,
                                           double budget = 1.0,
                                           std::vector<uint8_t> mask = {}) {
  auto clf = std::make_shared<invc::Classifier>(random_logistic(p, k, rng));
  invc::Matrix X(n, p);
  for (double& x : X.data) x = rng.uniform_range(-2.0, 2.0);
  std::vector<int> desired(n);
  for (int j = 0; j < n; ++j) {
    const int argmax = clf->predict(X.row(j));
    desired[j] = (argmax + 1 + rng.uniform_int(k - 1)) % k;
  }
  if (mask.empty()) mask.assign(p, 1);
  return invc::PerturbProblem::make(std::move(X), std::move(mask),
                                    std::vector<double>(p, budget), std::move(desired),
                                    0.1, std::move(clf));
}

// Random perturbed candidate near the originals.
inline invc::Matrix random_xhat(const invc::PerturbProblem& prob, invc::Rng& rng,
                                double radius = 0.5) {
  invc::Matrix xhat = prob.X;
  for (int j = 0; j < xhat.rows; ++j) {
    for (int i = 0; i < xhat.cols; ++i) {
      if (prob.mask[i]) xhat(j, i) += rng.uniform_range(-radius, radius);
    }
  }
  return xhat;
}

}  // namespace testutil
