#pragma once

// Internal helpers shared by the solver translation units.

#include <cmath>
#include <vector>

#include "invc/numkit.hpp"
#include "invc/problem.hpp"
#include "invc/solvers.hpp"

namespace invc::detail {

// Multiplier init: max(0, center + noise), then feature init: X plus
// uniform(-1e-3, 1e-3) on perturbable entries (row-major order). The draw
// order is part of the determinism contract.
inline void init_state(SolverState& st, const PerturbProblem& prob,
                       const HyperParams& hp, Rng& rng, const Matrix* xhat_init) {
  const int n = prob.num_samples(), p = prob.num_features();
  st.lambda.resize(p);
  for (int i = 0; i < p; ++i) {
    st.lambda[i] = std::max(0.0, hp.lambda0 + hp.noise_std * rng.normal());
  }
  st.mu.resize(n);
  for (int j = 0; j < n; ++j) {
    st.mu[j] = std::max(0.0, hp.mu0 + hp.noise_std * rng.normal());
  }
  if (xhat_init != nullptr) {
    if (!xhat_init->same_shape(prob.X)) {
      throw std::invalid_argument("solver: xhat_init shape mismatch");
    }
    st.xhat = *xhat_init;
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < p; ++i) {
        if (!prob.mask[i]) st.xhat(j, i) = prob.X(j, i);
      }
    }
  } else {
    st.xhat = prob.X;
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < p; ++i) {
        if (prob.mask[i]) st.xhat(j, i) += rng.uniform_range(-1e-3, 1e-3);
      }
    }
  }
}

inline void record_projection_error(SolverState& st, double err) {
  if (err > 1e-9) {
    ++st.projection_violations;
    st.worst_projection_error = std::max(st.worst_projection_error, err);
  }
}

inline void check_nonneg(SolverState& st, std::span<const double> v) {
  for (double x : v) record_projection_error(st, std::max(0.0, -x));
}

inline void check_box01(SolverState& st, std::span<const double> v) {
  for (double x : v) {
    record_projection_error(st, std::max({0.0, -x, x - 1.0}));
  }
}

inline void check_simplex(SolverState& st, std::span<const double> v) {
  double total = 0.0;
  for (double x : v) {
    record_projection_error(st, std::max(0.0, -x));
    total += x;
  }
  record_projection_error(st, std::abs(total - 1.0));
}

inline double norm2(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

inline bool all_finite(const Matrix& m) {
  for (double x : m.data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// Confidence violations and their subgradients for every sample.
inline void eval_confidence(const PerturbProblem& prob, const Matrix& xhat,
                            std::vector<double>& hbar, Matrix& hgrad) {
  const int n = prob.num_samples(), p = prob.num_features();
  hbar.resize(n);
  hgrad = Matrix(n, p);
  for (int j = 0; j < n; ++j) {
    hbar[j] = confidence_violation(prob, xhat.row(j), j);
    if (hbar[j] > 0.0) {
      const auto g = confidence_grad(prob, xhat.row(j), j);
      for (int i = 0; i < p; ++i) hgrad(j, i) = g[i];
    }
  }
}

}  // namespace invc::detail
