#include <algorithm>
#include <cmath>

#include "invc/repair.hpp"
#include "invc/solvers.hpp"
#include "solver_util.hpp"

namespace invc {

using detail::norm2;

namespace {

constexpr double kPiClamp = 1e-6;    // bernoulli relaxation
constexpr double kPiFloor = 1e-12;   // categorical relaxation

// Squared deviations (xhat_ij - x_ij)^2, samples by features.
Matrix squared_dev(const PerturbProblem& prob, const Matrix& xhat) {
  Matrix dsq(prob.num_samples(), prob.num_features());
  for (int j = 0; j < prob.num_samples(); ++j) {
    for (int i = 0; i < prob.num_features(); ++i) {
      const double d = xhat(j, i) - prob.X(j, i);
      dsq(j, i) = d * d;
    }
  }
  return dsq;
}

}  // namespace

double bernoulli_relax(double pi, double g1, double g2, double omega) {
  const double pc = std::clamp(pi, kPiClamp, 1.0 - kPiClamp);
  return sigmoid((std::log(pc) - std::log(1.0 - pc) + g1 - g2) / omega);
}

std::vector<double> categorical_relax(std::span<const double> pi, const Matrix& gumbel,
                                      double omega) {
  const int n = static_cast<int>(pi.size());
  if (gumbel.rows != n) throw std::invalid_argument("categorical_relax: shape mismatch");
  std::vector<double> raw(n, 0.0), scores(n);
  for (int xi = 0; xi < gumbel.cols; ++xi) {
    for (int j = 0; j < n; ++j) {
      scores[j] = (std::log(std::max(pi[j], kPiFloor)) + gumbel(j, xi)) / omega;
    }
    const auto soft = softmax(scores);
    for (int j = 0; j < n; ++j) raw[j] += soft[j];
  }
  for (int j = 0; j < n; ++j) raw[j] = std::min(1.0, raw[j]);
  return raw;
}

std::vector<double> chance_prob_estimate(const PerturbProblem& prob, const Matrix& xhat,
                                         const Matrix& v, const HyperParams& hp) {
  const int n = prob.num_samples(), p = prob.num_features();
  if (v.cols != n) throw std::invalid_argument("chance_prob_estimate: shape mismatch");
  const auto dsq = squared_dev(prob, xhat);
  const auto ind = hp.indicator();
  std::vector<double> prob_est(p, 0.0);
  for (int row = 0; row < v.rows; ++row) {
    for (int i = 0; i < p; ++i) {
      double spent = 0.0;
      for (int j = 0; j < n; ++j) spent += v(row, j) * dsq(j, i);
      prob_est[i] += smooth_indicator(spent - prob.budgets[i], ind);
    }
  }
  for (int i = 0; i < p; ++i) prob_est[i] /= v.rows;
  return prob_est;
}

BcmsEval bcms_eval(const PerturbProblem& prob, const Matrix& xhat,
                   std::span<const double> pi, std::span<const double> lambda,
                   std::span<const double> mu, const HyperParams& hp,
                   const Matrix& g1, const Matrix& g2) {
  const int n = prob.num_samples(), p = prob.num_features();
  const int replicates = g1.rows;
  if (g1.cols != n || !g2.same_shape(g1)) {
    throw std::invalid_argument("bcms_eval: draw shape mismatch");
  }
  const auto ind = hp.indicator();
  const auto dsq = squared_dev(prob, xhat);

  std::vector<double> hbar;
  Matrix hgrad;
  detail::eval_confidence(prob, xhat, hbar, hgrad);

  // d v / d pi; zero where the clamp is active (one-sided subgradient).
  std::vector<double> v_row(n), dvdpi(n);
  std::vector<double> pr_sum(p, 0.0), pr_deriv(p);
  std::vector<double> pi_grad_mc(n, 0.0);
  Matrix q(n, p);  // accumulates indicator-slope-weighted selections

  for (int rep = 0; rep < replicates; ++rep) {
    for (int j = 0; j < n; ++j) {
      v_row[j] = bernoulli_relax(pi[j], g1(rep, j), g2(rep, j), hp.omega);
      const bool interior = pi[j] > kPiClamp && pi[j] < 1.0 - kPiClamp;
      dvdpi[j] = interior ? v_row[j] * (1.0 - v_row[j]) *
                                (1.0 / pi[j] + 1.0 / (1.0 - pi[j])) / hp.omega
                          : 0.0;
    }
    for (int i = 0; i < p; ++i) {
      double spent = 0.0;
      for (int j = 0; j < n; ++j) spent += v_row[j] * dsq(j, i);
      const double arg = spent - prob.budgets[i];
      pr_sum[i] += smooth_indicator(arg, ind);
      pr_deriv[i] = smooth_indicator_grad(arg, ind);
    }
    for (int j = 0; j < n; ++j) {
      double sens = 0.0;  // d(sum_i lambda_i P_i)/d v_j
      for (int i = 0; i < p; ++i) sens += lambda[i] * pr_deriv[i] * dsq(j, i);
      pi_grad_mc[j] += sens * dvdpi[j];
      for (int i = 0; i < p; ++i) q(j, i) += pr_deriv[i] * v_row[j];
    }
  }

  BcmsEval ev;
  ev.hbar = hbar;
  ev.chance_prob.resize(p);
  for (int i = 0; i < p; ++i) ev.chance_prob[i] = pr_sum[i] / replicates;

  double lagrangian = 0.0;
  ev.pi_grad.resize(n);
  for (int j = 0; j < n; ++j) {
    const double selection_gain = 1.0 - mu[j] * hbar[j];
    lagrangian += pi[j] * selection_gain;
    ev.pi_grad[j] = selection_gain + pi_grad_mc[j] / replicates;
  }
  for (int i = 0; i < p; ++i) {
    lagrangian += lambda[i] * (ev.chance_prob[i] - (1.0 - hp.epsilon));
  }
  ev.lagrangian = lagrangian;

  ev.xhat_grad = Matrix(n, p);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < p; ++i) {
      if (!prob.mask[i]) continue;
      const double d = xhat(j, i) - prob.X(j, i);
      ev.xhat_grad(j, i) = -pi[j] * mu[j] * hgrad(j, i) +
                           2.0 * lambda[i] * d * q(j, i) / replicates;
    }
  }
  return ev;
}

CcmsEval ccms_eval(const PerturbProblem& prob, const Matrix& xhat,
                   std::span<const double> pi, std::span<const double> lambda,
                   std::span<const double> mu, const HyperParams& hp,
                   const std::vector<Matrix>& gumbel) {
  const int n = prob.num_samples(), p = prob.num_features();
  const int replicates = static_cast<int>(gumbel.size());
  if (replicates == 0) throw std::invalid_argument("ccms_eval: no draws");
  const int draws = gumbel[0].cols;
  const auto ind = hp.indicator();
  const auto dsq = squared_dev(prob, xhat);

  std::vector<double> hbar;
  Matrix hgrad;
  detail::eval_confidence(prob, xhat, hbar, hgrad);

  std::vector<double> scores(n), raw(n), v_row(n), coeff(n);
  std::vector<double> pr_deriv(p), pr_sum(p, 0.0);
  std::vector<double> pi_grad_raw(n, 0.0), v_mean(n, 0.0);
  Matrix q(n, p);
  Matrix soft(draws, n);
  double gain_sum = 0.0;

  for (int rep = 0; rep < replicates; ++rep) {
    const Matrix& g = gumbel[rep];
    if (g.rows != n || g.cols != draws) {
      throw std::invalid_argument("ccms_eval: draw shape mismatch");
    }
    std::fill(raw.begin(), raw.end(), 0.0);
    for (int xi = 0; xi < draws; ++xi) {
      for (int j = 0; j < n; ++j) {
        scores[j] = (std::log(std::max(pi[j], kPiFloor)) + g(j, xi)) / hp.omega;
      }
      const auto s = softmax(scores);
      for (int j = 0; j < n; ++j) {
        soft(xi, j) = s[j];
        raw[j] += s[j];
      }
    }
    for (int j = 0; j < n; ++j) {
      v_row[j] = std::min(1.0, raw[j]);
      v_mean[j] += v_row[j];
    }
    for (int i = 0; i < p; ++i) {
      double spent = 0.0;
      for (int j = 0; j < n; ++j) spent += v_row[j] * dsq(j, i);
      const double arg = spent - prob.budgets[i];
      pr_sum[i] += smooth_indicator(arg, ind);
      pr_deriv[i] = smooth_indicator_grad(arg, ind);
    }
    // coeff_j = dL_rep / d v_j, gated to zero where min(1, .) clamps.
    for (int j = 0; j < n; ++j) {
      const double gain = 1.0 - mu[j] * hbar[j];
      gain_sum += v_row[j] * gain;
      double sens = gain;
      for (int i = 0; i < p; ++i) sens += lambda[i] * pr_deriv[i] * dsq(j, i);
      coeff[j] = raw[j] < 1.0 ? sens : 0.0;
      for (int i = 0; i < p; ++i) q(j, i) += pr_deriv[i] * v_row[j];
    }
    for (int xi = 0; xi < draws; ++xi) {
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += coeff[j] * soft(xi, j);
      for (int m = 0; m < n; ++m) {
        pi_grad_raw[m] += soft(xi, m) * (coeff[m] - dot);
      }
    }
  }

  CcmsEval ev;
  ev.hbar = hbar;
  ev.chance_prob.resize(p);
  for (int i = 0; i < p; ++i) ev.chance_prob[i] = pr_sum[i] / replicates;
  ev.v_mean.resize(n);
  for (int j = 0; j < n; ++j) ev.v_mean[j] = v_mean[j] / replicates;

  double lagrangian = gain_sum / replicates;
  for (int i = 0; i < p; ++i) {
    lagrangian += lambda[i] * (ev.chance_prob[i] - (1.0 - hp.epsilon));
  }
  ev.lagrangian = lagrangian;

  ev.pi_grad.resize(n);
  for (int m = 0; m < n; ++m) {
    ev.pi_grad[m] = pi[m] > kPiFloor
                        ? pi_grad_raw[m] / (hp.omega * pi[m] * replicates)
                        : 0.0;
  }

  ev.xhat_grad = Matrix(n, p);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < p; ++i) {
      if (!prob.mask[i]) continue;
      const double d = xhat(j, i) - prob.X(j, i);
      ev.xhat_grad(j, i) = -ev.v_mean[j] * mu[j] * hgrad(j, i) +
                           2.0 * lambda[i] * d * q(j, i) / replicates;
    }
  }
  return ev;
}

namespace {

void trace_row(SolverState& st, const PerturbProblem& prob, int outer, double lagrangian,
               std::span<const double> mu_grad) {
  TraceRow row;
  row.outer = outer;
  row.selected_count = static_cast<int>(finalize(prob, st.xhat).selected.size());
  row.lagrangian = lagrangian;
  row.lambda_norm = norm2(st.lambda);
  row.mu_norm = norm2(st.mu);
  row.mu_grad_norm = norm2(mu_grad);
  st.trace.push_back(row);
}

}  // namespace

SolverState solve_bcms(const PerturbProblem& prob, const HyperParams& hp,
                       const Matrix* xhat_init) {
  hp.validate();
  const int n = prob.num_samples(), p = prob.num_features();
  const int outer_total = hp.resolved_outer(SolverKind::kBcms);
  const int inner_total = hp.resolved_inner(SolverKind::kBcms);
  const int replicates = hp.mc_samples;

  SolverState st;
  st.kind = SolverKind::kBcms;
  Rng rng(hp.seed);
  detail::init_state(st, prob, hp, rng, xhat_init);
  st.z.assign(n, 0.5);

  Matrix g1(replicates, n), g2(replicates, n);
  auto draw = [&] {
    for (int rep = 0; rep < replicates; ++rep) {
      for (int j = 0; j < n; ++j) {
        g1(rep, j) = gumbel_sample(rng);
        g2(rep, j) = gumbel_sample(rng);
      }
    }
  };

  for (int outer = 0; outer < outer_total; ++outer) {
    for (int inner = 0; inner < inner_total; ++inner) {
      draw();
      const auto ev = bcms_eval(prob, st.xhat, st.z, st.lambda, st.mu, hp, g1, g2);
      if (!std::isfinite(ev.lagrangian)) {
        throw SolverError("bcms: objective diverged at outer iteration " +
                          std::to_string(outer));
      }
      for (int j = 0; j < n; ++j) {
        st.z[j] = std::min(1.0, std::max(0.0, st.z[j] + hp.alpha * ev.pi_grad[j]));
      }
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < p; ++i) st.xhat(j, i) += hp.beta * ev.xhat_grad(j, i);
      }
      if (!detail::all_finite(st.xhat)) {
        throw SolverError("bcms: iterates diverged at outer iteration " +
                          std::to_string(outer));
      }
      detail::check_box01(st, st.z);
    }
    // Multiplier subgradients at the final inner iterate, fresh draws.
    draw();
    const auto ev = bcms_eval(prob, st.xhat, st.z, st.lambda, st.mu, hp, g1, g2);
    if (!std::isfinite(ev.lagrangian) || !detail::all_finite(st.xhat)) {
      throw SolverError("bcms: objective diverged at outer iteration " +
                        std::to_string(outer));
    }
    const double gamma_t = multiplier_step(hp.gamma0, outer);
    const double eta_t = multiplier_step(hp.eta0, outer);
    for (int i = 0; i < p; ++i) {
      const double grad = ev.chance_prob[i] - (1.0 - hp.epsilon);
      st.lambda[i] = std::max(0.0, st.lambda[i] - gamma_t * grad);
    }
    std::vector<double> mu_grad(n);
    for (int j = 0; j < n; ++j) {
      mu_grad[j] = -st.z[j] * ev.hbar[j];
      st.mu[j] = std::max(0.0, st.mu[j] - eta_t * mu_grad[j]);
    }
    detail::check_nonneg(st, st.lambda);
    detail::check_nonneg(st, st.mu);
    trace_row(st, prob, outer, ev.lagrangian, mu_grad);
  }
  return st;
}

SolverState solve_ccms(const PerturbProblem& prob, const HyperParams& hp,
                       const Matrix* xhat_init) {
  hp.validate();
  const int n = prob.num_samples(), p = prob.num_features();
  const int outer_total = hp.resolved_outer(SolverKind::kCcms);
  const int inner_total = hp.resolved_inner(SolverKind::kCcms);
  const int replicates = hp.mc_samples;
  const int draws = hp.resolved_cat_draws(n);

  SolverState st;
  st.kind = SolverKind::kCcms;
  Rng rng(hp.seed);
  detail::init_state(st, prob, hp, rng, xhat_init);
  st.z.assign(n, 1.0 / n);

  std::vector<Matrix> gumbel(replicates, Matrix(n, draws));
  auto draw = [&] {
    for (int rep = 0; rep < replicates; ++rep) {
      for (int j = 0; j < n; ++j) {
        for (int xi = 0; xi < draws; ++xi) gumbel[rep](j, xi) = gumbel_sample(rng);
      }
    }
  };
  auto renormalize = [&] {
    double total = 0.0;
    for (double& zj : st.z) total += zj;
    if (total <= 0.0) {
      std::fill(st.z.begin(), st.z.end(), 1.0 / n);  // degenerate projection
    } else {
      for (double& zj : st.z) zj /= total;
    }
  };

  for (int outer = 0; outer < outer_total; ++outer) {
    for (int inner = 0; inner < inner_total; ++inner) {
      draw();
      const auto ev = ccms_eval(prob, st.xhat, st.z, st.lambda, st.mu, hp, gumbel);
      if (!std::isfinite(ev.lagrangian)) {
        throw SolverError("ccms: objective diverged at outer iteration " +
                          std::to_string(outer));
      }
      for (int j = 0; j < n; ++j) {
        st.z[j] = std::max(0.0, st.z[j] + hp.alpha * ev.pi_grad[j]);
      }
      renormalize();
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < p; ++i) st.xhat(j, i) += hp.beta * ev.xhat_grad(j, i);
      }
      if (!detail::all_finite(st.xhat)) {
        throw SolverError("ccms: iterates diverged at outer iteration " +
                          std::to_string(outer));
      }
      detail::check_simplex(st, st.z);
    }
    draw();
    const auto ev = ccms_eval(prob, st.xhat, st.z, st.lambda, st.mu, hp, gumbel);
    if (!std::isfinite(ev.lagrangian) || !detail::all_finite(st.xhat)) {
      throw SolverError("ccms: objective diverged at outer iteration " +
                        std::to_string(outer));
    }
    const double gamma_t = multiplier_step(hp.gamma0, outer);
    const double eta_t = multiplier_step(hp.eta0, outer);
    for (int i = 0; i < p; ++i) {
      const double grad = ev.chance_prob[i] - (1.0 - hp.epsilon);
      st.lambda[i] = std::max(0.0, st.lambda[i] - gamma_t * grad);
    }
    std::vector<double> mu_grad(n);
    for (int j = 0; j < n; ++j) {
      mu_grad[j] = -ev.v_mean[j] * ev.hbar[j];
      st.mu[j] = std::max(0.0, st.mu[j] - eta_t * mu_grad[j]);
    }
    detail::check_nonneg(st, st.lambda);
    detail::check_nonneg(st, st.mu);
    trace_row(st, prob, outer, ev.lagrangian, mu_grad);
  }
  return st;
}

}  // namespace invc
