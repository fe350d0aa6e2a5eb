#include "invc/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "invc/repair.hpp"
#include "solver_util.hpp"

namespace invc {

using detail::norm2;

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::kMs: return "ms";
    case SolverKind::kBcms: return "bcms";
    case SolverKind::kCcms: return "ccms";
    case SolverKind::kKl: return "kl";
  }
  throw std::logic_error("unknown solver kind");
}

SolverKind solver_kind_from_string(const std::string& s) {
  if (s == "ms") return SolverKind::kMs;
  if (s == "bcms") return SolverKind::kBcms;
  if (s == "ccms") return SolverKind::kCcms;
  if (s == "kl") return SolverKind::kKl;
  throw std::invalid_argument("unknown solver: " + s);
}

void HyperParams::validate() const {
  indicator().validate();
  if (!(omega > 0.0)) throw std::invalid_argument("hp: omega must be > 0");
  if (mc_samples < 1) throw std::invalid_argument("hp: mc_samples must be >= 1");
  if (cat_draws < 0) throw std::invalid_argument("hp: cat_draws must be >= 0");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("hp: epsilon in (0,1)");
  if (dist_weight < 0.0) throw std::invalid_argument("hp: dist_weight must be >= 0");
  for (double rate : {alpha, beta, gamma0, eta0}) {
    if (!(rate > 0.0)) throw std::invalid_argument("hp: learning rates must be > 0");
  }
  if (outer_iters < 0 || inner_iters < 0) {
    throw std::invalid_argument("hp: iteration counts must be >= 0");
  }
  if (noise_std < 0.0) throw std::invalid_argument("hp: noise_std must be >= 0");
  if (!(delta > 0.0)) throw std::invalid_argument("hp: delta must be > 0");
}

int HyperParams::resolved_outer(SolverKind kind) const {
  if (outer_iters > 0) return outer_iters;
  return kind == SolverKind::kCcms ? 20 : 10;
}

int HyperParams::resolved_inner(SolverKind kind) const {
  if (inner_iters > 0) return inner_iters;
  switch (kind) {
    case SolverKind::kMs: return 10000;
    case SolverKind::kBcms: return 100;
    case SolverKind::kCcms: return 100;
    case SolverKind::kKl: return 5000;
  }
  return 100;
}

int HyperParams::resolved_cat_draws(int num_samples) const {
  const int k = cat_draws > 0 ? cat_draws : (num_samples + 1) / 2;
  if (k > num_samples) {
    throw std::invalid_argument("hp: cat_draws must not exceed the sample count");
  }
  return std::max(1, k);
}

double multiplier_step(double base, int outer_iter) {
  return base / (1.0 + outer_iter);
}

std::vector<double> ms_reduced_costs(const PerturbProblem& prob, const Matrix& xhat,
                                     std::span<const double> lambda,
                                     std::span<const double> mu) {
  const int n = prob.num_samples(), p = prob.num_features();
  std::vector<double> c(n);
  for (int j = 0; j < n; ++j) {
    double penalty = 0.0;
    for (int i = 0; i < p; ++i) {
      const double d = xhat(j, i) - prob.X(j, i);
      penalty += lambda[i] * d * d;
    }
    c[j] = 1.0 - penalty - mu[j] * confidence_violation(prob, xhat.row(j), j);
  }
  return c;
}

std::vector<double> ms_select(std::span<const double> reduced_costs) {
  std::vector<double> z(reduced_costs.size());
  for (size_t j = 0; j < reduced_costs.size(); ++j) {
    z[j] = reduced_costs[j] >= 0.0 ? 1.0 : 0.0;
  }
  return z;
}

MsEval ms_eval(const PerturbProblem& prob, const Matrix& xhat,
               std::span<const double> z, std::span<const double> lambda,
               std::span<const double> mu) {
  const int n = prob.num_samples(), p = prob.num_features();
  MsEval ev;
  ev.xhat_grad = Matrix(n, p);

  std::vector<double> hbar;
  Matrix hgrad;
  detail::eval_confidence(prob, xhat, hbar, hgrad);

  ev.reduced_costs.resize(n);
  double lagrangian = 0.0;
  for (int j = 0; j < n; ++j) {
    double penalty = 0.0;
    for (int i = 0; i < p; ++i) {
      const double d = xhat(j, i) - prob.X(j, i);
      penalty += lambda[i] * d * d;
      if (prob.mask[i]) {
        ev.xhat_grad(j, i) = z[j] * (-2.0 * lambda[i] * d - mu[j] * hgrad(j, i));
      }
    }
    ev.reduced_costs[j] = 1.0 - penalty - mu[j] * hbar[j];
    lagrangian += ev.reduced_costs[j] * z[j];
  }
  for (int i = 0; i < p; ++i) lagrangian += lambda[i] * prob.budgets[i];
  ev.lagrangian = lagrangian;
  return ev;
}

namespace {

void append_trace(SolverState& st, const PerturbProblem& prob, int outer,
                  double lagrangian, std::span<const double> mu_grad) {
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

SolverState solve_ms(const PerturbProblem& prob, const HyperParams& hp,
                     const Matrix* xhat_init) {
  hp.validate();
  const int n = prob.num_samples(), p = prob.num_features();
  const int outer_total = hp.resolved_outer(SolverKind::kMs);
  const int inner_total = hp.resolved_inner(SolverKind::kMs);

  SolverState st;
  st.kind = SolverKind::kMs;
  Rng rng(hp.seed);
  detail::init_state(st, prob, hp, rng, xhat_init);

  std::vector<double> hbar;
  Matrix hgrad;
  for (int outer = 0; outer < outer_total; ++outer) {
    st.z.assign(n, 1.0);
    std::vector<double> costs;
    for (int inner = 0; inner < inner_total; ++inner) {
      if (std::all_of(st.z.begin(), st.z.end(), [](double zj) { return zj == 0.0; })) {
        break;
      }
      detail::eval_confidence(prob, st.xhat, hbar, hgrad);
      for (int j = 0; j < n; ++j) {
        if (st.z[j] == 0.0) continue;
        for (int i = 0; i < p; ++i) {
          if (!prob.mask[i]) continue;
          const double d = st.xhat(j, i) - prob.X(j, i);
          st.xhat(j, i) += hp.beta * (-2.0 * st.lambda[i] * d - st.mu[j] * hgrad(j, i));
        }
      }
      if (!detail::all_finite(st.xhat)) {
        throw SolverError("ms: iterates diverged at outer iteration " +
                          std::to_string(outer));
      }
      costs = ms_reduced_costs(prob, st.xhat, st.lambda, st.mu);
      st.z = ms_select(costs);
    }
    if (costs.empty()) costs = ms_reduced_costs(prob, st.xhat, st.lambda, st.mu);

    double lagrangian = 0.0;
    for (int j = 0; j < n; ++j) lagrangian += costs[j] * st.z[j];
    for (int i = 0; i < p; ++i) lagrangian += st.lambda[i] * prob.budgets[i];
    if (!std::isfinite(lagrangian) || !detail::all_finite(st.xhat)) {
      throw SolverError("ms: objective diverged at outer iteration " + std::to_string(outer));
    }

    const double gamma_t = multiplier_step(hp.gamma0, outer);
    const double eta_t = multiplier_step(hp.eta0, outer);
    for (int i = 0; i < p; ++i) {
      double spent = 0.0;
      for (int j = 0; j < n; ++j) {
        const double d = st.xhat(j, i) - prob.X(j, i);
        spent += st.z[j] * d * d;
      }
      const double grad = prob.budgets[i] - spent;
      st.lambda[i] = std::max(0.0, st.lambda[i] - gamma_t * grad);
    }
    std::vector<double> hbar_now(n), mu_grad(n);
    for (int j = 0; j < n; ++j) {
      hbar_now[j] = confidence_violation(prob, st.xhat.row(j), j);
      mu_grad[j] = -st.z[j] * hbar_now[j];
      st.mu[j] = std::max(0.0, st.mu[j] - eta_t * mu_grad[j]);
    }
    detail::check_nonneg(st, st.lambda);
    detail::check_nonneg(st, st.mu);
    append_trace(st, prob, outer, lagrangian, mu_grad);
  }
  return st;
}

KlEval kl_eval(const PerturbProblem& prob, const Matrix& xhat,
               std::span<const double> lambda, std::span<const double> mu,
               double dist_weight) {
  const int n = prob.num_samples(), p = prob.num_features();
  const int k = prob.clf->num_classes;
  KlEval ev;
  ev.xhat_grad = Matrix(n, p);

  std::vector<double> hbar;
  Matrix hgrad;
  detail::eval_confidence(prob, xhat, hbar, hgrad);
  ev.hbar = hbar;

  std::vector<double> target(k);
  double loss = 0.0;
  for (int j = 0; j < n; ++j) {
    std::fill(target.begin(), target.end(), 0.0);
    target[prob.desired[j]] = 1.0;
    loss += kl_divergence(target, prob.clf->predict_proba(xhat.row(j)));
    const auto klg = prob.clf->kl_grad(xhat.row(j), target);
    double dist = 0.0;
    for (int i = 0; i < p; ++i) {
      const double d = xhat(j, i) - prob.X(j, i);
      dist += d * d;
      if (prob.mask[i]) {
        ev.xhat_grad(j, i) = klg[i] + 2.0 * dist_weight * d + 2.0 * lambda[i] * d +
                             mu[j] * hgrad(j, i);
      }
    }
    loss += dist_weight * dist;
  }
  ev.loss_total = loss;

  ev.budget_g.resize(p);
  double lagrangian = loss;
  for (int i = 0; i < p; ++i) {
    double spent = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xhat(j, i) - prob.X(j, i);
      spent += d * d;
    }
    ev.budget_g[i] = spent - prob.budgets[i];
    lagrangian += lambda[i] * ev.budget_g[i];
  }
  for (int j = 0; j < n; ++j) lagrangian += mu[j] * hbar[j];
  ev.lagrangian = lagrangian;
  return ev;
}

SolverState solve_kl(const PerturbProblem& prob, const HyperParams& hp,
                     const Matrix* xhat_init) {
  hp.validate();
  const int n = prob.num_samples(), p = prob.num_features();
  const int outer_total = hp.resolved_outer(SolverKind::kKl);
  const int inner_total = hp.resolved_inner(SolverKind::kKl);

  SolverState st;
  st.kind = SolverKind::kKl;
  Rng rng(hp.seed);
  detail::init_state(st, prob, hp, rng, xhat_init);
  st.z.assign(n, 1.0);

  for (int outer = 0; outer < outer_total; ++outer) {
    KlEval ev;
    for (int inner = 0; inner < inner_total; ++inner) {
      ev = kl_eval(prob, st.xhat, st.lambda, st.mu, hp.dist_weight);
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < p; ++i) {
          st.xhat(j, i) -= hp.beta * ev.xhat_grad(j, i);
        }
      }
      if (!detail::all_finite(st.xhat)) {
        throw SolverError("kl: iterates diverged at outer iteration " +
                          std::to_string(outer));
      }
    }
    ev = kl_eval(prob, st.xhat, st.lambda, st.mu, hp.dist_weight);
    if (!std::isfinite(ev.lagrangian) || !detail::all_finite(st.xhat)) {
      throw SolverError("kl: objective diverged at outer iteration " + std::to_string(outer));
    }

    // Dual ascent: this solver minimizes over features, maximizes over
    // multipliers.
    const double gamma_t = multiplier_step(hp.gamma0, outer);
    const double eta_t = multiplier_step(hp.eta0, outer);
    for (int i = 0; i < p; ++i) {
      st.lambda[i] = std::max(0.0, st.lambda[i] + gamma_t * ev.budget_g[i]);
    }
    for (int j = 0; j < n; ++j) {
      st.mu[j] = std::max(0.0, st.mu[j] + eta_t * ev.hbar[j]);
    }
    detail::check_nonneg(st, st.lambda);
    detail::check_nonneg(st, st.mu);
    append_trace(st, prob, outer, ev.lagrangian, ev.hbar);
  }
  return st;
}

SolverState solve(SolverKind kind, const PerturbProblem& prob, const HyperParams& hp,
                  const Matrix* xhat_init) {
  switch (kind) {
    case SolverKind::kMs: return solve_ms(prob, hp, xhat_init);
    case SolverKind::kBcms: return solve_bcms(prob, hp, xhat_init);
    case SolverKind::kCcms: return solve_ccms(prob, hp, xhat_init);
    case SolverKind::kKl: return solve_kl(prob, hp, xhat_init);
  }
  throw std::logic_error("unknown solver kind");
}

void save_trace_csv(const std::string& path, const SolverState& state) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "outer_iter,selected_count,lagrangian,lambda_norm,mu_norm,mu_grad_norm\n";
  for (const auto& row : state.trace) {
    out << row.outer << "," << row.selected_count << "," << format_double(row.lagrangian)
        << "," << format_double(row.lambda_norm) << "," << format_double(row.mu_norm)
        << "," << format_double(row.mu_grad_norm) << "\n";
  }
}

}  // namespace invc
