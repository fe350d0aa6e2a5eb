#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "invc/matrix.hpp"
#include "invc/numkit.hpp"
#include "invc/problem.hpp"

// Four solvers for the same task: given a perturbation instance, move the
// perturbable features of a batch of samples so that as many samples as
// possible are (a) classified into their desired class with margin delta
// and (b) jointly within the per-feature budgets
//
//   g_i = sum_j z_j (xhat_ij - x_ij)^2 - B_i <= 0      (budget, per feature)
//   hbar_j = max(0, max_{u != y~_j} f(xhat_j)_u - f(xhat_j)_{y~_j} + delta)
//
// where z_j marks the samples that count. All four relax the constraints
// with multipliers lambda_i >= 0 (budget) and mu_j >= 0 (confidence) and
// alternate inner primal updates with outer projected subgradient steps on
// the multipliers, using decaying step sizes gamma_t = gamma0 / (1 + t),
// eta_t = eta0 / (1 + t).
//
//   ms    selection by reduced-cost threshold on binary z; features move by
//         gradient ascent on the relaxed objective.
//   bcms  z_j ~ Bernoulli(pi_j); the budget constraint becomes a chance
//         constraint Pr(g_i <= 0) >= 1 - epsilon, estimated by Monte Carlo
//         over softmax-relaxed Gumbel selections so that gradients flow
//         into both pi and the features.
//   ccms  as bcms but with K categorical draws over a simplex-constrained
//         pi, modelling dependence between selected samples.
//   kl    baseline without selection variables: per-sample loss
//         KL(onehot(y~_j) || f(xhat_j)) + a ||xhat_j - x_j||^2 plus the
//         relaxed constraints at z == 1, multipliers updated by ascent.
//
// A solver output is generally infeasible; repair::finalize extracts the
// final exactly-feasible subset.

namespace invc {

enum class SolverKind { kMs, kBcms, kCcms, kKl };

std::string to_string(SolverKind kind);
SolverKind solver_kind_from_string(const std::string& s);

struct HyperParams {
  double delta = 0.1;     // confidence margin (copied into problems by the harness)
  double kappa = 2.0;     // smooth-indicator sharpness
  double tau = 30.0;      // smooth-indicator shift; in budget-residual units,
                          // so the right value depends on the data scale
  double omega = 1.0;     // relaxation temperature
  int mc_samples = 100;   // Monte Carlo replicates per inner iteration
  int cat_draws = 0;      // categorical draws per replicate; 0 = ceil(|S|/2)
  double epsilon = 0.05;  // chance level
  double dist_weight = 1.0;  // proximity weight `a` in the kl solver
  double alpha = 0.05;    // step on selection probabilities
  double beta = 0.05;     // step on features
  double gamma0 = 0.5;    // initial budget-multiplier step
  double eta0 = 0.5;      // initial confidence-multiplier step
  int outer_iters = 0;    // 0 = solver default (ms/bcms/kl 10, ccms 20)
  int inner_iters = 0;    // 0 = solver default (ms 10000, bcms/ccms 100, kl 5000)
  double lambda0 = 1.0;   // multiplier init center
  double mu0 = 1.0;
  double noise_std = 0.1;  // stddev of Gaussian noise on multiplier init
  uint64_t seed = 0;

  void validate() const;
  int resolved_outer(SolverKind kind) const;
  int resolved_inner(SolverKind kind) const;
  int resolved_cat_draws(int num_samples) const;
  SmoothIndicatorParams indicator() const { return {kappa, tau}; }
};

/// One record per outer iteration, written after the multiplier update:
/// the repaired selection size at the current features, the last inner
/// objective value, multiplier norms after the update and the norm of the
/// mu-subgradient used by the update.
struct TraceRow {
  int outer = 0;
  int selected_count = 0;
  double lagrangian = 0.0;
  double lambda_norm = 0.0;
  double mu_norm = 0.0;
  double mu_grad_norm = 0.0;
};

struct SolverState {
  SolverKind kind = SolverKind::kMs;
  Matrix xhat;
  // ms: binary selection; bcms: per-sample probabilities in [0,1];
  // ccms: probabilities on the simplex; kl: all ones.
  std::vector<double> z;
  std::vector<double> lambda;  // budget multipliers, >= 0
  std::vector<double> mu;      // confidence multipliers, >= 0
  std::vector<TraceRow> trace;
  // Projection-invariant self checks, evaluated after every update:
  // lambda/mu nonnegative, bcms pi in [0,1], ccms pi on the simplex
  // within 1e-9.
  long long projection_violations = 0;
  double worst_projection_error = 0.0;
};

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Decaying multiplier step size: base / (1 + outer_iter), strictly
/// decreasing in the outer iteration.
double multiplier_step(double base, int outer_iter);

// ---- ms pieces ----

/// Reduced costs c_j = 1 - sum_i lambda_i (xhat_ij - x_ij)^2 - mu_j hbar_j.
std::vector<double> ms_reduced_costs(const PerturbProblem& prob, const Matrix& xhat,
                                     std::span<const double> lambda,
                                     std::span<const double> mu);

/// z_j = 1 iff c_j >= 0; the exact maximizer of sum_j c_j z_j over binaries
/// (ties go to 1).
std::vector<double> ms_select(std::span<const double> reduced_costs);

// ---- relaxed selections ----

/// Two-sample Gumbel softmax relaxation of a Bernoulli(pi) draw:
///   sigma((ln pi - ln(1-pi) + g1 - g2) / omega)
/// with pi clamped to [1e-6, 1 - 1e-6]. In (0,1); omega -> 0 recovers a
/// hard Bernoulli sample.
double bernoulli_relax(double pi, double g1, double g2, double omega);

/// Relaxed categorical selection from K Gumbel columns: per draw xi a
/// softmax over samples of (ln pi + g_{., xi}) / omega, summed over draws
/// and clamped at 1. pi entries are floored at 1e-12 before the log.
std::vector<double> categorical_relax(std::span<const double> pi, const Matrix& gumbel,
                                      double omega);

/// Monte Carlo estimate of Pr(g_i <= 0) per feature from relaxed
/// selections v (one row per replicate):
///   (1/N) sum_n smooth_indicator(sum_j v_nj (xhat_ij - x_ij)^2 - B_i).
std::vector<double> chance_prob_estimate(const PerturbProblem& prob, const Matrix& xhat,
                                         const Matrix& v, const HyperParams& hp);

// ---- relaxed objective evaluations ----
//
// These are the inner objectives the solvers climb, with analytic
// gradients. They take the Gumbel draws as inputs so the same realization
// can be re-evaluated (the gradient tests finite-difference them under
// frozen draws). Gradients on frozen features are reported as zero, i.e.
// the gradient of the objective restricted to the feasible coordinates.

struct MsEval {
  double lagrangian = 0.0;
  Matrix xhat_grad;
  std::vector<double> reduced_costs;
};
MsEval ms_eval(const PerturbProblem& prob, const Matrix& xhat,
               std::span<const double> z, std::span<const double> lambda,
               std::span<const double> mu);

struct BcmsEval {
  double lagrangian = 0.0;
  std::vector<double> pi_grad;
  Matrix xhat_grad;
  std::vector<double> chance_prob;  // mean smooth-indicator value per feature
  std::vector<double> hbar;
};
/// g1, g2 are N x |S| Gumbel draws.
BcmsEval bcms_eval(const PerturbProblem& prob, const Matrix& xhat,
                   std::span<const double> pi, std::span<const double> lambda,
                   std::span<const double> mu, const HyperParams& hp,
                   const Matrix& g1, const Matrix& g2);

struct CcmsEval {
  double lagrangian = 0.0;
  std::vector<double> pi_grad;
  Matrix xhat_grad;
  std::vector<double> chance_prob;
  std::vector<double> hbar;
  std::vector<double> v_mean;  // mean relaxed selection per sample
};
/// gumbel holds one |S| x K draw matrix per replicate.
CcmsEval ccms_eval(const PerturbProblem& prob, const Matrix& xhat,
                   std::span<const double> pi, std::span<const double> lambda,
                   std::span<const double> mu, const HyperParams& hp,
                   const std::vector<Matrix>& gumbel);

struct KlEval {
  double lagrangian = 0.0;
  Matrix xhat_grad;
  std::vector<double> budget_g;  // g_i at z == 1
  std::vector<double> hbar;
  double loss_total = 0.0;  // sum of per-sample KL + proximity terms
};
KlEval kl_eval(const PerturbProblem& prob, const Matrix& xhat,
               std::span<const double> lambda, std::span<const double> mu,
               double dist_weight);

// ---- solver entry points ----
//
// Deterministic for a fixed (problem, hyperparameters) pair: the seed fixes
// multiplier init noise, feature init noise and every Monte Carlo draw, all
// consumed in a fixed order. When xhat_init is given it is used as the
// starting point (frozen features are reset to the originals); otherwise
// features start at X plus uniform(-1e-3, 1e-3) noise on perturbable
// entries. Throws SolverError when the objective turns non-finite.

SolverState solve_ms(const PerturbProblem& prob, const HyperParams& hp,
                     const Matrix* xhat_init = nullptr);
SolverState solve_bcms(const PerturbProblem& prob, const HyperParams& hp,
                       const Matrix* xhat_init = nullptr);
SolverState solve_ccms(const PerturbProblem& prob, const HyperParams& hp,
                       const Matrix* xhat_init = nullptr);
SolverState solve_kl(const PerturbProblem& prob, const HyperParams& hp,
                     const Matrix* xhat_init = nullptr);

SolverState solve(SolverKind kind, const PerturbProblem& prob, const HyperParams& hp,
                  const Matrix* xhat_init = nullptr);

void save_trace_csv(const std::string& path, const SolverState& state);

}  // namespace invc
