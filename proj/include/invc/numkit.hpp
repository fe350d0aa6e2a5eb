#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace invc {

/// Deterministic pseudo-random generator: xoshiro256++ with SplitMix64
/// seed expansion. Pure 64-bit integer arithmetic, so a given seed yields
/// the same stream on every platform.
///
/// uniform() maps the top 53 bits to a double and clamps to
/// [2^-53, 1 - 2^-53]; it never returns exactly 0 or 1.
///
/// An Rng must not be shared across threads. Parallel workers derive
/// independent generators with substream(seed, index), which reseeds
/// through SplitMix64 from seed XOR (golden-ratio constant * (index + 1)).
class Rng {
 public:
  explicit Rng(uint64_t seed);

  /// Generator for worker/replicate `index` of a run seeded with `seed`.
  static Rng substream(uint64_t seed, uint64_t index);

  uint64_t next_u64();

  /// Uniform double in (0, 1), clamped to [2^-53, 1 - 2^-53].
  double uniform();

  /// Uniform double in (lo, hi).
  double uniform_range(double lo, double hi);

  /// Uniform integer in [0, n). n must be positive. Uses next_u64() % n;
  /// the modulo bias is irrelevant for the generator sizes used here and
  /// keeps the mapping trivially portable.
  int uniform_int(int n);

  /// Standard normal via Box-Muller (consumes two uniforms per call).
  double normal();

 private:
  std::array<uint64_t, 4> state_;
};

/// Standard Gumbel(0,1) draw: -ln(-ln u).
double gumbel_sample(Rng& rng);

/// Numerically stable logistic function.
double sigmoid(double x);

/// Softmax with max-subtraction. Throws std::invalid_argument on empty or
/// non-finite input. Output entries are positive and sum to 1.
std::vector<double> softmax(std::span<const double> v);

/// Parameters of the sigmoid surrogate for the step indicator 1[x <= 0]:
/// kappa controls sharpness, tau shifts the transition point. Requires
/// kappa > 0 and tau != 1.
struct SmoothIndicatorParams {
  double kappa = 2.0;
  double tau = 30.0;

  void validate() const;
};

/// Smooth surrogate for 1[x <= 0]: sigmoid(-kappa * (x - tau) / |1 - tau|).
/// Strictly decreasing in x, 0.5 at x = tau, saturating to 1 as x -> -inf
/// and to 0 as x -> +inf. The effective slope is kappa / |1 - tau|.
double smooth_indicator(double x, const SmoothIndicatorParams& p);

/// d/dx of smooth_indicator.
double smooth_indicator_grad(double x, const SmoothIndicatorParams& p);

/// Central finite differences: (fn(x + h e_i) - fn(x - h e_i)) / 2h.
/// Test oracle for the analytic gradients in this library.
std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& fn,
    std::vector<double> x, double h);

}  // namespace invc
