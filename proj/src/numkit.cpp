#include "invc/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace invc {

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

uint64_t splitmix64(uint64_t& s) {
  uint64_t z = (s += kGolden);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) {
  for (auto& word : state_) word = splitmix64(seed);
}

Rng Rng::substream(uint64_t seed, uint64_t index) {
  return Rng(seed ^ (kGolden * (index + 1)));
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  constexpr double kScale = 0x1.0p-53;
  double u = static_cast<double>(next_u64() >> 11) * kScale;
  return std::max(u, kScale);  // upper end is already <= 1 - 2^-53
}

double Rng::uniform_range(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
}

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double gumbel_sample(Rng& rng) { return -std::log(-std::log(rng.uniform())); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  double vmax = v[0];
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite input");
    vmax = std::max(vmax, x);
  }
  std::vector<double> out(v.size());
  double total = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - vmax);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

void SmoothIndicatorParams::validate() const {
  if (!(kappa > 0.0)) throw std::invalid_argument("smooth indicator: kappa must be > 0");
  if (tau == 1.0) throw std::invalid_argument("smooth indicator: tau must differ from 1");
}

double smooth_indicator(double x, const SmoothIndicatorParams& p) {
  return sigmoid(-p.kappa * (x - p.tau) / std::abs(1.0 - p.tau));
}

double smooth_indicator_grad(double x, const SmoothIndicatorParams& p) {
  const double s = smooth_indicator(x, p);
  return s * (1.0 - s) * (-p.kappa / std::abs(1.0 - p.tau));
}

std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& fn,
    std::vector<double> x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  std::vector<double> grad(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = fn(x);
    x[i] = xi - h;
    const double fm = fn(x);
    x[i] = xi;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace invc
