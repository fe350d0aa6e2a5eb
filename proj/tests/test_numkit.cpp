#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "invc/numkit.hpp"

using namespace invc;

TEST_CASE("rng: same seed reproduces the stream exactly") {
  Rng a(42), b(42);
  for (int i = 0; i < 10000; ++i) {
    REQUIRE(a.next_u64() == b.next_u64());
  }
  Rng c(42), d(43);
  bool differs = false;
  for (int i = 0; i < 16; ++i) differs |= c.next_u64() != d.next_u64();
  CHECK(differs);
}

TEST_CASE("rng: uniforms stay strictly inside (0,1)") {
  Rng rng(7);
  constexpr double lo = 0x1.0p-53;
  for (int i = 0; i < 200000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= lo);
    REQUIRE(u <= 1.0 - lo);
  }
}

TEST_CASE("rng: substreams differ from the parent and from each other") {
  Rng base(5);
  Rng s0 = Rng::substream(5, 0);
  Rng s1 = Rng::substream(5, 1);
  CHECK(s0.next_u64() != s1.next_u64());
  CHECK(Rng::substream(5, 0).next_u64() != base.next_u64());
  // Same derivation twice gives the same stream.
  Rng s0b = Rng::substream(5, 0);
  Rng s0c = Rng::substream(5, 0);
  for (int i = 0; i < 100; ++i) CHECK(s0b.next_u64() == s0c.next_u64());
}

TEST_CASE("gumbel_sample: pinned values from the defining formula") {
  // u = 1/e gives g = -ln(-ln(1/e)) = -ln(1) = 0; u = e^-e gives -1.
  CHECK(-std::log(-std::log(1.0 / M_E)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(-std::log(-std::log(std::exp(-M_E))) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("gumbel_sample: mean matches the Euler-Mascheroni constant") {
  Rng rng(123);
  double total = 0.0;
  const int draws = 1000000;
  for (int i = 0; i < draws; ++i) total += gumbel_sample(rng);
  CHECK(total / draws == doctest::Approx(0.57721566490153286).epsilon(0.02));
  CHECK(std::abs(total / draws - 0.57721566490153286) < 0.01);
}

TEST_CASE("gumbel_sample: empirical cdf within 0.01 of exp(-exp(-g))") {
  Rng rng(99);
  const int draws = 100000;
  std::vector<double> sample(draws);
  for (double& g : sample) g = gumbel_sample(rng);
  std::sort(sample.begin(), sample.end());
  double worst = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double cdf = std::exp(-std::exp(-sample[i]));
    worst = std::max(worst, std::abs(cdf - static_cast<double>(i) / draws));
    worst = std::max(worst, std::abs(cdf - static_cast<double>(i + 1) / draws));
  }
  CHECK(worst < 0.01);
}

TEST_CASE("softmax: symmetry, shift invariance, simplex output") {
  const auto half = softmax(std::vector<double>{0.0, 0.0});
  CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(half[1] == doctest::Approx(0.5).epsilon(1e-12));

  const auto big = softmax(std::vector<double>{1000.0, 1000.0, 1000.0});
  for (double x : big) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const auto v = softmax(std::vector<double>{1.0, 2.0, 3.0});
  CHECK(v[0] == doctest::Approx(0.09003057317038046).epsilon(1e-5));
  CHECK(v[1] == doctest::Approx(0.24472847105479764).epsilon(1e-5));
  CHECK(v[2] == doctest::Approx(0.66524095577482183).epsilon(1e-5));

  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> in(1 + rng.uniform_int(6));
    for (double& x : in) x = rng.uniform_range(-50.0, 50.0);
    const auto out = softmax(in);
    double total = 0.0;
    for (double x : out) {
      CHECK(x > 0.0);
      total += x;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }

  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, INFINITY}), std::invalid_argument);
  CHECK_THROWS_AS(softmax(std::vector<double>{NAN}), std::invalid_argument);
  CHECK_THROWS_AS(softmax(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("smooth_indicator: center, saturation, golden value, monotone") {
  SmoothIndicatorParams p{2.0, 0.5};
  CHECK(smooth_indicator(0.5, p) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(smooth_indicator(-1e9, p) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(smooth_indicator(1e9, p) == doctest::Approx(0.0).epsilon(1e-12));
  // kappa=2, tau=0.5 at x=0: sigmoid(2) = 0.8807970779778823.
  CHECK(smooth_indicator(0.0, p) == doctest::Approx(0.8807970779778823).epsilon(1e-4));

  Rng rng(17);
  SmoothIndicatorParams q{rng.uniform_range(0.5, 4.0), 30.0};
  for (int trial = 0; trial < 1000; ++trial) {
    const double x1 = rng.uniform_range(-100.0, 100.0);
    const double x2 = x1 + rng.uniform_range(1e-6, 50.0);
    CHECK(smooth_indicator(x1, q) > smooth_indicator(x2, q));
  }

  CHECK_THROWS_AS((SmoothIndicatorParams{0.0, 0.5}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((SmoothIndicatorParams{1.0, 1.0}).validate(), std::invalid_argument);
}

TEST_CASE("smooth_indicator_grad matches finite differences") {
  const SmoothIndicatorParams p{2.0, 30.0};
  for (double x : {-20.0, 0.0, 15.0, 30.0, 55.0}) {
    const auto fd = finite_diff_grad(
        [&](const std::vector<double>& v) { return smooth_indicator(v[0], p); }, {x}, 1e-5);
    CHECK(smooth_indicator_grad(x, p) == doctest::Approx(fd[0]).epsilon(1e-6));
  }
}

TEST_CASE("finite_diff_grad: constants and quadratics") {
  const auto zero = finite_diff_grad(
      [](const std::vector<double>&) { return 3.0; }, {1.0, -2.0, 0.5}, 1e-5);
  for (double g : zero) CHECK(g == doctest::Approx(0.0).epsilon(1e-12));

  const auto quad = finite_diff_grad(
      [](const std::vector<double>& v) { return v[0] * v[0] + v[1] * v[1]; }, {1.0, 2.0},
      1e-5);
  CHECK(quad[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(quad[1] == doctest::Approx(4.0).epsilon(1e-6));

  CHECK_THROWS_AS(finite_diff_grad([](const std::vector<double>&) { return 0.0; }, {1.0}, 0.0),
                  std::invalid_argument);
}
