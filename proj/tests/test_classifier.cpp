#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "invc/classifier.hpp"
#include "invc/harness.hpp"
#include "invc/numkit.hpp"
#include "testutil.hpp"

using namespace invc;

TEST_CASE("predict_proba: zero weights give the uniform distribution") {
  const auto c = Classifier::logistic(3, 4);
  const auto probs = c.predict_proba(std::vector<double>{0.3, -1.0, 2.0});
  for (double q : probs) CHECK(q == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("predict_proba: two-class hand evaluation") {
  // Class 0 has zero weights; class 1 has w = (1, 0), no biases.
  auto c = Classifier::logistic(2, 2);
  c.w1 = {0.0, 0.0, 1.0, 0.0};
  const auto at_origin = c.predict_proba(std::vector<double>{0.0, 0.0});
  CHECK(at_origin[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(at_origin[1] == doctest::Approx(0.5).epsilon(1e-12));

  const auto shifted = c.predict_proba(std::vector<double>{1.0, 0.0});
  CHECK(shifted[0] == doctest::Approx(0.26894142136999512).epsilon(1e-5));
  CHECK(shifted[1] == doctest::Approx(0.7310585786300049).epsilon(1e-5));

  CHECK_THROWS_AS(c.predict_proba(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("predict_proba: invariant under a constant shift of all logits") {
  Rng rng(11);
  auto c = testutil::random_logistic(4, 3, rng);
  auto shifted = c;
  for (double& b : shifted.b1) b += 7.5;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(4);
    for (double& v : x) v = rng.uniform_range(-3.0, 3.0);
    const auto a = c.predict_proba(x);
    const auto b = shifted.predict_proba(x);
    for (int u = 0; u < 3; ++u) CHECK(a[u] == doctest::Approx(b[u]).epsilon(1e-10));
  }
}

TEST_CASE("input_grad: degenerate class weights give a zero gradient") {
  Rng rng(21);
  const auto c = testutil::random_mlp(3, 4, 5, rng);
  std::vector<double> x{0.2, -0.4, 1.0};
  for (const auto& w : {std::vector<double>(4, 0.0), std::vector<double>(4, 1.0)}) {
    const auto g = c.input_grad(x, w);
    for (double v : g) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("input_grad matches finite differences on 100 random models") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 2 + rng.uniform_int(4);
    const int k = 2 + rng.uniform_int(3);
    const bool mlp = trial % 2 == 1;
    const Classifier c = mlp ? testutil::random_mlp(p, k, 3 + rng.uniform_int(3), rng)
                             : testutil::random_logistic(p, k, rng);
    std::vector<double> x(p), w(k);
    for (double& v : x) v = rng.uniform_range(-2.0, 2.0);
    for (double& v : w) v = rng.uniform_range(-2.0, 2.0);

    const auto analytic = c.input_grad(x, w);
    const auto numeric = finite_diff_grad(
        [&](const std::vector<double>& v) {
          const auto probs = c.predict_proba(v);
          double acc = 0.0;
          for (int u = 0; u < k; ++u) acc += w[u] * probs[u];
          return acc;
        },
        x, 1e-6);
    for (int i = 0; i < p; ++i) {
      const double denom = std::max(1e-8, std::abs(numeric[i]));
      CHECK(std::abs(analytic[i] - numeric[i]) / denom < 1e-4);
    }
  }
}

TEST_CASE("kl_divergence: pinned values and non-negativity") {
  CHECK(kl_divergence(std::vector<double>{0.4, 0.6}, std::vector<double>{0.4, 0.6}) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(kl_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(kl_divergence(std::vector<double>{0.7, 0.3}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(0.08228287850505178).epsilon(1e-5));

  bool clamped = false;
  const double big = kl_divergence(std::vector<double>{1.0, 0.0},
                                   std::vector<double>{0.0, 1.0}, &clamped);
  CHECK(clamped);
  CHECK(big == doctest::Approx(-std::log(1e-12)).epsilon(1e-6));

  Rng rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 2 + rng.uniform_int(4);
    std::vector<double> a(k), b(k);
    for (double& v : a) v = rng.uniform_range(0.01, 1.0);
    for (double& v : b) v = rng.uniform_range(0.01, 1.0);
    double sa = 0.0, sb = 0.0;
    for (int u = 0; u < k; ++u) {
      sa += a[u];
      sb += b[u];
    }
    for (int u = 0; u < k; ++u) {
      a[u] /= sa;
      b[u] /= sb;
    }
    CHECK(kl_divergence(a, b) >= -1e-10);
    CHECK(kl_divergence(a, a) <= 1e-10);
  }
}

TEST_CASE("kl_grad is zero when the prediction equals the target") {
  Rng rng(51);
  const auto c = testutil::random_logistic(4, 3, rng);
  std::vector<double> x{0.5, -0.2, 1.0, 0.0};
  const auto target = c.predict_proba(x);
  for (double g : c.kl_grad(x, target)) CHECK(g == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kl_grad matches finite differences") {
  Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 3, k = 3;
    const auto c = trial % 2 ? testutil::random_mlp(p, k, 4, rng)
                             : testutil::random_logistic(p, k, rng);
    std::vector<double> x(p);
    for (double& v : x) v = rng.uniform_range(-1.5, 1.5);
    std::vector<double> target{0.2, 0.5, 0.3};

    const auto analytic = c.kl_grad(x, target);
    const auto numeric = finite_diff_grad(
        [&](const std::vector<double>& v) {
          return kl_divergence(target, c.predict_proba(v));
        },
        x, 1e-6);
    for (int i = 0; i < p; ++i) {
      CHECK(std::abs(analytic[i] - numeric[i]) / std::max(1e-8, std::abs(numeric[i])) <
            1e-4);
    }
  }
}

TEST_CASE("train: separable blobs reach high accuracy, deterministically") {
  const auto data = generate_synthetic({200, 4, 2, 6.0, 3});
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.seed = 9;
  const auto a = train(data, cfg, ClassifierKind::kMultinomialLogistic);
  CHECK(a.train_accuracy >= 0.95);

  const auto b = train(data, cfg, ClassifierKind::kMultinomialLogistic);
  CHECK(a.w1 == b.w1);
  CHECK(a.b1 == b.b1);
  CHECK(a.train_accuracy == b.train_accuracy);

  const auto m = train(data, cfg, ClassifierKind::kOneHiddenTanh, 6);
  CHECK(m.train_accuracy >= 0.95);
}

TEST_CASE("train: rejects bad configs and degenerate data") {
  const auto data = generate_synthetic({50, 3, 2, 4.0, 1});
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(data, cfg, ClassifierKind::kMultinomialLogistic),
                  std::invalid_argument);

  Dataset single;
  single.X = Matrix(10, 2);
  single.labels.assign(10, 0);
  single.num_classes = 2;
  CHECK_THROWS_AS(train(single, TrainConfig{}, ClassifierKind::kMultinomialLogistic),
                  std::invalid_argument);
}

TEST_CASE("classifier json round-trip is bit-exact") {
  const auto data = generate_synthetic({80, 5, 3, 3.0, 17});
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 4;
  const auto trained = train(data, cfg, ClassifierKind::kOneHiddenTanh, 5);

  const auto path = std::filesystem::temp_directory_path() / "invc_model_test.json";
  save_classifier(path.string(), trained);
  const auto loaded = load_classifier(path.string());
  CHECK(loaded.kind == trained.kind);
  CHECK(loaded.w1 == trained.w1);
  CHECK(loaded.b1 == trained.b1);
  CHECK(loaded.w2 == trained.w2);
  CHECK(loaded.b2 == trained.b2);
  CHECK(loaded.seed == trained.seed);
  CHECK(loaded.train_accuracy == trained.train_accuracy);
  std::filesystem::remove(path);
}
