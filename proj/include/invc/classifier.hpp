#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "invc/matrix.hpp"

#include "json.hpp"

namespace invc {

/// Labeled dataset: one sample per row, integer class labels in
/// [0, num_classes).
struct Dataset {
  Matrix X;
  std::vector<int> labels;
  int num_classes = 0;
};

enum class ClassifierKind { kMultinomialLogistic, kOneHiddenTanh };

std::string to_string(ClassifierKind kind);
ClassifierKind classifier_kind_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 100;
  int batch_size = 32;
  uint64_t seed = 0;
  double l2 = 0.0;

  void validate() const;
};

/// Differentiable probabilistic classifier f: R^p -> simplex over k classes
/// with analytic input gradients. Two closed variants are supported:
/// multinomial logistic (logits = W1 x + b1) and a one-hidden-layer tanh
/// network (logits = W2 tanh(W1 x + b1) + b2). Immutable after training;
/// safe for concurrent reads.
struct Classifier {
  ClassifierKind kind = ClassifierKind::kMultinomialLogistic;
  int input_dim = 0;   // p
  int num_classes = 0; // k
  int hidden_dim = 0;  // 0 for logistic
  // Row-major parameter blocks. Logistic: w1 is k x p, b1 has k entries and
  // w2/b2 are empty. Tanh net: w1 is h x p, b1 h, w2 k x h, b2 k.
  std::vector<double> w1, b1, w2, b2;
  uint64_t seed = 0;
  double train_accuracy = 0.0;

  static Classifier logistic(int p, int k);
  static Classifier one_hidden_tanh(int p, int k, int h);

  std::vector<double> logits(std::span<const double> x) const;
  std::vector<double> predict_proba(std::span<const double> x) const;
  int predict(std::span<const double> x) const;

  /// Gradient with respect to x of sum_u c_u * logit_u(x).
  std::vector<double> logit_grad(std::span<const double> x,
                                 std::span<const double> c) const;

  /// Gradient with respect to x of sum_u w_u * f(x)_u, where f is the
  /// predicted probability vector. Exact (chain rule through the softmax).
  std::vector<double> input_grad(std::span<const double> x,
                                 std::span<const double> w) const;

  /// Gradient with respect to x of KL(target || f(x)) for a target on the
  /// simplex; equals logit_grad(x, f(x) - target).
  std::vector<double> kl_grad(std::span<const double> x,
                              std::span<const double> target) const;

  nlohmann::json to_json() const;
  static Classifier from_json(const nlohmann::json& j);
};

/// KL divergence sum_u target_u ln(target_u / pred_u) with 0 ln 0 = 0.
/// pred entries are floored at 1e-12; if the floor fires where target > 0,
/// *clamped (when given) is set so callers can log it.
double kl_divergence(std::span<const double> target,
                     std::span<const double> pred, bool* clamped = nullptr);

/// Mini-batch gradient descent on the cross-entropy loss (plus optional L2
/// on the weights). Deterministic for a fixed config seed. Requires at
/// least two classes present in `data`.
Classifier train(const Dataset& data, const TrainConfig& cfg,
                 ClassifierKind kind, int hidden_dim = 0);

void save_classifier(const std::string& path, const Classifier& c);
Classifier load_classifier(const std::string& path);

}  // namespace invc
