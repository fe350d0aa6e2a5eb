#include "invc/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "invc/numkit.hpp"

namespace invc {

namespace {

void check_dim(size_t got, int want, const char* what) {
  if (got != static_cast<size_t>(want)) {
    throw std::invalid_argument(std::string("classifier: ") + what + " dimension mismatch");
  }
}

}  // namespace

std::string to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::kMultinomialLogistic: return "multinomial-logistic";
    case ClassifierKind::kOneHiddenTanh: return "one-hidden-layer-tanh";
  }
  throw std::logic_error("unknown classifier kind");
}

ClassifierKind classifier_kind_from_string(const std::string& s) {
  if (s == "multinomial-logistic") return ClassifierKind::kMultinomialLogistic;
  if (s == "one-hidden-layer-tanh") return ClassifierKind::kOneHiddenTanh;
  throw std::invalid_argument("unknown classifier kind: " + s);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (l2 < 0.0) throw std::invalid_argument("train: l2 must be >= 0");
}

Classifier Classifier::logistic(int p, int k) {
  Classifier c;
  c.kind = ClassifierKind::kMultinomialLogistic;
  c.input_dim = p;
  c.num_classes = k;
  c.hidden_dim = 0;
  c.w1.assign(static_cast<size_t>(k) * p, 0.0);
  c.b1.assign(k, 0.0);
  return c;
}

Classifier Classifier::one_hidden_tanh(int p, int k, int h) {
  Classifier c;
  c.kind = ClassifierKind::kOneHiddenTanh;
  c.input_dim = p;
  c.num_classes = k;
  c.hidden_dim = h;
  c.w1.assign(static_cast<size_t>(h) * p, 0.0);
  c.b1.assign(h, 0.0);
  c.w2.assign(static_cast<size_t>(k) * h, 0.0);
  c.b2.assign(k, 0.0);
  return c;
}

std::vector<double> Classifier::logits(std::span<const double> x) const {
  check_dim(x.size(), input_dim, "input");
  if (kind == ClassifierKind::kMultinomialLogistic) {
    std::vector<double> out(num_classes);
    for (int u = 0; u < num_classes; ++u) {
      double acc = b1[u];
      const double* row = &w1[static_cast<size_t>(u) * input_dim];
      for (int i = 0; i < input_dim; ++i) acc += row[i] * x[i];
      out[u] = acc;
    }
    return out;
  }
  std::vector<double> hidden(hidden_dim);
  for (int m = 0; m < hidden_dim; ++m) {
    double acc = b1[m];
    const double* row = &w1[static_cast<size_t>(m) * input_dim];
    for (int i = 0; i < input_dim; ++i) acc += row[i] * x[i];
    hidden[m] = std::tanh(acc);
  }
  std::vector<double> out(num_classes);
  for (int u = 0; u < num_classes; ++u) {
    double acc = b2[u];
    const double* row = &w2[static_cast<size_t>(u) * hidden_dim];
    for (int m = 0; m < hidden_dim; ++m) acc += row[m] * hidden[m];
    out[u] = acc;
  }
  return out;
}

std::vector<double> Classifier::predict_proba(std::span<const double> x) const {
  return softmax(logits(x));
}

int Classifier::predict(std::span<const double> x) const {
  const auto probs = predict_proba(x);
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<double> Classifier::logit_grad(std::span<const double> x,
                                           std::span<const double> c) const {
  check_dim(x.size(), input_dim, "input");
  check_dim(c.size(), num_classes, "class weight");
  std::vector<double> grad(input_dim, 0.0);
  if (kind == ClassifierKind::kMultinomialLogistic) {
    for (int u = 0; u < num_classes; ++u) {
      if (c[u] == 0.0) continue;
      const double* row = &w1[static_cast<size_t>(u) * input_dim];
      for (int i = 0; i < input_dim; ++i) grad[i] += c[u] * row[i];
    }
    return grad;
  }
  // Backprop through logits = W2 tanh(W1 x + b1) + b2.
  std::vector<double> hidden(hidden_dim);
  for (int m = 0; m < hidden_dim; ++m) {
    double acc = b1[m];
    const double* row = &w1[static_cast<size_t>(m) * input_dim];
    for (int i = 0; i < input_dim; ++i) acc += row[i] * x[i];
    hidden[m] = std::tanh(acc);
  }
  std::vector<double> dhidden(hidden_dim, 0.0);
  for (int u = 0; u < num_classes; ++u) {
    if (c[u] == 0.0) continue;
    const double* row = &w2[static_cast<size_t>(u) * hidden_dim];
    for (int m = 0; m < hidden_dim; ++m) dhidden[m] += c[u] * row[m];
  }
  for (int m = 0; m < hidden_dim; ++m) {
    dhidden[m] *= 1.0 - hidden[m] * hidden[m];
    if (dhidden[m] == 0.0) continue;
    const double* row = &w1[static_cast<size_t>(m) * input_dim];
    for (int i = 0; i < input_dim; ++i) grad[i] += dhidden[m] * row[i];
  }
  return grad;
}

std::vector<double> Classifier::input_grad(std::span<const double> x,
                                           std::span<const double> w) const {
  check_dim(w.size(), num_classes, "class weight");
  const auto probs = predict_proba(x);
  double mean = 0.0;
  for (int u = 0; u < num_classes; ++u) mean += w[u] * probs[u];
  std::vector<double> dlogits(num_classes);
  for (int u = 0; u < num_classes; ++u) dlogits[u] = probs[u] * (w[u] - mean);
  return logit_grad(x, dlogits);
}

std::vector<double> Classifier::kl_grad(std::span<const double> x,
                                        std::span<const double> target) const {
  check_dim(target.size(), num_classes, "target");
  auto probs = predict_proba(x);
  for (int u = 0; u < num_classes; ++u) probs[u] -= target[u];
  return logit_grad(x, probs);
}

double kl_divergence(std::span<const double> target, std::span<const double> pred,
                     bool* clamped) {
  if (target.size() != pred.size()) {
    throw std::invalid_argument("kl_divergence: length mismatch");
  }
  constexpr double kFloor = 1e-12;
  double total = 0.0;
  for (size_t u = 0; u < target.size(); ++u) {
    if (target[u] <= 0.0) continue;
    double q = pred[u];
    if (q < kFloor) {
      q = kFloor;
      if (clamped != nullptr) *clamped = true;
    }
    total += target[u] * std::log(target[u] / q);
  }
  return total;
}

namespace {

// One SGD step on a mini-batch; returns nothing, updates weights in place.
// dlogits = (f - onehot(y)) / batch for each sample, backpropagated exactly.
void sgd_batch(Classifier& c, const Dataset& data, std::span<const int> batch,
               double lr, double l2) {
  const int p = c.input_dim;
  const int k = c.num_classes;
  const int h = c.hidden_dim;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  if (c.kind == ClassifierKind::kMultinomialLogistic) {
    std::vector<double> gw(static_cast<size_t>(k) * p, 0.0), gb(k, 0.0);
    for (int j : batch) {
      const auto x = data.X.row(j);
      const auto probs = c.predict_proba(x);
      for (int u = 0; u < k; ++u) {
        const double d = (probs[u] - (data.labels[j] == u ? 1.0 : 0.0)) * inv_batch;
        gb[u] += d;
        double* grow = &gw[static_cast<size_t>(u) * p];
        for (int i = 0; i < p; ++i) grow[i] += d * x[i];
      }
    }
    for (size_t i = 0; i < c.w1.size(); ++i) c.w1[i] -= lr * (gw[i] + l2 * c.w1[i]);
    for (int u = 0; u < k; ++u) c.b1[u] -= lr * gb[u];
    return;
  }

  std::vector<double> gw1(static_cast<size_t>(h) * p, 0.0), gb1(h, 0.0);
  std::vector<double> gw2(static_cast<size_t>(k) * h, 0.0), gb2(k, 0.0);
  std::vector<double> hidden(h), dlogits(k), dhidden(h);
  for (int j : batch) {
    const auto x = data.X.row(j);
    for (int m = 0; m < h; ++m) {
      double acc = c.b1[m];
      const double* row = &c.w1[static_cast<size_t>(m) * p];
      for (int i = 0; i < p; ++i) acc += row[i] * x[i];
      hidden[m] = std::tanh(acc);
    }
    std::vector<double> logits(k);
    for (int u = 0; u < k; ++u) {
      double acc = c.b2[u];
      const double* row = &c.w2[static_cast<size_t>(u) * h];
      for (int m = 0; m < h; ++m) acc += row[m] * hidden[m];
      logits[u] = acc;
    }
    const auto probs = softmax(logits);
    for (int u = 0; u < k; ++u) {
      dlogits[u] = (probs[u] - (data.labels[j] == u ? 1.0 : 0.0)) * inv_batch;
      gb2[u] += dlogits[u];
      double* grow = &gw2[static_cast<size_t>(u) * h];
      for (int m = 0; m < h; ++m) grow[m] += dlogits[u] * hidden[m];
    }
    std::fill(dhidden.begin(), dhidden.end(), 0.0);
    for (int u = 0; u < k; ++u) {
      const double* row = &c.w2[static_cast<size_t>(u) * h];
      for (int m = 0; m < h; ++m) dhidden[m] += dlogits[u] * row[m];
    }
    for (int m = 0; m < h; ++m) {
      const double d = dhidden[m] * (1.0 - hidden[m] * hidden[m]);
      if (d == 0.0) continue;
      gb1[m] += d;
      double* grow = &gw1[static_cast<size_t>(m) * p];
      for (int i = 0; i < p; ++i) grow[i] += d * x[i];
    }
  }
  for (size_t i = 0; i < c.w1.size(); ++i) c.w1[i] -= lr * (gw1[i] + l2 * c.w1[i]);
  for (int m = 0; m < h; ++m) c.b1[m] -= lr * gb1[m];
  for (size_t i = 0; i < c.w2.size(); ++i) c.w2[i] -= lr * (gw2[i] + l2 * c.w2[i]);
  for (int u = 0; u < k; ++u) c.b2[u] -= lr * gb2[u];
}

}  // namespace

Classifier train(const Dataset& data, const TrainConfig& cfg, ClassifierKind kind,
                 int hidden_dim) {
  cfg.validate();
  const int n = data.X.rows;
  const int p = data.X.cols;
  if (n == 0) throw std::invalid_argument("train: empty dataset");
  int k = data.num_classes;
  if (k == 0) k = *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  std::vector<int> seen(k, 0);
  for (int y : data.labels) {
    if (y < 0 || y >= k) throw std::invalid_argument("train: label out of range");
    seen[y] = 1;
  }
  if (std::accumulate(seen.begin(), seen.end(), 0) < 2) {
    throw std::invalid_argument("train: need at least two classes present");
  }

  Rng rng(cfg.seed);
  Classifier c;
  if (kind == ClassifierKind::kMultinomialLogistic) {
    c = Classifier::logistic(p, k);
  } else {
    if (hidden_dim < 1) throw std::invalid_argument("train: hidden_dim must be >= 1");
    c = Classifier::one_hidden_tanh(p, k, hidden_dim);
    const double r1 = 1.0 / std::sqrt(static_cast<double>(p));
    for (double& w : c.w1) w = rng.uniform_range(-r1, r1);
    const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    for (double& w : c.w2) w = rng.uniform_range(-r2, r2);
  }
  c.seed = cfg.seed;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the run's generator keeps epochs reproducible.
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(i + 1)]);
    }
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int len = std::min(cfg.batch_size, n - start);
      sgd_batch(c, data, std::span<const int>(order.data() + start, len),
                cfg.learning_rate, cfg.l2);
    }
  }

  int correct = 0;
  for (int j = 0; j < n; ++j) {
    if (c.predict(data.X.row(j)) == data.labels[j]) ++correct;
  }
  c.train_accuracy = static_cast<double>(correct) / n;
  return c;
}

nlohmann::json Classifier::to_json() const {
  return nlohmann::json{
      {"kind", to_string(kind)},
      {"dims", {{"p", input_dim}, {"k", num_classes}, {"h", hidden_dim}}},
      {"weights", {{"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}}},
      {"seed", seed},
      {"train_accuracy", train_accuracy},
  };
}

Classifier Classifier::from_json(const nlohmann::json& j) {
  Classifier c;
  c.kind = classifier_kind_from_string(j.at("kind").get<std::string>());
  const auto& dims = j.at("dims");
  c.input_dim = dims.at("p").get<int>();
  c.num_classes = dims.at("k").get<int>();
  c.hidden_dim = dims.at("h").get<int>();
  const auto& w = j.at("weights");
  c.w1 = w.at("w1").get<std::vector<double>>();
  c.b1 = w.at("b1").get<std::vector<double>>();
  c.w2 = w.at("w2").get<std::vector<double>>();
  c.b2 = w.at("b2").get<std::vector<double>>();
  c.seed = j.at("seed").get<uint64_t>();
  c.train_accuracy = j.at("train_accuracy").get<double>();
  const size_t w1_want = static_cast<size_t>(c.kind == ClassifierKind::kMultinomialLogistic
                                                 ? c.num_classes
                                                 : c.hidden_dim) *
                         c.input_dim;
  if (c.w1.size() != w1_want) throw std::invalid_argument("classifier json: bad w1 size");
  return c;
}

void save_classifier(const std::string& path, const Classifier& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << c.to_json().dump(2) << "\n";
}

Classifier load_classifier(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  in >> j;
  return Classifier::from_json(j);
}

}  // namespace invc
