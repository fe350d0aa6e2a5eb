#include "invc/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace invc {

int SequenceGroups::num_samples() const {
  int total = 0;
  for (const auto& g : groups) total += static_cast<int>(g.size());
  return total;
}

void SequenceGroups::validate(int n) const {
  std::vector<uint8_t> seen(n, 0);
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("groups: empty group");
    for (int j : g) {
      if (j < 0 || j >= n) throw std::invalid_argument("groups: index out of range");
      if (seen[j]) throw std::invalid_argument("groups: overlapping groups");
      seen[j] = 1;
    }
  }
  if (std::accumulate(seen.begin(), seen.end(), 0) != n) {
    throw std::invalid_argument("groups: partition must cover all samples");
  }
}

PerturbProblem PerturbProblem::make(Matrix X, std::vector<uint8_t> mask,
                                    std::vector<double> budgets,
                                    std::vector<int> desired, double delta,
                                    std::shared_ptr<const Classifier> clf,
                                    bool check_desired) {
  if (!clf) throw std::invalid_argument("problem: classifier required");
  const int n = X.rows, p = X.cols;
  if (p != clf->input_dim) throw std::invalid_argument("problem: X/classifier width mismatch");
  if (mask.size() != static_cast<size_t>(p)) throw std::invalid_argument("problem: mask size");
  if (budgets.size() != static_cast<size_t>(p)) throw std::invalid_argument("problem: budget size");
  if (desired.size() != static_cast<size_t>(n)) throw std::invalid_argument("problem: desired size");
  if (!(delta > 0.0)) throw std::invalid_argument("problem: delta must be > 0");
  for (double b : budgets) {
    if (!(b >= 0.0)) throw std::invalid_argument("problem: budgets must be >= 0");
  }
  for (double x : X.data) {
    if (!std::isfinite(x)) throw std::invalid_argument("problem: non-finite feature");
  }
  for (int j = 0; j < n; ++j) {
    if (desired[j] < 0 || desired[j] >= clf->num_classes) {
      throw std::invalid_argument("problem: desired class out of range");
    }
    if (check_desired && clf->predict(X.row(j)) == desired[j]) {
      throw std::invalid_argument(
          "problem: sample " + std::to_string(j) + " is already predicted as its desired class");
    }
  }
  PerturbProblem prob;
  prob.X = std::move(X);
  prob.mask = std::move(mask);
  prob.budgets = std::move(budgets);
  prob.desired = std::move(desired);
  prob.delta = delta;
  prob.clf = std::move(clf);
  return prob;
}

std::vector<double> budget_lhs(const PerturbProblem& prob, const Matrix& xhat,
                               std::span<const double> z) {
  const int n = prob.num_samples(), p = prob.num_features();
  if (!xhat.same_shape(prob.X)) throw std::invalid_argument("budget_lhs: shape mismatch");
  if (z.size() != static_cast<size_t>(n)) throw std::invalid_argument("budget_lhs: z size");
  for (double zj : z) {
    if (!(zj >= 0.0 && zj <= 1.0)) throw std::invalid_argument("budget_lhs: z outside [0,1]");
  }
  std::vector<double> g(p);
  for (int i = 0; i < p; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xhat(j, i) - prob.X(j, i);
      if (!prob.mask[i] && d != 0.0) {
        throw std::invalid_argument("budget_lhs: frozen feature " + std::to_string(i) +
                                    " was perturbed");
      }
      acc += z[j] * d * d;
    }
    g[i] = acc - prob.budgets[i];
  }
  return g;
}

double confidence_violation(const PerturbProblem& prob,
                            std::span<const double> xhat_j, int j) {
  const auto probs = prob.clf->predict_proba(xhat_j);
  const int want = prob.desired[j];
  double best = -1.0;
  for (int u = 0; u < prob.clf->num_classes; ++u) {
    if (u == want) continue;
    best = std::max(best, probs[u]);
  }
  return std::max(0.0, best - probs[want] + prob.delta);
}

std::vector<double> confidence_grad(const PerturbProblem& prob,
                                    std::span<const double> xhat_j, int j) {
  const auto probs = prob.clf->predict_proba(xhat_j);
  const int want = prob.desired[j];
  const int k = prob.clf->num_classes;
  int best = -1;
  for (int u = 0; u < k; ++u) {
    if (u == want) continue;
    if (best < 0 || probs[u] > probs[best]) best = u;  // smallest index wins ties
  }
  if (probs[best] - probs[want] + prob.delta <= 0.0) {
    return std::vector<double>(prob.num_features(), 0.0);
  }
  std::vector<double> w(k, 0.0);
  w[best] = 1.0;
  w[want] = -1.0;
  return prob.clf->input_grad(xhat_j, w);
}

std::vector<std::vector<double>> allocate_group_budgets(
    const SequenceGroups& groups, std::span<const double> budgets) {
  const int n = groups.num_samples();
  groups.validate(n);
  const int r_count = static_cast<int>(groups.groups.size());
  std::vector<std::vector<double>> alloc(r_count,
                                         std::vector<double>(budgets.size(), 0.0));
  for (size_t i = 0; i < budgets.size(); ++i) {
    const double b = budgets[i];
    for (int r = 0; r < r_count; ++r) {
      alloc[r][i] = b * (static_cast<double>(groups.groups[r].size()) / n);
    }
    // Correct the tail so the left-to-right sum reproduces b bitwise. The
    // sum is monotone in the last share, so bracket and bisect it. When no
    // last-share float lands exactly on b (the rounding grid of the final
    // addition can straddle it), nudge the second-to-last share by a few
    // ulps and bisect again; the second degree of freedom shifts the grid.
    if (r_count == 1) {
      alloc[0][i] = b;
      continue;
    }
    const auto bisect_last = [b](double partial, double start) -> std::optional<double> {
      const auto total = [partial](double s) { return partial + s; };
      if (total(start) == b) return start;
      double width = std::max(std::abs(b - total(start)), std::abs(b) * 1e-15 + 1e-300);
      double lo = start;
      for (int guard = 0; total(lo) > b && guard < 200; ++guard) {
        lo -= width;
        width *= 2.0;
      }
      width = std::max(std::abs(b - total(start)), std::abs(b) * 1e-15 + 1e-300);
      double hi = start;
      for (int guard = 0; total(hi) < b && guard < 200; ++guard) {
        hi += width;
        width *= 2.0;
      }
      for (int it = 0; it < 200; ++it) {
        if (total(lo) == b) return lo;
        if (total(hi) == b) return hi;
        const double mid = lo + (hi - lo) / 2.0;
        if (mid == lo || mid == hi) return std::nullopt;
        (total(mid) < b ? lo : hi) = mid;
      }
      return std::nullopt;
    };

    double& prev = alloc[r_count - 2][i];
    double& last = alloc[r_count - 1][i];
    const double prev0 = prev, last0 = last;
    bool fixed = false;
    for (int attempt = 0; attempt < 41 && !fixed; ++attempt) {
      const int offset = (attempt + 1) / 2 * (attempt % 2 == 1 ? 1 : -1);
      prev = prev0;
      for (int step = 0; step < std::abs(offset); ++step) {
        prev = std::nextafter(prev, offset > 0 ? HUGE_VAL : -HUGE_VAL);
      }
      double partial = 0.0;
      for (int r = 0; r + 1 < r_count; ++r) partial += alloc[r][i];
      if (const auto solved = bisect_last(partial, last0)) {
        last = *solved;
        fixed = true;
      }
    }
    if (!fixed) {
      prev = prev0;  // unreachable in practice; keep the proportional split
      last = last0;
    }
  }
  return alloc;
}

MetricsRow metrics(const PerturbProblem& prob, const Matrix& xhat,
                   std::span<const int> selected) {
  const int n = prob.num_samples(), p = prob.num_features();
  if (!xhat.same_shape(prob.X)) throw std::invalid_argument("metrics: shape mismatch");
  std::vector<uint8_t> seen(n, 0);
  for (int j : selected) {
    if (j < 0 || j >= n || seen[j]) throw std::invalid_argument("metrics: bad selection");
    seen[j] = 1;
  }

  MetricsRow row;
  row.selected_count = static_cast<int>(selected.size());
  row.empty_selection = selected.empty();

  std::vector<double> consumption(p, 0.0);
  for (int i = 0; i < p; ++i) {
    for (int j : selected) {
      const double d = xhat(j, i) - prob.X(j, i);
      consumption[i] += d * d;
    }
  }
  const double total_spent = std::accumulate(consumption.begin(), consumption.end(), 0.0);
  row.consumption_per_sample =
      selected.empty() ? 0.0 : total_spent / static_cast<double>(selected.size());

  double residual_sum = 0.0;
  for (int i = 0; i < p; ++i) {
    const double b = prob.budgets[i];
    if (b > 0.0) {
      residual_sum += (b - consumption[i]) / b;
    } else {
      residual_sum += consumption[i] == 0.0 ? 1.0 : 0.0;  // nothing spent of nothing
    }
  }
  row.mean_budget_residual = residual_sum / p;

  if (!selected.empty()) {
    double gap_sum = 0.0;
    for (int j : selected) {
      auto probs = prob.clf->predict_proba(xhat.row(j));
      std::nth_element(probs.begin(), probs.begin() + 1, probs.end(),
                       std::greater<double>());
      gap_sum += probs[0] - probs[1];
    }
    row.mean_prediction_gap = gap_sum / static_cast<double>(selected.size());
  }
  return row;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);
  int p = static_cast<int>(std::count(line.begin(), line.end(), ',') + 1) - 1;
  if (p < 1) throw std::runtime_error("dataset header needs at least one feature column");

  std::vector<double> values;
  std::vector<int> labels;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (int i = 0; i < p; ++i) {
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("short row in " + path);
      values.push_back(std::stod(cell));
    }
    if (!std::getline(ss, cell, ',')) throw std::runtime_error("missing label in " + path);
    labels.push_back(std::stoi(cell));
    ++rows;
  }
  Dataset data;
  data.X = Matrix(rows, p);
  data.X.data = std::move(values);
  data.labels = std::move(labels);
  data.num_classes =
      data.labels.empty() ? 0 : *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  return data;
}

void save_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (int i = 0; i < data.X.cols; ++i) out << "f" << i << ",";
  out << "label\n";
  for (int j = 0; j < data.X.rows; ++j) {
    for (int i = 0; i < data.X.cols; ++i) out << format_double(data.X(j, i)) << ",";
    out << data.labels[j] << "\n";
  }
}

PerturbProblem load_problem_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  in >> j;

  const int n = j.at("num_samples").get<int>();
  const int p = j.at("num_features").get<int>();
  Matrix X(n, p);
  X.data = j.at("X").get<std::vector<double>>();
  if (X.data.size() != static_cast<size_t>(n) * p) {
    throw std::runtime_error("problem json: X size mismatch");
  }
  auto mask = j.at("mask").get<std::vector<uint8_t>>();
  auto budgets = j.at("B").get<std::vector<double>>();
  auto desired = j.at("desired").get<std::vector<int>>();
  const double delta = j.at("delta").get<double>();

  const auto clf_rel = j.at("classifier").get<std::string>();
  const auto clf_path = std::filesystem::path(path).parent_path() / clf_rel;
  auto clf = std::make_shared<Classifier>(load_classifier(clf_path.string()));

  auto prob = PerturbProblem::make(std::move(X), std::move(mask), std::move(budgets),
                                   std::move(desired), delta, std::move(clf));
  if (j.contains("groups")) {
    SequenceGroups groups;
    groups.groups = j.at("groups").get<std::vector<std::vector<int>>>();
    groups.validate(prob.num_samples());
    prob.groups = std::move(groups);
  }
  return prob;
}

void save_problem_json(const std::string& path, const PerturbProblem& prob,
                       const std::string& classifier_relpath) {
  nlohmann::json j{
      {"num_samples", prob.num_samples()},
      {"num_features", prob.num_features()},
      {"X", prob.X.data},
      {"mask", prob.mask},
      {"B", prob.budgets},
      {"desired", prob.desired},
      {"delta", prob.delta},
      {"classifier", classifier_relpath},
  };
  if (prob.groups) j["groups"] = prob.groups->groups;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace invc
