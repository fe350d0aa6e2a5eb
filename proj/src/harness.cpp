#include "invc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace invc {

namespace {

// Random orthonormal directions via Gram-Schmidt on Gaussian vectors.
std::vector<std::vector<double>> orthonormal_directions(int count, int dim, Rng& rng) {
  std::vector<std::vector<double>> dirs;
  while (static_cast<int>(dirs.size()) < count) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    for (const auto& u : dirs) {
      double dot = 0.0;
      for (int i = 0; i < dim; ++i) dot += u[i] * v[i];
      for (int i = 0; i < dim; ++i) v[i] -= dot * u[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;  // rare degenerate draw, resample
    for (double& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.k < 2 || spec.n < spec.k || spec.p < 1) {
    throw ConfigError("synthetic data: need n >= k >= 2 and p >= 1");
  }
  Rng rng(spec.seed);

  // Orthonormal mean directions give exact pairwise distance `separation`
  // when scaled by separation / sqrt(2). With p < k orthonormality is
  // impossible; fall back to random unit directions (approximate spacing).
  std::vector<std::vector<double>> dirs;
  if (spec.p >= spec.k) {
    dirs = orthonormal_directions(spec.k, spec.p, rng);
  } else {
    for (int c = 0; c < spec.k; ++c) {
      std::vector<double> v(spec.p);
      double norm = 0.0;
      for (double& x : v) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::max(std::sqrt(norm), 1e-8);
      for (double& x : v) x /= norm;
      dirs.push_back(std::move(v));
    }
  }
  const double scale = spec.separation / std::sqrt(2.0);

  Dataset data;
  data.X = Matrix(spec.n, spec.p);
  data.labels.resize(spec.n);
  data.num_classes = spec.k;
  for (int j = 0; j < spec.n; ++j) {
    const int label = j % spec.k;  // round-robin keeps prefixes balanced
    data.labels[j] = label;
    for (int i = 0; i < spec.p; ++i) {
      data.X(j, i) = scale * dirs[label][i] + rng.normal();
    }
  }
  return data;
}

void ExperimentConfig::validate() const {
  if (!synthetic && dataset_csv.empty()) {
    throw ConfigError("config: need a synthetic spec or a dataset csv");
  }
  if (budget_levels.empty()) throw ConfigError("config: budget_levels must not be empty");
  for (double level : budget_levels) {
    if (!(level > 0.0)) throw ConfigError("config: budget levels must be > 0");
  }
  if (!(scale_budget_level > 0.0)) throw ConfigError("config: scale_budget_level must be > 0");
  if (solvers.empty()) throw ConfigError("config: need at least one solver");
  if (seeds.empty()) throw ConfigError("config: need at least one seed");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("config: holdout_fraction must be in (0,1)");
  }
  if (candidate_count < 0) throw ConfigError("config: candidate_count must be >= 0");
  if (positive_class < 0) throw ConfigError("config: positive_class must be >= 0");
  for (size_t t = 1; t < sizes.size(); ++t) {
    if (sizes[t] <= sizes[t - 1]) throw ConfigError("config: sizes must be increasing");
  }
  try {
    hp.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

namespace {

void apply_hp_json(HyperParams& hp, const nlohmann::json& j) {
  if (j.contains("delta")) hp.delta = j["delta"].get<double>();
  if (j.contains("kappa")) hp.kappa = j["kappa"].get<double>();
  if (j.contains("tau")) hp.tau = j["tau"].get<double>();
  if (j.contains("omega")) hp.omega = j["omega"].get<double>();
  if (j.contains("mc_samples")) hp.mc_samples = j["mc_samples"].get<int>();
  if (j.contains("cat_draws")) hp.cat_draws = j["cat_draws"].get<int>();
  if (j.contains("epsilon")) hp.epsilon = j["epsilon"].get<double>();
  if (j.contains("dist_weight")) hp.dist_weight = j["dist_weight"].get<double>();
  if (j.contains("alpha")) hp.alpha = j["alpha"].get<double>();
  if (j.contains("beta")) hp.beta = j["beta"].get<double>();
  if (j.contains("gamma0")) hp.gamma0 = j["gamma0"].get<double>();
  if (j.contains("eta0")) hp.eta0 = j["eta0"].get<double>();
  if (j.contains("outer_iters")) hp.outer_iters = j["outer_iters"].get<int>();
  if (j.contains("inner_iters")) hp.inner_iters = j["inner_iters"].get<int>();
  if (j.contains("lambda0")) hp.lambda0 = j["lambda0"].get<double>();
  if (j.contains("mu0")) hp.mu0 = j["mu0"].get<double>();
  if (j.contains("noise_std")) hp.noise_std = j["noise_std"].get<double>();
  if (j.contains("seed")) hp.seed = j["seed"].get<uint64_t>();
}

std::string resolve_path(const std::string& base_dir, const std::string& path) {
  if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base_dir) / path).string();
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir) {
  ExperimentConfig cfg;
  try {
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      if (d.contains("synthetic")) {
        const auto& s = d["synthetic"];
        SyntheticSpec spec;
        if (s.contains("n")) spec.n = s["n"].get<int>();
        if (s.contains("p")) spec.p = s["p"].get<int>();
        if (s.contains("k")) spec.k = s["k"].get<int>();
        if (s.contains("separation")) spec.separation = s["separation"].get<double>();
        if (s.contains("seed")) spec.seed = s["seed"].get<uint64_t>();
        cfg.synthetic = spec;
      }
      if (d.contains("csv")) cfg.dataset_csv = resolve_path(base_dir, d["csv"].get<std::string>());
    }
    if (j.contains("classifier")) {
      const auto& c = j["classifier"];
      if (c.contains("file")) {
        cfg.classifier_file = resolve_path(base_dir, c["file"].get<std::string>());
      }
      if (c.contains("kind")) {
        cfg.clf_kind = classifier_kind_from_string(c["kind"].get<std::string>());
      }
      if (c.contains("hidden")) cfg.hidden_dim = c["hidden"].get<int>();
      if (c.contains("train")) {
        const auto& t = c["train"];
        if (t.contains("lr")) cfg.train_cfg.learning_rate = t["lr"].get<double>();
        if (t.contains("epochs")) cfg.train_cfg.epochs = t["epochs"].get<int>();
        if (t.contains("batch")) cfg.train_cfg.batch_size = t["batch"].get<int>();
        if (t.contains("l2")) cfg.train_cfg.l2 = t["l2"].get<double>();
        if (t.contains("seed")) cfg.train_cfg.seed = t["seed"].get<uint64_t>();
      }
    }
    if (j.contains("candidates")) {
      const auto& c = j["candidates"];
      if (c.contains("count")) cfg.candidate_count = c["count"].get<int>();
      if (c.contains("positive_class")) cfg.positive_class = c["positive_class"].get<int>();
      if (c.contains("holdout_fraction")) {
        cfg.holdout_fraction = c["holdout_fraction"].get<double>();
      }
    }
    if (j.contains("mask")) cfg.mask = j["mask"].get<std::vector<uint8_t>>();
    if (j.contains("budget_levels")) {
      cfg.budget_levels = j["budget_levels"].get<std::vector<double>>();
    }
    if (j.contains("scale_budget_level")) {
      cfg.scale_budget_level = j["scale_budget_level"].get<double>();
    }
    if (j.contains("sizes")) cfg.sizes = j["sizes"].get<std::vector<int>>();
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<uint64_t>>();
    if (j.contains("solvers")) {
      cfg.solvers.clear();
      for (const auto& s : j["solvers"]) {
        cfg.solvers.push_back(solver_kind_from_string(s.get<std::string>()));
      }
    }
    if (j.contains("hp")) apply_hp_json(cfg.hp, j["hp"]);
    if (j.contains("out_dir")) {
      cfg.out_dir = resolve_path(base_dir, j["out_dir"].get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path().string());
}

Instance build_instance(const ExperimentConfig& cfg) {
  cfg.validate();
  Instance inst;
  if (cfg.synthetic) {
    inst.data = generate_synthetic(*cfg.synthetic);
  } else {
    inst.data = load_dataset_csv(cfg.dataset_csv);
  }
  const int n = inst.data.X.rows;
  const int p = inst.data.X.cols;

  if (!cfg.classifier_file.empty()) {
    inst.clf = std::make_shared<Classifier>(load_classifier(cfg.classifier_file));
    if (inst.clf->input_dim != p) throw ConfigError("config: classifier width mismatch");
  } else {
    Dataset train_split;
    const int train_n = n - static_cast<int>(std::floor(n * cfg.holdout_fraction));
    if (train_n < 2) throw ConfigError("config: training split too small");
    train_split.X = Matrix(train_n, p);
    std::copy_n(inst.data.X.data.begin(), static_cast<size_t>(train_n) * p,
                train_split.X.data.begin());
    train_split.labels.assign(inst.data.labels.begin(), inst.data.labels.begin() + train_n);
    train_split.num_classes = inst.data.num_classes;
    inst.clf = std::make_shared<Classifier>(
        train(train_split, cfg.train_cfg, cfg.clf_kind, cfg.hidden_dim));
  }

  if (cfg.positive_class >= inst.clf->num_classes) {
    throw ConfigError("config: positive_class out of range");
  }
  inst.positive_class = cfg.positive_class;
  inst.delta = cfg.hp.delta;
  inst.mask = cfg.mask.empty() ? std::vector<uint8_t>(p, 1) : cfg.mask;
  if (inst.mask.size() != static_cast<size_t>(p)) {
    throw ConfigError("config: mask length mismatch");
  }

  // Candidate pool: holdout samples the classifier predicts correctly into
  // a non-desired class, in dataset order.
  const int holdout_start = n - static_cast<int>(std::floor(n * cfg.holdout_fraction));
  for (int j = holdout_start; j < n; ++j) {
    if (inst.data.labels[j] == cfg.positive_class) continue;
    if (inst.clf->predict(inst.data.X.row(j)) != inst.data.labels[j]) continue;
    inst.candidates.push_back(j);
  }
  const int want = cfg.candidate_count;
  if (want > 0) {
    if (static_cast<int>(inst.candidates.size()) < want) {
      throw ConfigError("config: only " + std::to_string(inst.candidates.size()) +
                        " eligible candidates, need " + std::to_string(want));
    }
    inst.candidates.resize(want);
  }
  if (inst.candidates.empty()) throw ConfigError("config: no eligible candidates");
  return inst;
}

PerturbProblem make_problem(const Instance& inst, std::span<const double> budgets,
                            int count) {
  if (count <= 0 || count > static_cast<int>(inst.candidates.size())) {
    throw ConfigError("make_problem: bad candidate count");
  }
  const int p = inst.data.X.cols;
  Matrix X(count, p);
  for (int j = 0; j < count; ++j) {
    const auto src = inst.data.X.row(inst.candidates[j]);
    std::copy(src.begin(), src.end(), X.row(j).begin());
  }
  return PerturbProblem::make(std::move(X), inst.mask,
                              std::vector<double>(budgets.begin(), budgets.end()),
                              std::vector<int>(count, inst.positive_class), inst.delta,
                              inst.clf);
}

std::vector<double> calibrate_budget(const PerturbProblem& prob, const HyperParams& hp) {
  PerturbProblem unlimited = prob;
  unlimited.budgets.assign(prob.num_features(), 1e9);
  const auto state = solve_kl(unlimited, hp);
  std::vector<double> reference(prob.num_features(), 0.0);
  for (int i = 0; i < prob.num_features(); ++i) {
    for (int j = 0; j < prob.num_samples(); ++j) {
      const double d = state.xhat(j, i) - prob.X(j, i);
      reference[i] += d * d;
    }
  }
  return reference;
}

SolverRun run_solver(const PerturbProblem& prob, SolverKind kind, const HyperParams& hp,
                     const Matrix* xhat_init) {
  SolverRun run;
  if (!prob.groups || prob.groups->groups.size() <= 1) {
    run.states.push_back(solve(kind, prob, hp, xhat_init));
    run.xhat = run.states.back().xhat;
    return run;
  }

  const auto& groups = prob.groups->groups;
  const auto alloc = allocate_group_budgets(*prob.groups, prob.budgets);
  run.xhat = prob.X;
  for (size_t r = 0; r < groups.size(); ++r) {
    const auto& rows = groups[r];
    const int gn = static_cast<int>(rows.size());
    Matrix gx(gn, prob.num_features());
    std::vector<int> gdesired(gn);
    for (int t = 0; t < gn; ++t) {
      const auto src = prob.X.row(rows[t]);
      std::copy(src.begin(), src.end(), gx.row(t).begin());
      gdesired[t] = prob.desired[rows[t]];
    }
    auto sub = PerturbProblem::make(std::move(gx), prob.mask, alloc[r], std::move(gdesired),
                                    prob.delta, prob.clf, /*check_desired=*/false);
    HyperParams hp_r = hp;
    hp_r.seed = hp.seed + r;
    std::optional<Matrix> sub_init;
    if (xhat_init != nullptr) {
      sub_init = Matrix(gn, prob.num_features());
      for (int t = 0; t < gn; ++t) {
        const auto src = xhat_init->row(rows[t]);
        std::copy(src.begin(), src.end(), sub_init->row(t).begin());
      }
    }
    auto state = solve(kind, sub, hp_r, sub_init ? &*sub_init : nullptr);
    for (int t = 0; t < gn; ++t) {
      const auto src = state.xhat.row(t);
      std::copy(src.begin(), src.end(), run.xhat.row(rows[t]).begin());
    }
    run.states.push_back(std::move(state));
  }
  return run;
}

}  // namespace invc
