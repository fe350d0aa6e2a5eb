#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "invc/harness.hpp"

namespace invc {

namespace fs = std::filesystem;

namespace {

std::string opt_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

constexpr const char* kReportHeader =
    "sweep,solver,budget_level,sample_size,init,seed,status,selected_count,"
    "consumption_per_sample,mean_budget_residual,mean_prediction_gap,"
    "rel_improvement_vs_kl,knapsack_optimal,problem_path,trace_path,xhat_path,error";

}  // namespace

void save_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kReportHeader << "\n";
  for (const auto& r : rows) {
    out << r.sweep << "," << r.solver << "," << format_double(r.budget_level) << ","
        << r.sample_size << "," << r.init << "," << r.seed << "," << r.status << ","
        << r.selected_count << "," << format_double(r.consumption_per_sample) << ","
        << format_double(r.mean_budget_residual) << "," << opt_cell(r.mean_prediction_gap)
        << "," << opt_cell(r.rel_improvement_vs_kl) << ","
        << (r.knapsack_optimal ? 1 : 0) << "," << r.problem_path << "," << r.trace_path
        << "," << r.xhat_path << "," << r.error << "\n";
  }
}

std::vector<ReportRow> load_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw std::runtime_error("unrecognized report schema in " + path);
  }
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() < 16) throw std::runtime_error("short report row in " + path);
    cells.resize(17);
    ReportRow r;
    r.sweep = cells[0];
    r.solver = cells[1];
    r.budget_level = std::stod(cells[2]);
    r.sample_size = std::stoi(cells[3]);
    r.init = cells[4];
    r.seed = std::stoull(cells[5]);
    r.status = cells[6];
    r.selected_count = std::stoi(cells[7]);
    r.consumption_per_sample = std::stod(cells[8]);
    r.mean_budget_residual = std::stod(cells[9]);
    if (!cells[10].empty()) r.mean_prediction_gap = std::stod(cells[10]);
    if (!cells[11].empty()) r.rel_improvement_vs_kl = std::stod(cells[11]);
    r.knapsack_optimal = cells[12] == "1";
    r.problem_path = cells[13];
    r.trace_path = cells[14];
    r.xhat_path = cells[15];
    r.error = cells[16];
    rows.push_back(std::move(r));
  }
  return rows;
}

void save_summary_json(const std::string& path, const std::vector<ReportRow>& rows) {
  // Group means in first-occurrence order over (sweep, solver, level, size, init).
  struct Agg {
    int runs = 0, ok = 0;
    double selected = 0, consumption = 0, residual = 0;
    double gap = 0;
    int gap_n = 0;
    double rel = 0;
    int rel_n = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Agg> agg;
  for (const auto& r : rows) {
    const std::string key = r.sweep + "|" + r.solver + "|" + format_double(r.budget_level) +
                            "|" + std::to_string(r.sample_size) + "|" + r.init;
    if (!agg.count(key)) order.push_back(key);
    auto& a = agg[key];
    ++a.runs;
    if (r.status != "ok") continue;
    ++a.ok;
    a.selected += r.selected_count;
    a.consumption += r.consumption_per_sample;
    a.residual += r.mean_budget_residual;
    if (r.mean_prediction_gap) {
      a.gap += *r.mean_prediction_gap;
      ++a.gap_n;
    }
    if (r.rel_improvement_vs_kl) {
      a.rel += *r.rel_improvement_vs_kl;
      ++a.rel_n;
    }
  }

  nlohmann::json groups = nlohmann::json::array();
  for (const auto& key : order) {
    const auto& a = agg[key];
    std::stringstream ss(key);
    std::string sweep, solver, level, size, init;
    std::getline(ss, sweep, '|');
    std::getline(ss, solver, '|');
    std::getline(ss, level, '|');
    std::getline(ss, size, '|');
    std::getline(ss, init, '|');
    nlohmann::json g{
        {"sweep", sweep},     {"solver", solver},
        {"budget_level", std::stod(level)},
        {"sample_size", std::stoi(size)},
        {"init", init},       {"runs", a.runs},
        {"ok", a.ok},
    };
    if (a.ok > 0) {
      g["mean_selected"] = a.selected / a.ok;
      g["mean_consumption_per_sample"] = a.consumption / a.ok;
      g["mean_budget_residual"] = a.residual / a.ok;
      if (a.gap_n > 0) g["mean_prediction_gap"] = a.gap / a.gap_n;
      if (a.rel_n > 0) g["mean_rel_improvement_vs_kl"] = a.rel / a.rel_n;
    }
    groups.push_back(std::move(g));
  }

  nlohmann::json timings = nlohmann::json::object();
  for (const auto& r : rows) {
    const std::string key = r.sweep + "|" + r.solver + "|" + format_double(r.budget_level) +
                            "|" + std::to_string(r.sample_size) + "|" + r.init + "|s" +
                            std::to_string(r.seed);
    timings[key] = r.wall_time_sec;
  }

  nlohmann::json j{{"schema", kReportSchema},
                   {"rows", rows.size()},
                   {"groups", groups},
                   {"timings_sec", timings}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

void save_xhat_csv(const std::string& path, const Matrix& xhat) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "row";
  for (int i = 0; i < xhat.cols; ++i) out << ",f" << i;
  out << "\n";
  for (int j = 0; j < xhat.rows; ++j) {
    out << j;
    for (int i = 0; i < xhat.cols; ++i) out << "," << format_double(xhat(j, i));
    out << "\n";
  }
}

Matrix load_xhat_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty xhat file " + path);
  const int p = static_cast<int>(std::count(line.begin(), line.end(), ','));
  std::vector<double> values;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != p + 1) {
      throw std::runtime_error("bad xhat row in " + path);
    }
    for (int i = 1; i <= p; ++i) values.push_back(std::stod(cells[i]));
    ++rows;
  }
  Matrix m(rows, p);
  m.data = std::move(values);
  return m;
}

namespace {

struct RunArtifacts {
  std::string problem_path;  // out_dir-relative
  std::string cell_dir;      // out_dir-relative
};

// Executes one solver cell, writes trace/xhat artifacts and fills a row.
ReportRow execute_cell(const PerturbProblem& prob, SolverKind kind, HyperParams hp,
                       uint64_t seed, const std::string& out_dir,
                       const RunArtifacts& art, const Matrix* xhat_init = nullptr,
                       Matrix* xhat_out = nullptr) {
  hp.seed = seed;
  ReportRow row;
  row.solver = to_string(kind);
  row.seed = seed;
  row.sample_size = prob.num_samples();
  row.problem_path = art.problem_path;
  const fs::path cell = fs::path(out_dir) / art.cell_dir;
  fs::create_directories(cell);

  const double t0 = now_seconds();
  try {
    const auto run = run_solver(prob, kind, hp, xhat_init);
    for (size_t r = 0; r < run.states.size(); ++r) {
      const std::string name = run.states.size() == 1
                                   ? std::string("trace.csv")
                                   : "trace_g" + std::to_string(r) + ".csv";
      save_trace_csv((cell / name).string(), run.states[r]);
    }
    save_xhat_csv((cell / "xhat.csv").string(), run.xhat);
    const auto fin = finalize_grouped(prob, run.xhat);

    row.selected_count = static_cast<int>(fin.selected.size());
    row.consumption_per_sample = fin.report.consumption_per_sample;
    row.mean_budget_residual = fin.report.mean_budget_residual;
    row.mean_prediction_gap = fin.report.mean_prediction_gap;
    row.knapsack_optimal = fin.knapsack_optimal;
    row.trace_path = (fs::path(art.cell_dir) /
                      (run.states.size() == 1 ? "trace.csv" : "trace_g0.csv"))
                         .string();
    row.xhat_path = (fs::path(art.cell_dir) / "xhat.csv").string();
    if (xhat_out != nullptr) *xhat_out = run.xhat;
  } catch (const SolverError& e) {
    row.status = "failed";
    row.error = e.what();
  }
  row.wall_time_sec = now_seconds() - t0;
  return row;
}

void fill_relative_improvement(std::vector<ReportRow>& rows) {
  for (auto& r : rows) {
    if (r.status != "ok") continue;
    if (r.solver == "kl") {
      if (r.selected_count > 0) r.rel_improvement_vs_kl = 0.0;
      continue;
    }
    for (const auto& base : rows) {
      if (base.solver != "kl" || base.status != "ok") continue;
      if (base.sweep == r.sweep && base.budget_level == r.budget_level &&
          base.sample_size == r.sample_size && base.init == r.init &&
          base.seed == r.seed) {
        if (base.selected_count > 0) {
          r.rel_improvement_vs_kl =
              static_cast<double>(r.selected_count - base.selected_count) /
              base.selected_count;
        }
        break;
      }
    }
  }
}

}  // namespace

std::vector<ReportRow> run_budget_sweep(const ExperimentConfig& cfg) {
  const auto inst = build_instance(cfg);
  fs::create_directories(cfg.out_dir);
  save_classifier((fs::path(cfg.out_dir) / "model.json").string(), *inst.clf);

  const int count = cfg.candidate_count > 0 ? cfg.candidate_count
                                            : static_cast<int>(inst.candidates.size());
  std::vector<double> unlimited(inst.data.X.cols, 1e9);
  const auto base_prob = make_problem(inst, unlimited, count);
  const auto reference = calibrate_budget(base_prob, cfg.hp);
  {
    nlohmann::json j{{"reference", reference}, {"seed", cfg.hp.seed}};
    std::ofstream out(fs::path(cfg.out_dir) / "calibration.json");
    out << j.dump(2) << "\n";
  }

  std::vector<ReportRow> rows;
  for (size_t t = 0; t < cfg.budget_levels.size(); ++t) {
    const double level = cfg.budget_levels[t];
    std::vector<double> budgets(reference.size());
    for (size_t i = 0; i < reference.size(); ++i) budgets[i] = level * reference[i];
    auto prob = make_problem(inst, budgets, count);
    const std::string prob_name = "problem_level" + std::to_string(t) + ".json";
    save_problem_json((fs::path(cfg.out_dir) / prob_name).string(), prob, "model.json");

    for (SolverKind kind : cfg.solvers) {
      for (uint64_t seed : cfg.seeds) {
        RunArtifacts art{prob_name, "runs/L" + std::to_string(t) + "_" + to_string(kind) +
                                        "_s" + std::to_string(seed)};
        auto row = execute_cell(prob, kind, cfg.hp, seed, cfg.out_dir, art);
        row.sweep = "budget";
        row.budget_level = level;
        rows.push_back(std::move(row));
      }
    }
  }
  fill_relative_improvement(rows);
  save_report_csv((fs::path(cfg.out_dir) / "report.csv").string(), rows);
  save_summary_json((fs::path(cfg.out_dir) / "summary.json").string(), rows);
  return rows;
}

std::vector<ReportRow> run_scalability_sweep(const ExperimentConfig& cfg) {
  const auto inst = build_instance(cfg);
  if (cfg.sizes.empty()) throw ConfigError("config: sizes must not be empty");
  if (cfg.sizes.back() > static_cast<int>(inst.candidates.size())) {
    throw ConfigError("config: largest size exceeds the candidate pool");
  }
  fs::create_directories(cfg.out_dir);
  save_classifier((fs::path(cfg.out_dir) / "model.json").string(), *inst.clf);

  // Budgets: the configured level of the reference calibrated on the
  // smallest size, held fixed across sizes.
  std::vector<double> unlimited(inst.data.X.cols, 1e9);
  const auto base_prob = make_problem(inst, unlimited, cfg.sizes.front());
  const auto reference = calibrate_budget(base_prob, cfg.hp);
  std::vector<double> budgets(reference.size());
  for (size_t i = 0; i < reference.size(); ++i) {
    budgets[i] = cfg.scale_budget_level * reference[i];
  }
  {
    nlohmann::json j{{"reference", reference},
                     {"seed", cfg.hp.seed},
                     {"budget_level", cfg.scale_budget_level}};
    std::ofstream out(fs::path(cfg.out_dir) / "calibration.json");
    out << j.dump(2) << "\n";
  }

  std::vector<PerturbProblem> probs;
  std::vector<std::string> prob_names;
  for (size_t t = 0; t < cfg.sizes.size(); ++t) {
    probs.push_back(make_problem(inst, budgets, cfg.sizes[t]));
    prob_names.push_back("problem_size" + std::to_string(t) + ".json");
    save_problem_json((fs::path(cfg.out_dir) / prob_names.back()).string(), probs[t],
                      "model.json");
  }

  std::vector<ReportRow> rows;
  for (const std::string init : {"random", "warm"}) {
    for (SolverKind kind : cfg.solvers) {
      for (uint64_t seed : cfg.seeds) {
        Matrix prev_xhat;
        int prev_size = 0;
        for (size_t t = 0; t < cfg.sizes.size(); ++t) {
          const auto& prob = probs[t];
          std::optional<Matrix> warm_init;
          if (init == "warm" && t > 0) {
            // Prefix rows continue from the previous solution; new rows
            // start at the originals plus symmetry-breaking noise.
            warm_init = prob.X;
            for (int j = 0; j < prev_size; ++j) {
              const auto src = prev_xhat.row(j);
              std::copy(src.begin(), src.end(), warm_init->row(j).begin());
            }
            Rng noise = Rng::substream(seed, 7000 + t);
            for (int j = prev_size; j < prob.num_samples(); ++j) {
              for (int i = 0; i < prob.num_features(); ++i) {
                if (prob.mask[i]) warm_init->operator()(j, i) += noise.uniform_range(-1e-3, 1e-3);
              }
            }
          }
          RunArtifacts art{prob_names[t], "runs/n" + std::to_string(cfg.sizes[t]) + "_" +
                                              init + "_" + to_string(kind) + "_s" +
                                              std::to_string(seed)};
          Matrix xhat_out;
          auto row = execute_cell(prob, kind, cfg.hp, seed, cfg.out_dir, art,
                                  warm_init ? &*warm_init : nullptr, &xhat_out);
          row.sweep = "scale";
          row.budget_level = cfg.scale_budget_level;
          row.init = init;
          const bool ok = row.status == "ok";
          rows.push_back(std::move(row));
          if (ok) {
            prev_xhat = std::move(xhat_out);
            prev_size = prob.num_samples();
          } else {
            prev_size = 0;  // nothing to warm-start from
          }
        }
      }
    }
  }
  fill_relative_improvement(rows);
  save_report_csv((fs::path(cfg.out_dir) / "report.csv").string(), rows);
  save_summary_json((fs::path(cfg.out_dir) / "summary.json").string(), rows);
  return rows;
}

ReportRow run_single(const PerturbProblem& prob, SolverKind kind, const HyperParams& hp,
                     const std::string& out_dir) {
  fs::create_directories(out_dir);
  save_problem_json((fs::path(out_dir) / "problem.json").string(), prob, "model.json");
  save_classifier((fs::path(out_dir) / "model.json").string(), *prob.clf);
  RunArtifacts art{"problem.json", "run"};
  auto row = execute_cell(prob, kind, hp, hp.seed, out_dir, art);
  row.sweep = "single";
  std::vector<ReportRow> rows{row};
  fill_relative_improvement(rows);
  save_report_csv((fs::path(out_dir) / "report.csv").string(), rows);
  save_summary_json((fs::path(out_dir) / "summary.json").string(), rows);
  return rows.front();
}

int verify_runs(const std::string& out_dir) {
  const auto rows = load_report_csv((fs::path(out_dir) / "report.csv").string());
  int violations = 0;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    const auto prob = load_problem_json((fs::path(out_dir) / r.problem_path).string());
    const auto xhat = load_xhat_csv((fs::path(out_dir) / r.xhat_path).string());
    const auto fin = finalize_grouped(prob, xhat);

    std::string failure;
    if (static_cast<int>(fin.selected.size()) != r.selected_count) {
      failure = "replayed selection size " + std::to_string(fin.selected.size()) +
                " != reported " + std::to_string(r.selected_count);
    }
    // Exact feasibility of the replayed selection: budget sums in index
    // order and zero confidence violations.
    if (failure.empty() && (!prob.groups || prob.groups->groups.size() <= 1)) {
      for (int i = 0; i < prob.num_features() && failure.empty(); ++i) {
        double spent = 0.0;
        for (int j : fin.selected) {
          const double d = xhat(j, i) - prob.X(j, i);
          spent += d * d;
        }
        if (spent > prob.budgets[i]) {
          failure = "budget exceeded on feature " + std::to_string(i);
        }
      }
    }
    if (failure.empty()) {
      for (int j : fin.selected) {
        if (confidence_violation(prob, xhat.row(j), j) != 0.0) {
          failure = "confidence violation on sample " + std::to_string(j);
          break;
        }
      }
    }
    if (!failure.empty()) {
      ++violations;
      std::fprintf(stderr, "verify: %s seed %llu level %s: %s\n", r.solver.c_str(),
                   static_cast<unsigned long long>(r.seed),
                   format_double(r.budget_level).c_str(), failure.c_str());
    }
  }
  return violations;
}

}  // namespace invc
