// Command line driver: data generation, training, budget calibration,
// single perturbation runs and the two experiment sweeps. Exit codes:
// 0 success, 2 configuration error, 3 solver abort.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "CLI11.hpp"
#include "invc/harness.hpp"

namespace fs = std::filesystem;
using namespace invc;

namespace {

// --hp.<name> flags shared by the commands that run solvers; values set on
// the command line override the config file.
struct HpFlags {
  HyperParams v;

  void attach(CLI::App* app) {
    app->add_option("--hp.delta", v.delta, "confidence margin");
    app->add_option("--hp.kappa", v.kappa, "indicator sharpness");
    app->add_option("--hp.tau", v.tau, "indicator shift (budget units)");
    app->add_option("--hp.omega", v.omega, "relaxation temperature");
    app->add_option("--hp.mc_samples", v.mc_samples, "Monte Carlo replicates");
    app->add_option("--hp.cat_draws", v.cat_draws, "categorical draws (0 = |S|/2)");
    app->add_option("--hp.epsilon", v.epsilon, "chance level");
    app->add_option("--hp.dist_weight", v.dist_weight, "kl proximity weight");
    app->add_option("--hp.alpha", v.alpha, "selection step size");
    app->add_option("--hp.beta", v.beta, "feature step size");
    app->add_option("--hp.gamma0", v.gamma0, "initial budget-multiplier step");
    app->add_option("--hp.eta0", v.eta0, "initial confidence-multiplier step");
    app->add_option("--hp.outer_iters", v.outer_iters, "outer iterations (0 = default)");
    app->add_option("--hp.inner_iters", v.inner_iters, "inner iterations (0 = default)");
    app->add_option("--hp.lambda0", v.lambda0, "budget multiplier init");
    app->add_option("--hp.mu0", v.mu0, "confidence multiplier init");
    app->add_option("--hp.noise_std", v.noise_std, "multiplier init noise stddev");
    app->add_option("--hp.seed", v.seed, "run seed");
  }

  void apply(const CLI::App* app, HyperParams& hp) const {
    auto set = [&](const char* name, auto member) {
      if (app->count(name) > 0) hp.*member = v.*member;
    };
    set("--hp.delta", &HyperParams::delta);
    set("--hp.kappa", &HyperParams::kappa);
    set("--hp.tau", &HyperParams::tau);
    set("--hp.omega", &HyperParams::omega);
    set("--hp.mc_samples", &HyperParams::mc_samples);
    set("--hp.cat_draws", &HyperParams::cat_draws);
    set("--hp.epsilon", &HyperParams::epsilon);
    set("--hp.dist_weight", &HyperParams::dist_weight);
    set("--hp.alpha", &HyperParams::alpha);
    set("--hp.beta", &HyperParams::beta);
    set("--hp.gamma0", &HyperParams::gamma0);
    set("--hp.eta0", &HyperParams::eta0);
    set("--hp.outer_iters", &HyperParams::outer_iters);
    set("--hp.inner_iters", &HyperParams::inner_iters);
    set("--hp.lambda0", &HyperParams::lambda0);
    set("--hp.mu0", &HyperParams::mu0);
    set("--hp.noise_std", &HyperParams::noise_std);
    set("--hp.seed", &HyperParams::seed);
  }
};

void print_report_table(const std::vector<ReportRow>& rows) {
  struct Agg {
    int ok = 0;
    double selected = 0, consumption = 0, residual = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Agg> agg;
  for (const auto& r : rows) {
    char key[160];
    std::snprintf(key, sizeof(key), "%-6s %-5s level=%-6g n=%-4d %s", r.sweep.c_str(),
                  r.solver.c_str(), r.budget_level, r.sample_size, r.init.c_str());
    if (!agg.count(key)) order.push_back(key);
    if (r.status != "ok") continue;
    auto& a = agg[key];
    ++a.ok;
    a.selected += r.selected_count;
    a.consumption += r.consumption_per_sample;
    a.residual += r.mean_budget_residual;
  }
  std::printf("%-40s %5s %10s %14s %10s\n", "group", "runs", "mean|S~|", "consumption",
              "residual");
  for (const auto& key : order) {
    const auto& a = agg[key];
    if (a.ok == 0) {
      std::printf("%-40s %5d %10s %14s %10s\n", key.c_str(), 0, "-", "-", "-");
    } else {
      std::printf("%-40s %5d %10.2f %14.4f %10.4f\n", key.c_str(), a.ok, a.selected / a.ok,
                  a.consumption / a.ok, a.residual / a.ok);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"budget-constrained batch perturbation of classifier inputs"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic blob dataset CSV");
  SyntheticSpec spec;
  std::string gen_out = "data.csv";
  gen->add_option("--n", spec.n, "samples");
  gen->add_option("--p", spec.p, "features");
  gen->add_option("--k", spec.k, "classes");
  gen->add_option("--separation", spec.separation, "distance between class means");
  gen->add_option("--seed", spec.seed, "seed");
  gen->add_option("--out", gen_out, "output CSV path");

  // train
  auto* tr = app.add_subcommand("train", "train a classifier on a dataset CSV");
  std::string tr_data, tr_kind = "multinomial-logistic", tr_out = "model.json";
  int tr_hidden = 8;
  TrainConfig tr_cfg;
  tr->add_option("--data", tr_data, "dataset CSV")->required();
  tr->add_option("--kind", tr_kind, "multinomial-logistic | one-hidden-layer-tanh");
  tr->add_option("--hidden", tr_hidden, "hidden width (tanh net)");
  tr->add_option("--lr", tr_cfg.learning_rate, "learning rate");
  tr->add_option("--epochs", tr_cfg.epochs, "epochs");
  tr->add_option("--batch", tr_cfg.batch_size, "batch size");
  tr->add_option("--l2", tr_cfg.l2, "l2 penalty");
  tr->add_option("--seed", tr_cfg.seed, "seed");
  tr->add_option("--out", tr_out, "output model path");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "measure the unlimited-budget reference");
  std::string cal_config, cal_out;
  HpFlags cal_hp;
  cal->add_option("--config", cal_config, "experiment config JSON")->required();
  cal->add_option("--out", cal_out, "output JSON (default <out_dir>/calibration.json)");
  cal_hp.attach(cal);

  // perturb
  auto* pert = app.add_subcommand("perturb", "run one solver on one problem");
  std::string pert_solver, pert_problem, pert_config, pert_out = "run_out";
  double pert_level = 0.6;
  HpFlags pert_hp;
  pert->add_option("--solver", pert_solver, "ms | bcms | ccms | kl")->required();
  pert->add_option("--problem", pert_problem, "problem JSON (with budgets)");
  pert->add_option("--config", pert_config, "experiment config (budgets from calibration)");
  pert->add_option("--budget-level", pert_level, "budget level for --config mode");
  pert->add_option("--out", pert_out, "output directory");
  pert_hp.attach(pert);

  // sweeps
  auto* swb = app.add_subcommand("sweep-budget", "budget-level sweep");
  std::string swb_config, swb_out;
  HpFlags swb_hp;
  swb->add_option("--config", swb_config, "experiment config JSON")->required();
  swb->add_option("--out", swb_out, "override output directory");
  swb_hp.attach(swb);

  auto* sws = app.add_subcommand("sweep-scale", "sample-size sweep (warm + random init)");
  std::string sws_config, sws_out;
  HpFlags sws_hp;
  sws->add_option("--config", sws_config, "experiment config JSON")->required();
  sws->add_option("--out", sws_out, "override output directory");
  sws_hp.attach(sws);

  // report
  auto* rep = app.add_subcommand("report", "summarize (and optionally verify) an output dir");
  std::string rep_dir;
  bool rep_verify = false;
  rep->add_option("--dir", rep_dir, "sweep output directory")->required();
  rep->add_flag("--verify", rep_verify, "replay stored artifacts and re-check feasibility");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      save_dataset_csv(gen_out, generate_synthetic(spec));
      std::printf("wrote %s\n", gen_out.c_str());
      return 0;
    }
    if (tr->parsed()) {
      const auto data = load_dataset_csv(tr_data);
      const auto clf =
          train(data, tr_cfg, classifier_kind_from_string(tr_kind), tr_hidden);
      save_classifier(tr_out, clf);
      std::printf("wrote %s (train accuracy %.4f)\n", tr_out.c_str(), clf.train_accuracy);
      return 0;
    }
    if (cal->parsed()) {
      auto cfg = load_config(cal_config);
      cal_hp.apply(cal, cfg.hp);
      cfg.validate();
      const auto inst = build_instance(cfg);
      const int count = cfg.candidate_count > 0 ? cfg.candidate_count
                                                : static_cast<int>(inst.candidates.size());
      std::vector<double> unlimited(inst.data.X.cols, 1e9);
      const auto reference = calibrate_budget(make_problem(inst, unlimited, count), cfg.hp);
      const std::string out_path =
          cal_out.empty() ? (fs::path(cfg.out_dir) / "calibration.json").string() : cal_out;
      fs::create_directories(fs::path(out_path).parent_path().empty()
                                 ? "."
                                 : fs::path(out_path).parent_path().string());
      nlohmann::json j{{"reference", reference}, {"seed", cfg.hp.seed}};
      std::ofstream out(out_path);
      out << j.dump(2) << "\n";
      std::printf("wrote %s\n", out_path.c_str());
      return 0;
    }
    if (pert->parsed()) {
      const auto kind = solver_kind_from_string(pert_solver);
      HyperParams hp;
      ReportRow row;
      if (!pert_problem.empty()) {
        auto prob = load_problem_json(pert_problem);
        hp.delta = prob.delta;  // the problem file carries the margin
        pert_hp.apply(pert, hp);
        row = run_single(prob, kind, hp, pert_out);
      } else if (!pert_config.empty()) {
        auto cfg = load_config(pert_config);
        pert_hp.apply(pert, cfg.hp);
        cfg.validate();
        const auto inst = build_instance(cfg);
        const int count = cfg.candidate_count > 0
                              ? cfg.candidate_count
                              : static_cast<int>(inst.candidates.size());
        std::vector<double> unlimited(inst.data.X.cols, 1e9);
        const auto reference =
            calibrate_budget(make_problem(inst, unlimited, count), cfg.hp);
        std::vector<double> budgets(reference.size());
        for (size_t i = 0; i < reference.size(); ++i) {
          budgets[i] = pert_level * reference[i];
        }
        row = run_single(make_problem(inst, budgets, count), kind, cfg.hp, pert_out);
      } else {
        throw ConfigError("perturb: need --problem or --config");
      }
      if (row.status != "ok") {
        std::fprintf(stderr, "solver failed: %s\n", row.error.c_str());
        return 3;
      }
      std::printf("selected %d of %d samples; report in %s\n", row.selected_count,
                  row.sample_size, pert_out.c_str());
      return 0;
    }
    if (swb->parsed()) {
      auto cfg = load_config(swb_config);
      swb_hp.apply(swb, cfg.hp);
      if (!swb_out.empty()) cfg.out_dir = swb_out;
      cfg.validate();
      const auto rows = run_budget_sweep(cfg);
      print_report_table(rows);
      std::printf("report written to %s\n", cfg.out_dir.c_str());
      return 0;
    }
    if (sws->parsed()) {
      auto cfg = load_config(sws_config);
      sws_hp.apply(sws, cfg.hp);
      if (!sws_out.empty()) cfg.out_dir = sws_out;
      cfg.validate();
      const auto rows = run_scalability_sweep(cfg);
      print_report_table(rows);
      std::printf("report written to %s\n", cfg.out_dir.c_str());
      return 0;
    }
    if (rep->parsed()) {
      const auto rows = load_report_csv((fs::path(rep_dir) / "report.csv").string());
      print_report_table(rows);
      if (rep_verify) {
        const int bad = verify_runs(rep_dir);
        if (bad > 0) {
          std::fprintf(stderr, "verification failed for %d rows\n", bad);
          return 1;
        }
        std::printf("all rows verified: selections replay exactly and are feasible\n");
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const SolverError& e) {
    std::fprintf(stderr, "solver abort: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
