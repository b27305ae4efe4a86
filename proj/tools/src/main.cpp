#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include <dynpred/error.hpp>
#include <dynpred/parallel.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace dynpred::cli;
  CLI::App app{"Landmark dynamic prediction from repeated markers"};
  app.require_subcommand(1);

  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (0: all cores)");

  std::string config_path;
  Overrides ov;
  std::uint64_t seed = 0;
  std::string survival, longitudinal, truth, output_dir;
  auto add_config_flags = [&](CLI::App* sub) {
    sub->add_option("--config,-c", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--survival", survival, "Override the survival CSV path");
    sub->add_option("--longitudinal", longitudinal, "Override the longitudinal CSV path");
    sub->add_option("--truth", truth, "Override the truth CSV path");
    sub->add_option("--output-dir,-o", output_dir, "Override the output directory");
  };
  auto* simulate = app.add_subcommand("simulate", "Generate synthetic cohorts");
  auto* fit = app.add_subcommand("fit", "Fit mixed models and learners on a cohort");
  auto* cv = app.add_subcommand("cv", "Cross-validated assessment of every configured method");
  for (auto* s : {simulate, fit, cv}) add_config_flags(s);

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Predict new subjects with a fitted model");
  predict->add_option("--model,-m", pa.model, "model.json written by fit")->required()->check(CLI::ExistingFile);
  predict->add_option("--covariates", pa.covariates, "Subjects CSV (id and covariates)")->required()->check(CLI::ExistingFile);
  predict->add_option("--longitudinal", pa.longitudinal, "Marker history CSV")->required()->check(CLI::ExistingFile);
  predict->add_option("--output,-o", pa.output, "Output CSV (default stdout)");

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "IPCW Brier score and AUC of a predictions file");
  evaluate->add_option("--predictions,-p", ea.predictions, "CSV with subject,method,prediction")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--survival,-s", ea.survival, "Survival CSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--t-lm", ea.t_lm, "Landmark time")->required();
  evaluate->add_option("--t-hor", ea.t_hor, "Horizon")->required();
  evaluate->add_option("--truth", ea.truth, "Optional truth CSV (subject,pi0) for MSEP");
  evaluate->add_option("--output,-o", ea.output, "Output JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    dynpred::set_thread_count(threads);
    auto config = [&](const CLI::App* sub) {
      if (sub->count("--seed")) ov.seed = seed;
      if (!survival.empty()) ov.survival = std::filesystem::absolute(survival).string();
      if (!longitudinal.empty()) ov.longitudinal = std::filesystem::absolute(longitudinal).string();
      if (!truth.empty()) ov.truth = std::filesystem::absolute(truth).string();
      if (!output_dir.empty()) ov.output_dir = std::filesystem::absolute(output_dir).string();
      return load_run_config(config_path, ov);
    };
    if (*simulate) cmd_simulate(config(simulate));
    else if (*fit) cmd_fit(config(fit));
    else if (*cv) cmd_cv(config(cv));
    else if (*predict) cmd_predict(pa);
    else if (*evaluate) cmd_evaluate(ea);
    return 0;
  } catch (const dynpred::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(dynpred::ErrorKind::Data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(dynpred::ErrorKind::Numerical);
  }
}
