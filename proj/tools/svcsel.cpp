// Command-line front end: cohort generation, weighting, training, search,
// experiments and the HTTP service.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "svcsel/datagen.hpp"
#include "svcsel/feature_select.hpp"
#include "svcsel/harness.hpp"
#include "svcsel/propensity.hpp"
#include "svcsel/scoring.hpp"
#include "svcsel/search.hpp"
#include "svcsel/service.hpp"

#include <httplib.h>

#include <CLI11.hpp>

namespace fs = std::filesystem;
using namespace svcsel;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

propensity::ClipBounds parse_clip(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw CLI::ValidationError("--clip", "expected LO,HI");
  return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
}

std::string trace_csv(const EnsembleModel& model) {
  std::ostringstream os;
  os << "iteration,groups,features_per_group,pruned,remaining\n";
  for (const auto& t : model.metadata.trace) {
    char f[32];
    std::snprintf(f, sizeof f, "%.17g", t.features_per_group);
    os << t.iteration << ',' << t.groups << ',' << f << ',' << t.pruned << ',' << t.remaining
       << '\n';
  }
  return os.str();
}

std::string roc_csv(const std::vector<glm::RocPoint>& roc) {
  std::ostringstream os;
  os << "threshold,fpr,tpr\n";
  for (const auto& p : roc) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.false_positive_rate, p.true_positive_rate);
    os << buf;
  }
  return os.str();
}

struct DatagenArgs {
  std::string spec, out, truth;
};

void run_datagen(const DatagenArgs& a) {
  const auto spec = datagen::spec_from_json(datagen::read_json_file(a.spec));
  const auto truth = datagen::generate_ground_truth(spec);
  const auto cohort = datagen::sample_cohort(truth, spec);
  datagen::export_cohort(cohort, a.out);
  if (!a.truth.empty()) datagen::write_json_file(a.truth, datagen::truth_to_json(truth));
}

struct WeightsArgs {
  std::string cohort, out, clip = "0.05,20";
  bool uniform = false;
};

void run_weights(const WeightsArgs& a) {
  const auto cohort = datagen::import_cohort(a.cohort);
  propensity::CohortWeights w;
  if (a.uniform) {
    w = propensity::uniform_weights(cohort);
  } else {
    const auto models = propensity::fit_all(cohort);
    w = propensity::compute_weights(cohort, models, parse_clip(a.clip));
    for (const auto& s : w.degenerate_services)
      std::cerr << "warning: service " << s << " is degenerate; weight factor 1\n";
  }
  datagen::write_json_file(a.out, propensity::weights_to_json(w));
}

struct TrainArgs {
  std::string cohort, weights, out, trace;
  std::size_t target_models = 15;
  double alpha = 0.05;
  double features_per_group = 50.0;
  double holdout = 0.2;
  std::uint64_t seed = 1;
  std::vector<std::string> exclude;
};

void run_train(const TrainArgs& a) {
  const auto cohort = datagen::import_cohort(a.cohort);
  const auto weights = a.weights.empty() ? propensity::uniform_weights(cohort)
                                         : propensity::weights_from_json(datagen::read_json_file(a.weights));
  const auto rows = harness::training_rows(cohort.patients.size(), a.holdout, a.seed);
  const auto all = weights.select(cohort.patients);
  std::vector<double> w;
  for (auto r : rows) w.push_back(all[r]);
  selection::TrainingSet data(cohort, rows, std::move(w));
  selection::ScreeningConfig screening;
  screening.alpha = a.alpha;
  screening.excluded_characteristics = a.exclude;
  selection::EnsembleSpec spec;
  spec.target_models = a.target_models;
  spec.alpha = a.alpha;
  spec.initial_features_per_group = a.features_per_group;
  spec.seed = a.seed;
  const auto model = selection::train(data, screening, spec);
  save_model(model, cohort.catalog, a.out);
  const fs::path trace = a.trace.empty() ? fs::path(a.out).replace_extension(".trace.csv") : fs::path(a.trace);
  write_text(trace, trace_csv(model));
  std::cerr << model.members.size() << " members, " << model.coefficient_count()
            << " coefficients, training AUC " << model.metadata.training_auc << '\n';
}

struct RecommendArgs {
  std::string model, cohort, patient, mode = "ph_and_time";
  std::uint64_t budget_sims = 60000;
  double budget_seconds = 0.0;
  std::size_t plan_size = 8;
  std::uint64_t seed = 1;
  std::vector<std::string> pins, plan;
  bool score_only = false;
  bool dijkstra = false;
};

void run_recommend(const RecommendArgs& a) {
  const auto model = load_model(a.model);
  const auto cohort = datagen::import_cohort(a.cohort);
  const PatientRecord* patient = cohort.find(a.patient);
  if (!patient) throw std::invalid_argument("unknown patient " + a.patient);
  if (a.score_only) {
    const CarePlan plan = a.plan.empty() ? patient->observed_plan : plan_from_codes(a.plan, cohort.catalog);
    std::cout << service::score_body(score_risk(model, *patient, plan)).dump() << '\n';
    return;
  }
  search::SearchResult result;
  if (a.dijkstra) {
    search::DijkstraConfig cfg;
    cfg.plan_size = a.plan_size;
    cfg.max_evaluations = a.budget_sims;
    result = search::dijkstra_search(model, *patient, cohort.catalog.size(), cfg);
  } else {
    search::SearchConfig cfg;
    cfg.mode = search::parse_mode(a.mode);
    cfg.max_plan_size = a.plan_size;
    cfg.seed = a.seed;
    if (a.budget_seconds > 0.0)
      cfg.budget = search::TimeBudget{a.budget_seconds};
    else
      cfg.budget = search::SimulationBudget{a.budget_sims};
    for (const auto& code : plan_from_codes(a.pins, cohort.catalog).services()) cfg.pinned.push_back(code);
    result = search::run_search(model, *patient, cohort.catalog.size(), cfg);
  }
  std::cout << search::result_to_json(result, cohort.catalog).dump(1) << '\n';
}

struct ExperimentArgs {
  std::string suite, model, cohort, out, weights;
  std::uint64_t seed = 1;
  int repeats = 5;
  std::uint64_t budget_sims = 10000;
  std::vector<std::uint64_t> budgets{1000, 5000, 20000};
  std::vector<std::size_t> plan_sizes{1, 5, 8, 10, 15, 20, 30};
  std::vector<double> c_values{0.0, 0.05, 0.5, 5.0};
  std::vector<double> w_values{0.0, 0.1, 1.0, 10.0};
  std::size_t pool = 500;
  int folds = 10;
  std::size_t target_models = 15;
  double alpha = 0.05;
  std::size_t cases = 3;
};

void run_experiment(const ExperimentArgs& a) {
  const auto cohort = datagen::import_cohort(a.cohort);
  const fs::path out = a.out;
  fs::create_directories(out);
  if (a.suite == "roc") {
    const auto weights = a.weights.empty() ? propensity::uniform_weights(cohort)
                                           : propensity::weights_from_json(datagen::read_json_file(a.weights));
    selection::ScreeningConfig screening;
    screening.alpha = a.alpha;
    selection::EnsembleSpec spec;
    spec.target_models = a.target_models;
    spec.alpha = a.alpha;
    spec.seed = a.seed;
    const auto eval = harness::evaluate_model(cohort, weights, screening, spec, a.folds, a.seed);
    for (const auto& w : eval.warnings) std::cerr << "warning: " << w << '\n';
    write_text(out / "roc.csv", roc_csv(eval.roc));
    std::ostringstream auc;
    auc << "fold,ensemble_auc,member_auc_mean,member_auc_min,member_auc_max\n";
    for (std::size_t f = 0; f < eval.ensemble_auc.size(); ++f) {
      const auto& m = eval.member_auc[f];
      char buf[160];
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", f + 1, eval.ensemble_auc[f],
                    harness::mean(m), *std::min_element(m.begin(), m.end()),
                    *std::max_element(m.begin(), m.end()));
      auc << buf;
    }
    write_text(out / "auc.csv", auc.str());
    char md[256];
    std::snprintf(md, sizeof md,
                  "## roc\n\n%d-fold cross-validated ensemble AUC: %.3f ± %.3f (sample SD over folds)\n",
                  a.folds, eval.ensemble_mean, eval.ensemble_sd);
    write_text(out / "report.md", md);
    datagen::write_json_file(out / "report.json", {{"suite", "roc"},
                                                   {"ensemble_auc", eval.ensemble_auc},
                                                   {"member_auc", eval.member_auc},
                                                   {"ensemble_mean", eval.ensemble_mean},
                                                   {"ensemble_sd", eval.ensemble_sd},
                                                   {"warnings", eval.warnings}});
    return;
  }

  const auto model = load_model(a.model);
  harness::TestSetConfig tc;
  tc.pool_size = a.pool;
  tc.seed = a.seed;
  const auto tests = harness::build_test_set(cohort, model, tc);
  datagen::write_json_file(out / "test_set.json", harness::test_set_to_json(tests));

  search::SearchConfig base;
  base.budget = search::SimulationBudget{a.budget_sims};
  harness::ExperimentReport report;
  if (a.suite == "tuning") {
    report = harness::run_sweep("tuning", model, cohort, tests,
                                harness::tuning_configs(base, a.c_values, a.w_values), a.repeats, a.seed);
  } else if (a.suite == "enhancements") {
    report = harness::run_sweep("enhancements", model, cohort, tests,
                                harness::enhancement_configs(base, a.budgets), a.repeats, a.seed);
  } else if (a.suite == "plan-size") {
    report = harness::run_sweep("plan-size", model, cohort, tests,
                                harness::plan_size_configs(base, a.plan_sizes), a.repeats, a.seed);
  } else if (a.suite == "dijkstra") {
    report = harness::compare_algorithms(model, cohort, tests, base, a.budget_sims, a.repeats, a.seed);
  } else {
    throw std::invalid_argument("unknown suite " + a.suite);
  }
  harness::write_report(report, out);

  // Case reports for the highest-risk test patients under the first config.
  auto cases = nlohmann::json::array();
  for (std::size_t i = 0; i < std::min(a.cases, tests.cases.size()); ++i) {
    const auto& tcase = tests.cases[tests.cases.size() - 1 - i];
    const auto* p = cohort.find(tcase.patient_id);
    for (const auto& r : report.raw)
      if (r.patient_id == tcase.patient_id && r.repeat == 0 && r.config == report.rows.front().config) {
        search::SearchResult res;
        res.plan = plan_from_codes(r.plan, cohort.catalog);
        search::finalize(res, model, *p);
        cases.push_back(harness::case_report(cohort, *p, res));
        break;
      }
  }
  datagen::write_json_file(out / "cases.json", cases);

  std::ostringstream rate;
  rate << "config,patient_id,repeat,simulations,seconds,simulations_per_second\n";
  for (const auto& r : report.raw)
    rate << '"' << r.config << "\"," << r.patient_id << ',' << r.repeat << ',' << r.simulations << ','
         << r.seconds << ',' << (r.seconds > 0 ? static_cast<double>(r.simulations) / r.seconds : 0.0)
         << '\n';
  // Timing varies run to run; kept apart from the reproducible report files.
  write_text(out / "timing.csv", rate.str());
  std::cout << harness::markdown_table(report);
}

struct ServeArgs {
  std::string model, cohort, host = "127.0.0.1";
  int port = 8080;
  std::uint64_t max_budget = 200000;
};

void run_serve(const ServeArgs& a) {
  service::ServiceOptions options;
  options.max_budget = a.max_budget;
  const service::Api api(load_model(a.model), datagen::import_cohort(a.cohort), options);
  httplib::Server server;
  service::mount(server, api);
  std::cerr << "listening on " << a.host << ':' << a.port << '\n';
  if (!server.listen(a.host, a.port)) throw std::runtime_error("cannot listen on port " + std::to_string(a.port));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Care service selection: risk models and plan search"};
  app.require_subcommand(1);

  DatagenArgs dg;
  auto* datagen_cmd = app.add_subcommand("datagen", "Generate a synthetic cohort and its ground truth");
  datagen_cmd->add_option("--spec", dg.spec, "Cohort spec JSON")->required()->check(CLI::ExistingFile);
  datagen_cmd->add_option("--out", dg.out, "Cohort output path")->required();
  datagen_cmd->add_option("--truth", dg.truth, "Ground truth output path");

  WeightsArgs wa;
  auto* weights_cmd = app.add_subcommand("weights", "Propensity weights for a cohort");
  weights_cmd->add_option("--cohort", wa.cohort)->required()->check(CLI::ExistingFile);
  weights_cmd->add_option("--out", wa.out)->required();
  weights_cmd->add_option("--clip", wa.clip, "Per-factor clip bounds LO,HI")->capture_default_str();
  weights_cmd->add_flag("--uniform", wa.uniform, "Unit weights (no de-biasing)");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Fit the ensemble risk model");
  train_cmd->add_option("--cohort", ta.cohort)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--weights", ta.weights, "Weights JSON (default: unit weights)");
  train_cmd->add_option("--out", ta.out)->required();
  train_cmd->add_option("--trace", ta.trace, "Iteration trace CSV (default: <out>.trace.csv)");
  train_cmd->add_option("--target-models", ta.target_models)->capture_default_str();
  train_cmd->add_option("--alpha", ta.alpha)->capture_default_str();
  train_cmd->add_option("--features-per-group", ta.features_per_group)->capture_default_str();
  train_cmd->add_option("--holdout", ta.holdout, "Fraction of patients kept out of training")
      ->capture_default_str();
  train_cmd->add_option("--exclude", ta.exclude, "Characteristics never paired with services");
  train_cmd->add_option("--seed", ta.seed)->capture_default_str();

  RecommendArgs ra;
  auto* rec_cmd = app.add_subcommand("recommend", "Search for a lower-risk plan");
  rec_cmd->add_option("--model", ra.model)->required()->check(CLI::ExistingFile);
  rec_cmd->add_option("--cohort", ra.cohort)->required()->check(CLI::ExistingFile);
  rec_cmd->add_option("--patient", ra.patient)->required();
  rec_cmd->add_option("--mode", ra.mode, "vanilla | ph_mast | time_controlled | ph_and_time")
      ->capture_default_str();
  auto* sims = rec_cmd->add_option("--budget-sims", ra.budget_sims)->capture_default_str();
  rec_cmd->add_option("--budget-seconds", ra.budget_seconds, "Wall-clock budget instead of simulations")
      ->excludes(sims);
  rec_cmd->add_option("--plan-size", ra.plan_size)->capture_default_str();
  rec_cmd->add_option("--seed", ra.seed)->capture_default_str();
  rec_cmd->add_option("--pin", ra.pins, "Service code that must appear in the plan");
  rec_cmd->add_flag("--dijkstra", ra.dijkstra, "Use the Dijkstra baseline (--budget-sims caps risk evaluations)");
  rec_cmd->add_flag("--score-only", ra.score_only, "Print {risk, reward} of --plan (default: observed plan)");
  rec_cmd->add_option("--plan", ra.plan, "Service codes to score with --score-only");

  ExperimentArgs ea;
  auto* exp_cmd = app.add_subcommand("experiment", "Run an evaluation suite");
  exp_cmd->add_option("--suite", ea.suite)
      ->required()
      ->check(CLI::IsMember({"tuning", "enhancements", "plan-size", "dijkstra", "roc"}));
  exp_cmd->add_option("--model", ea.model, "Model JSON (all suites but roc)");
  exp_cmd->add_option("--cohort", ea.cohort)->required()->check(CLI::ExistingFile);
  exp_cmd->add_option("--weights", ea.weights, "Weights JSON (roc)");
  exp_cmd->add_option("--out", ea.out)->required();
  exp_cmd->add_option("--seed", ea.seed)->capture_default_str();
  exp_cmd->add_option("--repeats", ea.repeats)->capture_default_str();
  exp_cmd->add_option("--budget-sims", ea.budget_sims)->capture_default_str();
  exp_cmd->add_option("--budgets", ea.budgets, "Simulation budgets (enhancements)")->delimiter(',')->capture_default_str();
  exp_cmd->add_option("--plan-sizes", ea.plan_sizes)->delimiter(',')->capture_default_str();
  exp_cmd->add_option("--c-values", ea.c_values)->delimiter(',')->capture_default_str();
  exp_cmd->add_option("--w-values", ea.w_values)->delimiter(',')->capture_default_str();
  exp_cmd->add_option("--pool", ea.pool)->capture_default_str();
  exp_cmd->add_option("--folds", ea.folds)->capture_default_str();
  exp_cmd->add_option("--target-models", ea.target_models)->capture_default_str();
  exp_cmd->add_option("--alpha", ea.alpha)->capture_default_str();
  exp_cmd->add_option("--cases", ea.cases, "Case reports to emit")->capture_default_str();

  ServeArgs sa;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP API over a model and cohort");
  serve_cmd->add_option("--model", sa.model)->envname("SVCSEL_MODEL")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--cohort", sa.cohort)->envname("SVCSEL_COHORT")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--host", sa.host)->envname("SVCSEL_HOST")->capture_default_str();
  serve_cmd->add_option("--port", sa.port)->envname("SVCSEL_PORT")->capture_default_str();
  serve_cmd->add_option("--max-budget", sa.max_budget)->envname("SVCSEL_MAX_BUDGET")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*datagen_cmd) run_datagen(dg);
    if (*weights_cmd) run_weights(wa);
    if (*train_cmd) run_train(ta);
    if (*rec_cmd) run_recommend(ra);
    if (*exp_cmd) {
      if (ea.suite != "roc" && ea.model.empty()) throw std::invalid_argument("--model is required");
      run_experiment(ea);
    }
    if (*serve_cmd) run_serve(sa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
