#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "svcsel/catalog.hpp"
#include "svcsel/feature_select.hpp"
#include "svcsel/glm.hpp"
#include "svcsel/propensity.hpp"
#include "svcsel/scoring.hpp"
#include "svcsel/search.hpp"

namespace svcsel::harness {

struct TestSetConfig {
  std::size_t pool_size = 500;
  std::size_t deciles = 10;
  std::size_t per_decile = 10;
  std::uint64_t seed = 1;
};

struct TestCase {
  std::string patient_id;
  double initial_risk = 0.0;
  /// 1-based.
  int decile = 0;
};

struct TestSet {
  std::vector<TestCase> cases;
  /// deciles + 1 edges: pool minimum, the cut points, pool maximum.
  std::vector<double> boundaries;
  std::vector<std::string> excluded_ids;
  /// The whole sampled pool with decile labels (scatter plot data).
  std::vector<TestCase> pool;
};

/// Samples the pool from patients not used for training, cuts it into risk
/// deciles by rank and draws `per_decile` patients from each.
TestSet build_test_set(const Cohort& cohort, const EnsembleModel& model, const TestSetConfig& cfg);

nlohmann::json test_set_to_json(const TestSet& t);
TestSet test_set_from_json(const nlohmann::json& j);

enum class Algorithm { kMcts, kDijkstra };

struct NamedConfig {
  std::string name;
  Algorithm algorithm = Algorithm::kMcts;
  search::SearchConfig mcts;
  search::DijkstraConfig dijkstra;
};

struct RunRecord {
  std::string config;
  std::string patient_id;
  int decile = 0;
  int repeat = 0;
  double initial_risk = 0.0;
  double risk = 0.0;
  /// Percentage points; may be negative.
  double reduction = 0.0;
  std::uint64_t simulations = 0;
  std::uint64_t evaluations = 0;
  double seconds = 0.0;
  std::vector<std::string> plan;
};

struct ConfigRow {
  std::string config;
  std::vector<double> decile_means;
  double overall_mean = 0.0;
  /// Sample standard deviation, across repeats, of each repeat's overall mean.
  double spread = 0.0;
  std::size_t repeats = 0;
  std::size_t records = 0;
};

struct ExperimentReport {
  std::string suite;
  std::size_t deciles = 10;
  std::vector<ConfigRow> rows;
  std::vector<RunRecord> raw;
};

/// Aggregates raw records into per-config rows (config order of first
/// appearance).
ExperimentReport aggregate(const std::string& suite, std::size_t deciles,
                           std::vector<RunRecord> raw);

/// One search per config x test case x repeat. Runs that execute no
/// simulations keep the observed plan (reduction 0).
ExperimentReport run_sweep(const std::string& suite, const EnsembleModel& model,
                           const Cohort& cohort, const TestSet& tests,
                           const std::vector<NamedConfig>& configs, int repeats,
                           std::uint64_t seed);

/// MCTS and Dijkstra under the same risk-evaluation budget.
ExperimentReport compare_algorithms(const EnsembleModel& model, const Cohort& cohort,
                                    const TestSet& tests, const search::SearchConfig& mcts,
                                    std::uint64_t evaluation_budget, int repeats,
                                    std::uint64_t seed);

// Config families for the standard suites.
std::vector<NamedConfig> tuning_configs(const search::SearchConfig& base,
                                        const std::vector<double>& c_values,
                                        const std::vector<double>& w_values);
std::vector<NamedConfig> enhancement_configs(const search::SearchConfig& base,
                                             const std::vector<std::uint64_t>& budgets);
std::vector<NamedConfig> plan_size_configs(const search::SearchConfig& base,
                                           const std::vector<std::size_t>& sizes);

struct ModelEvaluation {
  std::vector<double> ensemble_auc;             // per fold
  std::vector<std::vector<double>> member_auc;  // per fold, per member
  std::vector<std::string> warnings;
  std::vector<glm::RocPoint> roc;               // pooled out-of-fold
  double ensemble_mean = 0.0;
  double ensemble_sd = 0.0;
};

/// k-fold cross-validation of the whole training pipeline.
ModelEvaluation evaluate_model(const Cohort& cohort, const propensity::CohortWeights& weights,
                               const selection::ScreeningConfig& screening,
                               const selection::EnsembleSpec& spec, int folds,
                               std::uint64_t seed);

/// Writes rows.csv, raw.csv, report.md and report.json under `dir`.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);
/// Markdown table: config | deciles 1..N | All (mean +- sd).
std::string markdown_table(const ExperimentReport& report);
std::string raw_csv(const ExperimentReport& report);
std::string rows_csv(const ExperimentReport& report);

/// Per-case comparison of conditions, recommended plan and observed plan.
nlohmann::json case_report(const Cohort& cohort, const PatientRecord& patient,
                           const search::SearchResult& result);

/// Seeded split of row indices 0..n-1: the first ceil((1 - holdout) * n) of a
/// shuffle, returned ascending. Those rows are used for training.
std::vector<std::size_t> training_rows(std::size_t n, double holdout, std::uint64_t seed);

double mean(const std::vector<double>& v);
double sample_sd(const std::vector<double>& v);

}  // namespace svcsel::harness
