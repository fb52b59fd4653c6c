#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "svcsel/harness.hpp"

using namespace svcsel;
using namespace svcsel::harness;

namespace {

struct Setup {
  Cohort cohort;
  EnsembleModel model;
};

const Setup& setup() {
  static const Setup s = [] {
    Setup out;
    out.cohort = fixtures::small_cohort(900, 12, 5, 41);
    out.model = fixtures::random_model(out.cohort, 42, 3, 20);
    for (std::size_t i = 0; i < 300; ++i) out.model.metadata.training_ids.push_back(out.cohort.patients[i].id);
    return out;
  }();
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("test sets are stratified, ordered and held out") {
  const auto& s = setup();
  const auto t = build_test_set(s.cohort, s.model, {500, 10, 10, 3});
  REQUIRE(t.cases.size() == 100);
  REQUIRE(t.pool.size() == 500);
  REQUIRE(t.boundaries.size() == 11);
  std::map<int, int> per_decile;
  for (const auto& c : t.cases) ++per_decile[c.decile];
  for (int d = 1; d <= 10; ++d) CHECK(per_decile[d] == 10);
  for (int d = 1; d < 10; ++d) {
    double max_lo = -1, min_hi = 2;
    for (const auto& c : t.pool) {
      if (c.decile == d) max_lo = std::max(max_lo, c.initial_risk);
      if (c.decile == d + 1) min_hi = std::min(min_hi, c.initial_risk);
    }
    CHECK(max_lo <= min_hi);
    CHECK(t.boundaries[static_cast<std::size_t>(d)] >= max_lo);
    CHECK(t.boundaries[static_cast<std::size_t>(d)] <= min_hi);
  }
  const std::set<std::string> training(s.model.metadata.training_ids.begin(),
                                       s.model.metadata.training_ids.end());
  for (const auto& c : t.pool) CHECK_FALSE(training.contains(c.patient_id));
  std::set<std::string> ids;
  for (const auto& c : t.cases) ids.insert(c.patient_id);
  CHECK(ids.size() == 100);

  const auto back = test_set_from_json(test_set_to_json(t));
  CHECK(back.cases.size() == t.cases.size());
  CHECK(back.boundaries == t.boundaries);

  CHECK_THROWS(build_test_set(s.cohort, s.model, {700, 10, 10, 3}));
}

TEST_CASE("aggregates are recomputable from raw rows and never clamped") {
  std::vector<RunRecord> raw;
  for (int rep = 0; rep < 3; ++rep)
    for (int d = 1; d <= 2; ++d)
      for (int k = 0; k < 2; ++k) {
        RunRecord r;
        r.config = "a";
        r.patient_id = "P" + std::to_string(d * 10 + k);
        r.decile = d;
        r.repeat = rep;
        r.reduction = (d == 1 ? -1.0 : 3.0) + rep + 0.5 * k;
        raw.push_back(r);
      }
  const auto report = aggregate("unit", 2, raw);
  REQUIRE(report.rows.size() == 1);
  const auto& row = report.rows[0];
  // Decile 1: mean of -1,-0.5,0,0.5,1,1.5 = 0.25; decile 2: 4.25.
  CHECK(row.decile_means[0] == doctest::Approx(0.25));
  CHECK(row.decile_means[1] == doctest::Approx(4.25));
  CHECK(row.overall_mean == doctest::Approx(2.25));
  // Per-repeat means 1.25, 2.25, 3.25.
  CHECK(row.spread == doctest::Approx(1.0));
  CHECK(row.repeats == 3);
  CHECK(row.records == 12);
}

TEST_CASE("zero-budget configs report zero reduction") {
  const auto& s = setup();
  const auto t = build_test_set(s.cohort, s.model, {500, 10, 2, 4});
  NamedConfig zero;
  zero.name = "zero";
  zero.mcts.budget = search::SimulationBudget{0};
  zero.mcts.max_plan_size = 4;
  const auto report = run_sweep("zero", s.model, s.cohort, t, {zero}, 2, 1);
  for (const auto& r : report.raw) CHECK(r.reduction == 0.0);
  CHECK(report.rows[0].overall_mean == 0.0);
}

TEST_CASE("sweeps write identical reports for identical seeds") {
  const auto& s = setup();
  const auto t = build_test_set(s.cohort, s.model, {500, 10, 1, 5});
  search::SearchConfig base;
  base.max_plan_size = 4;
  base.budget = search::SimulationBudget{300};
  const auto configs = plan_size_configs(base, {1, 4});
  const auto dir = std::filesystem::temp_directory_path() / "svcsel_harness_test";
  write_report(run_sweep("plan-size", s.model, s.cohort, t, configs, 2, 9), dir / "a");
  write_report(run_sweep("plan-size", s.model, s.cohort, t, configs, 2, 9), dir / "b");
  for (const char* f : {"rows.csv", "raw.csv", "report.md", "report.json"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

  const auto md = slurp(dir / "a" / "report.md");
  CHECK(md.find("| Config | 1 | 2 | 3 | 4 | 5 | 6 | 7 | 8 | 9 | 10 |") != std::string::npos);
  CHECK(md.find("| d=1 |") != std::string::npos);
}

TEST_CASE("reported means match a recomputation from raw.csv") {
  const auto& s = setup();
  const auto t = build_test_set(s.cohort, s.model, {500, 10, 1, 6});
  search::SearchConfig base;
  base.max_plan_size = 3;
  base.budget = search::SimulationBudget{200};
  const auto report = run_sweep("enh", s.model, s.cohort, t, enhancement_configs(base, {50, 200}), 2, 3);
  std::map<std::string, std::pair<double, int>> sums;
  for (const auto& r : report.raw) {
    sums[r.config].first += r.reduction;
    sums[r.config].second += 1;
  }
  for (const auto& row : report.rows)
    CHECK(row.overall_mean == doctest::Approx(sums[row.config].first / sums[row.config].second).epsilon(1e-12));
}

TEST_CASE("MCTS and Dijkstra rows share the test set") {
  const auto& s = setup();
  const auto t = build_test_set(s.cohort, s.model, {500, 10, 1, 7});
  search::SearchConfig base;
  base.max_plan_size = 3;
  const auto report = compare_algorithms(s.model, s.cohort, t, base, 500, 2, 1);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].config == "MCTS");
  CHECK(report.rows[1].config == "Dijkstra");
  CHECK(report.rows[0].records == 20);
  CHECK(report.rows[1].records == 10);
}

TEST_CASE("case report carries both plans and both risks") {
  const auto& s = setup();
  const auto& p = s.cohort.patients[400];
  search::SearchConfig cfg;
  cfg.max_plan_size = 3;
  cfg.budget = search::SimulationBudget{500};
  const auto r = search::run_search(s.model, p, s.cohort.catalog.size(), cfg);
  const auto j = case_report(s.cohort, p, r);
  CHECK(j.at("risk_mcts").get<double>() == r.risk);
  CHECK(j.at("risk_observed").get<double>() == r.initial_risk);
  CHECK(j.at("selection_observed").size() == p.observed_plan.size());
  CHECK(j.at("conditions").at(0).get<std::string>().rfind("age ", 0) == 0);
}

TEST_CASE("cross-validated AUC of shuffled labels is near one half") {
  auto cohort = fixtures::small_cohort(3000, 10, 5, 43);
  Rng rng(44);
  std::vector<int> labels;
  for (const auto& p : cohort.patients) labels.push_back(p.observed_outcome);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < labels.size(); ++i) cohort.patients[i].observed_outcome = labels[i];
  selection::EnsembleSpec spec;
  spec.target_models = 3;
  spec.initial_features_per_group = 10;
  const auto eval = evaluate_model(cohort, propensity::uniform_weights(cohort), {}, spec, 5, 1);
  CHECK(eval.ensemble_auc.size() == 5);
  CHECK(std::abs(eval.ensemble_mean - 0.5) <= 0.03);
  CHECK_FALSE(eval.roc.empty());
}

TEST_CASE("training split is seeded and sized") {
  const auto a = training_rows(100, 0.2, 1);
  CHECK(a.size() == 80);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(training_rows(100, 0.2, 1) == a);
  CHECK_FALSE(training_rows(100, 0.2, 2) == a);
  CHECK_THROWS(training_rows(10, 1.0, 1));
}
