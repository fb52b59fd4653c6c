#include "svcsel/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "svcsel/datagen.hpp"
#include "svcsel/rng.hpp"

namespace svcsel::harness {

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<std::size_t> training_rows(std::size_t n, double holdout, std::uint64_t seed) {
  if (!(holdout >= 0.0 && holdout < 1.0)) throw std::invalid_argument("holdout must be in [0, 1)");
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x686f6c64ULL}));
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(static_cast<std::size_t>(std::ceil((1.0 - holdout) * static_cast<double>(n))));
  std::sort(rows.begin(), rows.end());
  return rows;
}

TestSet build_test_set(const Cohort& cohort, const EnsembleModel& model, const TestSetConfig& cfg) {
  if (cfg.deciles < 1 || cfg.per_decile < 1) throw std::invalid_argument("bad test set shape");
  const std::set<std::string> training(model.metadata.training_ids.begin(),
                                       model.metadata.training_ids.end());
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < cohort.patients.size(); ++i)
    if (!training.contains(cohort.patients[i].id)) eligible.push_back(i);
  if (eligible.size() < cfg.pool_size)
    throw std::invalid_argument("only " + std::to_string(eligible.size()) +
                                " eligible patients; the pool needs " +
                                std::to_string(cfg.pool_size));
  if (cfg.pool_size < cfg.deciles * cfg.per_decile)
    throw std::invalid_argument("pool smaller than the test set");

  Rng rng(derive_seed(cfg.seed, {0x74657374ULL}));
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(cfg.pool_size);

  TestSet out;
  out.excluded_ids.assign(training.begin(), training.end());
  for (auto i : eligible) {
    const auto& p = cohort.patients[i];
    out.pool.push_back({p.id, score_risk(model, p, p.observed_plan), 0});
  }
  std::stable_sort(out.pool.begin(), out.pool.end(), [](const TestCase& a, const TestCase& b) {
    return a.initial_risk < b.initial_risk || (a.initial_risk == b.initial_risk && a.patient_id < b.patient_id);
  });
  const std::size_t n = out.pool.size();
  std::vector<std::vector<std::size_t>> members(cfg.deciles);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t d = r * cfg.deciles / n;
    out.pool[r].decile = static_cast<int>(d + 1);
    members[d].push_back(r);
  }
  out.boundaries.push_back(out.pool.front().initial_risk);
  for (std::size_t d = 1; d < cfg.deciles; ++d) {
    const auto& lo = out.pool[members[d - 1].back()];
    const auto& hi = out.pool[members[d].front()];
    out.boundaries.push_back(0.5 * (lo.initial_risk + hi.initial_risk));
  }
  out.boundaries.push_back(out.pool.back().initial_risk);

  for (std::size_t d = 0; d < cfg.deciles; ++d) {
    auto& m = members[d];
    if (m.size() < cfg.per_decile) throw std::invalid_argument("decile smaller than per_decile");
    std::shuffle(m.begin(), m.end(), rng);
    m.resize(cfg.per_decile);
    std::sort(m.begin(), m.end());
    for (auto r : m) out.cases.push_back(out.pool[r]);
  }
  return out;
}

nlohmann::json test_set_to_json(const TestSet& t) {
  auto cases = nlohmann::json::array();
  for (const auto& c : t.cases)
    cases.push_back({{"id", c.patient_id}, {"initial_risk", c.initial_risk}, {"decile", c.decile}});
  auto pool = nlohmann::json::array();
  for (const auto& c : t.pool)
    pool.push_back({{"id", c.patient_id}, {"initial_risk", c.initial_risk}, {"decile", c.decile}});
  return {{"cases", cases}, {"boundaries", t.boundaries}, {"excluded_ids", t.excluded_ids},
          {"pool", pool}};
}

TestSet test_set_from_json(const nlohmann::json& j) {
  TestSet t;
  auto read = [](const nlohmann::json& arr) {
    std::vector<TestCase> out;
    for (const auto& c : arr)
      out.push_back({c.at("id").get<std::string>(), c.at("initial_risk").get<double>(),
                     c.at("decile").get<int>()});
    return out;
  };
  t.cases = read(j.at("cases"));
  t.pool = read(j.at("pool"));
  t.boundaries = j.at("boundaries").get<std::vector<double>>();
  t.excluded_ids = j.at("excluded_ids").get<std::vector<std::string>>();
  return t;
}

ExperimentReport aggregate(const std::string& suite, std::size_t deciles,
                           std::vector<RunRecord> raw) {
  ExperimentReport report;
  report.suite = suite;
  report.deciles = deciles;
  std::vector<std::string> order;
  for (const auto& r : raw)
    if (std::find(order.begin(), order.end(), r.config) == order.end()) order.push_back(r.config);
  for (const auto& name : order) {
    ConfigRow row;
    row.config = name;
    std::vector<std::vector<double>> per_decile(deciles);
    std::map<int, std::vector<double>> per_repeat;
    std::vector<double> all;
    for (const auto& r : raw) {
      if (r.config != name) continue;
      if (r.decile < 1 || static_cast<std::size_t>(r.decile) > deciles)
        throw std::invalid_argument("record decile out of range");
      per_decile[static_cast<std::size_t>(r.decile - 1)].push_back(r.reduction);
      per_repeat[r.repeat].push_back(r.reduction);
      all.push_back(r.reduction);
    }
    for (const auto& d : per_decile) row.decile_means.push_back(mean(d));
    row.overall_mean = mean(all);
    std::vector<double> repeat_means;
    for (const auto& [rep, v] : per_repeat) repeat_means.push_back(mean(v));
    row.spread = sample_sd(repeat_means);
    row.repeats = per_repeat.size();
    row.records = all.size();
    report.rows.push_back(std::move(row));
  }
  report.raw = std::move(raw);
  return report;
}

namespace {

RunRecord record_for(const std::string& config, const TestCase& c, int repeat,
                     const search::SearchResult& result, const ServiceCatalog& catalog) {
  RunRecord rec;
  rec.config = config;
  rec.patient_id = c.patient_id;
  rec.decile = c.decile;
  rec.repeat = repeat;
  rec.initial_risk = result.initial_risk;
  rec.risk = result.risk;
  rec.reduction = result.risk_reduction;
  rec.simulations = result.simulations;
  rec.evaluations = result.evaluations;
  rec.seconds = result.seconds;
  rec.plan = plan_codes(result.plan, catalog);
  return rec;
}

}  // namespace

ExperimentReport run_sweep(const std::string& suite, const EnsembleModel& model,
                           const Cohort& cohort, const TestSet& tests,
                           const std::vector<NamedConfig>& configs, int repeats,
                           std::uint64_t seed) {
  if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  std::vector<RunRecord> raw;
  std::size_t deciles = 0;
  for (const auto& c : tests.cases) deciles = std::max(deciles, static_cast<std::size_t>(c.decile));
  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    const auto& cfg = configs[ci];
    for (std::size_t pi = 0; pi < tests.cases.size(); ++pi) {
      const auto& tc = tests.cases[pi];
      const PatientRecord* patient = cohort.find(tc.patient_id);
      if (!patient) throw std::invalid_argument("test patient " + tc.patient_id + " not in cohort");
      for (int rep = 0; rep < repeats; ++rep) {
        search::SearchResult result;
        if (cfg.algorithm == Algorithm::kDijkstra) {
          result = search::dijkstra_search(model, *patient, cohort.catalog.size(), cfg.dijkstra);
        } else {
          auto sc = cfg.mcts;
          sc.seed = derive_seed(seed, {ci, pi, static_cast<std::uint64_t>(rep)});
          result = search::run_search(model, *patient, cohort.catalog.size(), sc);
          if (result.simulations == 0) {
            // No search happened: the observed plan stands.
            result.plan = patient->observed_plan;
            search::finalize(result, model, *patient);
          }
        }
        raw.push_back(record_for(cfg.name, tc, rep, result, cohort.catalog));
      }
    }
  }
  return aggregate(suite, deciles, std::move(raw));
}

ExperimentReport compare_algorithms(const EnsembleModel& model, const Cohort& cohort,
                                    const TestSet& tests, const search::SearchConfig& mcts,
                                    std::uint64_t evaluation_budget, int repeats,
                                    std::uint64_t seed) {
  NamedConfig m;
  m.name = "MCTS";
  m.mcts = mcts;
  m.mcts.budget = search::SimulationBudget{evaluation_budget};
  NamedConfig d;
  d.name = "Dijkstra";
  d.algorithm = Algorithm::kDijkstra;
  d.dijkstra.plan_size = mcts.max_plan_size;
  d.dijkstra.max_evaluations = evaluation_budget;
  // Dijkstra is deterministic; one repeat carries all the information.
  auto a = run_sweep("dijkstra", model, cohort, tests, {m}, repeats, seed);
  auto b = run_sweep("dijkstra", model, cohort, tests, {d}, 1, seed);
  auto raw = std::move(a.raw);
  raw.insert(raw.end(), b.raw.begin(), b.raw.end());
  return aggregate("dijkstra", a.deciles, std::move(raw));
}

std::vector<NamedConfig> tuning_configs(const search::SearchConfig& base,
                                        const std::vector<double>& c_values,
                                        const std::vector<double>& w_values) {
  std::vector<NamedConfig> out;
  for (double c : c_values) {
    NamedConfig n;
    n.mcts = base;
    n.mcts.mode = search::Mode::kVanilla;
    n.mcts.exploration = c;
    n.name = "vanilla C=" + num(c);
    out.push_back(n);
  }
  for (double w : w_values) {
    NamedConfig n;
    n.mcts = base;
    n.mcts.mode = search::Mode::kPhMast;
    n.mcts.history_weight = w;
    n.name = "PH/MAST W=" + num(w);
    out.push_back(n);
  }
  return out;
}

std::vector<NamedConfig> enhancement_configs(const search::SearchConfig& base,
                                             const std::vector<std::uint64_t>& budgets) {
  std::vector<NamedConfig> out;
  for (auto b : budgets)
    for (auto mode : {search::Mode::kVanilla, search::Mode::kPhMast, search::Mode::kTimeControlled,
                      search::Mode::kPhAndTime}) {
      NamedConfig n;
      n.mcts = base;
      n.mcts.mode = mode;
      n.mcts.budget = search::SimulationBudget{b};
      n.name = search::to_string(mode) + " sims=" + std::to_string(b);
      out.push_back(n);
    }
  return out;
}

std::vector<NamedConfig> plan_size_configs(const search::SearchConfig& base,
                                           const std::vector<std::size_t>& sizes) {
  std::vector<NamedConfig> out;
  for (auto d : sizes) {
    NamedConfig n;
    n.mcts = base;
    n.mcts.max_plan_size = d;
    n.name = "d=" + std::to_string(d);
    out.push_back(n);
  }
  return out;
}

ModelEvaluation evaluate_model(const Cohort& cohort, const propensity::CohortWeights& weights,
                               const selection::ScreeningConfig& screening,
                               const selection::EnsembleSpec& spec, int folds,
                               std::uint64_t seed) {
  std::vector<int> labels;
  for (const auto& p : cohort.patients) labels.push_back(p.observed_outcome);
  const auto all_weights = weights.select(cohort.patients);
  ModelEvaluation out;
  std::vector<double> pooled_scores;
  std::vector<int> pooled_labels;
  const auto fold_aucs = glm::k_fold_cv(
      [&](std::span<const std::size_t> train, std::span<const std::size_t> test) {
        std::vector<double> w;
        for (auto r : train) w.push_back(all_weights[r]);
        selection::TrainingSet data(cohort, {train.begin(), train.end()}, std::move(w));
        EnsembleModel model;
        try {
          model = selection::train(data, screening, spec);
        } catch (const selection::EmptyEnsembleError& e) {
          // Nothing predictive survived: every held-out patient gets the same score.
          out.warnings.push_back(std::string("fold scored as constant: ") + e.what());
          out.member_auc.emplace_back();
          std::vector<double> flat(test.size(), 0.5);
          for (auto r : test) {
            pooled_scores.push_back(0.5);
            pooled_labels.push_back(cohort.patients[r].observed_outcome);
          }
          return flat;
        }
        std::vector<double> scores;
        std::vector<std::vector<double>> member_scores(model.members.size());
        std::vector<int> test_labels;
        const auto predictors = model.predictor_list();
        for (auto r : test) {
          const auto& p = cohort.patients[r];
          const auto x = featurize(p, p.observed_plan, predictors);
          double total = 0.0;
          for (std::size_t m = 0; m < model.members.size(); ++m) {
            const double risk = glm::predict_risk(model.members[m], x);
            member_scores[m].push_back(risk);
            total += risk;
          }
          scores.push_back(total / static_cast<double>(model.members.size()));
          test_labels.push_back(p.observed_outcome);
        }
        std::vector<double> member_auc;
        for (const auto& ms : member_scores) member_auc.push_back(glm::roc_auc(ms, test_labels));
        out.member_auc.push_back(std::move(member_auc));
        pooled_scores.insert(pooled_scores.end(), scores.begin(), scores.end());
        pooled_labels.insert(pooled_labels.end(), test_labels.begin(), test_labels.end());
        return scores;
      },
      labels, folds, seed);
  for (const auto& f : fold_aucs) {
    if (f.skipped)
      out.warnings.push_back(f.warning);
    else
      out.ensemble_auc.push_back(f.auc);
  }
  out.ensemble_mean = mean(out.ensemble_auc);
  out.ensemble_sd = sample_sd(out.ensemble_auc);
  out.roc = glm::roc_curve(pooled_scores, pooled_labels);
  return out;
}

std::string markdown_table(const ExperimentReport& report) {
  std::ostringstream os;
  os << "| Config |";
  for (std::size_t d = 1; d <= report.deciles; ++d) os << ' ' << d << " |";
  os << " All (mean ± sd over repeats) |\n|---|";
  for (std::size_t d = 0; d <= report.deciles; ++d) os << "---|";
  os << '\n';
  for (const auto& row : report.rows) {
    os << "| " << row.config << " |";
    for (double m : row.decile_means) os << ' ' << fixed(m, 2) << " |";
    os << ' ' << fixed(row.overall_mean, 2) << " ± " << fixed(row.spread, 3) << " |\n";
  }
  return os.str();
}

std::string rows_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "config";
  for (std::size_t d = 1; d <= report.deciles; ++d) os << ",decile_" << d;
  os << ",all_mean,all_sd_over_repeats,repeats,records\n";
  for (const auto& row : report.rows) {
    os << '"' << row.config << '"';
    for (double m : row.decile_means) os << ',' << num(m);
    os << ',' << num(row.overall_mean) << ',' << num(row.spread) << ',' << row.repeats << ','
       << row.records << '\n';
  }
  return os.str();
}

std::string raw_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "config,patient_id,decile,repeat,initial_risk,risk,reduction,simulations,evaluations,plan\n";
  for (const auto& r : report.raw) {
    os << '"' << r.config << "\"," << r.patient_id << ',' << r.decile << ',' << r.repeat << ','
       << num(r.initial_risk) << ',' << num(r.risk) << ',' << num(r.reduction) << ','
       << r.simulations << ',' << r.evaluations << ",\"";
    for (std::size_t i = 0; i < r.plan.size(); ++i) os << (i ? " " : "") << r.plan[i];
    os << "\"\n";
  }
  return os.str();
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  write("rows.csv", rows_csv(report));
  write("raw.csv", raw_csv(report));
  write("report.md", "## " + report.suite + "\n\nMean risk reduction (percentage points) per "
                     "initial-risk decile.\n\n" + markdown_table(report));
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"config", r.config},
                    {"decile_means", r.decile_means},
                    {"overall_mean", r.overall_mean},
                    {"spread_sd_over_repeats", r.spread},
                    {"repeats", r.repeats},
                    {"records", r.records}});
  datagen::write_json_file(dir / "report.json", {{"suite", report.suite}, {"rows", rows}});
}

nlohmann::json case_report(const Cohort& cohort, const PatientRecord& patient,
                           const search::SearchResult& result) {
  std::vector<std::string> conditions;
  for (const auto& [name, value] : patient.characteristics) {
    if (name == "age")
      conditions.push_back("age " + fixed(value, 0));
    else if (value != 0.0)
      conditions.push_back(name);
  }
  return {{"patient_id", patient.id},
          {"conditions", conditions},
          {"los", patient.los},
          {"selection_mcts", plan_codes(result.plan, cohort.catalog)},
          {"selection_observed", plan_codes(patient.observed_plan, cohort.catalog)},
          {"risk_mcts", result.risk},
          {"risk_observed", result.initial_risk}};
}

}  // namespace svcsel::harness
