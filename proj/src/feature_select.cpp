#include "svcsel/feature_select.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "svcsel/rng.hpp"

namespace svcsel::selection {

TrainingSet::TrainingSet(const Cohort& cohort, std::vector<std::size_t> rows,
                         std::vector<double> weights)
    : cohort_(&cohort), rows_(std::move(rows)), weights_(std::move(weights)) {
  if (weights_.size() != rows_.size()) throw std::invalid_argument("one weight per row required");
  for (std::size_t c = 0; c < cohort.characteristic_names.size(); ++c)
    char_index_.emplace(cohort.characteristic_names[c], c);
  const std::size_t s = cohort.catalog.size();
  labels_.reserve(rows_.size());
  uses_.reserve(rows_.size());
  chars_.reserve(rows_.size());
  for (auto r : rows_) {
    const auto& p = cohort.patients.at(r);
    labels_.push_back(static_cast<double>(p.observed_outcome));
    std::vector<char> uses(s, 0);
    for (auto id : p.observed_plan.services()) uses[id.index()] = 1;
    uses_.push_back(std::move(uses));
    std::vector<double> values;
    for (const auto& name : cohort.characteristic_names) values.push_back(p.characteristics.at(name));
    chars_.push_back(std::move(values));
  }
}

TrainingSet::TrainingSet(const Cohort& cohort, std::vector<double> weights)
    : TrainingSet(cohort,
                  [&] {
                    std::vector<std::size_t> rows(cohort.patients.size());
                    std::iota(rows.begin(), rows.end(), 0);
                    return rows;
                  }(),
                  std::move(weights)) {}

Eigen::VectorXd TrainingSet::column(const Predictor& p) const {
  Eigen::VectorXd col(static_cast<Eigen::Index>(rows_.size()));
  if (p.kind == PredictorKind::kServiceService) {
    const auto a = p.left.index(), b = p.right_service().index();
    for (std::size_t i = 0; i < rows_.size(); ++i)
      col[static_cast<Eigen::Index>(i)] = (uses_[i][a] && uses_[i][b]) ? 1.0 : 0.0;
  } else {
    auto it = char_index_.find(p.characteristic());
    if (it == char_index_.end())
      throw SchemaError("unknown characteristic '" + p.characteristic() + "'");
    const auto a = p.left.index();
    for (std::size_t i = 0; i < rows_.size(); ++i)
      col[static_cast<Eigen::Index>(i)] = uses_[i][a] ? chars_[i][it->second] : 0.0;
  }
  return col;
}

Eigen::VectorXd TrainingSet::los_column() const {
  Eigen::VectorXd col(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t i = 0; i < rows_.size(); ++i)
    col[static_cast<Eigen::Index>(i)] = cohort_->patients[rows_[i]].los;
  return col;
}

Eigen::MatrixXd TrainingSet::design(std::span<const int> terms,
                                    const std::map<int, Predictor>& dictionary) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows_.size()), static_cast<Eigen::Index>(terms.size()));
  for (std::size_t j = 0; j < terms.size(); ++j)
    x.col(static_cast<Eigen::Index>(j)) =
        terms[j] == kLosTerm ? los_column() : column(dictionary.at(terms[j]));
  return x;
}

namespace {

bool is_constant(const Eigen::VectorXd& col) {
  return col.size() == 0 || col.maxCoeff() == col.minCoeff();
}

}  // namespace

std::vector<ScreenedPredictor> screen_predictors(const TrainingSet& data,
                                                 std::span<const Predictor> candidates,
                                                 const ScreeningConfig& cfg) {
  std::vector<ScreenedPredictor> kept;
  for (const auto& p : candidates) {
    if (p.kind == PredictorKind::kServiceCharacteristic &&
        std::find(cfg.excluded_characteristics.begin(), cfg.excluded_characteristics.end(),
                  p.characteristic()) != cfg.excluded_characteristics.end())
      continue;
    const Eigen::MatrixXd x = data.column(p);
    if (is_constant(x.col(0))) continue;
    glm::FitResult fit;
    try {
      fit = glm::fit_weighted_logistic(x, data.labels(), data.weights(), cfg.fit);
    } catch (const glm::FitError&) {
      continue;
    }
    if (fit.diagnostics.separation || !std::isfinite(fit.diagnostics.std_errors[1])) continue;
    const double pv = glm::wald_p_value(fit, 1);
    if (pv < cfg.alpha) kept.push_back({p, fit.coefficients[1], pv});
  }
  return kept;
}

std::vector<std::vector<int>> shuffle_into_groups(std::span<const int> predictors,
                                                  std::size_t groups, std::uint64_t seed,
                                                  std::span<const int> forced) {
  if (groups < 1) throw std::invalid_argument("group count must be >= 1");
  std::vector<int> shuffled(predictors.begin(), predictors.end());
  std::sort(shuffled.begin(), shuffled.end());
  Rng rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::vector<std::vector<int>> out(groups);
  const std::size_t base = shuffled.size() / groups, extra = shuffled.size() % groups;
  std::size_t next = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    out[g].assign(shuffled.begin() + static_cast<std::ptrdiff_t>(next),
                  shuffled.begin() + static_cast<std::ptrdiff_t>(next + size));
    std::sort(out[g].begin(), out[g].end());
    next += size;
    out[g].insert(out[g].end(), forced.begin(), forced.end());
  }
  return out;
}

PruneResult prune_group(const TrainingSet& data, std::span<const int> group,
                        const std::map<int, Predictor>& dictionary, double alpha,
                        std::span<const int> forced, const glm::FitConfig& fit_cfg) {
  PruneResult result;
  const auto is_forced = [&](int t) { return std::find(forced.begin(), forced.end(), t) != forced.end(); };

  std::map<int, Eigen::VectorXd> columns;
  std::vector<int> active;
  for (int t : group) {
    if (is_forced(t)) continue;
    auto col = data.column(dictionary.at(t));
    if (is_constant(col)) continue;  // non-estimable: no variance
    columns.emplace(t, std::move(col));
    active.push_back(t);
  }
  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());
  std::vector<int> fixed(forced.begin(), forced.end());
  for (int t : fixed) columns.emplace(t, t == kLosTerm ? data.los_column() : data.column(dictionary.at(t)));

  std::map<int, double> warm;
  double warm_intercept = std::numeric_limits<double>::quiet_NaN();
  for (;;) {
    std::vector<int> terms = active;
    terms.insert(terms.end(), fixed.begin(), fixed.end());
    if (terms.empty()) {
      result.failed = true;
      result.message = "no terms left to fit";
      return result;
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(terms.size()));
    std::vector<double> start;
    const bool use_warm = std::isfinite(warm_intercept);
    if (use_warm) start.push_back(warm_intercept);
    for (std::size_t j = 0; j < terms.size(); ++j) {
      x.col(static_cast<Eigen::Index>(j)) = columns.at(terms[j]);
      if (use_warm) start.push_back(warm.contains(terms[j]) ? warm.at(terms[j]) : 0.0);
    }
    glm::FitResult fit;
    try {
      fit = glm::fit_weighted_logistic(x, data.labels(), data.weights(), fit_cfg, start);
    } catch (const glm::FitError& e) {
      result.failed = true;
      result.message = e.what();
      result.survivors.clear();
      result.model = {};
      std::cerr << "prune_group: fit failed: " << e.what() << '\n';
      return result;
    }
    const auto& d = fit.diagnostics;

    // Non-estimable terms first: separated, then undefined standard errors.
    int remove = 0;
    bool found = false;
    double worst = -1.0;
    for (std::size_t j = 0; j < active.size(); ++j) {
      if (d.separated[j + 1] && std::abs(fit.coefficients[j + 1]) > worst) {
        worst = std::abs(fit.coefficients[j + 1]);
        remove = active[j];
        found = true;
      }
    }
    if (!found && d.separation) {
      // Only forced terms or the intercept diverged; nothing removable fixes it.
      result.failed = true;
      result.message = "separation on a forced term";
      std::cerr << "prune_group: " << result.message << '\n';
      return result;
    }
    if (!found) {
      for (std::size_t j = 0; j < active.size(); ++j)
        if (!std::isfinite(d.std_errors[j + 1])) {
          remove = active[j];
          found = true;
          break;
        }
    }
    if (!found) {
      double max_p = -1.0;
      for (std::size_t j = 0; j < active.size(); ++j) {
        const double pv = d.p_values[j + 1];
        if (pv >= alpha && pv > max_p) {  // strict: ties keep the lowest id
          max_p = pv;
          remove = active[j];
          found = true;
        }
      }
    }

    warm.clear();
    warm_intercept = fit.coefficients[0];
    for (std::size_t j = 0; j < terms.size(); ++j) warm[terms[j]] = fit.coefficients[j + 1];

    if (found) {
      active.erase(std::find(active.begin(), active.end(), remove));
      continue;
    }
    result.survivors = active;
    result.model.intercept = fit.coefficients[0];
    for (std::size_t j = 0; j < terms.size(); ++j) {
      result.model.coefficients[terms[j]] = fit.coefficients[j + 1];
      result.p_values[terms[j]] = d.p_values[j + 1];
    }
    return result;
  }
}

GroupCount initial_group_count(double features_per_group, std::size_t remaining,
                               std::size_t target) {
  if (!(features_per_group > 0)) throw std::invalid_argument("features per group must be > 0");
  const auto n = static_cast<std::size_t>(std::ceil(static_cast<double>(remaining) / features_per_group));
  return {std::max({n, target, std::size_t{1}}), features_per_group};
}

GroupCount next_group_count(const GroupCount& current, std::size_t pruned, std::size_t remaining,
                            std::size_t target) {
  if (current.groups < 1) throw std::invalid_argument("group count must be >= 1");
  GroupCount next;
  next.features_per_group =
      current.features_per_group + static_cast<double>(pruned) / static_cast<double>(current.groups);
  const auto n =
      static_cast<std::size_t>(std::ceil(static_cast<double>(remaining) / next.features_per_group));
  next.groups = std::max({std::min(n, current.groups), target, std::size_t{1}});
  return next;
}

EnsembleModel build_ensemble(const TrainingSet& data, std::span<const ScreenedPredictor> screened,
                             const EnsembleSpec& spec) {
  if (spec.target_models < 1) throw std::invalid_argument("target model count must be >= 1");
  if (spec.initial_features_per_group < 1) throw std::invalid_argument("f0 must be >= 1");
  std::map<int, Predictor> dictionary;
  std::vector<int> remaining;
  for (const auto& s : screened) {
    dictionary.emplace(s.predictor.id, s.predictor);
    remaining.push_back(s.predictor.id);
  }
  std::sort(remaining.begin(), remaining.end());
  if (remaining.empty()) throw EmptyEnsembleError();

  const std::vector<int> forced = spec.force_los ? std::vector<int>{kLosTerm} : std::vector<int>{};
  EnsembleModel model;
  model.metadata.seed = spec.seed;
  model.metadata.alpha = spec.alpha;
  model.metadata.screened_predictors = remaining.size();

  GroupCount count =
      initial_group_count(spec.initial_features_per_group, remaining.size(), spec.target_models);
  std::vector<PruneResult> last;
  for (int iteration = 0;; ++iteration) {
    const auto groups = shuffle_into_groups(remaining, count.groups,
                                            derive_seed(spec.seed, {static_cast<std::uint64_t>(iteration)}),
                                            forced);
    last.clear();
    std::vector<int> survivors;
    for (const auto& g : groups) {
      last.push_back(prune_group(data, g, dictionary, spec.alpha, forced, spec.fit));
      survivors.insert(survivors.end(), last.back().survivors.begin(), last.back().survivors.end());
    }
    std::sort(survivors.begin(), survivors.end());
    const std::size_t pruned = remaining.size() - survivors.size();
    remaining = std::move(survivors);
    model.metadata.trace.push_back(
        {iteration, count.groups, count.features_per_group, pruned, remaining.size()});
    if (remaining.empty()) throw EmptyEnsembleError();
    if (count.groups <= spec.target_models || pruned == 0 || iteration + 1 >= spec.max_iterations)
      break;
    count = next_group_count(count, pruned, remaining.size(), spec.target_models);
  }

  for (const auto& r : last) {
    if (r.failed || r.survivors.empty()) continue;
    model.members.push_back(r.model);
    for (int id : r.survivors) model.predictors.emplace(id, dictionary.at(id));
  }
  if (model.members.empty()) throw EmptyEnsembleError();
  return model;
}

EnsembleModel train(const TrainingSet& data, const ScreeningConfig& screening,
                    const EnsembleSpec& spec) {
  const auto& cohort = data.cohort();
  const auto candidates = enumerate_candidates(cohort.catalog, cohort.characteristic_names);
  const auto screened = screen_predictors(data, candidates, screening);
  auto model = build_ensemble(data, screened, spec);
  std::vector<double> scores;
  std::vector<int> labels;
  for (auto r : data.rows()) {
    const auto& p = cohort.patients[r];
    scores.push_back(CompiledScorer(model, p, cohort.catalog.size()).risk(p.observed_plan));
    labels.push_back(p.observed_outcome);
  }
  model.metadata.training_auc = glm::roc_auc(scores, labels);
  for (auto r : data.rows()) model.metadata.training_ids.push_back(cohort.patients[r].id);
  return model;
}

}  // namespace svcsel::selection
