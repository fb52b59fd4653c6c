#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "svcsel/catalog.hpp"
#include "svcsel/glm.hpp"
#include "svcsel/scoring.hpp"

namespace svcsel::selection {

/// Rows of a cohort with their labels and observation weights, plus cached
/// plan membership so predictor columns are cheap to build.
class TrainingSet {
 public:
  TrainingSet(const Cohort& cohort, std::vector<std::size_t> rows, std::vector<double> weights);
  /// All patients, weighted.
  TrainingSet(const Cohort& cohort, std::vector<double> weights);

  const Cohort& cohort() const { return *cohort_; }
  std::size_t size() const { return rows_.size(); }
  std::span<const std::size_t> rows() const { return rows_; }
  std::span<const double> labels() const { return labels_; }
  std::span<const double> weights() const { return weights_; }

  /// Column of predictor values over the rows.
  Eigen::VectorXd column(const Predictor& p) const;
  Eigen::VectorXd los_column() const;
  /// Columns for `terms` (predictor ids or kLosTerm), in order.
  Eigen::MatrixXd design(std::span<const int> terms, const std::map<int, Predictor>& dictionary) const;

 private:
  const Cohort* cohort_;
  std::vector<std::size_t> rows_;
  std::vector<double> labels_;
  std::vector<double> weights_;
  std::vector<std::vector<char>> uses_;       // [row][service]
  std::vector<std::vector<double>> chars_;    // [row][characteristic]
  std::map<std::string, std::size_t, std::less<>> char_index_;
};

struct ScreeningConfig {
  double alpha = 0.05;
  /// Characteristics directly related to the outcome; never paired.
  std::vector<std::string> excluded_characteristics;
  glm::FitConfig fit;
};

struct ScreenedPredictor {
  Predictor predictor;
  double coefficient = 0.0;
  double p_value = 1.0;
};

/// Univariate weighted fit (intercept + predictor) per candidate interaction;
/// keeps those with Wald p < alpha that are estimable.
std::vector<ScreenedPredictor> screen_predictors(const TrainingSet& data,
                                                 std::span<const Predictor> candidates,
                                                 const ScreeningConfig& cfg = {});

/// Seeded near-equal partition of `predictors` into `groups` groups (sizes
/// differ by at most one, larger groups first); every id in `forced` is
/// appended to each group.
std::vector<std::vector<int>> shuffle_into_groups(std::span<const int> predictors,
                                                  std::size_t groups, std::uint64_t seed,
                                                  std::span<const int> forced);

struct PruneResult {
  /// Surviving predictor ids (forced terms excluded), ascending.
  std::vector<int> survivors;
  /// Final fit over survivors + forced terms; empty if the fit failed.
  glm::LogisticModel model;
  std::map<int, double> p_values;
  bool failed = false;
  std::string message;
};

/// Backward elimination within one group: non-estimable terms go first, then
/// the least significant term with p >= alpha (ties: lowest id), refitting
/// after each removal. Terms in `forced` are never removed.
PruneResult prune_group(const TrainingSet& data, std::span<const int> group,
                        const std::map<int, Predictor>& dictionary, double alpha,
                        std::span<const int> forced, const glm::FitConfig& fit = {});

struct GroupCount {
  std::size_t groups = 1;
  double features_per_group = 1.0;
};

/// f_next = f + pruned / groups; groups_next = ceil(remaining / f_next),
/// floored at `target` and never above `groups`.
GroupCount next_group_count(const GroupCount& current, std::size_t pruned, std::size_t remaining,
                            std::size_t target);

/// Initial group count ceil(remaining / f0), floored at `target`.
GroupCount initial_group_count(double features_per_group, std::size_t remaining,
                               std::size_t target);

struct EnsembleSpec {
  std::size_t target_models = 15;
  double initial_features_per_group = 50.0;
  double alpha = 0.05;
  bool force_los = true;
  std::uint64_t seed = 1;
  int max_iterations = 1000;
  glm::FitConfig fit;
};

class EmptyEnsembleError : public std::runtime_error {
 public:
  EmptyEnsembleError() : std::runtime_error("empty ensemble: every predictor was pruned") {}
};

/// Shuffle, fit and prune, regroup; repeat until the group count reaches the
/// target or an iteration prunes nothing. Each final group becomes a member.
EnsembleModel build_ensemble(const TrainingSet& data, std::span<const ScreenedPredictor> screened,
                             const EnsembleSpec& spec);

/// Screening followed by ensemble construction over the full candidate
/// universe of the cohort.
EnsembleModel train(const TrainingSet& data, const ScreeningConfig& screening,
                    const EnsembleSpec& spec);

}  // namespace svcsel::selection
