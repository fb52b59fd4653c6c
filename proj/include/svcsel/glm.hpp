#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "svcsel/catalog.hpp"

namespace svcsel::glm {

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitConfig {
  int max_iterations = 100;
  double score_tolerance = 1e-8;
  double loglik_relative_tolerance = 1e-10;
  double ridge = 1e-8;
  /// A coefficient whose magnitude exceeds this during iteration is treated
  /// as non-estimable (complete or quasi-complete separation).
  double separation_threshold = 15.0;
};

struct FitDiagnostics {
  bool converged = false;
  int iterations = 0;
  bool separation = false;
  double log_likelihood = 0.0;
  /// max |X^T (w * (y - p)) - ridge * beta| at the returned coefficients.
  double score_residual = 0.0;
  // Per coefficient, intercept first.
  std::vector<double> std_errors;
  std::vector<double> p_values;
  std::vector<bool> separated;
};

struct FitResult {
  /// Intercept first, then one entry per column of X.
  std::vector<double> coefficients;
  FitDiagnostics diagnostics;
};

/// Weighted logistic regression by iteratively reweighted least squares
/// (Newton on the ridge-penalized weighted log-likelihood). `x` holds the
/// predictor columns only; an intercept is always added.
///
/// Throws FitError when the labels are single-class, when any input is
/// non-finite, or when a weight is not strictly positive.
FitResult fit_weighted_logistic(const Eigen::MatrixXd& x, std::span<const double> y,
                                std::span<const double> w, const FitConfig& cfg = {},
                                std::span<const double> start = {});

/// Penalty-free weighted log-likelihood; beta has the intercept first.
double weighted_log_likelihood(const Eigen::MatrixXd& x, std::span<const double> y,
                               std::span<const double> w, const Eigen::VectorXd& beta);
/// Analytic gradient of weighted_log_likelihood.
Eigen::VectorXd weighted_score(const Eigen::MatrixXd& x, std::span<const double> y,
                               std::span<const double> w, const Eigen::VectorXd& beta);

/// Two-sided normal p-value of coef / std_error.
double wald_p_value(double coef, double std_error);

/// p-value of coefficient `index` (0 = intercept). Throws FitError if that
/// coefficient is flagged as separated, since no p-value is defined.
double wald_p_value(const FitResult& fit, std::size_t index);

inline constexpr double kLinearPredictorClamp = 35.0;

/// Logistic function with the argument clamped to +-35, so the result is
/// always strictly inside (0, 1).
double clamped_sigmoid(double eta);

/// Intercept plus coefficients keyed by predictor id; kLosTerm keys the LOS
/// slot.
struct LogisticModel {
  double intercept = 0.0;
  std::map<int, double> coefficients;

  bool operator==(const LogisticModel&) const = default;
};

double linear_predictor(const LogisticModel& model, const FeatureVector& x);
double predict_risk(const LogisticModel& model, const FeatureVector& x);

/// Mann-Whitney AUC; tied scores count one half. Returns NaN if either class
/// is absent.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double threshold = 0.0;
  double false_positive_rate = 0.0;
  double true_positive_rate = 0.0;
};
/// Curve from (0,0) to (1,1), one point per distinct score.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

/// Seeded partition of row indices into k folds, stratified by label.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, int k,
                                                       std::uint64_t seed);

struct FoldAuc {
  int fold = 0;
  double auc = 0.0;
  bool skipped = false;
  std::string warning;
};

/// Fits on k-1 folds and scores the held-out fold, for each fold. The callback
/// receives (train rows, test rows) and returns one score per test row.
/// Folds whose held-out labels are single-class are skipped with a warning.
using FitAndScore = std::function<std::vector<double>(std::span<const std::size_t> train,
                                                      std::span<const std::size_t> test)>;
std::vector<FoldAuc> k_fold_cv(const FitAndScore& fit_and_score, std::span<const int> labels,
                               int k, std::uint64_t seed);

}  // namespace svcsel::glm
