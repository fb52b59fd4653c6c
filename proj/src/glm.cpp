#include "svcsel/glm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svcsel/rng.hpp"

namespace svcsel::glm {
namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  return design;
}

// log(1 + exp(eta)) without overflow.
double softplus(double eta) {
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double stable_sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double loglik_of_eta(const Eigen::VectorXd& eta, std::span<const double> y,
                     std::span<const double> w) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    ll += w[i] * (y[i] * eta[i] - softplus(eta[i]));
  return ll;
}

}  // namespace

double clamped_sigmoid(double eta) {
  return stable_sigmoid(std::clamp(eta, -kLinearPredictorClamp, kLinearPredictorClamp));
}

double weighted_log_likelihood(const Eigen::MatrixXd& x, std::span<const double> y,
                               std::span<const double> w, const Eigen::VectorXd& beta) {
  return loglik_of_eta(with_intercept(x) * beta, y, w);
}

Eigen::VectorXd weighted_score(const Eigen::MatrixXd& x, std::span<const double> y,
                               std::span<const double> w, const Eigen::VectorXd& beta) {
  const Eigen::MatrixXd design = with_intercept(x);
  const Eigen::VectorXd eta = design * beta;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) r[i] = w[i] * (y[i] - stable_sigmoid(eta[i]));
  return design.transpose() * r;
}

FitResult fit_weighted_logistic(const Eigen::MatrixXd& x, std::span<const double> y,
                                std::span<const double> w, const FitConfig& cfg,
                                std::span<const double> start) {
  const auto n = x.rows();
  const auto k = x.cols() + 1;
  if (static_cast<std::size_t>(n) != y.size() || y.size() != w.size())
    throw FitError("row count mismatch between X, y and w");
  if (!x.allFinite()) throw FitError("non-finite value in design matrix");
  double wsum = 0.0, wy = 0.0;
  bool has0 = false, has1 = false;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(w[i]) || w[i] <= 0.0) throw FitError("weights must be finite and > 0");
    if (y[i] == 0.0)
      has0 = true;
    else if (y[i] == 1.0)
      has1 = true;
    else
      throw FitError("labels must be 0 or 1");
    wsum += w[i];
    wy += w[i] * y[i];
  }
  if (!has0 || !has1) throw FitError("labels contain a single class");

  const Eigen::MatrixXd design = with_intercept(x);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  if (!start.empty()) {
    if (static_cast<Eigen::Index>(start.size()) != k) throw FitError("start vector size mismatch");
    for (Eigen::Index j = 0; j < k; ++j) beta[j] = start[j];
  } else {
    const double ybar = wy / wsum;
    beta[0] = std::log(ybar / (1.0 - ybar));
  }

  auto penalized = [&](const Eigen::VectorXd& b, const Eigen::VectorXd& eta) {
    return loglik_of_eta(eta, y, w) - 0.5 * cfg.ridge * b.squaredNorm();
  };

  FitResult result;
  auto& diag = result.diagnostics;
  diag.separated.assign(k, false);

  Eigen::VectorXd eta = design * beta;
  double objective = penalized(beta, eta);
  Eigen::VectorXd p(n), grad(k);
  Eigen::MatrixXd hessian(k, k);

  auto refresh = [&] {
    Eigen::VectorXd r(n), s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = stable_sigmoid(eta[i]);
      r[i] = w[i] * (y[i] - p[i]);
      s[i] = std::sqrt(w[i] * p[i] * (1.0 - p[i]));
    }
    grad.noalias() = design.transpose() * r;
    grad -= cfg.ridge * beta;
    const Eigen::MatrixXd scaled = design.array().colwise() * s.array();
    hessian.setZero();
    hessian.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
    hessian.diagonal().array() += cfg.ridge;
    hessian.triangularView<Eigen::Upper>() = hessian.transpose();
  };

  refresh();
  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    diag.iterations = iter;
    if (grad.cwiseAbs().maxCoeff() <= cfg.score_tolerance) {
      diag.converged = true;
      break;
    }
    const Eigen::VectorXd step = hessian.ldlt().solve(grad);
    // Step halving keeps the penalized likelihood monotone.
    double scale = 1.0;
    Eigen::VectorXd candidate;
    Eigen::VectorXd candidate_eta;
    double candidate_objective = 0.0;
    for (int halving = 0; halving < 30; ++halving) {
      candidate = beta + scale * step;
      candidate_eta = design * candidate;
      candidate_objective = penalized(candidate, candidate_eta);
      if (candidate_objective >= objective - 1e-12 * std::abs(objective)) break;
      scale *= 0.5;
    }
    beta = candidate;
    eta = candidate_eta;
    const double change = std::abs(candidate_objective - objective);
    const double previous = objective;
    objective = candidate_objective;
    refresh();

    bool separated = false;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (std::abs(beta[j]) > cfg.separation_threshold) {
        diag.separated[j] = true;
        separated = true;
      }
    }
    if (separated && diag.separated[0]) {
      // A diverging intercept is the symptom; blame the predictors whose
      // contribution to the linear predictor has also grown past the bound.
      for (Eigen::Index j = 1; j < k; ++j)
        if (std::abs(beta[j]) * design.col(j).cwiseAbs().maxCoeff() > cfg.separation_threshold)
          diag.separated[j] = true;
    }
    if (separated) {
      diag.separation = true;
      break;
    }
    if (change <= cfg.loglik_relative_tolerance * std::max(1.0, std::abs(previous))) {
      diag.converged = true;
      break;
    }
  }

  diag.log_likelihood = loglik_of_eta(eta, y, w);
  diag.score_residual = grad.cwiseAbs().maxCoeff();
  diag.std_errors.assign(k, std::numeric_limits<double>::quiet_NaN());
  diag.p_values.assign(k, 1.0);
  const Eigen::MatrixXd covariance = hessian.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  for (Eigen::Index j = 0; j < k; ++j) {
    const double var = covariance(j, j);
    if (var > 0.0 && std::isfinite(var)) diag.std_errors[j] = std::sqrt(var);
    if (!diag.separated[j] && std::isfinite(diag.std_errors[j]))
      diag.p_values[j] = wald_p_value(beta[j], diag.std_errors[j]);
  }
  result.coefficients.assign(beta.data(), beta.data() + k);
  return result;
}

double wald_p_value(double coef, double std_error) {
  if (coef == 0.0) return 1.0;
  if (!(std_error > 0.0)) return 0.0;
  const double z = std::abs(coef / std_error);
  return std::clamp(std::erfc(z / std::sqrt(2.0)), 0.0, 1.0);
}

double wald_p_value(const FitResult& fit, std::size_t index) {
  const auto& d = fit.diagnostics;
  if (index >= fit.coefficients.size()) throw FitError("coefficient index out of range");
  if (d.separated[index]) throw FitError("coefficient is not estimable (separation)");
  return wald_p_value(fit.coefficients[index], d.std_errors[index]);
}

double linear_predictor(const LogisticModel& model, const FeatureVector& x) {
  double eta = model.intercept;
  for (const auto& [term, coef] : model.coefficients) eta += coef * x.at(term);
  return eta;
}

double predict_risk(const LogisticModel& model, const FeatureVector& x) {
  return clamped_sigmoid(linear_predictor(model, x));
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores/labels size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Rank-sum with midranks for ties.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1) {
        positive_rank_sum += midrank;
        ++positives;
      }
    i = j;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(positives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double negatives = static_cast<double>(labels.size()) - positives;
  std::vector<RocPoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    curve.push_back({scores[order[i]], negatives > 0 ? fp / negatives : 0.0,
                     positives > 0 ? tp / positives : 0.0});
    i = j;
  }
  return curve;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, int k,
                                                       std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold needs k >= 2");
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  std::size_t next = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) rows.push_back(i);
    std::shuffle(rows.begin(), rows.end(), rng);
    for (auto r : rows) folds[next++ % folds.size()].push_back(r);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<FoldAuc> k_fold_cv(const FitAndScore& fit_and_score, std::span<const int> labels,
                               int k, std::uint64_t seed) {
  const auto folds = stratified_folds(labels, k, seed);
  std::vector<FoldAuc> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    FoldAuc result;
    result.fold = static_cast<int>(f);
    const auto& test = folds[f];
    std::vector<int> test_labels;
    for (auto r : test) test_labels.push_back(labels[r]);
    const auto ones = std::count(test_labels.begin(), test_labels.end(), 1);
    if (ones == 0 || ones == static_cast<long>(test_labels.size())) {
      result.skipped = true;
      result.warning = "fold " + std::to_string(f) + " has a single class; skipped";
      out.push_back(result);
      continue;
    }
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    std::sort(train.begin(), train.end());
    const auto scores = fit_and_score(train, test);
    result.auc = roc_auc(scores, test_labels);
    out.push_back(result);
  }
  return out;
}

}  // namespace svcsel::glm
