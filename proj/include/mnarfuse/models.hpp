#pragma once

// Nuisance working models shared by the estimators: linear/logistic
// coefficient models, least-squares fitting, the parametric odds ratio and
// the inverse-propensity weights built from them.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mnarfuse/basis.hpp"
#include "mnarfuse/error.hpp"
#include "mnarfuse/numeric.hpp"

namespace mnarfuse {

enum class Link { Identity, Logistic };

struct CoefficientModel {
  BasisSpec basis;
  std::vector<double> coefficients;
  Link link = Link::Identity;

  CoefficientModel() : coefficients(1, 0.0) {}
  CoefficientModel(BasisSpec b, std::vector<double> coef, Link l)
      : basis(std::move(b)), coefficients(std::move(coef)), link(l) {
    if (coefficients.size() != basis.size()) {
      throw PreconditionError("coefficient count does not match basis size");
    }
    for (double c : coefficients) {
      if (!std::isfinite(c)) throw PreconditionError("non-finite coefficient");
    }
  }

  double linear_predictor(std::span<const double> features) const noexcept {
    double eta = 0.0;
    for (std::size_t i = 0; i < coefficients.size(); ++i) eta += coefficients[i] * features[i];
    return eta;
  }

  double linear_predictor(std::span<const double> x, std::optional<std::span<const double>> m,
                          std::optional<double> y = std::nullopt) const {
    return linear_predictor(basis.evaluate(x, m, y));
  }

  double predict(std::span<const double> x, std::optional<std::span<const double>> m = std::nullopt,
                 std::optional<double> y = std::nullopt) const {
    const double eta = linear_predictor(x, m, y);
    return link == Link::Logistic ? logistic(eta) : eta;
  }
};

/// Householder least squares over a fixed design, reusable across targets.
/// Construction rejects designs without full column rank, naming the first
/// column that is (numerically) a combination of the ones before it.
class LeastSquares {
 public:
  explicit LeastSquares(Eigen::MatrixXd design, double rank_tol = 1e-9) : design_(std::move(design)) {
    const auto n = design_.rows();
    const auto p = design_.cols();
    if (n < p) {
      throw RankDeficientError("design has " + std::to_string(n) + " rows but " + std::to_string(p) +
                                   " columns",
                               static_cast<std::size_t>(std::max<Eigen::Index>(n, 0)));
    }
    // Sequential Gram-Schmidt with reorthogonalisation to locate dependence.
    Eigen::MatrixXd q(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      Eigen::VectorXd v = design_.col(j);
      const double norm0 = v.norm();
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index k = 0; k < j; ++k) v -= q.col(k).dot(v) * q.col(k);
      }
      const double norm = v.norm();
      if (!(norm0 > 0.0) || norm <= rank_tol * norm0) {
        throw RankDeficientError("rank-deficient design: column " + std::to_string(j) +
                                     " is linearly dependent on earlier columns",
                                 static_cast<std::size_t>(j));
      }
      q.col(j) = v / norm;
    }
    qr_ = design_.householderQr();
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& target) const { return qr_.solve(target); }
  const Eigen::MatrixXd& design() const noexcept { return design_; }

 private:
  Eigen::MatrixXd design_;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
};

/// Ordinary least squares of `targets` on the already-evaluated basis rows.
inline CoefficientModel fit_least_squares(const BasisSpec& basis, std::span<const std::vector<double>> rows,
                                          std::span<const double> targets) {
  if (rows.size() != targets.size()) throw PreconditionError("rows and targets differ in length");
  Eigen::MatrixXd design(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(basis.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != basis.size()) throw PreconditionError("feature row length does not match basis");
    for (std::size_t j = 0; j < basis.size(); ++j) design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  LeastSquares ls(std::move(design));
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));
  const Eigen::VectorXd coef = ls.solve(y);
  try {
    return CoefficientModel(basis, std::vector<double>(coef.data(), coef.data() + coef.size()), Link::Identity);
  } catch (const PreconditionError&) {
    throw RankDeficientError("least squares produced non-finite coefficients", 0);
  }
}

/// Logistic-regression MLE by Newton-Raphson (IRLS). Separable data has no
/// finite maximiser; iteration stops at max_iter and the last iterate is
/// returned, which is adequate for a starting value.
inline Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& outcome,
                                    int max_iter = 50, double tol = 1e-10) {
  if (design.rows() != outcome.size()) throw PreconditionError("design and outcome differ in length");
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(design.cols());
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd eta = design * beta;
    Eigen::VectorXd p(eta.size());
    Eigen::VectorXd w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      p[i] = logistic(eta[i]);
      w[i] = std::max(p[i] * (1.0 - p[i]), 1e-12);
    }
    const Eigen::VectorXd score = design.transpose() * (outcome - p);
    const Eigen::MatrixXd info = design.transpose() * w.asDiagonal() * design;
    const Eigen::VectorXd step = info.ldlt().solve(score);
    if (!step.allFinite()) break;
    beta += step;
    if (step.cwiseAbs().maxCoeff() < tol) break;
  }
  return beta;
}

/// OR(x, y) = exp(-y * (gamma + sum_k delta_k t_k(x))). Without interaction
/// terms this is the Y-only model exp(-gamma * y), anchored at OR(x, 0) = 1.
struct OddsRatioModel {
  double gamma = 0.0;
  std::vector<BasisTerm> x_interactions;  // terms over X only
  std::vector<double> interaction_coefficients;

  std::size_t parameter_count() const noexcept { return 1 + x_interactions.size(); }

  double log_odds_ratio(std::span<const double> x, double y) const {
    double slope = gamma;
    for (std::size_t k = 0; k < x_interactions.size(); ++k) {
      slope += interaction_coefficients.at(k) * x_interactions[k].evaluate(x, std::nullopt, std::nullopt);
    }
    return -y * slope;
  }

  double odds_ratio(std::span<const double> x, double y) const { return std::exp(log_odds_ratio(x, y)); }
};

/// Truncation policy for inverse-probability weights.
struct WeightPolicy {
  double w_max = 1e6;
  double propensity_floor = 1e-6;

  double effective_cap() const noexcept { return std::min(w_max, 1.0 / propensity_floor); }
};

struct CappedWeight {
  double value = 1.0;
  bool capped = false;
};

/// 1 / logistic(eta), truncated per policy.
inline CappedWeight inverse_logistic_weight(double eta, const WeightPolicy& policy) noexcept {
  const double cap = policy.effective_cap();
  // 1/logistic(eta) = 1 + exp(-eta)
  if (-eta > std::log(cap - 1.0)) return {cap, true};
  return {1.0 + std::exp(-eta), false};
}

/// Reciprocal selection probability 1/p(R=1|X,Y,G=1) from the baseline
/// propensity model and the odds ratio: 1 + OR(x,y) exp(-alpha'b(x)).
inline CappedWeight model2_weight(std::span<const double> x_row, double y, const CoefficientModel& alpha,
                                  const OddsRatioModel& odds_ratio, const WeightPolicy& policy = {}) {
  const double exponent = odds_ratio.log_odds_ratio(x_row, y) - alpha.linear_predictor(x_row, std::nullopt);
  const double cap = policy.effective_cap();
  if (!(exponent <= std::log(cap - 1.0))) return {cap, true};
  return {1.0 + std::exp(exponent), false};
}

}  // namespace mnarfuse
