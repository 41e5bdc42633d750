#pragma once

// IPW estimation of E[Y | G=1] when primary-domain missingness may depend on
// Y itself. The selection probability is parameterised through a baseline
// propensity p(R=1 | X, Y=0) = logistic(alpha'b(X)) and an odds ratio
// OR(X, Y; gamma), giving weights w = 1 + OR(X,Y) exp(-alpha'b(X)). The
// parameters solve
//
//   mean_{G=1}[ w R h(X,M) ] = mean_{G=1}[ E^[h(X,M) | X, R=1, G=2] ]
//
// and beta = mean_{G=1}[ w R Y ]. Every term carries R, so rows with Y
// missing contribute zero and w is only ever evaluated where Y is observed.

#include <Eigen/Dense>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "mnarfuse/basis.hpp"
#include "mnarfuse/data.hpp"
#include "mnarfuse/fusion.hpp"
#include "mnarfuse/model1.hpp"
#include "mnarfuse/models.hpp"
#include "mnarfuse/report.hpp"
#include "mnarfuse/solver.hpp"

namespace mnarfuse {

struct Model2Spec {
  BasisSpec baseline_basis;  // over X
  OddsRatioModel or_model;   // starting values are ignored; terms define the shape
  /// Holds gamma at this value instead of estimating it.
  std::optional<double> fixed_gamma;
  BasisSpec h_basis;               // over (X, M)
  BasisSpec aux_regression_basis;  // over X

  /// Baseline (1, x), scalar gamma, h = (1, x, m): just identified.
  static Model2Spec defaults(const VariableSchema& schema) {
    return {BasisSpec::polynomial_x(schema.x_dim(), 1), OddsRatioModel{}, std::nullopt,
            BasisSpec::linear_xm(schema.x_dim(), schema.m_feature_count()),
            BasisSpec::polynomial_x(schema.x_dim(), 2)};
  }

  std::size_t free_parameter_count() const noexcept {
    return baseline_basis.size() + or_model.x_interactions.size() + (fixed_gamma ? 0 : 1);
  }

  void check() const {
    if (baseline_basis.uses(Variable::M) || baseline_basis.uses(Variable::Y)) {
      throw PreconditionError("baseline basis may only use X");
    }
    for (const auto& t : or_model.x_interactions) {
      if (t.uses(Variable::M) || t.uses(Variable::Y)) throw PreconditionError("odds-ratio interactions may only use X");
    }
    if (h_basis.size() < free_parameter_count()) {
      throw PreconditionError("h basis has " + std::to_string(h_basis.size()) + " terms but " +
                              std::to_string(free_parameter_count()) + " parameters are free");
    }
  }
};

struct Model2Fit {
  EstimateReport report;
  CoefficientModel baseline;  // logistic link
  OddsRatioModel odds_ratio;
};

/// 1 / w: the selection probability p(R=1 | X, Y, G=1) implied by the
/// fitted baseline and odds ratio.
inline double recovered_propensity(std::span<const double> x_row, double y, const CoefficientModel& alpha,
                                   const OddsRatioModel& odds_ratio, const WeightPolicy& policy = {}) {
  return 1.0 / model2_weight(x_row, y, alpha, odds_ratio, policy).value;
}

namespace detail {

struct Model2Params {
  CoefficientModel baseline;
  OddsRatioModel odds_ratio;
};

inline Model2Params unpack_model2(const Model2Spec& spec, const Eigen::VectorXd& theta) {
  const auto nb = static_cast<Eigen::Index>(spec.baseline_basis.size());
  Model2Params p;
  p.baseline.basis = spec.baseline_basis;
  p.baseline.coefficients.assign(theta.data(), theta.data() + nb);
  p.baseline.link = Link::Logistic;
  Eigen::Index k = nb;
  p.odds_ratio.gamma = spec.fixed_gamma ? *spec.fixed_gamma : theta[k++];
  p.odds_ratio.x_interactions = spec.or_model.x_interactions;
  for (std::size_t j = 0; j < spec.or_model.x_interactions.size(); ++j) {
    p.odds_ratio.interaction_coefficients.push_back(theta[k++]);
  }
  return p;
}

}  // namespace detail

inline Model2Fit fit_model2(const PooledDataset& ds, const Model2Spec& spec, const EstimatorConfig& cfg = {}) {
  require_estimable(ds);
  spec.check();
  const FusionView view = make_view(ds);
  if (view.n_primary_complete() == 0) throw DataError("primary domain has no complete cases");

  const AuxMomentTargets targets = fit_aux_moment_targets(view, spec.h_basis, spec.aux_regression_basis);
  const Eigen::VectorXd target_mean = targets.primary_mean();
  const Eigen::MatrixXd hmat = evaluate_design(spec.h_basis, view.cc_x, &view.cc_m);
  const double n1 = static_cast<double>(view.n_primary());
  const auto policy = cfg.weights;

  auto weights = [&](const detail::Model2Params& p) {
    std::vector<CappedWeight> w(view.n_primary_complete());
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = model2_weight(view.cc_x[i], view.cc_y[i], p.baseline, p.odds_ratio, policy);
    }
    return w;
  };

  MomentSystem sys;
  sys.dim_theta = static_cast<Eigen::Index>(spec.free_parameter_count());
  sys.config = cfg.solver;
  sys.residual = [&](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
    const auto w = weights(detail::unpack_model2(spec, theta));
    Eigen::VectorXd wv(static_cast<Eigen::Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i) wv[static_cast<Eigen::Index>(i)] = w[i].value;
    return hmat.transpose() * wv / n1 - target_mean;
  };

  // Start at the MAR point: logistic regression of R on the baseline basis
  // over the primary domain, odds ratio flat.
  Eigen::VectorXd responded(static_cast<Eigen::Index>(view.n_primary()));
  for (std::size_t i = 0; i < view.primary_rows.size(); ++i) {
    responded[static_cast<Eigen::Index>(i)] = ds.records[view.primary_rows[i]].r ? 1.0 : 0.0;
  }
  const Eigen::VectorXd alpha0 = fit_logistic(evaluate_design(spec.baseline_basis, view.primary_x), responded);
  sys.init = Eigen::VectorXd::Zero(sys.dim_theta);
  sys.init.head(alpha0.size()) = alpha0;
  if (!sys.init.allFinite()) sys.init.setZero();

  SolverResult sol = solve(sys);
  if (!sol.converged()) {
    throw SolverError(std::string("model 2 weight system did not converge (") + to_string(sol.status) + ")", sol);
  }

  const auto params = detail::unpack_model2(spec, sol.theta_hat);
  const auto w = weights(params);
  CompensatedSum acc;
  for (std::size_t i = 0; i < w.size(); ++i) acc += w[i].value * view.cc_y[i];

  Model2Fit fit;
  fit.baseline = params.baseline;
  fit.odds_ratio = params.odds_ratio;
  auto& rep = fit.report;
  rep.estimator = "ipw_model2";
  rep.beta_hat = acc.value() / n1;
  rep.nuisance = detail::named("alpha", spec.baseline_basis, sol.theta_hat);
  rep.nuisance.push_back({"gamma", params.odds_ratio.gamma});
  for (std::size_t j = 0; j < params.odds_ratio.x_interactions.size(); ++j) {
    rep.nuisance.push_back({"delta:" + params.odds_ratio.x_interactions[j].to_string(),
                            params.odds_ratio.interaction_coefficients[j]});
  }
  detail::fill_counts(rep.diagnostics, view);
  record_weights(rep.diagnostics, w);
  detail::warn_on_caps(rep.diagnostics, cfg.cap_warning_fraction);
  rep.solver = std::move(sol);
  return fit;
}

inline EstimateReport estimate_model2(const PooledDataset& ds, const Model2Spec& spec,
                                      const EstimatorConfig& cfg = {}) {
  return fit_model2(ds, spec, cfg).report;
}

}  // namespace mnarfuse
