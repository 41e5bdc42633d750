#pragma once

// IPW estimation of E[Y | G=1] when primary-domain missingness depends on
// (X, M) but not on Y given (X, M). The propensity parameters solve
//
//   mean_{G=1}[ q(X,M; alpha) R h(X,M) ] = mean_{G=1}[ E^[h(X,M) | X, R=1, G=2] ]
//
// with q = 1 / p(R=1 | X, M, G=1; alpha), and the estimate is
// beta = mean_{G=1}[ q R Y ], averaging over all n1 primary rows.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "mnarfuse/basis.hpp"
#include "mnarfuse/data.hpp"
#include "mnarfuse/fusion.hpp"
#include "mnarfuse/models.hpp"
#include "mnarfuse/numeric.hpp"
#include "mnarfuse/report.hpp"
#include "mnarfuse/solver.hpp"

namespace mnarfuse {

struct EstimatorConfig {
  SolverConfig solver;
  WeightPolicy weights;
  /// Warn when more than this fraction of complete cases hit the weight cap.
  double cap_warning_fraction = 0.10;
};

struct Model1Spec {
  BasisSpec propensity_basis;      // over (X, M)
  BasisSpec h_basis;               // over (X, M)
  BasisSpec aux_regression_basis;  // over X

  /// Propensity and h: (1, x_1..x_d, m); auxiliary regression: quadratic in X.
  static Model1Spec defaults(const VariableSchema& schema) {
    const auto lin = BasisSpec::linear_xm(schema.x_dim(), schema.m_feature_count());
    return {lin, lin, BasisSpec::polynomial_x(schema.x_dim(), 2)};
  }

  void check() const {
    if (propensity_basis.uses(Variable::Y)) throw PreconditionError("propensity basis may only use X and M");
    if (h_basis.size() < propensity_basis.size()) {
      throw PreconditionError("h basis needs at least as many terms as the propensity basis");
    }
  }
};

struct Model1Fit {
  EstimateReport report;
  CoefficientModel propensity;  // logistic link
};

namespace detail {

inline std::vector<NamedParameter> named(const std::string& prefix, const BasisSpec& basis,
                                         const Eigen::VectorXd& values, Eigen::Index offset = 0) {
  std::vector<NamedParameter> out;
  for (std::size_t j = 0; j < basis.size(); ++j) {
    out.push_back({prefix + ":" + basis.terms()[j].to_string(), values[offset + static_cast<Eigen::Index>(j)]});
  }
  return out;
}

inline void fill_counts(Diagnostics& d, const FusionView& v) {
  d.n_primary = v.n_primary();
  d.n_auxiliary = v.n_auxiliary;
  d.n_primary_complete = v.n_primary_complete();
  d.n_auxiliary_complete = v.n_auxiliary_complete();
}

inline void warn_on_caps(Diagnostics& d, double fraction) {
  if (d.n_primary_complete > 0 &&
      static_cast<double>(d.weight_cap_count) > fraction * static_cast<double>(d.n_primary_complete)) {
    d.warnings.push_back("degenerate overlap: " + std::to_string(d.weight_cap_count) + " of " +
                         std::to_string(d.n_primary_complete) + " complete-case weights hit the cap");
  }
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

inline Model1Fit fit_model1(const PooledDataset& ds, const Model1Spec& spec, const EstimatorConfig& cfg = {}) {
  require_estimable(ds);
  spec.check();
  const FusionView view = make_view(ds);
  if (view.n_primary_complete() == 0) throw DataError("primary domain has no complete cases");

  const AuxMomentTargets targets = fit_aux_moment_targets(view, spec.h_basis, spec.aux_regression_basis);
  const Eigen::VectorXd target_mean = targets.primary_mean();
  const Eigen::MatrixXd prop = evaluate_design(spec.propensity_basis, view.cc_x, &view.cc_m);
  const Eigen::MatrixXd hmat = evaluate_design(spec.h_basis, view.cc_x, &view.cc_m);
  const double n1 = static_cast<double>(view.n_primary());
  const auto policy = cfg.weights;

  auto weights = [&](const Eigen::VectorXd& alpha) {
    const Eigen::VectorXd eta = prop * alpha;
    std::vector<CappedWeight> w(static_cast<std::size_t>(eta.size()));
    for (Eigen::Index i = 0; i < eta.size(); ++i) w[static_cast<std::size_t>(i)] = inverse_logistic_weight(eta[i], policy);
    return w;
  };

  MomentSystem sys;
  sys.dim_theta = static_cast<Eigen::Index>(spec.propensity_basis.size());
  sys.config = cfg.solver;
  sys.residual = [&](const Eigen::VectorXd& alpha) -> Eigen::VectorXd {
    const auto w = weights(alpha);
    Eigen::VectorXd q(static_cast<Eigen::Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i) q[static_cast<Eigen::Index>(i)] = w[i].value;
    return hmat.transpose() * q / n1 - target_mean;
  };
  const double rate = static_cast<double>(view.n_primary_complete()) / n1;
  const double clipped = std::clamp(rate, 0.5 / n1, 1.0 - 0.5 / n1);
  sys.init = Eigen::VectorXd::Zero(sys.dim_theta);
  sys.init[0] = logit(clipped);

  SolverResult sol = solve(sys);
  if (!sol.converged()) {
    throw SolverError(std::string("model 1 propensity system did not converge (") + to_string(sol.status) + ")", sol);
  }

  const auto w = weights(sol.theta_hat);
  CompensatedSum acc;
  for (std::size_t i = 0; i < w.size(); ++i) acc += w[i].value * view.cc_y[i];

  Model1Fit fit;
  fit.propensity = CoefficientModel(spec.propensity_basis, detail::to_std(sol.theta_hat), Link::Logistic);
  auto& rep = fit.report;
  rep.estimator = "ipw_model1";
  rep.beta_hat = acc.value() / n1;
  rep.nuisance = detail::named("alpha", spec.propensity_basis, sol.theta_hat);
  detail::fill_counts(rep.diagnostics, view);
  record_weights(rep.diagnostics, w);
  detail::warn_on_caps(rep.diagnostics, cfg.cap_warning_fraction);
  rep.solver = std::move(sol);
  return fit;
}

inline EstimateReport estimate_model1(const PooledDataset& ds, const Model1Spec& spec,
                                      const EstimatorConfig& cfg = {}) {
  return fit_model1(ds, spec, cfg).report;
}

struct PluginSpec {
  BasisSpec outcome_basis;         // g1 = E[Y | X, M, R=1, G=1], over (X, M)
  BasisSpec aux_regression_basis;  // over X

  static PluginSpec defaults(const VariableSchema& schema) {
    return {BasisSpec::linear_xm(schema.x_dim(), schema.m_feature_count()),
            BasisSpec::polynomial_x(schema.x_dim(), 2)};
  }
};

/// Outcome-regression plug-in of E[ E[g1(X,M) | X, R=1, G=2] | G=1 ]:
/// g1 from primary complete cases, its conditional mean given X from the
/// auxiliary complete cases, averaged over primary X.
inline double identify_beta_model1_plugin(const PooledDataset& ds, const PluginSpec& spec) {
  require_estimable(ds);
  if (spec.outcome_basis.uses(Variable::Y)) throw PreconditionError("outcome basis may only use X and M");
  const FusionView view = make_view(ds);
  if (view.n_primary_complete() == 0) throw DataError("primary domain has no complete cases");
  if (view.n_auxiliary_complete() == 0) throw DataError("no complete cases in the auxiliary domain");

  LeastSquares outcome(evaluate_design(spec.outcome_basis, view.cc_x, &view.cc_m));
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(view.cc_y.data(), static_cast<Eigen::Index>(view.cc_y.size()));
  const Eigen::VectorXd g1_coef = outcome.solve(y);
  const Eigen::VectorXd g1_aux = evaluate_design(spec.outcome_basis, view.aux_x, &view.aux_m) * g1_coef;

  LeastSquares bridge(evaluate_design(spec.aux_regression_basis, view.aux_x));
  const Eigen::VectorXd bridge_coef = bridge.solve(g1_aux);
  const Eigen::VectorXd at_primary = evaluate_design(spec.aux_regression_basis, view.primary_x) * bridge_coef;
  CompensatedSum acc;
  for (Eigen::Index i = 0; i < at_primary.size(); ++i) acc += at_primary[i];
  return acc.value() / static_cast<double>(at_primary.size());
}

}  // namespace mnarfuse
