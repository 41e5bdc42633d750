#pragma once

#include <Eigen/Dense>

#include "mnarfuse/basis.hpp"
#include "mnarfuse/data.hpp"
#include "mnarfuse/fusion.hpp"
#include "mnarfuse/model1.hpp"
#include "mnarfuse/models.hpp"
#include "mnarfuse/numeric.hpp"
#include "mnarfuse/report.hpp"

namespace mnarfuse {

/// Complete-case mean of Y over the primary domain.
inline EstimateReport mcar_estimate(const PooledDataset& ds) {
  const FusionView view = make_view(ds);
  if (view.n_primary_complete() == 0) throw DataError("primary domain has no complete cases");
  EstimateReport rep;
  rep.estimator = "mcar";
  rep.beta_hat = compensated_sum(view.cc_y) / static_cast<double>(view.n_primary_complete());
  detail::fill_counts(rep.diagnostics, view);
  return rep;
}

/// Regression of Y on x_basis(X) over primary complete cases, averaged over
/// the X of every primary row.
inline EstimateReport mar_estimate(const PooledDataset& ds, const BasisSpec& x_basis) {
  if (x_basis.uses(Variable::M) || x_basis.uses(Variable::Y)) throw PreconditionError("MAR basis may only use X");
  const FusionView view = make_view(ds);
  if (view.n_primary_complete() == 0) throw DataError("primary domain has no complete cases");
  LeastSquares ls(evaluate_design(x_basis, view.cc_x));
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(view.cc_y.data(), static_cast<Eigen::Index>(view.cc_y.size()));
  const Eigen::VectorXd coef = ls.solve(y);
  const Eigen::VectorXd fitted = evaluate_design(x_basis, view.primary_x) * coef;
  CompensatedSum acc;
  for (Eigen::Index i = 0; i < fitted.size(); ++i) acc += fitted[i];

  EstimateReport rep;
  rep.estimator = "mar";
  rep.beta_hat = acc.value() / static_cast<double>(fitted.size());
  rep.nuisance = detail::named("coef", x_basis, coef);
  detail::fill_counts(rep.diagnostics, view);
  return rep;
}

inline EstimateReport mar_estimate(const PooledDataset& ds) {
  return mar_estimate(ds, BasisSpec::polynomial_x(ds.schema.x_dim(), 1));
}

}  // namespace mnarfuse
