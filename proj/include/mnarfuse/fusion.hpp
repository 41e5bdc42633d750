#pragma once

// Machinery shared by the fusion estimators: a canonical-order view of the
// pooled data and the auxiliary-domain regression that supplies the
// E[h(X,M) | X, R=1, G=2] moment targets.

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

#include "mnarfuse/basis.hpp"
#include "mnarfuse/data.hpp"
#include "mnarfuse/models.hpp"
#include "mnarfuse/report.hpp"

namespace mnarfuse {

/// Pooled data unpacked into feature rows, sorted canonically.
struct FusionView {
  std::vector<std::size_t> primary_rows;       // dataset indices, all G=1 rows
  std::vector<std::vector<double>> primary_x;  // aligned with primary_rows
  std::vector<std::vector<double>> cc_x;       // G=1, R=1
  std::vector<std::vector<double>> cc_m;
  std::vector<double> cc_y;
  std::vector<std::vector<double>> aux_x;  // G=2, R=1
  std::vector<std::vector<double>> aux_m;
  std::size_t n_auxiliary = 0;

  std::size_t n_primary() const noexcept { return primary_x.size(); }
  std::size_t n_primary_complete() const noexcept { return cc_x.size(); }
  std::size_t n_auxiliary_complete() const noexcept { return aux_x.size(); }
};

inline FusionView make_view(const PooledDataset& ds) {
  FusionView v;
  for (std::size_t i : canonical_order(ds)) {
    const auto& rec = ds.records[i];
    if (rec.g == Domain::Primary) {
      v.primary_rows.push_back(i);
      v.primary_x.push_back(rec.x);
      if (rec.r) {
        v.cc_x.push_back(rec.x);
        v.cc_m.push_back(m_features(*rec.m, ds.schema));
        v.cc_y.push_back(*rec.y);
      }
    } else {
      ++v.n_auxiliary;
      if (rec.r) {
        v.aux_x.push_back(rec.x);
        v.aux_m.push_back(m_features(*rec.m, ds.schema));
      }
    }
  }
  return v;
}

/// Evaluates `basis` on every row; `ms` / `ys` may be null when unused.
inline Eigen::MatrixXd evaluate_design(const BasisSpec& basis, const std::vector<std::vector<double>>& xs,
                                       const std::vector<std::vector<double>>* ms = nullptr,
                                       const std::vector<double>* ys = nullptr) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(basis.size()));
  std::vector<double> buf(basis.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::optional<std::span<const double>> m;
    if (ms) m = std::span<const double>((*ms)[i]);
    std::optional<double> y;
    if (ys) y = (*ys)[i];
    basis.evaluate_into(buf, xs[i], m, y);
    for (std::size_t j = 0; j < buf.size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = buf[j];
  }
  return out;
}

struct AuxMomentTargets {
  std::vector<std::size_t> primary_rows;  // dataset index of each prediction row
  Eigen::MatrixXd predictions;            // n1 x dim(h)
  std::vector<CoefficientModel> regressions;

  /// Average of the predicted targets over the primary domain.
  Eigen::VectorXd primary_mean() const {
    Eigen::VectorXd out(predictions.cols());
    for (Eigen::Index j = 0; j < predictions.cols(); ++j) {
      CompensatedSum acc;
      for (Eigen::Index i = 0; i < predictions.rows(); ++i) acc += predictions(i, j);
      out[j] = acc.value() / static_cast<double>(predictions.rows());
    }
    return out;
  }
};

inline AuxMomentTargets fit_aux_moment_targets(const FusionView& view, const BasisSpec& h_basis,
                                               const BasisSpec& aux_basis) {
  if (h_basis.uses(Variable::Y)) throw PreconditionError("h basis may only use X and M");
  if (aux_basis.uses(Variable::Y) || aux_basis.uses(Variable::M)) {
    throw PreconditionError("auxiliary regression basis may only use X");
  }
  if (view.n_auxiliary_complete() == 0) throw DataError("no complete cases in the auxiliary domain");

  const Eigen::MatrixXd h_aux = evaluate_design(h_basis, view.aux_x, &view.aux_m);
  LeastSquares ls(evaluate_design(aux_basis, view.aux_x));
  const Eigen::MatrixXd at_primary = evaluate_design(aux_basis, view.primary_x);

  AuxMomentTargets out;
  out.primary_rows = view.primary_rows;
  out.predictions.resize(at_primary.rows(), h_aux.cols());
  for (Eigen::Index j = 0; j < h_aux.cols(); ++j) {
    const Eigen::VectorXd coef = ls.solve(h_aux.col(j));
    out.predictions.col(j) = at_primary * coef;
    out.regressions.emplace_back(aux_basis, std::vector<double>(coef.data(), coef.data() + coef.size()),
                                 Link::Identity);
  }
  return out;
}

/// For each h component, least squares of h(X,M) on aux_basis(X) over the
/// auxiliary complete cases, evaluated at every primary-domain X.
inline AuxMomentTargets fit_aux_moment_targets(const PooledDataset& ds, const BasisSpec& h_basis,
                                               const BasisSpec& aux_basis) {
  return fit_aux_moment_targets(make_view(ds), h_basis, aux_basis);
}

/// Weight extremes and cap count over a set of weights.
inline void record_weights(Diagnostics& d, std::span<const CappedWeight> weights) {
  d.weight_cap_count = 0;
  if (weights.empty()) return;
  d.min_weight = weights.front().value;
  d.max_weight = weights.front().value;
  for (const auto& w : weights) {
    d.weight_cap_count += w.capped ? 1 : 0;
    d.min_weight = std::min(d.min_weight, w.value);
    d.max_weight = std::max(d.max_weight, w.value);
  }
}

}  // namespace mnarfuse
