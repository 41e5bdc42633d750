#pragma once

// Exact computations on finite-support laws over (G, X, M, Y, R).
//
// A full law assigns probability to every (g, x, m, y, r) cell, including the
// latent Y of the auxiliary domain (which is never observed). The observed
// law masks (M, Y) when r=0 and Y always in the auxiliary domain. The
// identification functionals are evaluated from the observed law only and
// compared against E[Y | G=1] computed from the full law.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "mnarfuse/csv.hpp"
#include "mnarfuse/data.hpp"
#include "mnarfuse/error.hpp"
#include "mnarfuse/numeric.hpp"
#include "mnarfuse/rng.hpp"

namespace mnarfuse {

/// A conditional needed by an identification formula has zero mass.
class IdentificationError : public Error {
 public:
  using Error::Error;
};

class DiscreteFullLaw {
 public:
  DiscreteFullLaw() = default;
  DiscreteFullLaw(std::vector<double> xs, std::vector<double> ms, std::vector<double> ys)
      : xs_(std::move(xs)), ms_(std::move(ms)), ys_(std::move(ys)), p_(2 * xs_.size() * ms_.size() * ys_.size() * 2, 0.0) {
    if (xs_.empty() || ms_.empty() || ys_.empty()) throw PreconditionError("supports must be non-empty");
    for (const auto* s : {&xs_, &ms_, &ys_}) {
      if (std::set<double>(s->begin(), s->end()).size() != s->size()) throw PreconditionError("support values must be distinct");
    }
  }

  const std::vector<double>& xs() const noexcept { return xs_; }
  const std::vector<double>& ms() const noexcept { return ms_; }
  const std::vector<double>& ys() const noexcept { return ys_; }
  std::size_t nx() const noexcept { return xs_.size(); }
  std::size_t nm() const noexcept { return ms_.size(); }
  std::size_t ny() const noexcept { return ys_.size(); }

  /// g in {1, 2}; r in {0, 1}.
  double& at(int g, std::size_t x, std::size_t m, std::size_t y, int r) { return p_[index(g, x, m, y, r)]; }
  double at(int g, std::size_t x, std::size_t m, std::size_t y, int r) const { return p_[index(g, x, m, y, r)]; }

  /// Sum over cells matching the given coordinates (nullopt = marginalise).
  double mass(std::optional<int> g, std::optional<std::size_t> x = {}, std::optional<std::size_t> m = {},
              std::optional<std::size_t> y = {}, std::optional<int> r = {}) const {
    CompensatedSum acc;
    for (int gi = 1; gi <= 2; ++gi) {
      if (g && *g != gi) continue;
      for (std::size_t xi = 0; xi < nx(); ++xi) {
        if (x && *x != xi) continue;
        for (std::size_t mi = 0; mi < nm(); ++mi) {
          if (m && *m != mi) continue;
          for (std::size_t yi = 0; yi < ny(); ++yi) {
            if (y && *y != yi) continue;
            for (int ri = 0; ri <= 1; ++ri) {
              if (r && *r != ri) continue;
              acc += at(gi, xi, mi, yi, ri);
            }
          }
        }
      }
    }
    return acc.value();
  }

  /// Throws PreconditionError unless the law is a distribution with both
  /// domains present and p(R=1 | x, g) > 0 wherever p(x, g) > 0.
  void check(double tol = 1e-12) const {
    for (double v : p_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw PreconditionError("law has a negative or non-finite cell");
    }
    const double total = mass(std::nullopt);
    if (std::abs(total - 1.0) > tol) throw PreconditionError("law sums to " + std::to_string(total) + ", not 1");
    for (int g = 1; g <= 2; ++g) {
      if (!(mass(g) > 0.0)) throw PreconditionError("domain " + std::to_string(g) + " has no mass");
      for (std::size_t x = 0; x < nx(); ++x) {
        if (mass(g, x) > 0.0 && !(mass(g, x, {}, {}, 1) > 0.0)) {
          throw PreconditionError("positivity fails: p(R=1 | x=" + csv_detail::format_double(xs_[x]) +
                                  ", g=" + std::to_string(g) + ") = 0");
        }
      }
    }
  }

  /// E[Y | G=1] from the full law.
  double primary_mean() const {
    CompensatedSum acc;
    for (std::size_t y = 0; y < ny(); ++y) acc += ys_[y] * mass(1, {}, {}, y);
    return acc.value() / mass(1);
  }

  /// Index of Y=0 if present, else of the smallest support value.
  std::size_t reference_y() const {
    const auto zero = std::find(ys_.begin(), ys_.end(), 0.0);
    if (zero != ys_.end()) return static_cast<std::size_t>(zero - ys_.begin());
    return static_cast<std::size_t>(std::min_element(ys_.begin(), ys_.end()) - ys_.begin());
  }

 private:
  std::size_t index(int g, std::size_t x, std::size_t m, std::size_t y, int r) const {
    return (((static_cast<std::size_t>(g - 1) * nx() + x) * nm() + m) * ny() + y) * 2 + static_cast<std::size_t>(r);
  }

  std::vector<double> xs_, ms_, ys_;
  std::vector<double> p_;
};

// ---------------------------------------------------------------------------
// Assumption checks

struct AssumptionStatus {
  bool holds = true;
  double violation = 0.0;
};

struct AssumptionCheckResult {
  AssumptionStatus aux_mar;            // M indep R | X, G=2
  AssumptionStatus domain_selection;   // M indep G | X
  AssumptionStatus outcome_ignorable;  // Y indep R | X, M, G=1
  AssumptionStatus shadow;             // M indep R | X, Y, G=1
  AssumptionStatus completeness;       // rank of [p(y | R=1, x, m, G=1)] equals |Y| for every x

  bool model1() const noexcept { return aux_mar.holds && domain_selection.holds && outcome_ignorable.holds; }
  bool model2() const noexcept {
    return aux_mar.holds && domain_selection.holds && shadow.holds && completeness.holds;
  }
};

namespace oracle_detail {

inline void note(AssumptionStatus& s, double v, double tol) {
  s.violation = std::max(s.violation, v);
  if (v > tol) s.holds = false;
}

/// |p(a,b|c) - p(a|c)p(b|c)| over all cells, with the three masses supplied.
inline double ci_gap(double joint, double a, double b, double cond) {
  if (!(cond > 0.0)) return 0.0;
  return std::abs(joint / cond - (a / cond) * (b / cond));
}

}  // namespace oracle_detail

/// Matrix [p(y | R=1, x, m, G=1)] over the m with p(m, R=1 | x, G=1) > 0.
inline Eigen::MatrixXd outcome_given_shadow_matrix(const DiscreteFullLaw& law, std::size_t x) {
  std::vector<std::size_t> rows;
  for (std::size_t m = 0; m < law.nm(); ++m) {
    if (law.mass(1, x, m, {}, 1) > 0.0) rows.push_back(m);
  }
  Eigen::MatrixXd a(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(law.ny()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double denom = law.mass(1, x, rows[i], {}, 1);
    for (std::size_t y = 0; y < law.ny(); ++y) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y)) = law.at(1, x, rows[i], y, 1) / denom;
    }
  }
  return a;
}

inline std::size_t numerical_rank(const Eigen::MatrixXd& a, double sv_tol = 1e-10) {
  if (a.size() == 0) return 0;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) rank += svd.singularValues()[i] > sv_tol ? 1 : 0;
  return rank;
}

inline AssumptionCheckResult check_assumptions(const DiscreteFullLaw& law, double tol = 1e-12) {
  using oracle_detail::ci_gap;
  using oracle_detail::note;
  AssumptionCheckResult out;
  for (std::size_t x = 0; x < law.nx(); ++x) {
    const double px2 = law.mass(2, x);
    const double px1 = law.mass(1, x);
    for (std::size_t m = 0; m < law.nm(); ++m) {
      for (int r = 0; r <= 1; ++r) {
        note(out.aux_mar, ci_gap(law.mass(2, x, m, {}, r), law.mass(2, x, m), law.mass(2, x, {}, {}, r), px2), tol);
      }
      if (px1 > 0.0 && px2 > 0.0) {
        note(out.domain_selection, std::abs(law.mass(1, x, m) / px1 - law.mass(2, x, m) / px2), tol);
      }
      const double pxm1 = law.mass(1, x, m);
      for (std::size_t y = 0; y < law.ny(); ++y) {
        for (int r = 0; r <= 1; ++r) {
          note(out.outcome_ignorable,
               ci_gap(law.at(1, x, m, y, r), law.mass(1, x, m, y), law.mass(1, x, m, {}, r), pxm1), tol);
          note(out.shadow,
               ci_gap(law.at(1, x, m, y, r), law.mass(1, x, m, y), law.mass(1, x, {}, y, r), law.mass(1, x, {}, y)),
               tol);
        }
      }
    }
    if (px1 > 0.0 && law.mass(1, x, {}, {}, 1) > 0.0) {
      const auto rank = numerical_rank(outcome_given_shadow_matrix(law, x));
      if (rank < law.ny()) {
        out.completeness.holds = false;
        out.completeness.violation = std::max(out.completeness.violation, static_cast<double>(law.ny() - rank));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Observed law

struct ObservedCell {
  int g = 1;
  std::optional<double> x;  // always set; optional only for symmetry
  std::optional<double> m;
  std::optional<double> y;
  int r = 0;
  double probability = 0.0;
};

struct ObservedLaw {
  std::vector<double> xs, ms, ys;
  std::vector<std::vector<std::vector<double>>> primary_complete;  // [x][m][y]: G=1, R=1
  std::vector<double> primary_missing;                             // [x]:       G=1, R=0
  std::vector<std::vector<double>> auxiliary_complete;             // [x][m]:    G=2, R=1
  std::vector<double> auxiliary_missing;                           // [x]:       G=2, R=0

  ObservedLaw() = default;
  ObservedLaw(std::vector<double> x, std::vector<double> m, std::vector<double> y)
      : xs(std::move(x)), ms(std::move(m)), ys(std::move(y)),
        primary_complete(xs.size(), std::vector<std::vector<double>>(ms.size(), std::vector<double>(ys.size(), 0.0))),
        primary_missing(xs.size(), 0.0),
        auxiliary_complete(xs.size(), std::vector<double>(ms.size(), 0.0)),
        auxiliary_missing(xs.size(), 0.0) {}

  std::vector<ObservedCell> cells() const {
    std::vector<ObservedCell> out;
    for (std::size_t x = 0; x < xs.size(); ++x) {
      for (std::size_t m = 0; m < ms.size(); ++m) {
        for (std::size_t y = 0; y < ys.size(); ++y) out.push_back({1, xs[x], ms[m], ys[y], 1, primary_complete[x][m][y]});
      }
      out.push_back({1, xs[x], std::nullopt, std::nullopt, 0, primary_missing[x]});
      for (std::size_t m = 0; m < ms.size(); ++m) out.push_back({2, xs[x], ms[m], std::nullopt, 1, auxiliary_complete[x][m]});
      out.push_back({2, xs[x], std::nullopt, std::nullopt, 0, auxiliary_missing[x]});
    }
    return out;
  }

  double total() const {
    CompensatedSum acc;
    for (const auto& c : cells()) acc += c.probability;
    return acc.value();
  }

  // Marginals used by the identification formulas.
  double primary_mass() const {
    CompensatedSum acc;
    for (std::size_t x = 0; x < xs.size(); ++x) acc += primary_x_mass(x);
    return acc.value();
  }
  double primary_x_mass(std::size_t x) const { return primary_complete_x(x) + primary_missing[x]; }
  double primary_complete_x(std::size_t x) const {
    CompensatedSum acc;
    for (const auto& row : primary_complete[x]) {
      for (double v : row) acc += v;
    }
    return acc.value();
  }
  double primary_complete_xm(std::size_t x, std::size_t m) const {
    CompensatedSum acc;
    for (double v : primary_complete[x][m]) acc += v;
    return acc.value();
  }
  double auxiliary_complete_x(std::size_t x) const {
    CompensatedSum acc;
    for (double v : auxiliary_complete[x]) acc += v;
    return acc.value();
  }
};

inline ObservedLaw observed_law(const DiscreteFullLaw& law) {
  ObservedLaw obs(law.xs(), law.ms(), law.ys());
  for (std::size_t x = 0; x < law.nx(); ++x) {
    for (std::size_t m = 0; m < law.nm(); ++m) {
      for (std::size_t y = 0; y < law.ny(); ++y) obs.primary_complete[x][m][y] = law.at(1, x, m, y, 1);
      obs.auxiliary_complete[x][m] = law.mass(2, x, m, {}, 1);
    }
    obs.primary_missing[x] = law.mass(1, x, {}, {}, 0);
    obs.auxiliary_missing[x] = law.mass(2, x, {}, {}, 0);
  }
  return obs;
}

/// Empirical observed law of a dataset whose X (scalar), M and Y values all
/// lie on the given supports.
inline ObservedLaw empirical_observed_law(const PooledDataset& ds, const std::vector<double>& xs,
                                          const std::vector<double>& ms, const std::vector<double>& ys) {
  ObservedLaw obs(xs, ms, ys);
  auto locate = [](const std::vector<double>& s, double v, const char* what) {
    const auto it = std::find(s.begin(), s.end(), v);
    if (it == s.end()) throw DataError(std::string(what) + " value " + csv_detail::format_double(v) + " is off-support");
    return static_cast<std::size_t>(it - s.begin());
  };
  if (ds.schema.x_dim() != 1 || ds.schema.m_kind != MKind::Numeric) {
    throw PreconditionError("empirical laws need scalar X and numeric M");
  }
  const double w = 1.0 / static_cast<double>(ds.size());
  for (const auto& rec : ds.records) {
    const auto x = locate(xs, rec.x.at(0), "X");
    if (rec.g == Domain::Primary) {
      if (rec.r) obs.primary_complete[x][locate(ms, std::get<double>(*rec.m), "M")][locate(ys, *rec.y, "Y")] += w;
      else obs.primary_missing[x] += w;
    } else {
      if (rec.r) obs.auxiliary_complete[x][locate(ms, std::get<double>(*rec.m), "M")] += w;
      else obs.auxiliary_missing[x] += w;
    }
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Identification

namespace oracle_detail {

inline std::string at_x(const ObservedLaw& obs, std::size_t x) { return "x=" + csv_detail::format_double(obs.xs[x]); }

}  // namespace oracle_detail

/// sum_x p(x | G=1) sum_m p(m | x, R=1, G=2) sum_y y p(y | x, m, R=1, G=1).
inline double identify_model1(const ObservedLaw& obs) {
  using oracle_detail::at_x;
  const double p1 = obs.primary_mass();
  if (!(p1 > 0.0)) throw IdentificationError("p(G=1) = 0");
  CompensatedSum outer;
  for (std::size_t x = 0; x < obs.xs.size(); ++x) {
    const double px = obs.primary_x_mass(x) / p1;
    if (!(px > 0.0)) continue;
    const double aux = obs.auxiliary_complete_x(x);
    if (!(aux > 0.0)) throw IdentificationError("p(M | X, R=1, G=2) undefined at " + at_x(obs, x) + ": no complete auxiliary mass");
    CompensatedSum middle;
    for (std::size_t m = 0; m < obs.ms.size(); ++m) {
      const double pm = obs.auxiliary_complete[x][m] / aux;
      if (!(pm > 0.0)) continue;
      const double cc = obs.primary_complete_xm(x, m);
      if (!(cc > 0.0)) {
        throw IdentificationError("p(Y | X, M, R=1, G=1) undefined at " + at_x(obs, x) +
                                  ", m=" + csv_detail::format_double(obs.ms[m]));
      }
      CompensatedSum inner;
      for (std::size_t y = 0; y < obs.ys.size(); ++y) inner += obs.ys[y] * obs.primary_complete[x][m][y];
      middle += pm * inner.value() / cc;
    }
    outer += px * middle.value();
  }
  return outer.value();
}

inline double identify_model1(const DiscreteFullLaw& law) { return identify_model1(observed_law(law)); }

struct OddsRatioRecovery {
  std::vector<double> xs, ys;
  std::size_t reference = 0;  // index into ys
  bool reference_is_zero = true;
  std::vector<bool> recovered;                   // false where p(R=0 | x, G=1) = 0 or p(x | G=1) = 0
  std::vector<std::vector<double>> tilted;      // [x][y], OR / E[OR | R=1, x, G=1]
  std::vector<std::vector<double>> odds_ratio;  // [x][y], anchored at OR(x, reference) = 1
};

/// Solves, for each x, sum_y p(y | R=1, x, m, G=1) ORt(x, y) = b(m) where
///   b(m) = [p(m | x, R=1, G=2) - p(m, R=1 | x, G=1)] / [p(R=0 | x, G=1) p(m | x, R=1, G=1)]
/// is the ratio p(m | x, R=0, G=1) / p(m | x, R=1, G=1) rebuilt from the
/// auxiliary domain. A unique solution needs the matrix to have full column
/// rank (completeness of Y given M among the observed).
inline OddsRatioRecovery recover_odds_ratio(const ObservedLaw& obs, double sv_tol = 1e-10) {
  using oracle_detail::at_x;
  const std::size_t nx = obs.xs.size(), nm = obs.ms.size(), ny = obs.ys.size();
  OddsRatioRecovery out;
  out.xs = obs.xs;
  out.ys = obs.ys;
  const auto zero = std::find(obs.ys.begin(), obs.ys.end(), 0.0);
  out.reference_is_zero = zero != obs.ys.end();
  out.reference = out.reference_is_zero ? static_cast<std::size_t>(zero - obs.ys.begin())
                                        : static_cast<std::size_t>(std::min_element(obs.ys.begin(), obs.ys.end()) - obs.ys.begin());
  out.recovered.assign(nx, false);
  out.tilted.assign(nx, std::vector<double>(ny, std::nan("")));
  out.odds_ratio.assign(nx, std::vector<double>(ny, std::nan("")));

  for (std::size_t x = 0; x < nx; ++x) {
    const double px = obs.primary_x_mass(x);
    if (!(px > 0.0) || !(obs.primary_missing[x] > 0.0)) continue;
    const double p_r0 = obs.primary_missing[x] / px;
    const double cc_x = obs.primary_complete_x(x);
    const double aux = obs.auxiliary_complete_x(x);
    if (!(aux > 0.0)) throw IdentificationError("p(M | X, R=1, G=2) undefined at " + at_x(obs, x));
    std::vector<std::size_t> rows;
    for (std::size_t m = 0; m < nm; ++m) {
      if (obs.primary_complete_xm(x, m) > 0.0) rows.push_back(m);
    }
    Eigen::MatrixXd a(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ny));
    Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto m = rows[i];
      const double cc_xm = obs.primary_complete_xm(x, m);
      for (std::size_t y = 0; y < ny; ++y) {
        a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y)) = obs.primary_complete[x][m][y] / cc_xm;
      }
      const double m_given_r1 = cc_xm / cc_x;
      const double m_r1_joint = cc_xm / px;
      b[static_cast<Eigen::Index>(i)] = (obs.auxiliary_complete[x][m] / aux - m_r1_joint) / (p_r0 * m_given_r1);
    }
    const auto rank = numerical_rank(a, sv_tol);
    if (rank < ny) {
      throw RankDeficientError("odds ratio not identified at " + at_x(obs, x) + ": p(Y | R=1, X, M, G=1) has rank " +
                                   std::to_string(rank) + " < |Y| = " + std::to_string(ny) +
                                   " (completeness condition fails)",
                               rank);
    }
    const Eigen::VectorXd sol = a.colPivHouseholderQr().solve(b);
    for (std::size_t y = 0; y < ny; ++y) {
      out.tilted[x][y] = sol[static_cast<Eigen::Index>(y)];
      out.odds_ratio[x][y] = sol[static_cast<Eigen::Index>(y)] / sol[static_cast<Eigen::Index>(out.reference)];
    }
    out.recovered[x] = true;
  }
  return out;
}

inline OddsRatioRecovery recover_odds_ratio(const DiscreteFullLaw& law) { return recover_odds_ratio(observed_law(law)); }

/// sum_{x,m,y} y p(y | x, m, R=1, G=1) [ p(m, x, R=1 | G=1)
///   + OR(x,y) / E[OR | R=1, x, m, G=1] * p(m | x, R=0, G=1) p(x, R=0 | G=1) ]
/// with p(m | x, R=0, G=1) p(R=0 | x, G=1) taken from the auxiliary domain.
/// Strata with p(R=0 | x, G=1) = 0 contribute through the first term only.
inline double identify_model2(const ObservedLaw& obs, const OddsRatioRecovery& rec) {
  using oracle_detail::at_x;
  const double p1 = obs.primary_mass();
  if (!(p1 > 0.0)) throw IdentificationError("p(G=1) = 0");
  CompensatedSum total;
  for (std::size_t x = 0; x < obs.xs.size(); ++x) {
    const double px_joint = obs.primary_x_mass(x);
    if (!(px_joint > 0.0)) continue;
    const double aux = obs.auxiliary_complete_x(x);
    const bool has_missing = obs.primary_missing[x] > 0.0;
    if (has_missing && !rec.recovered[x]) throw IdentificationError("odds ratio missing at " + at_x(obs, x));
    if (has_missing && !(aux > 0.0)) throw IdentificationError("p(M | X, R=1, G=2) undefined at " + at_x(obs, x));
    const double p_r0 = obs.primary_missing[x] / px_joint;
    for (std::size_t m = 0; m < obs.ms.size(); ++m) {
      const double cc_xm = obs.primary_complete_xm(x, m);
      if (!(cc_xm > 0.0)) {
        if (has_missing && obs.auxiliary_complete[x][m] > 0.0) {
          throw IdentificationError("p(Y | X, M, R=1, G=1) undefined at " + at_x(obs, x) +
                                    ", m=" + csv_detail::format_double(obs.ms[m]));
        }
        continue;
      }
      double missing_weight = 0.0;
      double e_or = 0.0;
      if (has_missing) {
        // p(m | x, R=0) p(R=0 | x) times p(x, R=0 | G=1) / p(R=0 | x)
        const double bridge = obs.auxiliary_complete[x][m] / aux - cc_xm / px_joint;
        missing_weight = bridge / p_r0 * (obs.primary_missing[x] / p1);
        CompensatedSum acc;
        for (std::size_t y = 0; y < obs.ys.size(); ++y) acc += rec.odds_ratio[x][y] * obs.primary_complete[x][m][y] / cc_xm;
        e_or = acc.value();
      }
      for (std::size_t y = 0; y < obs.ys.size(); ++y) {
        const double py = obs.primary_complete[x][m][y] / cc_xm;
        double weight = cc_xm / p1;
        if (has_missing) weight += rec.odds_ratio[x][y] / e_or * missing_weight;
        total += obs.ys[y] * py * weight;
      }
    }
  }
  return total.value();
}

inline double identify_model2(const ObservedLaw& obs) { return identify_model2(obs, recover_odds_ratio(obs)); }
inline double identify_model2(const DiscreteFullLaw& law) { return identify_model2(observed_law(law)); }

// ---------------------------------------------------------------------------
// Full-law identities

/// OR(x, y) from the selection model: odds of R=0 at y relative to the
/// reference outcome level.
inline std::vector<std::vector<double>> true_odds_ratio(const DiscreteFullLaw& law) {
  const auto ref = law.reference_y();
  std::vector<std::vector<double>> out(law.nx(), std::vector<double>(law.ny(), std::nan("")));
  for (std::size_t x = 0; x < law.nx(); ++x) {
    const double r0_ref = law.mass(1, x, {}, ref, 0), r1_ref = law.mass(1, x, {}, ref, 1);
    if (!(r0_ref > 0.0) || !(r1_ref > 0.0)) continue;
    for (std::size_t y = 0; y < law.ny(); ++y) {
      const double r0 = law.mass(1, x, {}, y, 0), r1 = law.mass(1, x, {}, y, 1);
      if (r1 > 0.0) out[x][y] = (r0 / r1) * (r1_ref / r0_ref);
    }
  }
  return out;
}

struct IdentityResidual {
  std::string name;
  double max_residual = 0.0;
};

/// Residuals of the shadow-variable identities in the primary domain:
///   or_m_invariance     OR computed within each m equals OR(x, y)
///   missing_outcome_law p(y | R=0, x, m) = p(y | R=1, x, m) OR / E[OR | R=1, x, m]
///   inverse_propensity  1 / p(R=1 | x, y) = 1 + OR p(R=0 | x, y0) / p(R=1 | x, y0)
///   baseline_propensity p(R=1 | x, y0) = E[OR | R=1, x] / (E[OR | R=1, x] + odds(R=0 | x))
///   tilted_odds_ratio   E[OR / E[OR | R=1, x] | R=1, x, m] = p(m | R=0, x) / p(m | R=1, x)
/// Cells whose conditioning event has zero mass are skipped.
inline std::vector<IdentityResidual> verify_prop1(const DiscreteFullLaw& law) {
  const auto ref = law.reference_y();
  const auto orx = true_odds_ratio(law);
  IdentityResidual inv{"or_m_invariance"}, y0{"missing_outcome_law"}, ip{"inverse_propensity"},
      bp{"baseline_propensity"}, tor{"tilted_odds_ratio"};
  auto upd = [](IdentityResidual& r, double v) {
    if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
    r.max_residual = std::max(r.max_residual, std::abs(v));
  };
  for (std::size_t x = 0; x < law.nx(); ++x) {
    const double px = law.mass(1, x);
    const double px_r1 = law.mass(1, x, {}, {}, 1), px_r0 = law.mass(1, x, {}, {}, 0);
    if (!(px > 0.0) || !(px_r1 > 0.0)) continue;
    const double r1_ref = law.mass(1, x, {}, ref, 1) / law.mass(1, x, {}, ref);
    // E[OR | R=1, x]
    CompensatedSum e_or_x_acc;
    for (std::size_t y = 0; y < law.ny(); ++y) {
      if (law.mass(1, x, {}, y, 1) > 0.0) e_or_x_acc += orx[x][y] * law.mass(1, x, {}, y, 1) / px_r1;
    }
    const double e_or_x = e_or_x_acc.value();
    if (px_r0 > 0.0) upd(bp, r1_ref - e_or_x / (e_or_x + px_r0 / px_r1));
    for (std::size_t y = 0; y < law.ny(); ++y) {
      const double pxy = law.mass(1, x, {}, y);
      if (!(pxy > 0.0)) continue;
      const double r1 = law.mass(1, x, {}, y, 1) / pxy;
      upd(ip, 1.0 / r1 - (1.0 + orx[x][y] * (1.0 - r1_ref) / r1_ref));
    }
    for (std::size_t m = 0; m < law.nm(); ++m) {
      const double pm_r1 = law.mass(1, x, m, {}, 1), pm_r0 = law.mass(1, x, m, {}, 0);
      if (!(pm_r1 > 0.0)) continue;
      CompensatedSum e_or_acc;
      for (std::size_t y = 0; y < law.ny(); ++y) e_or_acc += orx[x][y] * law.at(1, x, m, y, 1) / pm_r1;
      const double e_or = e_or_acc.value();
      if (pm_r0 > 0.0) {
        const double ref1 = law.at(1, x, m, ref, 1) / pm_r1, ref0 = law.at(1, x, m, ref, 0) / pm_r0;
        for (std::size_t y = 0; y < law.ny(); ++y) {
          const double p1y = law.at(1, x, m, y, 1) / pm_r1, p0y = law.at(1, x, m, y, 0) / pm_r0;
          if (p1y > 0.0 && ref0 > 0.0) upd(inv, (p0y / p1y) * (ref1 / ref0) - orx[x][y]);
          upd(y0, p0y - p1y * orx[x][y] / e_or);
        }
      }
      if (px_r0 > 0.0) upd(tor, e_or / e_or_x - (pm_r0 / px_r0) / (pm_r1 / px_r1));
    }
  }
  return {inv, y0, ip, bp, tor};
}

/// max over (x, m) of |p(m | x, R=1, G=2) - p(m, R=1 | x, G=1) - p(m | x, R=0, G=1) p(R=0 | x, G=1)|.
inline double bridge_residual(const DiscreteFullLaw& law) {
  double worst = 0.0;
  for (std::size_t x = 0; x < law.nx(); ++x) {
    const double px1 = law.mass(1, x), aux = law.mass(2, x, {}, {}, 1);
    if (!(px1 > 0.0) || !(aux > 0.0)) continue;
    for (std::size_t m = 0; m < law.nm(); ++m) {
      const double lhs = law.mass(2, x, m, {}, 1) / aux - law.mass(1, x, m, {}, 1) / px1;
      const double rhs = law.mass(1, x, m, {}, 0) / px1;
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Random laws

namespace oracle_detail {

inline std::vector<double> simplex(Rng& rng, std::size_t k) {
  std::vector<double> p(k);
  double total = 0.0;
  for (auto& v : p) total += (v = rng.uniform(0.2, 1.0));
  for (auto& v : p) v /= total;
  return p;
}

inline double propensity(Rng& rng) { return rng.uniform(0.15, 0.9); }

inline std::vector<double> grid(std::size_t k) {
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = static_cast<double>(i);
  return out;
}

}  // namespace oracle_detail

struct RandomLawShape {
  std::size_t nx = 2, nm = 2, ny = 2;
};

inline RandomLawShape random_shape(Rng& rng, bool need_completeness) {
  RandomLawShape s;
  s.nx = 1 + rng.below(3);
  s.ny = 2 + rng.below(2);
  s.nm = need_completeness ? s.ny + rng.below(2) : 1 + rng.below(3);
  return s;
}

/// p(g) p(x|g) p(m|x) p(y|x,m,g) p(r|x,m,g=1) p(r|x,g=2): the auxiliary
/// domain is MAR, M | X is shared, and primary selection ignores Y given (X, M).
inline DiscreteFullLaw random_model1_law(std::uint64_t seed, std::optional<RandomLawShape> shape = {}) {
  using namespace oracle_detail;
  Rng rng(seed);
  const auto s = shape ? *shape : random_shape(rng, false);
  DiscreteFullLaw law(grid(s.nx), grid(s.nm), grid(s.ny));
  const double g1 = rng.uniform(0.3, 0.7);
  std::vector<std::vector<double>> pm(s.nx);
  for (auto& row : pm) row = simplex(rng, s.nm);
  for (int g = 1; g <= 2; ++g) {
    const auto px = simplex(rng, s.nx);
    const double pg = g == 1 ? g1 : 1.0 - g1;
    for (std::size_t x = 0; x < s.nx; ++x) {
      const double r_aux = propensity(rng);
      for (std::size_t m = 0; m < s.nm; ++m) {
        const auto py = simplex(rng, s.ny);
        const double r1 = g == 1 ? propensity(rng) : r_aux;
        for (std::size_t y = 0; y < s.ny; ++y) {
          const double base = pg * px[x] * pm[x][m] * py[y];
          law.at(g, x, m, y, 1) = base * r1;
          law.at(g, x, m, y, 0) = base * (1.0 - r1);
        }
      }
    }
  }
  return law;
}

/// Primary domain p(x) p(y|x) p(m|x,y) p(r|x,y) with
///   p(R=1 | x, y) = 1 / (1 + OR(x,y) (1 - pi0(x)) / pi0(x)),
/// pi0 the baseline propensity at the reference level. The auxiliary domain
/// takes M | X from the primary domain and selects on X only. When
/// `odds_ratio` is empty, OR(x, y) is drawn from [0.3, 3] (1 at y=0).
inline DiscreteFullLaw random_model2_law(std::uint64_t seed, std::optional<RandomLawShape> shape = {},
                                         std::function<double(double, double)> odds_ratio = {}) {
  using namespace oracle_detail;
  Rng rng(seed);
  const auto s = shape ? *shape : random_shape(rng, true);
  if (s.nm < s.ny) throw PreconditionError("model 2 laws need |M| >= |Y|");
  DiscreteFullLaw law(grid(s.nx), grid(s.nm), grid(s.ny));
  const auto ref = law.reference_y();
  const double g1 = rng.uniform(0.3, 0.7);
  const auto px1 = simplex(rng, s.nx);
  std::vector<std::vector<double>> pm_x(s.nx, std::vector<double>(s.nm, 0.0));
  for (std::size_t x = 0; x < s.nx; ++x) {
    const auto py = simplex(rng, s.ny);
    const double pi0 = propensity(rng);
    for (std::size_t y = 0; y < s.ny; ++y) {
      const auto pm = simplex(rng, s.nm);
      double orv = 1.0;
      if (y != ref) orv = odds_ratio ? odds_ratio(law.xs()[x], law.ys()[y]) : rng.uniform(0.3, 3.0);
      const double r1 = 1.0 / (1.0 + orv * (1.0 - pi0) / pi0);
      for (std::size_t m = 0; m < s.nm; ++m) {
        const double base = g1 * px1[x] * py[y] * pm[m];
        law.at(1, x, m, y, 1) = base * r1;
        law.at(1, x, m, y, 0) = base * (1.0 - r1);
        pm_x[x][m] += py[y] * pm[m];
      }
    }
  }
  const auto px2 = simplex(rng, s.nx);
  for (std::size_t x = 0; x < s.nx; ++x) {
    const double r1 = propensity(rng);
    for (std::size_t m = 0; m < s.nm; ++m) {
      const auto py = simplex(rng, s.ny);
      for (std::size_t y = 0; y < s.ny; ++y) {
        const double base = (1.0 - g1) * px2[x] * pm_x[x][m] * py[y];
        law.at(2, x, m, y, 1) = base * r1;
        law.at(2, x, m, y, 0) = base * (1.0 - r1);
      }
    }
  }
  return law;
}

// ---------------------------------------------------------------------------
// Text format: header "g,x,m,y,r,probability", one line per non-zero cell.

inline void write_law(std::ostream& out, const DiscreteFullLaw& law) {
  using csv_detail::format_double;
  out << "g,x,m,y,r,probability\n";
  for (int g = 1; g <= 2; ++g) {
    for (std::size_t x = 0; x < law.nx(); ++x) {
      for (std::size_t m = 0; m < law.nm(); ++m) {
        for (std::size_t y = 0; y < law.ny(); ++y) {
          for (int r = 0; r <= 1; ++r) {
            const double p = law.at(g, x, m, y, r);
            if (p == 0.0) continue;
            out << g << ',' << format_double(law.xs()[x]) << ',' << format_double(law.ms()[m]) << ','
                << format_double(law.ys()[y]) << ',' << r << ',' << format_double(p) << '\n';
          }
        }
      }
    }
  }
}

/// Supports are the sorted distinct values seen; absent cells are zero.
inline DiscreteFullLaw read_law(std::istream& in) {
  using namespace csv_detail;
  std::string line;
  std::size_t line_no = 0;
  if (!getline_no(in, line, line_no)) throw DataError("empty law file");
  const auto header = split_line(line, line_no);
  if (header != std::vector<std::string>{"g", "x", "m", "y", "r", "probability"}) {
    throw DataError("law header must be g,x,m,y,r,probability");
  }
  struct Row {
    int g, r;
    double x, m, y, p;
  };
  std::vector<Row> rows;
  std::set<double> xs, ms, ys;
  while (getline_no(in, line, line_no)) {
    if (trim(line).empty()) continue;
    const auto f = split_line(line, line_no);
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (f.size() != 6) throw DataError(where + "expected 6 fields, found " + std::to_string(f.size()));
    std::array<double, 6> v{};
    for (std::size_t i = 0; i < 6; ++i) {
      const auto d = parse_double(f[i]);
      if (!d) throw DataError(where + "field " + header[i] + " is not a number");
      v[i] = *d;
    }
    if (v[0] != 1.0 && v[0] != 2.0) throw DataError(where + "g must be 1 or 2");
    if (v[4] != 0.0 && v[4] != 1.0) throw DataError(where + "r must be 0 or 1");
    rows.push_back({static_cast<int>(v[0]), static_cast<int>(v[4]), v[1], v[2], v[3], v[5]});
    xs.insert(v[1]);
    ms.insert(v[2]);
    ys.insert(v[3]);
  }
  if (rows.empty()) throw DataError("law file has no cells");
  DiscreteFullLaw law({xs.begin(), xs.end()}, {ms.begin(), ms.end()}, {ys.begin(), ys.end()});
  auto idx = [](const std::set<double>& s, double v) { return static_cast<std::size_t>(std::distance(s.begin(), s.find(v))); };
  for (const auto& r : rows) law.at(r.g, idx(xs, r.x), idx(ms, r.m), idx(ys, r.y), r.r) += r.p;
  return law;
}

/// n i.i.d. units from the law, masked per the observation rules.
inline PooledDataset sample_dataset(const DiscreteFullLaw& law, std::size_t n, std::uint64_t seed) {
  struct Cell {
    int g, r;
    std::size_t x, m, y;
  };
  std::vector<Cell> cells;
  std::vector<double> cum;
  double acc = 0.0;
  for (int g = 1; g <= 2; ++g) {
    for (std::size_t x = 0; x < law.nx(); ++x) {
      for (std::size_t m = 0; m < law.nm(); ++m) {
        for (std::size_t y = 0; y < law.ny(); ++y) {
          for (int r = 0; r <= 1; ++r) {
            const double p = law.at(g, x, m, y, r);
            if (p <= 0.0) continue;
            acc += p;
            cells.push_back({g, r, x, m, y});
            cum.push_back(acc);
          }
        }
      }
    }
  }
  if (cells.empty()) throw PreconditionError("law has no mass");
  PooledDataset ds;
  ds.schema.covariate_names = {"x"};
  ds.records.reserve(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    auto k = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    k = std::min(k, cells.size() - 1);
    const auto& c = cells[k];
    UnitRecord rec;
    rec.g = c.g == 1 ? Domain::Primary : Domain::Auxiliary;
    rec.x = {law.xs()[c.x]};
    rec.r = c.r == 1;
    if (rec.r) {
      rec.m = law.ms()[c.m];
      if (c.g == 1) rec.y = law.ys()[c.y];
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Battery

struct OracleTolerances {
  double identification = 1e-8;
  double identity = 1e-12;
  double bridge = 1e-12;
  double odds_ratio = 1e-10;
};

struct BatteryFailure {
  std::size_t law_index = 0;
  std::uint64_t law_seed = 0;
  std::string model;
  std::string check;
  double value = 0.0;
  double tolerance = 0.0;
};

struct BatteryReport {
  std::size_t laws = 0;
  std::size_t checks = 0;
  double max_model1_error = 0.0;
  double max_model2_error = 0.0;
  double max_identity_residual = 0.0;
  double max_bridge_residual = 0.0;
  double max_odds_ratio_error = 0.0;
  std::vector<BatteryFailure> failures;

  bool ok() const noexcept { return failures.empty(); }
};

namespace oracle_detail {

inline void record(BatteryReport& rep, double& running_max, const BatteryFailure& where, double value, double tol) {
  ++rep.checks;
  const double v = std::isnan(value) ? std::numeric_limits<double>::infinity() : value;
  running_max = std::max(running_max, v);
  if (!(v <= tol)) {
    auto f = where;
    f.value = v;
    f.tolerance = tol;
    rep.failures.push_back(std::move(f));
  }
}

inline double max_or_error(const DiscreteFullLaw& law, const OddsRatioRecovery& rec) {
  const auto truth = true_odds_ratio(law);
  double worst = 0.0;
  for (std::size_t x = 0; x < law.nx(); ++x) {
    if (!rec.recovered[x]) continue;
    for (std::size_t y = 0; y < law.ny(); ++y) {
      const double d = std::abs(rec.odds_ratio[x][y] - truth[x][y]);
      worst = std::max(worst, std::isnan(d) ? std::numeric_limits<double>::infinity() : d);
    }
  }
  return worst;
}

}  // namespace oracle_detail

/// Runs the identification checks for one law under the stated model
/// ("1" or "2"), appending to `rep`.
inline void check_law(BatteryReport& rep, const DiscreteFullLaw& law, const std::string& model, std::size_t index,
                      std::uint64_t seed, const OracleTolerances& tol = {}) {
  using oracle_detail::record;
  BatteryFailure where{index, seed, model, "", 0.0, 0.0};
  auto run = [&](const std::string& check, double& running_max, double tolerance, const std::function<double()>& f) {
    where.check = check;
    double v;
    try {
      v = f();
    } catch (const std::exception& e) {
      where.check = check + " (" + e.what() + ")";
      v = std::numeric_limits<double>::infinity();
    }
    record(rep, running_max, where, v, tolerance);
  };
  law.check();
  const double truth = law.primary_mean();
  run("bridge", rep.max_bridge_residual, tol.bridge, [&] { return bridge_residual(law); });
  if (model == "1") {
    run("identification", rep.max_model1_error, tol.identification,
        [&] { return std::abs(identify_model1(law) - truth); });
  } else {
    for (const auto& r : verify_prop1(law)) {
      run(r.name, rep.max_identity_residual, tol.identity, [&] { return r.max_residual; });
    }
    run("odds_ratio_recovery", rep.max_odds_ratio_error, tol.odds_ratio,
        [&] { return oracle_detail::max_or_error(law, recover_odds_ratio(law)); });
    run("identification", rep.max_model2_error, tol.identification,
        [&] { return std::abs(identify_model2(law) - truth); });
  }
}

/// For each index, one Model-1 law and one Model-2 law from derived seeds.
inline BatteryReport run_oracle_battery(std::size_t n_laws, std::uint64_t seed, const OracleTolerances& tol = {}) {
  BatteryReport rep;
  for (std::size_t i = 0; i < n_laws; ++i) {
    const auto s = derive_seed(seed, i);
    const auto s1 = derive_seed(s, 1), s2 = derive_seed(s, 2);
    check_law(rep, random_model1_law(s1), "1", i, s1, tol);
    check_law(rep, random_model2_law(s2), "2", i, s2, tol);
    ++rep.laws;
  }
  return rep;
}

}  // namespace mnarfuse
