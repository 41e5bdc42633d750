#pragma once

// Synthetic two-domain designs with known E[Y | G=1].
//
// Model 1: M ~ N(mu_M(X), 1) in both domains, Y ~ N(X + M, 1) in the primary
// domain, primary selection logistic in (X, M, M^2), auxiliary selection
// logistic in X.
//
// Model 2: the primary domain is drawn sequentially (X, then R, then M | R,
// then Y | R) so that p(R=1 | X, Y=0) is logistic in (1, X, X^2) and the
// odds ratio is exp(-gamma Y). The auxiliary domain reuses the same (X -> R_tmp
// -> M) chain so M | X matches across domains, then draws its real R from
// logistic(c0 + c1 X).

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "mnarfuse/csv.hpp"
#include "mnarfuse/data.hpp"
#include "mnarfuse/error.hpp"
#include "mnarfuse/numeric.hpp"
#include "mnarfuse/rng.hpp"

namespace mnarfuse {

enum class Setting { T, F };

inline Setting parse_setting(const std::string& s) {
  if (s == "T" || s == "t") return Setting::T;
  if (s == "F" || s == "f") return Setting::F;
  throw PreconditionError("setting must be T or F, got '" + s + "'");
}

inline const char* to_string(Setting s) noexcept { return s == Setting::T ? "T" : "F"; }

struct Model1Design {
  std::size_t n = 2000;
  Setting setting = Setting::T;
  std::array<double, 3> beta_m{0.0, 0.0, 0.4};       // mu_M = b0 + b1 X + b2 X^2
  std::array<double, 4> beta_y{0.0, 1.0, 0.0, 1.0};  // mu_Y = b0 + b1 X + b2 X^2 + b3 M
  std::array<double, 4> alpha{0.3, 0.1, 1.0, 0.0};   // logit p(R=1|X,M,G=1) = a0 + a1 X + a2 M + a3 M^2
  std::array<double, 2> aux_selection{1.4, 1.0};     // logit p(R=1|X,G=2)
  double primary_x_mean = 1.0;
  double auxiliary_x_mean = 0.0;
  double p_primary = 0.5;

  static Model1Design make(Setting s, std::size_t n) {
    Model1Design d;
    d.n = n;
    d.setting = s;
    if (s == Setting::F) d.alpha = {0.3, 0.1, 0.0, -1.0};
    return d;
  }
};

struct Model2Design {
  std::size_t n = 2000;
  Setting setting = Setting::T;
  std::array<double, 3> beta_m{0.0, 0.0, -0.4};
  std::array<double, 4> beta_y{0.0, 1.0, 0.0, 1.0};
  std::array<double, 3> alpha{0.5, 0.4, 0.0};  // logit p(R=1|X,Y=0,G=1) = a0 + a1 X + a2 X^2
  double gamma = 0.3;                          // OR(X,Y) = exp(-gamma Y)
  std::array<double, 2> aux_selection{0.0, 1.0};
  double primary_x_mean = 0.0;
  double auxiliary_x_mean = 1.0;
  double p_primary = 0.5;

  static Model2Design make(Setting s, std::size_t n) {
    Model2Design d;
    d.n = n;
    d.setting = s;
    if (s == Setting::F) d.alpha[2] = 0.4;
    return d;
  }

  /// logit p(R=1 | X, G=1) after integrating Y and M out.
  double marginal_logit(double x) const {
    const double mu_m = beta_m[0] + beta_m[1] * x + beta_m[2] * x * x;
    const double mu_y_tilde = beta_y[0] + beta_y[1] * x + beta_y[2] * x * x;
    const double b3 = beta_y[3];
    const double mu_r = alpha[0] + alpha[1] * x + alpha[2] * x * x;
    return mu_y_tilde * gamma - 0.5 * gamma * gamma + mu_m * b3 * gamma - 0.5 * b3 * b3 * gamma * gamma + mu_r;
  }
};

/// Pre-masking values for one simulated unit.
struct LatentUnit {
  Domain g = Domain::Primary;
  bool r = false;
  double x = 0.0;
  double m = 0.0;
  std::optional<double> y;  // never generated in the auxiliary domain
};

struct SimulatedData {
  PooledDataset dataset;
  std::vector<LatentUnit> truth;  // aligned with dataset.records
};

namespace sim_detail {

inline VariableSchema scalar_schema() {
  VariableSchema s;
  s.covariate_names = {"x"};
  return s;
}

inline void push(SimulatedData& out, const LatentUnit& u) {
  UnitRecord rec;
  rec.g = u.g;
  rec.x = {u.x};
  rec.r = u.r;
  if (u.r) {
    rec.m = u.m;
    if (u.g == Domain::Primary) rec.y = u.y;
  }
  out.dataset.records.push_back(std::move(rec));
  out.truth.push_back(u);
}

inline double quad(const std::array<double, 3>& b, double x) { return b[0] + b[1] * x + b[2] * x * x; }

}  // namespace sim_detail

inline SimulatedData generate_model1(const Model1Design& d, std::uint64_t seed) {
  if (d.n < 1) throw PreconditionError("n must be at least 1");
  Rng rng(seed);
  SimulatedData out;
  out.dataset.schema = sim_detail::scalar_schema();
  out.dataset.records.reserve(d.n);
  out.truth.reserve(d.n);
  for (std::size_t i = 0; i < d.n; ++i) {
    LatentUnit u;
    u.g = rng.bernoulli(d.p_primary) ? Domain::Primary : Domain::Auxiliary;
    if (u.g == Domain::Primary) {
      u.x = rng.normal(d.primary_x_mean, 1.0);
      u.m = rng.normal(sim_detail::quad(d.beta_m, u.x), 1.0);
      u.y = rng.normal(d.beta_y[0] + d.beta_y[1] * u.x + d.beta_y[2] * u.x * u.x + d.beta_y[3] * u.m, 1.0);
      const auto& a = d.alpha;
      u.r = rng.bernoulli(logistic(a[0] + a[1] * u.x + a[2] * u.m + a[3] * u.m * u.m));
    } else {
      u.x = rng.normal(d.auxiliary_x_mean, 1.0);
      u.m = rng.normal(sim_detail::quad(d.beta_m, u.x), 1.0);
      u.r = rng.bernoulli(logistic(d.aux_selection[0] + d.aux_selection[1] * u.x));
    }
    sim_detail::push(out, u);
  }
  return out;
}

inline SimulatedData generate_model2(const Model2Design& d, std::uint64_t seed) {
  if (d.n < 1) throw PreconditionError("n must be at least 1");
  Rng rng(seed);
  SimulatedData out;
  out.dataset.schema = sim_detail::scalar_schema();
  out.dataset.records.reserve(d.n);
  out.truth.reserve(d.n);
  const double shift = d.beta_y[3] * d.gamma;
  for (std::size_t i = 0; i < d.n; ++i) {
    LatentUnit u;
    u.g = rng.bernoulli(d.p_primary) ? Domain::Primary : Domain::Auxiliary;
    const bool primary = u.g == Domain::Primary;
    u.x = rng.normal(primary ? d.primary_x_mean : d.auxiliary_x_mean, 1.0);
    const double mu_m = sim_detail::quad(d.beta_m, u.x);
    const bool r_chain = rng.bernoulli(logistic(d.marginal_logit(u.x)));
    u.m = rng.normal(r_chain ? mu_m : mu_m - shift, 1.0);
    if (primary) {
      const double mu_y = d.beta_y[0] + d.beta_y[1] * u.x + d.beta_y[2] * u.x * u.x + d.beta_y[3] * u.m;
      u.y = rng.normal(r_chain ? mu_y : mu_y - d.gamma, 1.0);
      u.r = r_chain;
    } else {
      u.r = rng.bernoulli(logistic(d.aux_selection[0] + d.aux_selection[1] * u.x));
    }
    sim_detail::push(out, u);
  }
  return out;
}

/// Sidecar layout: row,domain,r,x,m_latent,y_latent (y_latent empty for G=2).
inline void write_truth_csv(std::ostream& out, const SimulatedData& sim) {
  out << "row,domain,r,x,m_latent,y_latent\n";
  for (std::size_t i = 0; i < sim.truth.size(); ++i) {
    const auto& u = sim.truth[i];
    out << i << ',' << domain_code(u.g) << ',' << (u.r ? 1 : 0) << ',' << csv_detail::format_double(u.x) << ','
        << csv_detail::format_double(u.m) << ',' << (u.y ? csv_detail::format_double(*u.y) : "") << '\n';
  }
}

/// Mean of the latent Y over primary units.
inline double latent_primary_mean(const SimulatedData& sim) {
  CompensatedSum acc;
  std::size_t n = 0;
  for (const auto& u : sim.truth) {
    if (u.g == Domain::Primary) {
      acc += *u.y;
      ++n;
    }
  }
  return n ? acc.value() / static_cast<double>(n) : std::nan("");
}

struct TrueBeta {
  enum class Provenance { Analytic, MonteCarlo };
  double value = 0.0;
  Provenance provenance = Provenance::Analytic;
  std::size_t n_trials = 0;
  std::size_t n_per_trial = 0;
  std::uint64_t seed = 0;
};

/// E[Y|G=1] = b0 + b1 E[X] + b2 E[X^2] + b3 E[mu_M(X)] with X ~ N(mu, 1).
inline TrueBeta true_beta(const Model1Design& d) {
  const double ex = d.primary_x_mean;
  const double ex2 = 1.0 + ex * ex;
  const double em = d.beta_m[0] + d.beta_m[1] * ex + d.beta_m[2] * ex2;
  TrueBeta t;
  t.value = d.beta_y[0] + d.beta_y[1] * ex + d.beta_y[2] * ex2 + d.beta_y[3] * em;
  return t;
}

inline constexpr std::uint64_t kTrueBetaSeed = 20240531;

/// Average over trials of the latent primary-domain mean of Y. Results are
/// cached per (setting, trials, size, seed) for the default parameters.
inline TrueBeta true_beta(const Model2Design& d, std::size_t n_trials = 1000, std::size_t n_per_trial = 20000,
                          std::uint64_t seed = kTrueBetaSeed) {
  static std::mutex mu;
  static std::map<std::tuple<int, std::size_t, std::size_t, std::uint64_t>, double> cache;
  const bool standard = [&] {
    const auto ref = Model2Design::make(d.setting, d.n);
    return ref.alpha == d.alpha && ref.beta_m == d.beta_m && ref.beta_y == d.beta_y && ref.gamma == d.gamma &&
           ref.primary_x_mean == d.primary_x_mean && ref.p_primary == d.p_primary;
  }();
  const auto key = std::make_tuple(static_cast<int>(d.setting), n_trials, n_per_trial, seed);
  TrueBeta t;
  t.provenance = TrueBeta::Provenance::MonteCarlo;
  t.n_trials = n_trials;
  t.n_per_trial = n_per_trial;
  t.seed = seed;
  if (standard) {
    std::lock_guard lock(mu);
    if (const auto it = cache.find(key); it != cache.end()) {
      t.value = it->second;
      return t;
    }
  }
  Model2Design trial = d;
  trial.n = n_per_trial;
  CompensatedSum acc;
  for (std::size_t k = 0; k < n_trials; ++k) acc += latent_primary_mean(generate_model2(trial, derive_seed(seed, k)));
  t.value = n_trials ? acc.value() / static_cast<double>(n_trials) : std::nan("");
  if (standard) {
    std::lock_guard lock(mu);
    cache[key] = t.value;
  }
  return t;
}

// Synthetic surveillance-style extract: scalar score X on [-1, 1], a
// three-level categorical M, a binary Y observed only in the primary period,
// selection in the primary period depending on (X, M).

struct SurveillanceFixtureDesign {
  std::size_t n = 6000;
  double p_primary = 2.0 / 3.0;
  /// p(M = level | X) = a + b X for levels {none, mild, severe}.
  std::array<std::array<double, 2>, 3> m_probs{{{0.45, -0.25}, {0.35, 0.05}, {0.20, 0.20}}};
  std::array<double, 4> outcome{0.2, 0.6, 0.9, 1.8};    // logit p(Y=1|X,M): 1, x, [mild], [severe]
  std::array<double, 4> selection{-1.3, 0.4, 0.6, 1.4};  // logit p(R=1|X,M,G=1)
  std::array<double, 2> aux_selection{0.15, 0.5};      // logit p(R=1|X,G=2)
};

inline const std::vector<std::string>& surveillance_levels() {
  static const std::vector<std::string> levels{"none", "mild", "severe"};
  return levels;
}

struct SurveillanceTruth {
  double beta = 0.0;
  double primary_missing_rate = 0.0;    // population value
  double auxiliary_missing_rate = 0.0;  // population value
  std::size_t n_primary = 0;
  std::size_t n_auxiliary = 0;
  std::size_t primary_missing = 0;
  std::size_t auxiliary_missing = 0;
};

namespace sim_detail {

inline double level_prob(const SurveillanceFixtureDesign& d, std::size_t k, double x) {
  return d.m_probs[k][0] + d.m_probs[k][1] * x;
}

inline double outcome_prob(const SurveillanceFixtureDesign& d, std::size_t k, double x) {
  return logistic(d.outcome[0] + d.outcome[1] * x + (k == 1 ? d.outcome[2] : 0.0) + (k == 2 ? d.outcome[3] : 0.0));
}

inline double selection_prob(const SurveillanceFixtureDesign& d, std::size_t k, double x) {
  return logistic(d.selection[0] + d.selection[1] * x + (k == 1 ? d.selection[2] : 0.0) +
                  (k == 2 ? d.selection[3] : 0.0));
}

}  // namespace sim_detail

/// Population truth by midpoint quadrature over X ~ U(-1, 1).
inline SurveillanceTruth surveillance_truth(const SurveillanceFixtureDesign& d) {
  constexpr int kNodes = 20000;
  CompensatedSum beta, miss1, miss2;
  for (int i = 0; i < kNodes; ++i) {
    const double x = -1.0 + (2.0 * i + 1.0) / kNodes;
    for (std::size_t k = 0; k < 3; ++k) {
      const double pm = sim_detail::level_prob(d, k, x);
      beta += pm * sim_detail::outcome_prob(d, k, x);
      miss1 += pm * (1.0 - sim_detail::selection_prob(d, k, x));
    }
    miss2 += 1.0 - logistic(d.aux_selection[0] + d.aux_selection[1] * x);
  }
  SurveillanceTruth t;
  t.beta = beta.value() / kNodes;
  t.primary_missing_rate = miss1.value() / kNodes;
  t.auxiliary_missing_rate = miss2.value() / kNodes;
  return t;
}

struct SurveillanceFixture {
  std::string csv;
  std::string schema_map;  // INI text understood by the CLI's --schema-map
  SurveillanceTruth truth;
};

inline SurveillanceFixture generate_surveillance_fixture(const SurveillanceFixtureDesign& d, std::uint64_t seed) {
  if (d.n < 1) throw PreconditionError("n must be at least 1");
  for (double x : {-1.0, 1.0}) {
    double total = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double p = sim_detail::level_prob(d, k, x);
      if (p < 0.0) throw PreconditionError("level probabilities must be non-negative on [-1, 1]");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw PreconditionError("level probabilities must sum to one");
  }
  Rng rng(seed);
  SurveillanceFixture out;
  out.truth = surveillance_truth(d);
  std::string& csv = out.csv;
  csv = "case_month,county_score,symptom_severity,hosp_yn\n";
  const auto& levels = surveillance_levels();
  for (std::size_t i = 0; i < d.n; ++i) {
    const bool primary = rng.bernoulli(d.p_primary);
    const double x = rng.uniform(-1.0, 1.0);
    const double u = rng.uniform();
    std::size_t k = 0;
    double cum = sim_detail::level_prob(d, 0, x);
    while (k < 2 && u >= cum) cum += sim_detail::level_prob(d, ++k, x);
    csv += primary ? "2020-03," : "2023-03,";
    csv += csv_detail::format_double(x) + ',';
    if (primary) {
      const bool y = rng.bernoulli(sim_detail::outcome_prob(d, k, x));
      const bool r = rng.bernoulli(sim_detail::selection_prob(d, k, x));
      ++out.truth.n_primary;
      if (r) {
        csv += levels[k] + (y ? ",Yes\n" : ",No\n");
      } else {
        ++out.truth.primary_missing;
        csv += "Missing,Missing\n";
      }
    } else {
      const bool r = rng.bernoulli(logistic(d.aux_selection[0] + d.aux_selection[1] * x));
      ++out.truth.n_auxiliary;
      if (!r) ++out.truth.auxiliary_missing;
      csv += (r ? levels[k] : std::string("Missing")) + ",\n";
    }
  }
  out.schema_map =
      "[schema]\n"
      "domain_column=case_month\n"
      "primary_value=2020-03\n"
      "auxiliary_value=2023-03\n"
      "x_columns=county_score\n"
      "m_column=symptom_severity\n"
      "m_levels=none,mild,severe\n"
      "y_column=hosp_yn\n"
      "y_kind=binary\n"
      "y_false_value=No\n"
      "y_true_value=Yes\n"
      "missing_tokens=Missing\n";
  return out;
}

}  // namespace mnarfuse
