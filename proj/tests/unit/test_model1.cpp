#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"

using namespace mnarfuse;

namespace {

// Two-level X and M with Model 1 structure: R depends on (X, M) only.
DiscreteFullLaw binary_model1_law() {
  RandomLawShape shape;
  shape.nx = 2;
  shape.nm = 2;
  shape.ny = 2;
  return random_model1_law(2024, shape);
}

Model1Spec saturated_model1() {
  const auto sat = BasisSpec::parse("1,x,m,x*m");
  return {sat, sat, BasisSpec::parse("1,x")};
}

}  // namespace

TEST(AuxMomentTargets, RecoversQuadraticConditionalMean) {
  const auto sim = generate_model1(Model1Design::make(Setting::T, 10000), 8);
  const auto t = fit_aux_moment_targets(sim.dataset, BasisSpec::parse("1,m"), BasisSpec::parse("1,x,x^2"));
  ASSERT_EQ(t.regressions.size(), 2u);
  const auto& c = t.regressions[1].coefficients;
  EXPECT_NEAR(c[0], 0.0, 0.05);
  EXPECT_NEAR(c[1], 0.0, 0.05);
  EXPECT_NEAR(c[2], 0.4, 0.05);
  for (Eigen::Index i = 0; i < t.predictions.rows(); ++i) EXPECT_NEAR(t.predictions(i, 0), 1.0, 1e-12);
  EXPECT_EQ(static_cast<std::size_t>(t.predictions.rows()), sim.dataset.count(Domain::Primary));
}

TEST(AuxMomentTargets, DegenerateAuxiliaryDesign) {
  const auto ds = testutil::scalar_dataset({{1, 1, 0.0, 1.0, 2.0},
                                            {1, 0, 1.0, {}, {}},
                                            {2, 1, 0.5, 1.0, {}},
                                            {2, 1, 0.5, 2.0, {}},
                                            {2, 0, 0.9, {}, {}}});
  EXPECT_THROW(fit_aux_moment_targets(ds, BasisSpec::parse("1,m"), BasisSpec::parse("1,x")), RankDeficientError);
  const auto none = testutil::scalar_dataset({{1, 1, 0.0, 1.0, 2.0}, {2, 0, 0.5, {}, {}}});
  EXPECT_THROW(fit_aux_moment_targets(none, BasisSpec::parse("1,m"), BasisSpec::parse("1")), DataError);
}

TEST(Model1, InterceptOnlyReducesToCompleteCaseMean) {
  const auto sim = generate_model1(Model1Design::make(Setting::T, 3000), 12);
  Model1Spec spec{BasisSpec::parse("1"), BasisSpec::parse("1"), BasisSpec::parse("1,x,x^2")};
  EstimatorConfig cfg;
  cfg.solver.tol = 1e-12;
  const auto rep = estimate_model1(sim.dataset, spec, cfg);
  double sum = 0.0;
  std::size_t cc = 0;
  for (const auto& r : sim.dataset.records) {
    if (r.g == Domain::Primary && r.r) sum += *r.y, ++cc;
  }
  EXPECT_NEAR(rep.beta_hat, sum / static_cast<double>(cc), 1e-10);
  const double n1 = static_cast<double>(sim.dataset.count(Domain::Primary));
  EXPECT_NEAR(1.0 / logistic(rep.nuisance[0].value), n1 / static_cast<double>(cc), 1e-10);
}

TEST(Model1, ShuffleInvariance) {
  const auto sim = generate_model1(Model1Design::make(Setting::F, 1500), 3);
  auto shuffled = sim.dataset;
  Rng rng(99);
  std::shuffle(shuffled.records.begin(), shuffled.records.end(), rng);
  const auto spec = Model1Spec::defaults(sim.dataset.schema);
  const auto a = estimate_model1(sim.dataset, spec);
  const auto b = estimate_model1(shuffled, spec);
  EXPECT_EQ(a.beta_hat, b.beta_hat);
  for (std::size_t j = 0; j < a.nuisance.size(); ++j) EXPECT_EQ(a.nuisance[j].value, b.nuisance[j].value);
}

TEST(Model1, MomentResidualsVanishAtSolution) {
  const auto sim = generate_model1(Model1Design::make(Setting::T, 2000), 21);
  const auto spec = Model1Spec::defaults(sim.dataset.schema);
  const auto fit = fit_model1(sim.dataset, spec);
  ASSERT_TRUE(fit.report.solver && fit.report.solver->converged());

  // Recompute the stacked residuals independently of the estimator.
  const auto targets = fit_aux_moment_targets(sim.dataset, spec.h_basis, spec.aux_regression_basis);
  const auto target = targets.primary_mean();
  Eigen::VectorXd lhs = Eigen::VectorXd::Zero(3);
  double n1 = 0;
  for (const auto& r : sim.dataset.records) {
    if (r.g != Domain::Primary) continue;
    ++n1;
    if (!r.r) continue;
    const std::vector<double> m{std::get<double>(*r.m)};
    const double q = 1.0 / fit.propensity.predict(r.x, std::span<const double>(m));
    lhs += q * Eigen::Vector3d(1.0, r.x[0], m[0]);
  }
  lhs /= n1;
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_LT(std::abs(lhs[j] - target[j]), 1e-8);
}

TEST(Model1, SingleRunNearTruth) {
  const auto sim = generate_model1(Model1Design::make(Setting::T, 2000), 7);
  const auto rep = estimate_model1(sim.dataset, Model1Spec::defaults(sim.dataset.schema));
  EXPECT_NEAR(rep.beta_hat, 1.8, 0.15);
  EXPECT_EQ(rep.estimator, "ipw_model1");
  EXPECT_EQ(rep.nuisance.size(), 3u);
  EXPECT_EQ(rep.nuisance[2].name, "alpha:m");
  EXPECT_EQ(rep.diagnostics.n_primary + rep.diagnostics.n_auxiliary, 2000u);
  EXPECT_GE(rep.diagnostics.min_weight, 1.0);
}

TEST(Model1, RejectsAllMissingPrimary) {
  const auto ds = testutil::scalar_dataset({{1, 0, 0.1, {}, {}}, {1, 0, 0.2, {}, {}}, {2, 1, 0.3, 1.0, {}}});
  EXPECT_THROW(estimate_model1(ds, Model1Spec::defaults(ds.schema)), DataError);
}

TEST(Model1, SpecNeedsEnoughMoments) {
  const auto sim = generate_model1(Model1Design::make(Setting::T, 400), 1);
  Model1Spec spec{BasisSpec::parse("1,x,m"), BasisSpec::parse("1,x"), BasisSpec::parse("1,x")};
  EXPECT_THROW(estimate_model1(sim.dataset, spec), PreconditionError);
}

TEST(Model1, CategoricalShadow) {
  const auto fx = generate_surveillance_fixture({}, 5);
  SchemaMap map;
  map.domain_column = "case_month";
  map.primary_value = "2020-03";
  map.auxiliary_value = "2023-03";
  map.x_columns = {"county_score"};
  map.m_column = "symptom_severity";
  map.m_levels = surveillance_levels();
  map.y_column = "hosp_yn";
  map.y_kind = YKind::Binary;
  map.y_false_value = "No";
  map.y_true_value = "Yes";
  map.missing_tokens = {"Missing", ""};
  std::istringstream in(fx.csv);
  const auto ds = ingest_external(in, map).dataset;
  const auto rep = estimate_model1(ds, Model1Spec::defaults(ds.schema));
  EXPECT_EQ(rep.nuisance.size(), 4u);
  EXPECT_NEAR(rep.beta_hat, fx.truth.beta, 0.08);
}

TEST(Plugin, ConstantOutcome) {
  auto sim = generate_model1(Model1Design::make(Setting::T, 800), 4);
  for (auto& r : sim.dataset.records) {
    if (r.y) r.y = 2.75;
  }
  EXPECT_NEAR(identify_beta_model1_plugin(sim.dataset, PluginSpec::defaults(sim.dataset.schema)), 2.75, 1e-12);
}

TEST(Plugin, MatchesOracleOnEmpiricalLaw) {
  const auto law = binary_model1_law();
  const auto ds = sample_dataset(law, 100000, 17);
  const auto obs = empirical_observed_law(ds, law.xs(), law.ms(), law.ys());
  const double oracle = identify_model1(obs);
  const PluginSpec spec{BasisSpec::parse("1,x,m,x*m"), BasisSpec::parse("1,x")};
  EXPECT_NEAR(identify_beta_model1_plugin(ds, spec), oracle, 1e-6);
  EXPECT_NEAR(estimate_model1(ds, saturated_model1()).beta_hat, oracle, 1e-6);
}

TEST(Plugin, PaperDesignNearTruth) {
  const auto sim = generate_model1(Model1Design::make(Setting::T, 2000), 31);
  EXPECT_NEAR(identify_beta_model1_plugin(sim.dataset, PluginSpec::defaults(sim.dataset.schema)), 1.8, 0.1);
}
