#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"

using namespace mnarfuse;

namespace {

double mean_x(const PooledDataset& ds) {
  double s = 0;
  for (const auto& r : ds.records) s += r.x[0];
  return s / static_cast<double>(ds.size());
}

// Fails on resamples whose mean covariate exceeds the threshold.
NamedEstimator fragile(double threshold) {
  return {"fragile", [threshold](const PooledDataset& d) {
            if (mean_x(d) > threshold) throw DataError("synthetic failure");
            return mcar_estimate(d);
          }};
}

}  // namespace

TEST(Bootstrap, DeterministicAcrossRunsAndWorkers) {
  const auto sim = generate_model1(Model1Design::make(Setting::T, 800), 2);
  const auto est = standard_estimator("ipw_model1");
  BootstrapConfig cfg;
  cfg.k = 60;
  cfg.seed = 5;
  cfg.workers = 1;
  const auto a = bootstrap_ci(sim.dataset, est, cfg);
  const auto b = bootstrap_ci(sim.dataset, est, cfg);
  cfg.workers = 4;
  const auto c = bootstrap_ci(sim.dataset, est, cfg);
  EXPECT_EQ(a.replicates, b.replicates);
  EXPECT_EQ(a.replicates, c.replicates);
  EXPECT_EQ(a.ci.lo, c.ci.lo);
  EXPECT_EQ(a.ci.hi, c.ci.hi);
  EXPECT_LE(a.ci.lo, a.ci.hi);
  EXPECT_EQ(a.ci.resamples, 60u);
  EXPECT_EQ(a.estimate, est.run(sim.dataset).beta_hat);
  cfg.seed = 6;
  EXPECT_NE(bootstrap_ci(sim.dataset, est, cfg).replicates, a.replicates);
}

TEST(Bootstrap, StratifiedResamplePreservesDomainCounts) {
  const auto ds = generate_model2(Model2Design::make(Setting::T, 999), 3).dataset;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto b = bootstrap_resample(ds, s, true);
    EXPECT_EQ(b.count(Domain::Primary), ds.count(Domain::Primary));
    EXPECT_EQ(b.count(Domain::Auxiliary), ds.count(Domain::Auxiliary));
    EXPECT_EQ(b.size(), ds.size());
  }
  std::size_t differs = 0;
  for (std::uint64_t s = 0; s < 20; ++s) differs += bootstrap_resample(ds, s, false).count(Domain::Primary) != ds.count(Domain::Primary);
  EXPECT_GT(differs, 10u);
}

TEST(Bootstrap, RepeatedRowGivesZeroWidth) {
  PooledDataset ds;
  ds.schema.covariate_names = {"x"};
  for (int i = 0; i < 10; ++i) ds.records.push_back({Domain::Primary, {0.5}, MValue{1.0}, 2.0, true});
  for (int i = 0; i < 10; ++i) ds.records.push_back({Domain::Auxiliary, {0.5}, MValue{1.0}, std::nullopt, true});
  BootstrapConfig cfg;
  cfg.k = 50;
  const auto res = bootstrap_ci(ds, standard_estimator("mcar"), cfg);
  EXPECT_EQ(res.ci.width, 0.0);
  EXPECT_EQ(res.ci.lo, 2.0);
}

TEST(Bootstrap, FailedResamplesAreCountedOrFatal) {
  const auto ds = generate_model1(Model1Design::make(Setting::T, 600), 4).dataset;
  const double m = mean_x(ds);
  BootstrapConfig cfg;
  cfg.k = 200;
  cfg.seed = 1;
  EXPECT_THROW(bootstrap_ci(ds, fragile(m), cfg), BootstrapError);

  // Roughly the upper 5% of resample means fail.
  double sd = 0;
  for (const auto& r : ds.records) sd += (r.x[0] - m) * (r.x[0] - m);
  sd = std::sqrt(sd / static_cast<double>(ds.size() - 1) / static_cast<double>(ds.size()));
  const auto res = bootstrap_ci(ds, fragile(m + 1.645 * sd), cfg);
  EXPECT_GT(res.ci.n_failed, 0u);
  EXPECT_LT(res.ci.n_failed, 40u);
  EXPECT_EQ(res.replicates.size() + res.ci.n_failed, 200u);
}

TEST(Bootstrap, Preconditions) {
  const auto ds = generate_model1(Model1Design::make(Setting::T, 200), 4).dataset;
  BootstrapConfig cfg;
  cfg.k = 1;
  EXPECT_THROW(bootstrap_ci(ds, standard_estimator("mcar"), cfg), PreconditionError);
  cfg.k = 10;
  cfg.ci_level = 1.0;
  EXPECT_THROW(bootstrap_ci(ds, standard_estimator("mcar"), cfg), PreconditionError);
  EXPECT_THROW(standard_estimator("bogus"), PreconditionError);
}

TEST(Quantile, Type7) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.025), 1.075);
}

TEST(Replication, AggregatesMatchTwoPassComputation) {
  const auto design = replication_design(Model1Design::make(Setting::T, 0));
  ReplicationConfig cfg;
  cfg.n_values = {300};
  cfg.n_reps = 25;
  cfg.seed = 9;
  cfg.workers = 2;
  const auto rep = replicate(design, {standard_estimator("ipw_model1"), standard_estimator("mar")}, cfg);
  ASSERT_EQ(rep.rows.size(), 2u);
  ASSERT_EQ(rep.estimates.size(), 50u);
  for (const auto& row : rep.rows) {
    std::vector<double> v;
    for (const auto& e : rep.estimates) {
      if (e.estimator == row.estimator && e.status == "ok") v.push_back(e.beta_hat);
    }
    ASSERT_EQ(v.size(), row.replicates);
    double mean = 0;
    for (double b : v) mean += b;
    mean /= static_cast<double>(v.size());
    double ss = 0, mse = 0;
    for (double b : v) {
      ss += (b - mean) * (b - mean);
      mse += (b - 1.8) * (b - 1.8);
    }
    EXPECT_NEAR(row.variance, ss / static_cast<double>(v.size() - 1), 1e-12);
    EXPECT_GE(row.variance, 0.0);
    EXPECT_NEAR(row.mean_estimate, mean, 1e-12);
    EXPECT_NEAR(row.bias, mean - 1.8, 1e-12);
    EXPECT_NEAR(row.pct_bias, (mean - 1.8) / 1.8, 1e-12);
    EXPECT_NEAR(row.mse, mse / static_cast<double>(v.size()), 1e-12);
    EXPECT_EQ(row.replicates + row.failed, 25u);
  }
}

TEST(Replication, SeedsAndWorkerIndependence) {
  const auto design = replication_design(Model2Design::make(Setting::T, 0));
  ReplicationConfig cfg;
  cfg.n_values = {250, 400};
  cfg.n_reps = 6;
  cfg.seed = 3;
  cfg.workers = 1;
  const std::vector<NamedEstimator> ests{standard_estimator("ipw_model2"), standard_estimator("mcar")};
  const auto a = replicate(design, ests, cfg);
  cfg.workers = 3;
  const auto b = replicate(design, ests, cfg);
  std::ostringstream sa, sb, la, lb;
  write_replication_csv(sa, a);
  write_replication_csv(sb, b);
  write_long_csv(la, a);
  write_long_csv(lb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_EQ(a.estimates[0].seed, replicate_seed(3, 250, 0));
  EXPECT_EQ(sa.str().substr(0, sa.str().find('\n')),
            "design,setting,estimator,n,replicates,failed,beta_true,mean_estimate,bias,pct_bias,mse,variance");
  EXPECT_EQ(la.str().substr(0, la.str().find('\n')), "design,setting,estimator,n,replicate,seed,beta_hat,status");
}

TEST(Replication, ZeroReplicates) {
  ReplicationConfig cfg;
  cfg.n_reps = 0;
  const auto rep = replicate(replication_design(Model1Design::make(Setting::T, 0)), {standard_estimator("mcar")}, cfg);
  EXPECT_TRUE(rep.rows.empty());
  EXPECT_TRUE(rep.estimates.empty());
}

TEST(RunningMoments, MatchesTwoPass) {
  Rng rng(1);
  RunningMoments m;
  std::vector<double> v;
  for (int i = 0; i < 1000; ++i) {
    v.push_back(1e6 + rng.normal());
    m.add(v.back());
  }
  double mean = 0;
  for (double x : v) mean += x;
  mean /= 1000;
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  EXPECT_NEAR(m.variance(), ss / 999, 1e-9);
}

TEST(Rng, DerivedStreamsAreStable) {
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
  Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a(), b());
  Rng c(7);
  for (int i = 0; i < 1000; ++i) {
    const auto v = c.below(3);
    EXPECT_LT(v, 3u);
  }
}
