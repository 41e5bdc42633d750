#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"

using namespace mnarfuse;

namespace {

struct Rates {
  double primary_missing = 0, auxiliary_missing = 0, primary_fraction = 0;
};

Rates rates(const PooledDataset& ds) {
  double np = 0, nm = 0, na = 0, nam = 0;
  for (const auto& r : ds.records) {
    if (r.g == Domain::Primary) {
      ++np;
      nm += r.r ? 0 : 1;
    } else {
      ++na;
      nam += r.r ? 0 : 1;
    }
  }
  return {nm / np, nam / na, np / (np + na)};
}

// p(R=0 | G=2) for R ~ logistic(c0 + c1 X), X ~ N(mu, 1), by midpoint rule.
double aux_missing_rate(const std::array<double, 2>& c, double mu) {
  const int nodes = 200000;
  const double lo = mu - 10.0, h = 20.0 / nodes;
  double acc = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double x = lo + (i + 0.5) * h;
    acc += std::exp(-0.5 * (x - mu) * (x - mu)) * (1.0 - logistic(c[0] + c[1] * x)) * h;
  }
  return acc / std::sqrt(2.0 * std::numbers::pi);
}

std::string csv_of(const PooledDataset& ds) {
  std::ostringstream out;
  write_csv(out, ds);
  return out.str();
}

}  // namespace

TEST(Simulation, SettingParse) {
  EXPECT_EQ(parse_setting("T"), Setting::T);
  EXPECT_EQ(parse_setting("F"), Setting::F);
  EXPECT_THROW(parse_setting("X"), PreconditionError);
}

TEST(Simulation, Model1PrimaryCovariateMean) {
  const auto sim = generate_model1(Model1Design::make(Setting::T, 2000), 1);
  double sum = 0, n = 0;
  for (const auto& r : sim.dataset.records) {
    if (r.g == Domain::Primary) sum += r.x[0], ++n;
  }
  EXPECT_NEAR(sum / n, 1.0, 0.1);
}

TEST(Simulation, Model1MissingFractions) {
  const auto d = Model1Design::make(Setting::T, 10000);
  const auto r = rates(generate_model1(d, 2).dataset);
  EXPECT_GT(r.primary_missing, 0.20);
  EXPECT_LT(r.primary_missing, 0.40);
  // The auxiliary rate implied by the stated selection law, not the range
  // quoted alongside it (see the README).
  const double implied = aux_missing_rate(d.aux_selection, d.auxiliary_x_mean);
  EXPECT_NEAR(implied, 0.2365, 5e-4);
  EXPECT_NEAR(r.auxiliary_missing, implied, 0.02);
}

TEST(Simulation, Model2PrimaryMissingFraction) {
  const auto r = rates(generate_model2(Model2Design::make(Setting::T, 10000), 3).dataset);
  EXPECT_GT(r.primary_missing, 0.40);
  EXPECT_LT(r.primary_missing, 0.50);
}

TEST(Simulation, DomainSizes) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_GT(rates(generate_model1(Model1Design::make(Setting::T, 2000), seed).dataset).primary_fraction, 0.45);
    EXPECT_LT(rates(generate_model1(Model1Design::make(Setting::T, 2000), seed).dataset).primary_fraction, 0.55);
    EXPECT_GT(rates(generate_model2(Model2Design::make(Setting::F, 2000), seed).dataset).primary_fraction, 0.45);
    EXPECT_LT(rates(generate_model2(Model2Design::make(Setting::F, 2000), seed).dataset).primary_fraction, 0.55);
  }
}

TEST(Simulation, Reproducible) {
  const auto d1 = Model1Design::make(Setting::F, 700);
  EXPECT_EQ(csv_of(generate_model1(d1, 42).dataset), csv_of(generate_model1(d1, 42).dataset));
  EXPECT_NE(csv_of(generate_model1(d1, 42).dataset), csv_of(generate_model1(d1, 43).dataset));
  const auto d2 = Model2Design::make(Setting::T, 700);
  EXPECT_EQ(csv_of(generate_model2(d2, 42).dataset), csv_of(generate_model2(d2, 42).dataset));
}

TEST(Simulation, MaskingFollowsDrawnIndicator) {
  const auto sim = generate_model2(Model2Design::make(Setting::T, 3000), 4);
  EXPECT_TRUE(validate(sim.dataset).empty());
  for (std::size_t i = 0; i < sim.truth.size(); ++i) {
    const auto& u = sim.truth[i];
    const auto& rec = sim.dataset.records[i];
    EXPECT_EQ(rec.r, u.r);
    EXPECT_EQ(u.y.has_value(), u.g == Domain::Primary);
    if (rec.r) {
      EXPECT_EQ(std::get<double>(*rec.m), u.m);
    }
  }
}

TEST(Simulation, Model2ShadowMeanAmongMissing) {
  const auto sim = generate_model2(Model2Design::make(Setting::T, 1000000), 5);
  for (double x0 : {0.0, 0.8}) {
    double sum = 0, n = 0;
    for (const auto& u : sim.truth) {
      if (u.g == Domain::Primary && !u.r && std::abs(u.x - x0) < 0.05) sum += u.m, ++n;
    }
    EXPECT_NEAR(sum / n, -0.4 * x0 * x0 - 0.3, 0.05) << x0;
  }
}

TEST(Simulation, Model2LatentOutcomeMean) {
  const auto sim = generate_model2(Model2Design::make(Setting::T, 200000), 6);
  EXPECT_NEAR(latent_primary_mean(sim), -0.659, 0.02);
}

TEST(Simulation, Model2ShadowLawSharedAcrossDomains) {
  const auto sim = generate_model2(Model2Design::make(Setting::F, 1000000), 7);
  for (double lo = -0.5; lo < 1.5; lo += 0.25) {
    double s1 = 0, n1 = 0, s2 = 0, n2 = 0;
    for (const auto& u : sim.truth) {
      if (u.x < lo || u.x >= lo + 0.25) continue;
      // Compare M minus its known X trend so the bin width does not matter.
      const double resid = u.m + 0.4 * u.x * u.x;
      (u.g == Domain::Primary ? s1 : s2) += resid;
      (u.g == Domain::Primary ? n1 : n2) += 1;
    }
    EXPECT_LT(std::abs(s1 / n1 - s2 / n2), 0.05) << lo;
  }
}

TEST(Simulation, Model2OddsRatioRoundTrip) {
  // p(R=1 | X, Y) = logistic(0.5 + 0.4 X + 0.3 Y) in the T setting.
  const auto sim = generate_model2(Model2Design::make(Setting::T, 400000), 8);
  std::vector<std::array<double, 3>> rows;
  std::vector<double> r;
  for (const auto& u : sim.truth) {
    if (u.g != Domain::Primary) continue;
    rows.push_back({1.0, u.x, *u.y});
    r.push_back(u.r ? 1.0 : 0.0);
  }
  Eigen::MatrixXd design(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < 3; ++j) design(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  const Eigen::VectorXd coef = fit_logistic(design, Eigen::Map<Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size())));
  EXPECT_NEAR(coef[0], 0.5, 0.03);
  EXPECT_NEAR(coef[1], 0.4, 0.03);
  EXPECT_NEAR(coef[2], 0.3, 0.03);
}

TEST(TrueBeta, Model1Analytic) {
  for (auto s : {Setting::T, Setting::F}) {
    const auto tb = true_beta(Model1Design::make(s, 10));
    EXPECT_DOUBLE_EQ(tb.value, 1.8);
    EXPECT_EQ(tb.provenance, TrueBeta::Provenance::Analytic);
  }
}

TEST(TrueBeta, Model2MonteCarlo) {
  const auto t = true_beta(Model2Design::make(Setting::T, 10));
  EXPECT_NEAR(t.value, -0.659, 0.01);
  EXPECT_EQ(t.provenance, TrueBeta::Provenance::MonteCarlo);
  EXPECT_EQ(t.n_trials, 1000u);
  EXPECT_EQ(t.n_per_trial, 20000u);
  EXPECT_EQ(t.seed, kTrueBetaSeed);
  EXPECT_NEAR(true_beta(Model2Design::make(Setting::F, 10)).value, -0.615, 0.01);
}

TEST(TruthSidecar, Layout) {
  const auto sim = generate_model1(Model1Design::make(Setting::T, 5), 1);
  std::ostringstream out;
  write_truth_csv(out, sim);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "row,domain,r,x,m_latent,y_latent");
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 5);
}

TEST(SurveillanceFixture, TruthAndRates) {
  const auto fx = generate_surveillance_fixture({}, 9);
  EXPECT_NEAR(fx.truth.beta, 0.6766, 1e-3);
  EXPECT_EQ(fx.truth.n_primary + fx.truth.n_auxiliary, 6000u);
  const double pm = static_cast<double>(fx.truth.primary_missing) / static_cast<double>(fx.truth.n_primary);
  const double am = static_cast<double>(fx.truth.auxiliary_missing) / static_cast<double>(fx.truth.n_auxiliary);
  EXPECT_NEAR(pm, fx.truth.primary_missing_rate, 0.03);
  EXPECT_NEAR(am, fx.truth.auxiliary_missing_rate, 0.04);
  EXPECT_NE(fx.schema_map.find("m_levels=none,mild,severe"), std::string::npos);
}
