#include <gtest/gtest.h>

#include <algorithm>

#include "test_util.hpp"

using namespace mnarfuse;
using testutil::scalar_dataset;

TEST(Validate, AuxiliaryRowWithOutcome) {
  const auto ds = scalar_dataset({{1, 1, 0.0, 1.0, 2.0}, {2, 1, 0.5, 1.0, 3.0}});
  const auto v = validate(ds);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].row, 1u);
  EXPECT_EQ(v[0].rule, "Y present in auxiliary domain");
}

TEST(Validate, MissingRowCarryingM) {
  const auto ds = scalar_dataset({{1, 0, 0.0, 1.0, std::nullopt}});
  const auto v = validate(ds);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].row, 0u);
}

TEST(Validate, ConsistentRows) {
  const auto ds = scalar_dataset({{1, 1, 0.0, 1.0, 2.0},
                                  {1, 0, 0.3, std::nullopt, std::nullopt},
                                  {2, 1, 0.5, 1.5, std::nullopt},
                                  {2, 0, 0.2, std::nullopt, std::nullopt}});
  EXPECT_TRUE(validate(ds).empty());
}

TEST(Validate, DiscordantPrimaryMissingnessIsRejected) {
  const auto ds = scalar_dataset({{1, 1, 0.0, 1.0, std::nullopt}, {1, 0, 0.0, std::nullopt, 4.0}});
  const auto v = validate(ds);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].rule, "Y absent on a primary row with r=1");
  EXPECT_EQ(v[1].rule, "Y present on a primary row with r=0");
  EXPECT_THROW(require_estimable(ds), DataError);
}

TEST(Validate, EstimationNeedsBothDomains) {
  const auto ds = scalar_dataset({{1, 1, 0.0, 1.0, 2.0}});
  EXPECT_THROW(require_estimable(ds), DataError);
}

TEST(SplitByDomain, PartitionPreservesOrder) {
  const auto ds = scalar_dataset({{1, 1, 0.0, 1.0, 2.0}, {2, 0, 0.0, {}, {}}, {1, 0, 0.0, {}, {}}});
  const auto s = split_by_domain(ds);
  EXPECT_EQ(s.primary, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(s.auxiliary, (std::vector<std::size_t>{1}));
}

TEST(SplitByDomain, AllPrimaryAndEmpty) {
  const auto ds = scalar_dataset({{1, 1, 0.0, 1.0, 2.0}, {1, 0, 1.0, {}, {}}});
  const auto s = split_by_domain(ds);
  EXPECT_EQ(s.primary.size(), 2u);
  EXPECT_TRUE(s.auxiliary.empty());
  const auto e = split_by_domain(PooledDataset{});
  EXPECT_TRUE(e.primary.empty());
  EXPECT_TRUE(e.auxiliary.empty());
}

TEST(SplitByDomain, SizesSumToTotal) {
  const auto sim = generate_model1(Model1Design::make(Setting::T, 997), 5);
  const auto s = split_by_domain(sim.dataset);
  EXPECT_EQ(s.primary.size() + s.auxiliary.size(), sim.dataset.size());
  std::vector<std::size_t> all = s.primary;
  all.insert(all.end(), s.auxiliary.begin(), s.auxiliary.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(std::adjacent_find(all.begin(), all.end()), all.end());
}

TEST(OneHotExpand, Categorical) {
  VariableSchema schema;
  schema.covariate_names = {"x"};
  schema.m_kind = MKind::Categorical;
  schema.m_levels = {"A", "B", "C"};
  UnitRecord rec;
  rec.x = {0.7};
  rec.m = std::string("B");
  EXPECT_EQ(one_hot_expand(rec, schema), (std::vector<double>{0.7, 1.0, 0.0}));
  rec.m = std::string("A");
  EXPECT_EQ(one_hot_expand(rec, schema), (std::vector<double>{0.7, 0.0, 0.0}));
  rec.m = std::string("Z");
  try {
    one_hot_expand(rec, schema);
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'Z'"), std::string::npos);
  }
}

TEST(OneHotExpand, NumericPassesThrough) {
  VariableSchema schema;
  schema.covariate_names = {"x"};
  UnitRecord rec;
  rec.x = {1.0};
  rec.m = 2.5;
  EXPECT_EQ(one_hot_expand(rec, schema), (std::vector<double>{1.0, 2.5}));
}

TEST(Schema, CategoricalLevelsMustBeDistinct) {
  VariableSchema schema;
  schema.m_kind = MKind::Categorical;
  schema.m_levels = {"a", "a"};
  EXPECT_THROW(schema.check(), DataError);
  schema.m_levels = {};
  EXPECT_THROW(schema.check(), DataError);
}

TEST(Csv, RoundTripSimulatedData) {
  const auto sim = generate_model2(Model2Design::make(Setting::F, 400), 17);
  const auto back = testutil::round_trip(sim.dataset);
  EXPECT_EQ(back.records, sim.dataset.records);
  EXPECT_EQ(back.schema.covariate_names, sim.dataset.schema.covariate_names);
}

TEST(Csv, RoundTripCategoricalAndMultipleCovariates) {
  PooledDataset ds;
  ds.schema.covariate_names = {"age", "score, adj"};
  ds.schema.m_kind = MKind::Categorical;
  ds.schema.m_levels = {"mild", "none", "severe"};
  ds.schema.y_kind = YKind::Binary;
  ds.records = {
      {Domain::Primary, {1.0, -0.25}, MValue{std::string("none")}, 1.0, true},
      {Domain::Primary, {0.5, 3.0}, std::nullopt, std::nullopt, false},
      {Domain::Auxiliary, {2.0, 0.1}, MValue{std::string("severe")}, std::nullopt, true},
      {Domain::Auxiliary, {0.1 + 0.2, 1e-17}, MValue{std::string("mild")}, std::nullopt, true},
  };
  const auto back = testutil::round_trip(ds);
  EXPECT_EQ(back.records, ds.records);
  EXPECT_EQ(back.schema.covariate_names, ds.schema.covariate_names);
  EXPECT_EQ(back.schema.m_levels, ds.schema.m_levels);
  EXPECT_EQ(back.schema.y_kind, YKind::Binary);
}

TEST(Csv, MalformedLineIsNamed) {
  std::istringstream in("domain,r,x,m,y\n1,1,0.5,1,2\n\n2,1,abc,1,?\n");
  try {
    read_csv(in);
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(Csv, FieldCountMismatch) {
  std::istringstream in("domain,r,x,m,y\n1,1,0.5,1\n");
  EXPECT_THROW(read_csv(in), DataError);
}

TEST(Csv, EmptyCellAndConfiguredTokenAreMissing) {
  std::istringstream in("domain,r,x,m,y\n1,0,0.5,NA,\n2,1,0.1,2,NA\n");
  CsvReadOptions opt;
  opt.missing_token = "NA";
  const auto ds = read_csv(in, opt);
  EXPECT_FALSE(ds.records[0].m.has_value());
  EXPECT_FALSE(ds.records[0].y.has_value());
  EXPECT_FALSE(ds.records[1].y.has_value());
  EXPECT_TRUE(validate(ds).empty());
}

TEST(Csv, AuxiliaryOnlyFileWithoutOutcomeColumn) {
  std::istringstream in("domain,r,x,m\n2,1,0.5,1\n2,0,0.1,?\n");
  const auto ds = read_csv(in);
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_TRUE(validate(ds).empty());
}

TEST(Ingest, SurveillanceFixture) {
  const auto fx = generate_surveillance_fixture({}, 3);
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
  const auto res = ingest_external(in, map);
  EXPECT_EQ(res.dataset.size(), 6000u);
  EXPECT_EQ(res.summary.n_primary, fx.truth.n_primary);
  EXPECT_EQ(res.summary.n_auxiliary, fx.truth.n_auxiliary);
  EXPECT_DOUBLE_EQ(res.summary.primary_missing_rate,
                   static_cast<double>(fx.truth.primary_missing) / static_cast<double>(fx.truth.n_primary));
  EXPECT_DOUBLE_EQ(res.summary.auxiliary_missing_rate,
                   static_cast<double>(fx.truth.auxiliary_missing) / static_cast<double>(fx.truth.n_auxiliary));
  EXPECT_EQ(res.dataset.schema.m_feature_count(), 2u);
}

TEST(Ingest, OutcomeInAuxiliaryRowsIsRejected) {
  SchemaMap map;
  map.domain_column = "d";
  map.primary_value = "p";
  map.auxiliary_value = "a";
  map.x_columns = {"x"};
  map.m_column = "m";
  map.y_column = "y";
  std::istringstream in("d,x,m,y\np,0.1,1,2\na,0.2,1,5\n");
  try {
    ingest_external(in, map);
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("Y present in auxiliary domain"), std::string::npos);
  }
}

TEST(Ingest, UnmappedColumn) {
  SchemaMap map;
  map.domain_column = "d";
  map.x_columns = {"x"};
  map.m_column = "m";
  map.y_column = "outcome";
  std::istringstream in("d,x,m,y\n");
  EXPECT_THROW(ingest_external(in, map), DataError);
}

TEST(CanonicalOrder, IndependentOfRowOrder) {
  auto ds = generate_model1(Model1Design::make(Setting::T, 300), 2).dataset;
  auto shuffled = ds;
  Rng rng(4);
  std::shuffle(shuffled.records.begin(), shuffled.records.end(), rng);
  const auto a = canonical_order(ds);
  const auto b = canonical_order(shuffled);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(ds.records[a[i]], shuffled.records[b[i]]);
}
