#pragma once

#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>

#include "mnarfuse/mnarfuse.hpp"

namespace testutil {

using namespace mnarfuse;

struct Row {
  int g;
  int r;
  double x;
  std::optional<double> m;
  std::optional<double> y;
};

inline PooledDataset scalar_dataset(std::initializer_list<Row> rows) {
  PooledDataset ds;
  ds.schema.covariate_names = {"x"};
  for (const auto& row : rows) {
    UnitRecord rec;
    rec.g = row.g == 1 ? Domain::Primary : Domain::Auxiliary;
    rec.r = row.r == 1;
    rec.x = {row.x};
    if (row.m) rec.m = *row.m;
    rec.y = row.y;
    ds.records.push_back(rec);
  }
  return ds;
}

inline PooledDataset round_trip(const PooledDataset& ds, const CsvReadOptions& opt = {}) {
  std::ostringstream out;
  write_csv(out, ds);
  std::istringstream in(out.str());
  return read_csv(in, opt);
}

}  // namespace testutil
