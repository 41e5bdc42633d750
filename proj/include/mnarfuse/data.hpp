#pragma once

// Pooled two-domain dataset: one record per unit with domain tag G,
// covariates X, possibly-missing M and Y, and the joint indicator R.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mnarfuse/error.hpp"

namespace mnarfuse {

enum class Domain : std::uint8_t { Primary = 1, Auxiliary = 2 };

inline int domain_code(Domain g) noexcept { return static_cast<int>(g); }

/// Numeric M is a double, categorical M is its level label.
using MValue = std::variant<double, std::string>;

struct UnitRecord {
  Domain g = Domain::Primary;
  std::vector<double> x;
  std::optional<MValue> m;
  std::optional<double> y;
  bool r = false;

  bool operator==(const UnitRecord&) const = default;
};

enum class MKind { Numeric, Categorical };
enum class YKind { Numeric, Binary };

struct VariableSchema {
  std::vector<std::string> covariate_names;
  MKind m_kind = MKind::Numeric;
  std::vector<std::string> m_levels;  // categorical only; first is the reference
  YKind y_kind = YKind::Numeric;
  std::string missing_token = "?";

  std::size_t x_dim() const noexcept { return covariate_names.size(); }

  /// Number of real features M expands to.
  std::size_t m_feature_count() const noexcept {
    return m_kind == MKind::Numeric ? 1 : (m_levels.empty() ? 0 : m_levels.size() - 1);
  }

  void check() const {
    if (m_kind == MKind::Categorical) {
      if (m_levels.empty()) throw DataError("categorical M needs at least one level");
      std::set<std::string> seen(m_levels.begin(), m_levels.end());
      if (seen.size() != m_levels.size()) throw DataError("categorical M levels must be distinct");
    }
    std::set<std::string> names(covariate_names.begin(), covariate_names.end());
    if (names.size() != covariate_names.size()) throw DataError("covariate names must be distinct");
  }
};

struct PooledDataset {
  VariableSchema schema;
  std::vector<UnitRecord> records;

  std::size_t size() const noexcept { return records.size(); }

  std::size_t count(Domain g) const noexcept {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(),
                                                  [g](const UnitRecord& r) { return r.g == g; }));
  }

  std::size_t count_complete(Domain g) const noexcept {
    return static_cast<std::size_t>(std::count_if(
        records.begin(), records.end(), [g](const UnitRecord& r) { return r.g == g && r.r; }));
  }
};

struct Violation {
  std::size_t row;
  std::string rule;
};

/// Feature vector of an M value: the value itself when numeric, L-1
/// reference-coded indicators when categorical.
inline std::vector<double> m_features(const MValue& m, const VariableSchema& schema) {
  if (schema.m_kind == MKind::Numeric) {
    if (const auto* v = std::get_if<double>(&m)) return {*v};
    throw DataError("categorical value '" + std::get<std::string>(m) + "' given for numeric M");
  }
  const auto* label = std::get_if<std::string>(&m);
  if (label == nullptr) throw DataError("numeric value given for categorical M");
  const auto it = std::find(schema.m_levels.begin(), schema.m_levels.end(), *label);
  if (it == schema.m_levels.end()) throw DataError("unseen categorical level '" + *label + "'");
  std::vector<double> out(schema.m_levels.size() - 1, 0.0);
  const auto idx = static_cast<std::size_t>(it - schema.m_levels.begin());
  if (idx > 0) out[idx - 1] = 1.0;
  return out;
}

/// X features followed by the M features when M is present.
inline std::vector<double> one_hot_expand(const UnitRecord& record, const VariableSchema& schema) {
  std::vector<double> out = record.x;
  if (record.m) {
    const auto mf = m_features(*record.m, schema);
    out.insert(out.end(), mf.begin(), mf.end());
  }
  return out;
}

inline std::vector<Violation> validate(const PooledDataset& dataset) {
  std::vector<Violation> out;
  const auto& schema = dataset.schema;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& rec = dataset.records[i];
    auto add = [&](std::string rule) { out.push_back({i, std::move(rule)}); };

    if (rec.x.size() != schema.x_dim()) {
      add("covariate count " + std::to_string(rec.x.size()) + " does not match schema (" +
          std::to_string(schema.x_dim()) + ")");
    }
    if (std::any_of(rec.x.begin(), rec.x.end(), [](double v) { return !std::isfinite(v); })) {
      add("non-finite covariate");
    }
    if (rec.r && !rec.m) add("M absent on a row with r=1");
    if (!rec.r && rec.m) add("M present on a row with r=0");
    if (rec.g == Domain::Auxiliary) {
      if (rec.y) add("Y present in auxiliary domain");
    } else {
      if (rec.r && !rec.y) add("Y absent on a primary row with r=1");
      if (!rec.r && rec.y) add("Y present on a primary row with r=0");
    }
    if (rec.m) {
      try {
        const auto mf = m_features(*rec.m, schema);
        if (std::any_of(mf.begin(), mf.end(), [](double v) { return !std::isfinite(v); })) {
          add("non-finite M");
        }
      } catch (const DataError& e) {
        add(e.what());
      }
    }
    if (rec.y) {
      if (!std::isfinite(*rec.y)) {
        add("non-finite Y");
      } else if (schema.y_kind == YKind::Binary && *rec.y != 0.0 && *rec.y != 1.0) {
        add("binary Y must be 0 or 1");
      }
    }
  }
  return out;
}

struct DomainSplit {
  std::vector<std::size_t> primary;
  std::vector<std::size_t> auxiliary;
};

/// Order-preserving partition of row indices by domain.
inline DomainSplit split_by_domain(const PooledDataset& dataset) {
  DomainSplit split;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    (dataset.records[i].g == Domain::Primary ? split.primary : split.auxiliary).push_back(i);
  }
  return split;
}

/// Row order sorted by record content. Estimators sum in this order, which
/// makes every estimate bit-identical under any permutation of the rows.
inline std::vector<std::size_t> canonical_order(const PooledDataset& dataset) {
  std::vector<std::size_t> order(dataset.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& recs = dataset.records;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = recs[a];
    const auto& rb = recs[b];
    if (ra.g != rb.g) return ra.g < rb.g;
    if (ra.r != rb.r) return ra.r > rb.r;
    if (ra.x != rb.x) return ra.x < rb.x;
    if (ra.m != rb.m) return ra.m < rb.m;
    return ra.y < rb.y;
  });
  return order;
}

/// Throws unless both domains are represented and the data validates.
inline void require_estimable(const PooledDataset& dataset) {
  dataset.schema.check();
  const auto violations = validate(dataset);
  if (!violations.empty()) {
    throw DataError("row " + std::to_string(violations.front().row) + ": " +
                    violations.front().rule + " (" + std::to_string(violations.size()) +
                    " violation(s) total)");
  }
  if (dataset.count(Domain::Primary) == 0) throw DataError("no primary-domain records");
  if (dataset.count(Domain::Auxiliary) == 0) throw DataError("no auxiliary-domain records");
}

}  // namespace mnarfuse
