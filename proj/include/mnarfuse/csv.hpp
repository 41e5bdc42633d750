#pragma once

// CSV ingestion and emission for pooled datasets.
//
// Native format: a header with columns `domain` (1|2), `r` (0|1), one column
// per covariate, `m`, and optionally `y`. Missing cells hold the schema's
// missing token ("?" by default) or are empty.

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mnarfuse/data.hpp"
#include "mnarfuse/error.hpp"

namespace mnarfuse {

namespace csv_detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Splits one CSV line; double quotes protect commas and `""` escapes a quote.
inline std::vector<std::string> split_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? cur : std::string(trim(cur)));
      cur.clear();
      was_quoted = false;
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw DataError("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(was_quoted ? cur : std::string(trim(cur)));
  return fields;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Shortest representation that reads back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline bool getline_no(std::istream& in, std::string& line, std::size_t& line_no) {
  if (!std::getline(in, line)) return false;
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace csv_detail

struct CsvReadOptions {
  std::string missing_token = "?";
  /// Fixes categorical M with these levels (first is the reference).
  std::optional<std::vector<std::string>> m_levels;
  std::optional<MKind> m_kind;
  std::optional<YKind> y_kind;
};

/// Parses the native CSV format. Syntax problems throw DataError naming the
/// line; record-level rule violations are left for validate().
inline PooledDataset read_csv(std::istream& in, const CsvReadOptions& options = {}) {
  using namespace csv_detail;
  std::string line;
  std::size_t line_no = 0;
  if (!getline_no(in, line, line_no)) throw DataError("empty CSV input");
  const auto header = split_line(line, line_no);

  std::optional<std::size_t> col_domain, col_r, col_m, col_y;
  std::vector<std::size_t> col_x;
  PooledDataset ds;
  ds.schema.missing_token = options.missing_token;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& name = header[c];
    if (name == "domain") col_domain = c;
    else if (name == "r") col_r = c;
    else if (name == "m") col_m = c;
    else if (name == "y") col_y = c;
    else {
      if (name.empty()) throw DataError("line 1: empty column name");
      col_x.push_back(c);
      ds.schema.covariate_names.push_back(name);
    }
  }
  if (!col_domain) throw DataError("line 1: required column 'domain' missing");
  if (!col_r) throw DataError("line 1: required column 'r' missing");
  if (!col_m) throw DataError("line 1: required column 'm' missing");

  auto is_missing = [&](const std::string& f) { return f.empty() || f == options.missing_token; };

  std::vector<std::optional<std::string>> raw_m;
  std::vector<std::size_t> row_lines;
  while (getline_no(in, line, line_no)) {
    if (trim(line).empty()) continue;
    const auto fields = split_line(line, line_no);
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (fields.size() != header.size()) {
      throw DataError(where + "expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    UnitRecord rec;
    const auto& d = fields[*col_domain];
    if (d == "1") rec.g = Domain::Primary;
    else if (d == "2") rec.g = Domain::Auxiliary;
    else throw DataError(where + "domain must be 1 or 2, got '" + d + "'");
    const auto& r = fields[*col_r];
    if (r == "1") rec.r = true;
    else if (r == "0") rec.r = false;
    else throw DataError(where + "r must be 0 or 1, got '" + r + "'");
    for (std::size_t j = 0; j < col_x.size(); ++j) {
      const auto v = parse_double(fields[col_x[j]]);
      if (!v) {
        throw DataError(where + "covariate '" + header[col_x[j]] + "' is not a number: '" +
                        fields[col_x[j]] + "'");
      }
      rec.x.push_back(*v);
    }
    if (col_y && !is_missing(fields[*col_y])) {
      const auto v = parse_double(fields[*col_y]);
      if (!v) throw DataError(where + "y is not a number: '" + fields[*col_y] + "'");
      rec.y = *v;
    }
    const auto& mf = fields[*col_m];
    raw_m.push_back(is_missing(mf) ? std::nullopt : std::optional<std::string>(mf));
    row_lines.push_back(line_no);
    ds.records.push_back(std::move(rec));
  }

  // Resolve the kind of M.
  MKind kind = MKind::Numeric;
  if (options.m_levels) {
    kind = MKind::Categorical;
    ds.schema.m_levels = *options.m_levels;
  } else if (options.m_kind) {
    kind = *options.m_kind;
  } else {
    const bool all_numeric = std::all_of(raw_m.begin(), raw_m.end(), [](const auto& v) {
      return !v || parse_double(*v).has_value();
    });
    kind = all_numeric ? MKind::Numeric : MKind::Categorical;
  }
  ds.schema.m_kind = kind;
  if (kind == MKind::Categorical && !options.m_levels) {
    std::vector<std::string> levels;
    for (const auto& v : raw_m) {
      if (v) levels.push_back(*v);
    }
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    ds.schema.m_levels = std::move(levels);
  }
  for (std::size_t i = 0; i < raw_m.size(); ++i) {
    if (!raw_m[i]) continue;
    if (kind == MKind::Numeric) {
      const auto v = parse_double(*raw_m[i]);
      if (!v) {
        throw DataError("line " + std::to_string(row_lines[i]) + ": m is not a number: '" +
                        *raw_m[i] + "'");
      }
      ds.records[i].m = *v;
    } else {
      ds.records[i].m = *raw_m[i];
    }
  }

  if (options.y_kind) {
    ds.schema.y_kind = *options.y_kind;
  } else {
    const bool any_y = std::any_of(ds.records.begin(), ds.records.end(),
                                   [](const UnitRecord& r) { return r.y.has_value(); });
    const bool binary = std::all_of(ds.records.begin(), ds.records.end(), [](const UnitRecord& r) {
      return !r.y || *r.y == 0.0 || *r.y == 1.0;
    });
    ds.schema.y_kind = any_y && binary ? YKind::Binary : YKind::Numeric;
  }
  ds.schema.check();
  return ds;
}

inline void write_csv(std::ostream& out, const PooledDataset& ds) {
  using namespace csv_detail;
  const auto& tok = ds.schema.missing_token;
  out << "domain,r";
  for (const auto& name : ds.schema.covariate_names) out << ',' << quote_if_needed(name);
  out << ",m,y\n";
  for (const auto& rec : ds.records) {
    out << domain_code(rec.g) << ',' << (rec.r ? 1 : 0);
    for (double v : rec.x) out << ',' << format_double(v);
    out << ',';
    if (!rec.m) {
      out << tok;
    } else if (const auto* v = std::get_if<double>(&*rec.m)) {
      out << format_double(*v);
    } else {
      out << quote_if_needed(std::get<std::string>(*rec.m));
    }
    out << ',' << (rec.y ? format_double(*rec.y) : tok) << '\n';
  }
}

/// Column mapping for external extracts (e.g. case-surveillance tables)
/// that do not follow the native layout.
struct SchemaMap {
  std::string domain_column;
  std::string primary_value;
  std::string auxiliary_value;
  /// Empty: R is derived as "M observed".
  std::string r_column;
  std::string r_observed_value = "1";
  std::vector<std::string> x_columns;
  std::string m_column;
  std::vector<std::string> m_levels;  // empty: numeric M
  std::string y_column;
  YKind y_kind = YKind::Numeric;
  /// Binary Y given as labels, e.g. "No"/"Yes". Empty: parse as a number.
  std::string y_false_value;
  std::string y_true_value;
  std::vector<std::string> missing_tokens{"?", ""};
};

struct IngestSummary {
  std::size_t n_primary = 0;
  std::size_t n_auxiliary = 0;
  std::size_t dropped_rows = 0;  // domain value matched neither domain
  double primary_missing_rate = 0.0;
  double auxiliary_missing_rate = 0.0;
};

struct IngestResult {
  PooledDataset dataset;
  IngestSummary summary;
};

inline IngestResult ingest_external(std::istream& in, const SchemaMap& map) {
  using namespace csv_detail;
  std::string line;
  std::size_t line_no = 0;
  if (!getline_no(in, line, line_no)) throw DataError("empty CSV input");
  const auto header = split_line(line, line_no);
  auto column = [&](const std::string& key, const std::string& name) -> std::size_t {
    if (name.empty()) throw DataError("schema map: '" + key + "' is not set");
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError("schema map: column '" + name + "' (" + key + ") not found in header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto col_domain = column("domain_column", map.domain_column);
  const auto col_m = column("m_column", map.m_column);
  const auto col_y = column("y_column", map.y_column);
  std::optional<std::size_t> col_r;
  if (!map.r_column.empty()) col_r = column("r_column", map.r_column);
  if (map.x_columns.empty()) throw DataError("schema map: 'x_columns' is not set");
  std::vector<std::size_t> col_x;
  for (const auto& name : map.x_columns) col_x.push_back(column("x_columns", name));

  IngestResult result;
  auto& ds = result.dataset;
  ds.schema.covariate_names = map.x_columns;
  ds.schema.m_kind = map.m_levels.empty() ? MKind::Numeric : MKind::Categorical;
  ds.schema.m_levels = map.m_levels;
  ds.schema.y_kind = map.y_kind;
  ds.schema.missing_token = map.missing_tokens.empty() ? "?" : map.missing_tokens.front();
  ds.schema.check();

  auto is_missing = [&](const std::string& f) {
    return std::find(map.missing_tokens.begin(), map.missing_tokens.end(), f) !=
           map.missing_tokens.end();
  };

  while (getline_no(in, line, line_no)) {
    if (trim(line).empty()) continue;
    const auto fields = split_line(line, line_no);
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (fields.size() != header.size()) {
      throw DataError(where + "expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    UnitRecord rec;
    const auto& d = fields[col_domain];
    if (d == map.primary_value) rec.g = Domain::Primary;
    else if (d == map.auxiliary_value) rec.g = Domain::Auxiliary;
    else {
      ++result.summary.dropped_rows;
      continue;
    }
    for (std::size_t j = 0; j < col_x.size(); ++j) {
      const auto v = parse_double(fields[col_x[j]]);
      if (!v) throw DataError(where + "covariate '" + map.x_columns[j] + "' is not a number");
      rec.x.push_back(*v);
    }
    const auto& mf = fields[col_m];
    if (!is_missing(mf)) {
      if (ds.schema.m_kind == MKind::Categorical) {
        rec.m = mf;
      } else {
        const auto v = parse_double(mf);
        if (!v) throw DataError(where + "m is not a number: '" + mf + "'");
        rec.m = *v;
      }
    }
    const auto& yf = fields[col_y];
    if (!is_missing(yf)) {
      if (!map.y_true_value.empty() || !map.y_false_value.empty()) {
        if (yf == map.y_true_value) rec.y = 1.0;
        else if (yf == map.y_false_value) rec.y = 0.0;
        else throw DataError(where + "unrecognised outcome label '" + yf + "'");
      } else {
        const auto v = parse_double(yf);
        if (!v) throw DataError(where + "y is not a number: '" + yf + "'");
        rec.y = *v;
      }
    }
    rec.r = col_r ? fields[*col_r] == map.r_observed_value : rec.m.has_value();
    ds.records.push_back(std::move(rec));
  }

  const auto violations = validate(ds);
  if (!violations.empty()) {
    std::string msg = std::to_string(violations.size()) + " validation violation(s)";
    for (std::size_t i = 0; i < std::min<std::size_t>(violations.size(), 5); ++i) {
      msg += "; row " + std::to_string(violations[i].row) + ": " + violations[i].rule;
    }
    throw DataError(msg);
  }

  auto& s = result.summary;
  s.n_primary = ds.count(Domain::Primary);
  s.n_auxiliary = ds.count(Domain::Auxiliary);
  if (s.n_primary > 0) {
    s.primary_missing_rate =
        1.0 - static_cast<double>(ds.count_complete(Domain::Primary)) / static_cast<double>(s.n_primary);
  }
  if (s.n_auxiliary > 0) {
    s.auxiliary_missing_rate = 1.0 - static_cast<double>(ds.count_complete(Domain::Auxiliary)) /
                                         static_cast<double>(s.n_auxiliary);
  }
  return result;
}

}  // namespace mnarfuse
