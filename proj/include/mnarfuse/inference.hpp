#pragma once

// Percentile bootstrap and Monte Carlo replication. Work items (resamples,
// replicates) get seeds derived from (master seed, item index) and results
// are stored by index, so output does not depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mnarfuse/baselines.hpp"
#include "mnarfuse/csv.hpp"
#include "mnarfuse/data.hpp"
#include "mnarfuse/error.hpp"
#include "mnarfuse/model1.hpp"
#include "mnarfuse/model2.hpp"
#include "mnarfuse/numeric.hpp"
#include "mnarfuse/report.hpp"
#include "mnarfuse/rng.hpp"
#include "mnarfuse/simulation.hpp"

namespace mnarfuse {

struct NamedEstimator {
  std::string name;
  std::function<EstimateReport(const PooledDataset&)> run;
};

/// "ipw_model1", "ipw_model2", "plugin_model1", "mar" or "mcar" with default
/// working models for the dataset's schema.
inline NamedEstimator standard_estimator(const std::string& name, const EstimatorConfig& cfg = {}) {
  if (name == "ipw_model1") {
    return {name, [cfg](const PooledDataset& d) { return estimate_model1(d, Model1Spec::defaults(d.schema), cfg); }};
  }
  if (name == "ipw_model2") {
    return {name, [cfg](const PooledDataset& d) { return estimate_model2(d, Model2Spec::defaults(d.schema), cfg); }};
  }
  if (name == "plugin_model1") {
    return {name, [](const PooledDataset& d) {
              EstimateReport r;
              r.estimator = "plugin_model1";
              r.beta_hat = identify_beta_model1_plugin(d, PluginSpec::defaults(d.schema));
              return r;
            }};
  }
  if (name == "mar") return {name, [](const PooledDataset& d) { return mar_estimate(d); }};
  if (name == "mcar") return {name, [](const PooledDataset& d) { return mcar_estimate(d); }};
  throw PreconditionError("unknown estimator '" + name + "'");
}

namespace inference_detail {

/// Calls job(i) for i in [0, count) on `workers` threads.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mu;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace inference_detail

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapConfig {
  std::size_t k = 1000;
  bool stratified_by_domain = true;
  double ci_level = 0.95;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  double max_failed_fraction = 0.20;
};

struct BootstrapResult {
  double estimate = 0.0;
  ConfidenceInterval ci;
  std::vector<double> replicates;  // successful resample estimates, resample order

  double standard_error() const {
    RunningMoments mom;
    for (double v : replicates) mom.add(v);
    return std::sqrt(mom.variance());
  }
};

class BootstrapError : public Error {
 public:
  using Error::Error;
};

/// Resample `b` of the bootstrap: with replacement, within each domain when
/// stratified so that domain sizes are preserved.
inline PooledDataset bootstrap_resample(const PooledDataset& ds, std::uint64_t seed, bool stratified) {
  Rng rng(seed);
  PooledDataset out;
  out.schema = ds.schema;
  out.records.reserve(ds.size());
  if (stratified) {
    const auto split = split_by_domain(ds);
    for (const auto* idx : {&split.primary, &split.auxiliary}) {
      for (std::size_t i = 0; i < idx->size(); ++i) out.records.push_back(ds.records[(*idx)[rng.below(idx->size())]]);
    }
  } else {
    for (std::size_t i = 0; i < ds.size(); ++i) out.records.push_back(ds.records[rng.below(ds.size())]);
  }
  return out;
}

inline BootstrapResult bootstrap_ci(const PooledDataset& ds, const NamedEstimator& est, const BootstrapConfig& cfg) {
  if (cfg.k < 2) throw PreconditionError("bootstrap needs k >= 2");
  if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0)) throw PreconditionError("ci_level must lie in (0, 1)");
  BootstrapResult res;
  res.estimate = est.run(ds).beta_hat;

  std::vector<double> values(cfg.k, std::nan(""));
  std::vector<char> ok(cfg.k, 0);
  inference_detail::parallel_for(cfg.k, cfg.workers, [&](std::size_t b) {
    const auto sample = bootstrap_resample(ds, derive_seed(cfg.seed, b), cfg.stratified_by_domain);
    try {
      values[b] = est.run(sample).beta_hat;
      ok[b] = std::isfinite(values[b]) ? 1 : 0;
    } catch (const Error&) {
      ok[b] = 0;
    }
  });
  for (std::size_t b = 0; b < cfg.k; ++b) {
    if (ok[b]) res.replicates.push_back(values[b]);
  }
  const std::size_t failed = cfg.k - res.replicates.size();
  if (static_cast<double>(failed) > cfg.max_failed_fraction * static_cast<double>(cfg.k) || res.replicates.size() < 2) {
    throw BootstrapError(std::to_string(failed) + " of " + std::to_string(cfg.k) +
                         " bootstrap resamples failed; the interval would be unreliable");
  }
  std::vector<double> sorted = res.replicates;
  std::sort(sorted.begin(), sorted.end());
  const double tail = 0.5 * (1.0 - cfg.ci_level);
  auto& ci = res.ci;
  ci.lo = quantile_sorted(sorted, tail);
  ci.hi = quantile_sorted(sorted, 1.0 - tail);
  ci.width = ci.hi - ci.lo;
  ci.level = cfg.ci_level;
  ci.method = "percentile";
  ci.resamples = cfg.k;
  ci.n_failed = failed;
  ci.stratified = cfg.stratified_by_domain;
  ci.excludes_estimate = res.estimate < ci.lo || res.estimate > ci.hi;
  return res;
}

// ---------------------------------------------------------------------------
// Replication

struct ReplicationDesign {
  std::string name;     // e.g. "model1"
  std::string setting;  // e.g. "T"
  double beta_true = 0.0;
  std::function<PooledDataset(std::size_t n, std::uint64_t seed)> generate;
};

inline ReplicationDesign replication_design(const Model1Design& d) {
  return {"model1", to_string(d.setting), true_beta(d).value, [d](std::size_t n, std::uint64_t seed) {
            auto dd = d;
            dd.n = n;
            return generate_model1(dd, seed).dataset;
          }};
}

inline ReplicationDesign replication_design(const Model2Design& d) {
  return {"model2", to_string(d.setting), true_beta(d).value, [d](std::size_t n, std::uint64_t seed) {
            auto dd = d;
            dd.n = n;
            return generate_model2(dd, seed).dataset;
          }};
}

struct ReplicationConfig {
  std::vector<std::size_t> n_values{500, 1000, 2000};
  std::size_t n_reps = 1000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct ReplicationRow {
  std::string design;
  std::string setting;
  std::string estimator;
  std::size_t n = 0;
  std::size_t replicates = 0;  // successful
  std::size_t failed = 0;
  double beta_true = 0.0;
  double mean_estimate = std::nan("");
  double bias = std::nan("");
  double pct_bias = std::nan("");  // bias / beta_true
  double mse = std::nan("");       // mean((estimate - beta_true)^2)
  double variance = std::nan("");  // unbiased, across replicates
};

struct ReplicateEstimate {
  std::string design, setting, estimator;
  std::size_t n = 0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  double beta_hat = std::nan("");
  std::string status;  // "ok" or the error message
};

struct ReplicationReport {
  std::vector<ReplicationRow> rows;
  std::vector<ReplicateEstimate> estimates;  // long format
};

/// Seed of replicate r at sample size n; every estimator sees the same data.
inline std::uint64_t replicate_seed(std::uint64_t master, std::size_t n, std::size_t r) {
  return derive_seed(derive_seed(master, n), r);
}

inline ReplicationReport replicate(const ReplicationDesign& design, const std::vector<NamedEstimator>& estimators,
                                   const ReplicationConfig& cfg) {
  ReplicationReport rep;
  if (cfg.n_reps == 0) return rep;
  for (std::size_t n : cfg.n_values) {
    if (n < 1) throw PreconditionError("sample sizes must be positive");
    const std::size_t ne = estimators.size();
    std::vector<ReplicateEstimate> cell(cfg.n_reps * ne);
    inference_detail::parallel_for(cfg.n_reps, cfg.workers, [&](std::size_t r) {
      const auto seed = replicate_seed(cfg.seed, n, r);
      const auto data = design.generate(n, seed);
      for (std::size_t e = 0; e < ne; ++e) {
        auto& out = cell[r * ne + e];
        out = {design.name, design.setting, estimators[e].name, n, r, seed, std::nan(""), "ok"};
        try {
          out.beta_hat = estimators[e].run(data).beta_hat;
        } catch (const Error& err) {
          out.status = err.what();
        }
      }
    });
    for (std::size_t e = 0; e < ne; ++e) {
      ReplicationRow row;
      row.design = design.name;
      row.setting = design.setting;
      row.estimator = estimators[e].name;
      row.n = n;
      row.beta_true = design.beta_true;
      RunningMoments mom;
      CompensatedSum sq;
      for (std::size_t r = 0; r < cfg.n_reps; ++r) {
        const auto& c = cell[r * ne + e];
        if (c.status != "ok") {
          ++row.failed;
          continue;
        }
        mom.add(c.beta_hat);
        sq += (c.beta_hat - design.beta_true) * (c.beta_hat - design.beta_true);
      }
      row.replicates = mom.count();
      if (row.replicates > 0) {
        row.mean_estimate = mom.mean();
        row.bias = mom.mean() - design.beta_true;
        row.pct_bias = row.bias / design.beta_true;
        row.mse = sq.value() / static_cast<double>(row.replicates);
        row.variance = row.replicates > 1 ? mom.variance() : std::nan("");
      }
      rep.rows.push_back(row);
    }
    rep.estimates.insert(rep.estimates.end(), cell.begin(), cell.end());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Emitters

namespace inference_detail {

inline std::string num(double v) { return std::isfinite(v) ? csv_detail::format_double(v) : ""; }

inline std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace inference_detail

inline void write_replication_csv(std::ostream& out, const ReplicationReport& rep) {
  using inference_detail::num;
  out << "design,setting,estimator,n,replicates,failed,beta_true,mean_estimate,bias,pct_bias,mse,variance\n";
  for (const auto& r : rep.rows) {
    out << r.design << ',' << r.setting << ',' << r.estimator << ',' << r.n << ',' << r.replicates << ',' << r.failed
        << ',' << num(r.beta_true) << ',' << num(r.mean_estimate) << ',' << num(r.bias) << ',' << num(r.pct_bias)
        << ',' << num(r.mse) << ',' << num(r.variance) << '\n';
  }
}

/// One row per (replicate, estimator), for external plotting.
inline void write_long_csv(std::ostream& out, const ReplicationReport& rep) {
  using inference_detail::num;
  out << "design,setting,estimator,n,replicate,seed,beta_hat,status\n";
  for (const auto& e : rep.estimates) {
    out << e.design << ',' << e.setting << ',' << e.estimator << ',' << e.n << ',' << e.replicate << ',' << e.seed << ','
        << num(e.beta_hat) << ',' << csv_detail::quote_if_needed(e.status) << '\n';
  }
}

inline void write_replication_text(std::ostream& out, const ReplicationReport& rep) {
  using inference_detail::fixed;
  const std::vector<std::string> head{"design", "setting", "estimator", "n", "reps", "failed", "bias", "%bias", "MSE", "Var"};
  std::vector<std::vector<std::string>> cells{head};
  for (const auto& r : rep.rows) {
    cells.push_back({r.design, r.setting, r.estimator, std::to_string(r.n), std::to_string(r.replicates),
                     std::to_string(r.failed), fixed(r.bias, 4), fixed(r.pct_bias, 4), fixed(r.mse, 5),
                     fixed(r.variance, 5)});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  }
  for (const auto& row : cells) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << "  ";
      if (j < 3) out << std::left << std::setw(static_cast<int>(width[j])) << row[j];
      else out << std::right << std::setw(static_cast<int>(width[j])) << row[j];
    }
    out << '\n';
  }
  out << std::left;
}

}  // namespace mnarfuse
