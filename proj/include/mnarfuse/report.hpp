#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mnarfuse/solver.hpp"

namespace mnarfuse {

struct NamedParameter {
  std::string name;
  double value = 0.0;
};

struct Diagnostics {
  std::size_t n_primary = 0;
  std::size_t n_auxiliary = 0;
  std::size_t n_primary_complete = 0;
  std::size_t n_auxiliary_complete = 0;
  std::size_t weight_cap_count = 0;
  double min_weight = std::nan("");
  double max_weight = std::nan("");
  std::vector<std::string> warnings;
};

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  double width = 0.0;
  double level = 0.95;
  std::string method = "percentile";
  std::size_t resamples = 0;
  std::size_t n_failed = 0;
  bool stratified = true;
  /// Percentile intervals can miss the point estimate in pathological cases.
  bool excludes_estimate = false;
};

struct EstimateReport {
  std::string estimator;
  double beta_hat = std::nan("");
  std::vector<NamedParameter> nuisance;
  std::optional<SolverResult> solver;
  Diagnostics diagnostics;
  std::optional<ConfidenceInterval> ci;
};

inline nlohmann::json to_json(const SolverResult& s) {
  nlohmann::json j;
  j["status"] = to_string(s.status);
  j["theta_hat"] = std::vector<double>(s.theta_hat.data(), s.theta_hat.data() + s.theta_hat.size());
  j["final_residual_norm"] = s.final_residual_norm;
  j["iterations"] = s.iterations;
  j["attempts"] = s.attempts;
  if (!s.diagnostics.empty()) j["diagnostics"] = s.diagnostics;
  return j;
}

inline nlohmann::json to_json(const EstimateReport& r) {
  auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["estimator"] = r.estimator;
  j["beta_hat"] = num(r.beta_hat);
  nlohmann::json nuis = nlohmann::json::object();
  for (const auto& p : r.nuisance) nuis[p.name] = num(p.value);
  j["nuisance"] = nuis;
  if (r.solver) j["solver"] = to_json(*r.solver);
  const auto& d = r.diagnostics;
  j["diagnostics"] = {
      {"n_primary", d.n_primary},
      {"n_auxiliary", d.n_auxiliary},
      {"n_primary_complete", d.n_primary_complete},
      {"n_auxiliary_complete", d.n_auxiliary_complete},
      {"weight_cap_count", d.weight_cap_count},
      {"min_weight", num(d.min_weight)},
      {"max_weight", num(d.max_weight)},
      {"warnings", d.warnings},
  };
  if (r.ci) {
    const auto& c = *r.ci;
    j["ci"] = {{"lo", c.lo},
               {"hi", c.hi},
               {"width", c.width},
               {"level", c.level},
               {"method", c.method},
               {"resamples", c.resamples},
               {"n_failed", c.n_failed},
               {"stratified", c.stratified},
               {"excludes_estimate", c.excludes_estimate}};
  }
  return j;
}

}  // namespace mnarfuse
