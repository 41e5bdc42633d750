#pragma once

// Root finding / least squares for stacked sample estimating equations.
//
// Just-identified systems (k == p) use Newton's method; overdetermined ones
// (k > p) use Gauss-Newton on 0.5 * ||r||^2 with identity weighting. Both
// take forward-difference Jacobians and backtrack by halving until the
// residual norm decreases. Failed starts are retried from jittered copies of
// the initial point.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include "mnarfuse/error.hpp"
#include "mnarfuse/rng.hpp"

namespace mnarfuse {

struct SolverConfig {
  double tol = 1e-8;
  int max_iter = 100;
  int n_restarts = 5;
  double restart_scale = 0.5;
  int max_halvings = 40;
  double fd_step = 1e-6;
  /// Relative pivot threshold below which the Jacobian counts as singular.
  double singular_tol = 1e-12;
  std::uint64_t seed = 0;
};

enum class SolverStatus { Converged, MaxIter, Singular };

inline const char* to_string(SolverStatus s) noexcept {
  switch (s) {
    case SolverStatus::Converged: return "converged";
    case SolverStatus::MaxIter: return "max_iter";
    case SolverStatus::Singular: return "singular";
  }
  return "unknown";
}

struct SolverResult {
  Eigen::VectorXd theta_hat;
  SolverStatus status = SolverStatus::MaxIter;
  double final_residual_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int attempts = 0;
  std::string diagnostics;

  bool converged() const noexcept { return status == SolverStatus::Converged; }
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct MomentSystem {
  ResidualFn residual;
  Eigen::Index dim_theta = 0;
  Eigen::VectorXd init;
  SolverConfig config;
};

/// Thrown when a residual evaluates to NaN, or by estimators that cannot
/// proceed past a failed solve.
class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what, SolverResult result = {})
      : Error(what), result_(std::move(result)) {}
  const SolverResult& result() const noexcept { return result_; }

 private:
  SolverResult result_;
};

namespace solver_detail {

inline std::string format_theta(const Eigen::VectorXd& theta) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index i = 0; i < theta.size(); ++i) os << (i ? ", " : "") << theta[i];
  os << ')';
  return os.str();
}

inline bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace solver_detail

/// Forward-difference Jacobian with step h_j = step * (1 + |theta_j|).
inline Eigen::MatrixXd fd_jacobian(const ResidualFn& residual, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& r0, double step = 1e-6) {
  Eigen::MatrixXd jac(r0.size(), theta.size());
  Eigen::VectorXd probe = theta;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double h = step * (1.0 + std::abs(theta[j]));
    probe[j] = theta[j] + h;
    jac.col(j) = (residual(probe) - r0) / h;
    probe[j] = theta[j];
  }
  return jac;
}

namespace solver_detail {

struct Attempt {
  Eigen::VectorXd theta;
  SolverStatus status = SolverStatus::MaxIter;
  double norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::string note;
};

inline Attempt run_from(const MomentSystem& sys, Eigen::VectorXd theta) {
  const auto& cfg = sys.config;
  Attempt at;
  Eigen::VectorXd r = sys.residual(theta);
  const bool square = r.size() == sys.dim_theta;
  at.theta = theta;
  at.norm = r.norm();
  if (!all_finite(r)) {
    at.note = "non-finite residual at start";
    return at;
  }

  for (int it = 0; it < cfg.max_iter; ++it) {
    at.iterations = it;
    if (square && r.cwiseAbs().maxCoeff() < cfg.tol) {
      at.status = SolverStatus::Converged;
      return at;
    }
    const Eigen::MatrixXd jac = fd_jacobian(sys.residual, theta, r, cfg.fd_step);
    const Eigen::VectorXd grad = jac.transpose() * r;
    if (!square && grad.norm() < cfg.tol) {
      at.status = SolverStatus::Converged;
      return at;
    }
    if (!jac.allFinite()) {
      at.note = "non-finite Jacobian";
      return at;
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
    qr.setThreshold(cfg.singular_tol);
    if (qr.rank() < sys.dim_theta) {
      at.status = SolverStatus::Singular;
      at.note = "Jacobian rank " + std::to_string(qr.rank()) + " < " + std::to_string(sys.dim_theta) +
                " at theta=" + format_theta(theta);
      return at;
    }
    const Eigen::VectorXd step = qr.solve(-r);

    // Backtracking on the residual norm.
    const double norm0 = r.norm();
    bool accepted = false;
    double t = 1.0;
    for (int h = 0; h <= cfg.max_halvings; ++h, t *= 0.5) {
      Eigen::VectorXd trial = theta + t * step;
      Eigen::VectorXd rt = sys.residual(trial);
      if (all_finite(rt) && rt.norm() < norm0) {
        theta = std::move(trial);
        r = std::move(rt);
        accepted = true;
        break;
      }
    }
    at.theta = theta;
    at.norm = r.norm();
    if (!accepted) {
      // No descent possible: for least squares a negligible Gauss-Newton step
      // means the stationarity condition is met to working precision.
      if (!square && step.norm() <= cfg.tol * (1.0 + theta.norm())) {
        at.status = SolverStatus::Converged;
      } else {
        at.note = "line search failed at theta=" + format_theta(theta);
      }
      at.iterations = it + 1;
      return at;
    }
  }
  at.iterations = cfg.max_iter;
  if (square && r.cwiseAbs().maxCoeff() < cfg.tol) at.status = SolverStatus::Converged;
  return at;
}

}  // namespace solver_detail

inline SolverResult solve(const MomentSystem& sys) {
  using solver_detail::Attempt;
  const auto& cfg = sys.config;
  if (cfg.tol <= 0.0 || cfg.max_iter < 1) throw PreconditionError("solver needs tol > 0 and max_iter >= 1");
  if (sys.init.size() != sys.dim_theta) throw PreconditionError("initial point has wrong dimension");

  const Eigen::VectorXd r0 = sys.residual(sys.init);
  if (r0.size() < sys.dim_theta) throw PreconditionError("fewer moment conditions than parameters");
  if (r0.hasNaN()) {
    throw SolverError("residual is NaN at theta=" + solver_detail::format_theta(sys.init));
  }

  Attempt best;
  bool have_best = false;
  bool all_singular = true;
  SolverResult out;
  for (int a = 0; a <= cfg.n_restarts; ++a) {
    Eigen::VectorXd start = sys.init;
    if (a > 0) {
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(a)));
      for (Eigen::Index j = 0; j < start.size(); ++j) start[j] += rng.uniform(-cfg.restart_scale, cfg.restart_scale);
    }
    Attempt at = solver_detail::run_from(sys, start);
    out.attempts = a + 1;
    out.iterations += at.iterations;
    if (at.status != SolverStatus::Singular) all_singular = false;
    if (!at.note.empty()) {
      if (!out.diagnostics.empty()) out.diagnostics += "; ";
      out.diagnostics += "attempt " + std::to_string(a) + ": " + at.note;
    }
    const bool better = !have_best || (at.status == SolverStatus::Converged && best.status != SolverStatus::Converged) ||
                        (at.status == best.status && at.norm < best.norm) ||
                        (best.status == SolverStatus::Singular && at.status == SolverStatus::MaxIter);
    if (better) {
      best = std::move(at);
      have_best = true;
    }
    if (best.status == SolverStatus::Converged) break;
  }
  out.theta_hat = best.theta;
  out.final_residual_norm = best.norm;
  out.status = best.status == SolverStatus::Converged ? SolverStatus::Converged
               : all_singular                          ? SolverStatus::Singular
                                                       : SolverStatus::MaxIter;
  return out;
}

}  // namespace mnarfuse
