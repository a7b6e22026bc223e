#pragma once

// Traditional (sparse) PCA by sequential penalized rank-1 approximation.
//
// Each component minimizes ||R - u v'||_F^2 + 2 lambda ||v||_1 subject to
// ||u|| = 1 by alternating exact block updates, then deflates R. Reported
// loadings are v / ||v||; reported scores are always X * loading against the
// original exposure matrix, never against the residual.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "predpca/error.hpp"
#include "predpca/linalg.hpp"

namespace predpca {

enum class PcaMethod { traditional, predictive };

inline const char* to_string(PcaMethod m) {
  return m == PcaMethod::traditional ? "traditional" : "predictive";
}

/// Monitor exposures: `raw` as supplied (typically square-root annual means)
/// and `X`, its column-centered (optionally scaled) version used for PCA.
struct ExposureDataset {
  std::vector<std::string> ids;
  std::vector<Location> locations;
  std::vector<std::string> pollutant_names;
  Eigen::MatrixXd raw;
  Eigen::MatrixXd X;
  Eigen::VectorXd centering;
  Eigen::VectorXd scaling;
  bool scaled = false;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }

  static ExposureDataset make(std::vector<std::string> ids, std::vector<Location> locs,
                              std::vector<std::string> names, Eigen::MatrixXd raw,
                              bool scale = false) {
    if (static_cast<std::size_t>(raw.rows()) != locs.size())
      throw ValidationError("exposure rows do not match locations");
    if (!names.empty() && names.size() != static_cast<std::size_t>(raw.cols()))
      throw ValidationError("pollutant names do not match columns");
    if (!raw.allFinite()) throw ValidationError("non-finite exposure value");
    if (raw.rows() < 2) throw ValidationError("need at least two monitors");
    ExposureDataset d;
    d.ids = ids.empty() ? default_ids(raw.rows()) : std::move(ids);
    d.locations = std::move(locs);
    d.pollutant_names = names.empty() ? default_names(raw.cols()) : std::move(names);
    d.scaled = scale;
    d.centering = raw.colwise().mean().transpose();
    d.scaling = Eigen::VectorXd::Ones(raw.cols());
    if (scale)
      for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        d.scaling(j) = sample_sd(raw.col(j));
        if (!(d.scaling(j) > 0.0)) throw ValidationError("constant pollutant column");
      }
    d.raw = std::move(raw);
    d.X = d.standardize(d.raw);
    return d;
  }

  /// Applies this dataset's centering/scaling to other raw rows.
  Eigen::MatrixXd standardize(const Eigen::MatrixXd& other_raw) const {
    if (other_raw.cols() != centering.size()) throw ValidationError("dimension mismatch");
    return (other_raw.rowwise() - centering.transpose()).array().rowwise() /
           scaling.transpose().array();
  }

  /// Rows re-centered with their own statistics (a fresh training set).
  ExposureDataset subset(std::span<const std::size_t> rows) const {
    return make(take_rows(ids, rows), take_rows(locations, rows), pollutant_names,
                take_rows(raw, rows), scaled);
  }

  static std::vector<std::string> default_names(Eigen::Index p) {
    std::vector<std::string> out;
    for (Eigen::Index j = 0; j < p; ++j) out.push_back("P" + std::to_string(j + 1));
    return out;
  }
  static std::vector<std::string> default_ids(Eigen::Index n) {
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < n; ++i) out.push_back(std::to_string(i + 1));
    return out;
  }
};

struct Rank1Options {
  double tol = 1e-6;   // relative change of v
  int max_iter = 500;
};

struct Rank1Fit {
  Eigen::VectorXd u_tilde;  // unit n-vector
  Eigen::VectorXd v_tilde;  // unnormalized loading
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
};

struct PcComponent {
  Eigen::VectorXd loading;   // unit p-vector
  Eigen::VectorXd score;     // X * loading
  Eigen::VectorXd u_tilde;   // deflation factor (fitted_u for predictive fits)
  double v_norm = 0.0;       // ||v_tilde||
  double lambda = 0.0;
  std::optional<Eigen::VectorXd> alpha;  // predictive only
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;

  double sparsity() const {
    return static_cast<double>((loading.array() == 0.0).count()) /
           static_cast<double>(loading.size());
  }
};

struct PcModel {
  PcaMethod method = PcaMethod::traditional;
  std::vector<PcComponent> components;
  std::vector<std::string> pollutant_names;
  Eigen::VectorXd centering;
  Eigen::VectorXd scaling;
  std::vector<std::string> basis_columns;  // predictive only

  int k() const { return static_cast<int>(components.size()); }

  Eigen::MatrixXd loadings() const {
    if (components.empty()) return {};
    Eigen::MatrixXd v(components.front().loading.size(), k());
    for (int l = 0; l < k(); ++l) v.col(l) = components[l].loading;
    return v;
  }

  Eigen::MatrixXd scores() const {
    if (components.empty()) return {};
    Eigen::MatrixXd u(components.front().score.size(), k());
    for (int l = 0; l < k(); ++l) u.col(l) = components[l].score;
    return u;
  }

  /// Fraction of exact zeros across all retained loadings.
  double sparseness() const {
    const Eigen::MatrixXd v = loadings();
    return v.size() ? static_cast<double>((v.array() == 0.0).count()) / static_cast<double>(v.size())
                    : 0.0;
  }
};

inline double soft_threshold(double y, double lambda) {
  const double mag = std::abs(y) - lambda;
  if (mag <= 0.0) return 0.0;
  return y > 0.0 ? mag : -mag;
}

inline Eigen::VectorXd soft_threshold(const Eigen::VectorXd& y, double lambda) {
  Eigen::VectorXd out(y.size());
  for (Eigen::Index j = 0; j < y.size(); ++j) out(j) = soft_threshold(y(j), lambda);
  return out;
}

/// ||R - u v'||_F^2 + 2 lambda ||v||_1 for unit u, given ||R||_F^2.
inline double rank1_objective(double r_sq, const Eigen::MatrixXd& R, const Eigen::VectorXd& u,
                              const Eigen::VectorXd& v, double lambda) {
  return r_sq - 2.0 * u.dot(R * v) + v.squaredNorm() + 2.0 * lambda * v.lpNorm<1>();
}

/// Largest penalty that leaves a nonzero loading given a unit left factor u.
inline double lambda_ceiling(const Eigen::MatrixXd& R, const Eigen::VectorXd& u) {
  return (R.transpose() * u).cwiseAbs().maxCoeff();
}

namespace detail {

inline bool relative_change_below(const Eigen::VectorXd& prev, const Eigen::VectorXd& next,
                                  double tol) {
  const double scale = prev.norm();
  return (next - prev).norm() <= tol * (scale > 0.0 ? scale : 1.0);
}

inline void require_penalty(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("penalty must be >= 0");
}

}  // namespace detail

/// Penalized rank-1 approximation with an unconstrained unit left factor.
inline Rank1Fit rank1_sparse(const Eigen::MatrixXd& R, double lambda, const Eigen::VectorXd& init,
                             const Rank1Options& opt = {}) {
  detail::require_penalty(lambda);
  if (init.size() != R.cols()) throw ValidationError("dimension mismatch");
  const double r_sq = R.squaredNorm();
  if (!(r_sq > 0.0)) throw NumericalError("zero residual matrix");

  Rank1Fit fit;
  Eigen::VectorXd v = init;
  for (int it = 1; it <= opt.max_iter; ++it) {
    Eigen::VectorXd u = R * v;
    const double un = u.norm();
    if (!(un > 0.0)) throw NumericalError("zero residual matrix");
    u /= un;
    Eigen::VectorXd v_next = soft_threshold(Eigen::VectorXd(R.transpose() * u), lambda);
    if (v_next.isZero(0.0)) throw FullyThresholdedError();
    fit.objective_trace.push_back(rank1_objective(r_sq, R, u, v_next, lambda));
    const bool done = it > 1 && detail::relative_change_below(v, v_next, opt.tol);
    fit.u_tilde = std::move(u);
    v = std::move(v_next);
    fit.iterations = it;
    if (done) {
      fit.converged = true;
      break;
    }
  }
  fit.v_tilde = std::move(v);
  return fit;
}

namespace detail {

inline void check_fit_args(const Eigen::MatrixXd& X, int k, std::span<const double> lambdas) {
  if (k < 1 || k > std::min(X.rows(), X.cols()))
    throw ValidationError("component count must lie in [1, min(n, p)]");
  if (lambdas.size() != static_cast<std::size_t>(k))
    throw ValidationError("need one penalty per component");
  for (double l : lambdas) require_penalty(l);
}

/// Normalizes a rank-1 fit into a reported component with the sign convention
/// applied (largest-magnitude loading entry positive).
inline PcComponent finish_component(const Eigen::MatrixXd& X, Eigen::VectorXd u_tilde,
                                    Eigen::VectorXd v_tilde, double lambda) {
  PcComponent c;
  const double s = orientation_sign(v_tilde);
  c.v_norm = v_tilde.norm();
  c.loading = (s / c.v_norm) * v_tilde;
  c.u_tilde = s * u_tilde;
  c.score = X * c.loading;
  c.lambda = lambda;
  return c;
}

}  // namespace detail

/// Sequential traditional (sparse) PCA on a centered matrix.
inline PcModel fit_traditional(const Eigen::MatrixXd& X, int k, std::span<const double> lambdas,
                               const Rank1Options& opt = {}) {
  detail::check_fit_args(X, k, lambdas);
  PcModel model;
  model.method = PcaMethod::traditional;
  Eigen::MatrixXd R = X;
  for (int l = 0; l < k; ++l) {
    const Eigen::VectorXd init = leading_right_singular_vector(R);
    Rank1Fit fit;
    try {
      fit = rank1_sparse(R, lambdas[l], init, opt);
    } catch (const FullyThresholdedError&) {
      throw FullyThresholdedError(l + 1);
    }
    R -= fit.u_tilde * fit.v_tilde.transpose();
    PcComponent c = detail::finish_component(X, fit.u_tilde, fit.v_tilde, lambdas[l]);
    c.objective_trace = std::move(fit.objective_trace);
    c.iterations = fit.iterations;
    c.converged = fit.converged;
    model.components.push_back(std::move(c));
  }
  return model;
}

inline PcModel fit_traditional(const ExposureDataset& data, int k, std::span<const double> lambdas,
                               const Rank1Options& opt = {}) {
  PcModel model = fit_traditional(data.X, k, lambdas, opt);
  model.pollutant_names = data.pollutant_names;
  model.centering = data.centering;
  model.scaling = data.scaling;
  return model;
}

/// Scores of already-standardized rows: column l is X_new * v_l.
inline Eigen::MatrixXd project_scores(const Eigen::MatrixXd& X_new, const PcModel& model) {
  if (model.k() == 0) return Eigen::MatrixXd(X_new.rows(), 0);
  const Eigen::MatrixXd V = model.loadings();
  if (X_new.cols() != V.rows()) throw ValidationError("dimension mismatch");
  return X_new * V;
}

}  // namespace predpca
