#pragma once

// Universal kriging with an exponential covariance
//   Sigma_ij = psi * 1[i == j] + kappa * exp(-||s_i - s_j|| / phi)
// fitted by maximum likelihood, with the mean coefficients profiled out by
// generalized least squares.
//
// The likelihood is optimized over theta = (log tau, log phi) with
// tau = psi / kappa; kappa has a closed-form profile maximiser, so the ML
// estimate of (psi, kappa, phi) is the same as a direct three-parameter search.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "predpca/error.hpp"
#include "predpca/linalg.hpp"
#include "predpca/nelder_mead.hpp"

namespace predpca {

struct CovParams {
  double psi = 0.0;    // nugget
  double kappa = 1.0;  // partial sill
  double phi = 1.0;    // range, km

  void validate() const {
    if (!(std::isfinite(psi) && std::isfinite(kappa) && std::isfinite(phi)))
      throw ValidationError("covariance parameters must be finite");
    if (psi < 0.0 || !(kappa > 0.0) || !(phi > 0.0))
      throw ValidationError("covariance parameters need psi >= 0, kappa > 0, phi > 0");
  }
};

/// Kriging mean design: intercept plus GIS scores. Spline columns never enter
/// here; they belong to CovariateBasis only.
class UkDesign {
 public:
  UkDesign() = default;
  explicit UkDesign(Eigen::MatrixXd z, std::vector<std::string> names = {})
      : z_(std::move(z)), names_(std::move(names)) {
    if (names_.empty())
      for (Eigen::Index c = 0; c < z_.cols(); ++c) names_.push_back("z" + std::to_string(c + 1));
    if (names_.size() != static_cast<std::size_t>(z_.cols()))
      throw ValidationError("design column names do not match columns");
  }

  static UkDesign intercept_plus(const Eigen::MatrixXd& gis) {
    Eigen::MatrixXd z(gis.rows(), gis.cols() + 1);
    z.col(0).setOnes();
    z.rightCols(gis.cols()) = gis;
    std::vector<std::string> names{"intercept"};
    for (Eigen::Index c = 0; c < gis.cols(); ++c) names.push_back("gis_" + std::to_string(c + 1));
    return UkDesign(std::move(z), std::move(names));
  }

  static UkDesign intercept_only(Eigen::Index n) {
    return UkDesign(Eigen::MatrixXd::Ones(n, 1), {"intercept"});
  }

  const Eigen::MatrixXd& matrix() const { return z_; }
  const std::vector<std::string>& column_names() const { return names_; }
  Eigen::Index rows() const { return z_.rows(); }
  Eigen::Index cols() const { return z_.cols(); }

  UkDesign subset(std::span<const std::size_t> rows) const { return UkDesign(take_rows(z_, rows), names_); }

 private:
  Eigen::MatrixXd z_;
  std::vector<std::string> names_;
};

/// Covariance among one set of locations; the nugget sits on the diagonal.
inline Eigen::MatrixXd exp_cov(std::span<const Location> locs, const CovParams& cov) {
  Eigen::MatrixXd s = cov.kappa * (-distance_matrix(locs, locs).array() / cov.phi).exp();
  s.diagonal().array() += cov.psi;
  return s;
}

/// Cross-covariance between two distinct sets; never carries the nugget.
inline Eigen::MatrixXd exp_cov(std::span<const Location> a, std::span<const Location> b,
                               const CovParams& cov) {
  return cov.kappa * (-distance_matrix(a, b).array() / cov.phi).exp();
}

struct FitUkOptions {
  int starts = 5;                     // deterministic multi-starts
  std::vector<CovParams> warm_starts; // tried in addition to `starts`
  double tau_min = 1e-6, tau_max = 1e4;
  double phi_min = 1e-3, phi_max = 1e5;
  bool reml = false;
  NelderMeadOptions nm{.max_evals = 300, .ftol = 1e-9, .xtol = 1e-3, .initial_step = 1.0, .fabs_tol = 1e-6};
};

struct KrigingModel {
  Eigen::VectorXd alpha;
  CovParams cov;
  std::vector<Location> train_locs;
  Eigen::VectorXd train_values;
  UkDesign train_Z;
  double log_likelihood = 0.0;
  bool converged = true;
  double jitter = 0.0;
  std::vector<std::string> warnings;

  Eigen::LLT<Eigen::MatrixXd> chol;  // of Sigma_11 (+ jitter)
  Eigen::VectorXd weights;           // Sigma_11^-1 (u - Z alpha)
};

struct KrigingPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // empty when not requested
};

namespace detail {

/// `extra`: locations required beyond the mean columns (3 when the
/// covariance parameters are estimated, 1 when they are fixed).
inline void check_uk_inputs(const Eigen::VectorXd& values, const UkDesign& Z,
                            std::span<const Location> locs, Eigen::Index extra = 3) {
  const auto n = values.size();
  if (Z.rows() != n || static_cast<Eigen::Index>(locs.size()) != n)
    throw ValidationError("dimension mismatch");
  if (n < Z.cols() + extra) throw ValidationError("too few locations for the kriging mean model");
  if (!values.allFinite() || !Z.matrix().allFinite()) throw ValidationError("non-finite kriging input");
}

struct GlsFit {
  bool ok = false;
  Eigen::VectorXd alpha;
  double quad = 0.0;       // r' V^-1 r
  double logdet_v = 0.0;
  double logdet_gram = 0.0;
};

/// GLS given a correlation-scale matrix V (already including tau on the
/// diagonal). Only the lower triangle of V is read; it is factored in place.
inline GlsFit gls(Eigen::MatrixXd V, const Eigen::VectorXd& y, const Eigen::MatrixXd& Z) {
  GlsFit out;
  Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(V);
  if (llt.info() != Eigen::Success) return out;
  const auto L = llt.matrixL();
  const Eigen::VectorXd ly = L.solve(y);
  const Eigen::MatrixXd lz = L.solve(Z);
  const Eigen::MatrixXd gram = lz.transpose() * lz;
  Eigen::LDLT<Eigen::MatrixXd> g(gram);
  if (g.info() != Eigen::Success || !(g.vectorD().minCoeff() > 0.0)) return out;
  out.alpha = g.solve(lz.transpose() * ly);
  out.quad = (ly - lz * out.alpha).squaredNorm();
  out.logdet_v = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  out.logdet_gram = g.vectorD().array().log().sum();
  out.ok = std::isfinite(out.quad) && std::isfinite(out.logdet_v);
  return out;
}

struct ProfilePoint {
  bool ok = false;
  double loglik = -std::numeric_limits<double>::infinity();
  double kappa = 0.0;
};

inline ProfilePoint profile_loglik(const Eigen::MatrixXd& D, const Eigen::VectorXd& y,
                                   const Eigen::MatrixXd& Z, double tau, double phi, bool reml) {
  const Eigen::Index n_loc = D.rows();
  Eigen::MatrixXd V(n_loc, n_loc);
  for (Eigen::Index j = 0; j < n_loc; ++j) {
    V.col(j).tail(n_loc - j) = (D.col(j).tail(n_loc - j).array() * (-1.0 / phi)).exp();
    V(j, j) += tau;
  }
  const GlsFit g = gls(std::move(V), y, Z);
  ProfilePoint p;
  if (!g.ok || !(g.quad > 0.0)) return p;
  const double n = static_cast<double>(y.size());
  const double two_pi = 2.0 * std::numbers::pi;
  if (reml) {
    const double dof = n - static_cast<double>(Z.cols());
    p.kappa = g.quad / dof;
    p.loglik = -0.5 * (dof * std::log(two_pi * p.kappa) + g.logdet_v + g.logdet_gram + dof);
  } else {
    p.kappa = g.quad / n;
    p.loglik = -0.5 * (n * std::log(two_pi * p.kappa) + g.logdet_v + n);
  }
  p.ok = std::isfinite(p.loglik);
  return p;
}

inline double median_nearest_neighbour(const Eigen::MatrixXd& D) {
  std::vector<double> nn;
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < D.cols(); ++j)
      if (j != i) best = std::min(best, D(i, j));
    nn.push_back(best);
  }
  std::nth_element(nn.begin(), nn.begin() + static_cast<std::ptrdiff_t>(nn.size() / 2), nn.end());
  return nn[nn.size() / 2];
}

}  // namespace detail

/// Gaussian log-likelihood of `values` at fixed covariance parameters with the
/// mean coefficients at their GLS estimate.
inline double uk_log_likelihood(const Eigen::VectorXd& values, const UkDesign& Z,
                                std::span<const Location> locs, const CovParams& cov) {
  cov.validate();
  detail::check_uk_inputs(values, Z, locs, 1);
  const detail::GlsFit g = detail::gls(exp_cov(locs, cov), values, Z.matrix());
  if (!g.ok) throw NumericalError("covariance matrix not positive definite");
  const double n = static_cast<double>(values.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + g.logdet_v + g.quad);
}

/// Log-likelihood of the non-spatial (OLS) mean model.
inline double ols_log_likelihood(const Eigen::VectorXd& values, const UkDesign& Z) {
  const Eigen::VectorXd beta = Z.matrix().colPivHouseholderQr().solve(values);
  const double n = static_cast<double>(values.size());
  const double rss = (values - Z.matrix() * beta).squaredNorm();
  return -0.5 * (n * std::log(2.0 * std::numbers::pi * rss / n) + n);
}

/// Kriging model at fixed covariance parameters (GLS mean, cached factor).
inline KrigingModel fit_uk_with_params(const Eigen::VectorXd& values, const UkDesign& Z,
                                       std::span<const Location> locs, const CovParams& cov) {
  cov.validate();
  detail::check_uk_inputs(values, Z, locs, 1);
  KrigingModel m;
  m.cov = cov;
  m.train_locs.assign(locs.begin(), locs.end());
  m.train_values = values;
  m.train_Z = Z;

  Eigen::MatrixXd sigma = exp_cov(locs, cov);
  m.chol.compute(sigma);
  if (m.chol.info() != Eigen::Success) {
    m.jitter = 1e-8 * cov.kappa;
    sigma.diagonal().array() += m.jitter;
    m.chol.compute(sigma);
    m.warnings.push_back("near-singular covariance: jitter added");
    if (m.chol.info() != Eigen::Success) throw NumericalError("covariance matrix not positive definite");
  }
  const detail::GlsFit g = detail::gls(sigma, values, Z.matrix());
  if (!g.ok) throw NumericalError("singular GLS system: mean design is collinear");
  m.alpha = g.alpha;
  m.weights = m.chol.solve(values - Z.matrix() * m.alpha);
  const double n = static_cast<double>(values.size());
  m.log_likelihood = -0.5 * (n * std::log(2.0 * std::numbers::pi) + g.logdet_v + g.quad);
  return m;
}

/// Maximum-likelihood universal kriging fit.
inline KrigingModel fit_uk(const Eigen::VectorXd& values, const UkDesign& Z,
                           std::span<const Location> locs, const FitUkOptions& opt = {}) {
  detail::check_uk_inputs(values, Z, locs);
  require_distinct(locs);
  const Eigen::MatrixXd D = distance_matrix(locs, locs);

  const double lt_lo = std::log(opt.tau_min), lt_hi = std::log(opt.tau_max);
  const double lp_lo = std::log(opt.phi_min), lp_hi = std::log(opt.phi_max);
  const auto objective = [&](const Eigen::VectorXd& theta) {
    if (theta(0) < lt_lo || theta(0) > lt_hi || theta(1) < lp_lo || theta(1) > lp_hi)
      return std::numeric_limits<double>::infinity();
    const auto p = detail::profile_loglik(D, values, Z.matrix(), std::exp(theta(0)),
                                          std::exp(theta(1)), opt.reml);
    return p.ok ? -p.loglik : std::numeric_limits<double>::infinity();
  };

  std::vector<Eigen::VectorXd> starts;
  const auto clamp_theta = [&](double tau, double phi) {
    Eigen::VectorXd t(2);
    t << std::clamp(std::log(tau), lt_lo, lt_hi), std::clamp(std::log(phi), lp_lo, lp_hi);
    return t;
  };
  for (const CovParams& w : opt.warm_starts) starts.push_back(clamp_theta(w.psi / w.kappa, w.phi));
  if (opt.starts > 0) {
    const double d_lo = std::max(detail::median_nearest_neighbour(D), opt.phi_min);
    const double d_hi = std::max(D.maxCoeff(), d_lo);
    const double taus[] = {0.1, 0.5, 0.1, 0.5, 0.1};
    for (int s = 0; s < opt.starts; ++s) {
      const double frac = opt.starts == 1 ? 0.5 : static_cast<double>(s) / (opt.starts - 1);
      const double phi = std::exp(std::log(d_lo) + frac * (std::log(d_hi) - std::log(d_lo)));
      starts.push_back(clamp_theta(taus[s % 5], phi));
    }
  }
  if (starts.empty()) throw ValidationError("kriging fit needs at least one start");

  NelderMeadResult best;
  bool any_converged = false;
  for (const auto& s : starts) {
    NelderMeadResult r = nelder_mead(objective, s, opt.nm);
    any_converged = any_converged || r.converged;
    if (r.f < best.f) best = std::move(r);
  }
  if (!std::isfinite(best.f)) throw NumericalError("ML did not converge: no finite likelihood");

  const double tau = std::exp(best.x(0)), phi = std::exp(best.x(1));
  const auto p = detail::profile_loglik(D, values, Z.matrix(), tau, phi, opt.reml);
  KrigingModel m = fit_uk_with_params(values, Z, locs, CovParams{tau * p.kappa, p.kappa, phi});
  m.converged = any_converged;
  if (!any_converged) m.warnings.push_back("ML did not converge at any start; best parameters returned");
  return m;
}

inline KrigingPrediction predict_uk(const KrigingModel& model, std::span<const Location> new_locs,
                                    const UkDesign& Z_new, bool with_variance = true) {
  if (Z_new.rows() != static_cast<Eigen::Index>(new_locs.size()) || Z_new.cols() != model.alpha.size())
    throw ValidationError("dimension mismatch");
  KrigingPrediction out;
  if (new_locs.empty()) {
    out.mean.resize(0);
    if (with_variance) out.variance.resize(0);
    return out;
  }
  const Eigen::MatrixXd c21 = exp_cov(new_locs, model.train_locs, model.cov);
  out.mean = Z_new.matrix() * model.alpha + c21 * model.weights;
  if (with_variance) {
    const Eigen::MatrixXd k = model.chol.matrixL().solve(c21.transpose());
    out.variance = (model.cov.kappa - k.colwise().squaredNorm().transpose().array()).max(0.0);
  }
  return out;
}

/// Sigma_22 - Sigma_21 Sigma_11^-1 Sigma_12 for the smooth process at new_locs.
inline Eigen::MatrixXd conditional_covariance(const KrigingModel& model,
                                              std::span<const Location> new_locs) {
  const Eigen::MatrixXd c21 = exp_cov(new_locs, model.train_locs, model.cov);
  const Eigen::MatrixXd k = model.chol.matrixL().solve(c21.transpose());
  CovParams smooth = model.cov;
  smooth.psi = 0.0;
  return exp_cov(new_locs, smooth) - k.transpose() * k;
}

}  // namespace predpca
