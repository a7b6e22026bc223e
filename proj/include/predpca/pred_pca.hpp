#pragma once

// Predictive (sparse) PCA.
//
// The rank-1 left factor is constrained to w = Zt a / ||Zt a|| where Zt holds
// an intercept, GIS scores and spline columns. Alternation:
//   a <- (Zt'Zt)^-1 Zt' W,  W = R v / (v'v)
//   v <- soft_threshold(R' w, lambda)
// Deflation subtracts w v'; reported scores stay X * loading.

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "predpca/error.hpp"
#include "predpca/linalg.hpp"
#include "predpca/spca.hpp"

namespace predpca {

/// n x m design [intercept | GIS scores | spline columns] used only to guide
/// loading selection. Distinct from UkDesign, the kriging mean design.
class CovariateBasis {
 public:
  CovariateBasis() = default;

  /// Takes a complete design matrix (intercept included by the caller).
  CovariateBasis(Eigen::MatrixXd zt, std::vector<std::string> names)
      : zt_(std::move(zt)), names_(std::move(names)) {
    if (names_.empty())
      for (Eigen::Index c = 0; c < zt_.cols(); ++c) names_.push_back("z" + std::to_string(c + 1));
    if (names_.size() != static_cast<std::size_t>(zt_.cols()))
      throw ValidationError("basis column names do not match columns");
    if (zt_.rows() <= zt_.cols()) throw ValidationError("covariate basis needs n > m");
    if (!zt_.allFinite()) throw ValidationError("non-finite covariate basis value");
    qr_.compute(zt_);
    const Eigen::VectorXd diag = qr_.matrixQR().diagonal().cwiseAbs();
    if (!(diag.minCoeff() > 1e-10 * diag.maxCoeff()))
      throw NumericalError("collinear basis (reduce the GIS or spline dimension)");
  }

  /// [1 | gis | spline] with generated column names.
  static CovariateBasis assemble(const Eigen::MatrixXd& gis, const Eigen::MatrixXd& spline) {
    const Eigen::Index n = std::max(gis.rows(), spline.rows());
    if ((gis.cols() && gis.rows() != n) || (spline.cols() && spline.rows() != n))
      throw ValidationError("dimension mismatch");
    Eigen::MatrixXd z(n, 1 + gis.cols() + spline.cols());
    z.col(0).setOnes();
    if (gis.cols()) z.middleCols(1, gis.cols()) = gis;
    if (spline.cols()) z.rightCols(spline.cols()) = spline;
    std::vector<std::string> names{"intercept"};
    for (Eigen::Index c = 0; c < gis.cols(); ++c) names.push_back("gis_" + std::to_string(c + 1));
    for (Eigen::Index c = 0; c < spline.cols(); ++c) names.push_back("tps_" + std::to_string(c + 1));
    return CovariateBasis(std::move(z), std::move(names));
  }

  const Eigen::MatrixXd& matrix() const { return zt_; }
  const std::vector<std::string>& column_names() const { return names_; }
  Eigen::Index rows() const { return zt_.rows(); }
  Eigen::Index cols() const { return zt_.cols(); }

  /// Least-squares coefficients (Zt'Zt)^-1 Zt' w via the stored QR factor.
  Eigen::VectorXd least_squares(const Eigen::VectorXd& w) const { return qr_.solve(w); }

 private:
  Eigen::MatrixXd zt_;
  std::vector<std::string> names_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
};

/// Coefficients a minimizing the constrained objective for fixed v.
inline Eigen::VectorXd solve_alpha(const CovariateBasis& basis, const Eigen::MatrixXd& R,
                                   const Eigen::VectorXd& v) {
  if (R.rows() != basis.rows() || v.size() != R.cols()) throw ValidationError("dimension mismatch");
  const double vv = v.squaredNorm();
  if (!(vv > 0.0)) throw ValidationError("loading must be nonzero");
  const Eigen::VectorXd W = R * v / vv;
  return basis.least_squares(W);
}

struct PredictiveRank1Fit : Rank1Fit {
  Eigen::VectorXd alpha;
  Eigen::VectorXd fitted_u;  // Zt a / ||Zt a||, equal to u_tilde
};

namespace detail {

/// Unit constrained factor from alpha, with a ridge restart when Zt a vanishes.
inline Eigen::VectorXd constrained_factor(const CovariateBasis& basis, const Eigen::MatrixXd& R,
                                          const Eigen::VectorXd& v, Eigen::VectorXd& alpha) {
  Eigen::VectorXd w = basis.matrix() * alpha;
  double norm = w.norm();
  if (norm < 1e-12) {
    const Eigen::MatrixXd& z = basis.matrix();
    Eigen::MatrixXd gram = z.transpose() * z;
    gram.diagonal().array() += 1e-8;
    alpha = gram.ldlt().solve(z.transpose() * (R * v / v.squaredNorm()));
    w = z * alpha;
    norm = w.norm();
    if (norm < 1e-12) throw NumericalError("constrained score vanished: residual orthogonal to basis");
  }
  return w / norm;
}

}  // namespace detail

inline PredictiveRank1Fit rank1_predictive(const Eigen::MatrixXd& R, const CovariateBasis& basis,
                                           double lambda, const Eigen::VectorXd& init,
                                           const Rank1Options& opt = {}) {
  detail::require_penalty(lambda);
  if (init.size() != R.cols() || R.rows() != basis.rows()) throw ValidationError("dimension mismatch");
  const double r_sq = R.squaredNorm();
  if (!(r_sq > 0.0)) throw NumericalError("zero residual matrix");

  PredictiveRank1Fit fit;
  Eigen::VectorXd v = init;
  for (int it = 1; it <= opt.max_iter; ++it) {
    Eigen::VectorXd alpha = solve_alpha(basis, R, v);
    Eigen::VectorXd w = detail::constrained_factor(basis, R, v, alpha);
    Eigen::VectorXd v_next = soft_threshold(Eigen::VectorXd(R.transpose() * w), lambda);
    if (v_next.isZero(0.0)) throw FullyThresholdedError();
    fit.objective_trace.push_back(rank1_objective(r_sq, R, w, v_next, lambda));
    const bool done = it > 1 && detail::relative_change_below(v, v_next, opt.tol);
    fit.alpha = std::move(alpha);
    fit.u_tilde = std::move(w);
    v = std::move(v_next);
    fit.iterations = it;
    if (done) {
      fit.converged = true;
      break;
    }
  }
  fit.v_tilde = std::move(v);
  fit.fitted_u = fit.u_tilde;
  return fit;
}

/// Penalized fit warm-started from the lambda = 0 predictive solution, which is
/// itself started from the leading right singular vector of R.
inline PredictiveRank1Fit rank1_predictive_path(const Eigen::MatrixXd& R,
                                                const CovariateBasis& basis, double lambda,
                                                const Rank1Options& opt = {}) {
  PredictiveRank1Fit base = rank1_predictive(R, basis, 0.0, leading_right_singular_vector(R), opt);
  if (lambda == 0.0) return base;
  const Eigen::VectorXd init = base.v_tilde / base.v_tilde.norm();
  return rank1_predictive(R, basis, lambda, init, opt);
}

inline PcModel fit_predictive(const Eigen::MatrixXd& X, const CovariateBasis& basis, int k,
                              std::span<const double> lambdas, const Rank1Options& opt = {}) {
  detail::check_fit_args(X, k, lambdas);
  if (X.rows() != basis.rows()) throw ValidationError("dimension mismatch");
  PcModel model;
  model.method = PcaMethod::predictive;
  model.basis_columns = basis.column_names();
  Eigen::MatrixXd R = X;
  for (int l = 0; l < k; ++l) {
    PredictiveRank1Fit fit;
    try {
      fit = rank1_predictive_path(R, basis, lambdas[l], opt);
    } catch (const FullyThresholdedError&) {
      throw FullyThresholdedError(l + 1);
    }
    R -= fit.u_tilde * fit.v_tilde.transpose();
    PcComponent c = detail::finish_component(X, fit.u_tilde, fit.v_tilde, lambdas[l]);
    c.alpha = orientation_sign(fit.v_tilde) * fit.alpha;
    c.objective_trace = std::move(fit.objective_trace);
    c.iterations = fit.iterations;
    c.converged = fit.converged;
    model.components.push_back(std::move(c));
  }
  return model;
}

inline PcModel fit_predictive(const ExposureDataset& data, const CovariateBasis& basis, int k,
                              std::span<const double> lambdas, const Rank1Options& opt = {}) {
  PcModel model = fit_predictive(data.X, basis, k, lambdas, opt);
  model.pollutant_names = data.pollutant_names;
  model.centering = data.centering;
  model.scaling = data.scaling;
  return model;
}

/// Largest useful penalty for the next component: max_j |(R' u0)_j| with u0
/// the lambda = 0 left factor of the given method.
inline double lambda_max(const Eigen::MatrixXd& R, PcaMethod method, const CovariateBasis* basis,
                         const Rank1Options& opt = {}) {
  Eigen::VectorXd u0;
  if (method == PcaMethod::traditional) {
    u0 = rank1_sparse(R, 0.0, leading_right_singular_vector(R), opt).u_tilde;
  } else {
    if (basis == nullptr) throw ValidationError("predictive method needs a covariate basis");
    u0 = rank1_predictive(R, *basis, 0.0, leading_right_singular_vector(R), opt).u_tilde;
  }
  return lambda_ceiling(R, u0);
}

}  // namespace predpca
