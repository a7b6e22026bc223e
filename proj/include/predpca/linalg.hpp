#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "predpca/error.hpp"

namespace predpca {

/// Planar location in kilometres (projected easting/northing).
struct Location {
  double x_km = 0.0;
  double y_km = 0.0;

  friend bool operator==(const Location&, const Location&) = default;
};

inline double distance_km(const Location& a, const Location& b) {
  return std::hypot(a.x_km - b.x_km, a.y_km - b.y_km);
}

inline Eigen::MatrixXd distance_matrix(std::span<const Location> a, std::span<const Location> b) {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t j = 0; j < b.size(); ++j)
    for (std::size_t i = 0; i < a.size(); ++i) d(i, j) = distance_km(a[i], b[j]);
  return d;
}

/// Throws "coincident points" when two locations coincide exactly.
inline void require_distinct(std::span<const Location> locs) {
  std::vector<Location> sorted(locs.begin(), locs.end());
  std::sort(sorted.begin(), sorted.end(), [](const Location& a, const Location& b) {
    return a.x_km < b.x_km || (a.x_km == b.x_km && a.y_km < b.y_km);
  });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] == sorted[i - 1]) throw ValidationError("coincident points");
  for (const auto& l : locs)
    if (!std::isfinite(l.x_km) || !std::isfinite(l.y_km))
      throw ValidationError("non-finite coordinates");
}

template <class T>
std::vector<T> take_rows(const std::vector<T>& items, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(items[r]);
  return out;
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

inline Eigen::VectorXd take_rows(const Eigen::VectorXd& v, std::span<const std::size_t> rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  return out;
}

/// Sample standard deviation with the n-1 denominator.
inline double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double mean = x.mean();
  return std::sqrt((x.array() - mean).square().sum() / static_cast<double>(x.size() - 1));
}

inline double correlation(const Eigen::Ref<const Eigen::VectorXd>& a,
                          const Eigen::Ref<const Eigen::VectorXd>& b) {
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double denom = std::sqrt(da.square().sum() * db.square().sum());
  return denom > 0.0 ? (da * db).sum() / denom : 0.0;
}

/// Index of the largest-magnitude entry (first on ties).
inline Eigen::Index argmax_abs(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  return best;
}

/// +1 or -1 so that sign * v has its largest-magnitude entry positive.
inline double orientation_sign(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return v(argmax_abs(v)) < 0.0 ? -1.0 : 1.0;
}

/// Leading right singular vector of m, from the eigendecomposition of the
/// smaller Gram matrix. Sign follows orientation_sign.
inline Eigen::VectorXd leading_right_singular_vector(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v;
  if (m.cols() <= m.rows()) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.transpose() * m);
    v = eig.eigenvectors().col(m.cols() - 1);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m * m.transpose());
    v = m.transpose() * eig.eigenvectors().col(m.rows() - 1);
  }
  const double norm = v.norm();
  if (!(norm > 0.0)) throw NumericalError("zero residual matrix");
  v /= norm;
  return orientation_sign(v) * v;
}

}  // namespace predpca
