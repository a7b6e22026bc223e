#pragma once

// Low-rank thin-plate spline basis over planar coordinates.
//
// The basis holds `rank` columns: an intercept, the affine terms x and y, and
// rank-3 radial functions eta(r) = r^2 log r centred at knots chosen by seeded
// farthest-point sampling. Every column except the intercept is standardized
// with training means/SDs, which eval_basis reuses for new locations.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "predpca/error.hpp"
#include "predpca/linalg.hpp"
#include "predpca/rng.hpp"

namespace predpca {

/// Thin-plate radial kernel; the removable singularity at 0 is filled with 0.
inline double tps_kernel(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

struct SplineBasis {
  Eigen::MatrixXd basis;  // n x rank, column 0 is the intercept
  int rank = 0;
  std::vector<Location> knots;
  Eigen::VectorXd center;  // per column; intercept entries are 0 and 1
  Eigen::VectorXd scale;

  /// Basis without its intercept column, as it enters the covariate design.
  Eigen::MatrixXd without_intercept() const { return basis.rightCols(basis.cols() - 1); }
};

/// Greedy farthest-point selection starting from a seeded random index.
inline std::vector<std::size_t> farthest_point_knots(std::span<const Location> locs,
                                                     std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> chosen;
  if (count == 0) return chosen;
  Rng rng(seed);
  chosen.push_back(static_cast<std::size_t>(rng.index(locs.size())));
  std::vector<double> nearest(locs.size(), std::numeric_limits<double>::infinity());
  while (chosen.size() < count) {
    const Location& last = locs[chosen.back()];
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < locs.size(); ++i) {
      nearest[i] = std::min(nearest[i], distance_km(locs[i], last));
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

namespace detail {

inline Eigen::MatrixXd raw_tps_columns(std::span<const Location> locs,
                                       const std::vector<Location>& knots) {
  const Eigen::Index n = static_cast<Eigen::Index>(locs.size());
  Eigen::MatrixXd m(n, static_cast<Eigen::Index>(knots.size()) + 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, 0) = 1.0;
    m(i, 1) = locs[i].x_km;
    m(i, 2) = locs[i].y_km;
    for (std::size_t k = 0; k < knots.size(); ++k)
      m(i, static_cast<Eigen::Index>(k) + 3) = tps_kernel(distance_km(locs[i], knots[k]));
  }
  return m;
}

}  // namespace detail

inline Eigen::MatrixXd eval_basis(const SplineBasis& b, std::span<const Location> new_locs) {
  for (const auto& l : new_locs)
    if (!std::isfinite(l.x_km) || !std::isfinite(l.y_km))
      throw ValidationError("non-finite coordinates");
  Eigen::MatrixXd m = detail::raw_tps_columns(new_locs, b.knots);
  for (Eigen::Index c = 1; c < m.cols(); ++c)
    m.col(c) = (m.col(c).array() - b.center(c)) / b.scale(c);
  return m;
}

inline SplineBasis tps_basis(std::span<const Location> locs, int rank = 10,
                             std::uint64_t knot_seed = 0) {
  if (rank < 3) throw ValidationError("rank below affine span");
  if (locs.size() < static_cast<std::size_t>(rank))
    throw ValidationError("spline rank exceeds number of locations");
  require_distinct(locs);

  SplineBasis b;
  b.rank = rank;
  for (std::size_t idx : farthest_point_knots(locs, static_cast<std::size_t>(rank - 3), knot_seed))
    b.knots.push_back(locs[idx]);

  const Eigen::MatrixXd raw = detail::raw_tps_columns(locs, b.knots);
  b.center = Eigen::VectorXd::Zero(rank);
  b.scale = Eigen::VectorXd::Ones(rank);
  for (Eigen::Index c = 1; c < rank; ++c) {
    b.center(c) = raw.col(c).mean();
    b.scale(c) = sample_sd(raw.col(c));
    if (!(b.scale(c) > 0.0)) throw ValidationError("degenerate spline basis");
  }
  b.basis = eval_basis(b, locs);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b.basis);
  qr.setThreshold(1e-10);
  if (qr.rank() < rank) throw ValidationError("degenerate spline basis");
  return b;
}

}  // namespace predpca
