#pragma once

// Geographic covariate cleaning and dimension reduction.
//
// Raw covariates are transformed (distance columns truncated at 10 km and
// log-transformed), screened for near-constant and outlier-dominated columns,
// standardized, and finally compressed by PCA into a handful of "GIS scores"
// that enter the kriging mean and the predictive-PCA design.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "predpca/error.hpp"
#include "predpca/linalg.hpp"

namespace predpca {

enum class ColumnKind { distance, other };

struct RawCovariateTable {
  std::vector<std::string> location_ids;
  std::vector<std::string> names;
  std::vector<ColumnKind> kinds;
  Eigen::MatrixXd values;  // rows: locations, cols: covariates

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  void validate() const {
    if (names.size() != static_cast<std::size_t>(values.cols()) ||
        kinds.size() != names.size())
      throw ValidationError("covariate table: column metadata does not match values");
    if (!location_ids.empty() && location_ids.size() != static_cast<std::size_t>(values.rows()))
      throw ValidationError("covariate table: id count does not match rows");
  }

  Eigen::Index column_index(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    return it == names.end() ? -1 : static_cast<Eigen::Index>(it - names.begin());
  }

  RawCovariateTable subset(std::span<const std::size_t> rows) const {
    RawCovariateTable out;
    if (!location_ids.empty()) out.location_ids = take_rows(location_ids, rows);
    out.names = names;
    out.kinds = kinds;
    out.values = take_rows(values, rows);
    return out;
  }
};

/// Column kind by naming convention: a `dist_` prefix marks a distance in metres.
inline ColumnKind kind_from_name(const std::string& name) {
  return name.rfind("dist_", 0) == 0 ? ColumnKind::distance : ColumnKind::other;
}

struct FilterOptions {
  double identical_frac = 0.85;  // drop if the modal value covers more than this
  double outlier_sd = 7.0;       // drop if any |standardized value| exceeds this
  double truncate_m = 10000.0;
  double log_offset_m = 1.0;     // log(d + offset) keeps zero distances finite
};

struct DroppedColumn {
  std::string name;
  std::string reason;  // "identical" or "outlier"
};

struct CleanCovariateMatrix {
  Eigen::MatrixXd matrix;  // standardized, n x q
  std::vector<std::string> column_names;
  std::vector<ColumnKind> kinds;
  Eigen::VectorXd centering;
  Eigen::VectorXd scaling;
  std::vector<DroppedColumn> dropped;
  FilterOptions options;
};

struct GisScoreMatrix {
  Eigen::MatrixXd scores;    // n x g
  Eigen::MatrixXd loadings;  // q x g, orthonormal columns
  Eigen::VectorXd singular_values;
  double explained_variance_fraction = 0.0;

  Eigen::Index count() const { return loadings.cols(); }
};

struct FixedComponents {
  int count;
};
struct VarianceFraction {
  double fraction;
};
using ComponentTarget = std::variant<FixedComponents, VarianceFraction>;

/// Truncate-then-log transform applied to distance columns.
inline double transform_distance(double metres, const FilterOptions& opt) {
  return std::log(std::min(metres, opt.truncate_m) + opt.log_offset_m);
}

namespace detail {

inline double modal_fraction(const Eigen::VectorXd& col) {
  std::vector<double> v(col.data(), col.data() + col.size());
  std::sort(v.begin(), v.end());
  std::size_t best = 1, run = 1;
  for (std::size_t i = 1; i < v.size(); ++i) {
    run = (v[i] == v[i - 1]) ? run + 1 : 1;
    best = std::max(best, run);
  }
  return static_cast<double>(best) / static_cast<double>(v.size());
}

inline Eigen::VectorXd transformed_column(const RawCovariateTable& raw, Eigen::Index j,
                                          ColumnKind kind, const FilterOptions& opt) {
  Eigen::VectorXd col = raw.values.col(j);
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    if (!std::isfinite(col(i))) throw ValidationError("bad covariate value: " + raw.names[j]);
    if (kind == ColumnKind::distance) {
      if (col(i) < 0.0) throw ValidationError("bad covariate value: " + raw.names[j]);
      col(i) = transform_distance(col(i), opt);
    }
  }
  return col;
}

}  // namespace detail

/// Screens, transforms and standardizes raw covariates. The stored centering
/// and scaling are reused verbatim by apply_preprocessing.
inline CleanCovariateMatrix filter_covariates(const RawCovariateTable& raw,
                                              const FilterOptions& opt = {}) {
  raw.validate();
  const Eigen::Index n = raw.rows();
  if (n < 2) throw ValidationError("need at least two locations");

  CleanCovariateMatrix out;
  out.options = opt;
  std::vector<Eigen::VectorXd> kept;
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const Eigen::VectorXd col = detail::transformed_column(raw, j, raw.kinds[j], opt);
    if (detail::modal_fraction(col) > opt.identical_frac) {
      out.dropped.push_back({raw.names[j], "identical"});
      continue;
    }
    const double mean = col.mean();
    const double sd = sample_sd(col);
    if (!(sd > 0.0)) {
      out.dropped.push_back({raw.names[j], "identical"});
      continue;
    }
    const Eigen::VectorXd z = (col.array() - mean) / sd;
    if (z.cwiseAbs().maxCoeff() > opt.outlier_sd) {
      out.dropped.push_back({raw.names[j], "outlier"});
      continue;
    }
    kept.push_back(z);
    out.column_names.push_back(raw.names[j]);
    out.kinds.push_back(raw.kinds[j]);
    out.centering.conservativeResize(out.centering.size() + 1);
    out.scaling.conservativeResize(out.scaling.size() + 1);
    out.centering(out.centering.size() - 1) = mean;
    out.scaling(out.scaling.size() - 1) = sd;
  }
  if (kept.empty()) throw ValidationError("empty design");
  out.matrix.resize(n, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) out.matrix.col(static_cast<Eigen::Index>(j)) = kept[j];
  return out;
}

/// PCA of the standardized covariates. Loadings are oriented so that each
/// column's largest-magnitude entry is positive.
inline GisScoreMatrix reduce_covariates_pca(const CleanCovariateMatrix& clean,
                                            const ComponentTarget& target) {
  const Eigen::MatrixXd& z = clean.matrix;
  const Eigen::Index n = z.rows(), q = z.cols();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const double total = s.squaredNorm();
  if (!(total > 0.0)) throw ValidationError("insufficient rank");
  const double tol = static_cast<double>(std::max(n, q)) * 1e-13 * s(0);
  const Eigen::Index rank = (s.array() > tol).count();

  Eigen::Index g = 0;
  if (const auto* fixed = std::get_if<FixedComponents>(&target)) {
    g = fixed->count;
    if (g < 1 || g > std::min(n - 1, q))
      throw ValidationError("component count must lie in [1, min(n-1, q)]");
    if (g > rank) throw ValidationError("insufficient rank");
  } else {
    const double frac = std::get<VarianceFraction>(target).fraction;
    if (!(frac > 0.0 && frac <= 1.0)) throw ValidationError("variance fraction must lie in (0, 1]");
    double cum = 0.0;
    for (g = 0; g < rank;) {
      cum += s(g) * s(g);
      ++g;
      if (cum >= frac * total * (1.0 - 1e-12)) break;
    }
  }

  GisScoreMatrix out;
  out.loadings = svd.matrixV().leftCols(g);
  for (Eigen::Index c = 0; c < g; ++c) out.loadings.col(c) *= orientation_sign(out.loadings.col(c));
  out.scores = z * out.loadings;
  out.singular_values = s;
  out.explained_variance_fraction = s.head(g).squaredNorm() / total;
  return out;
}

/// Standardizes new rows with the fitted transform and projects them on the
/// fitted loadings. Extra columns in `raw_new` are ignored.
inline Eigen::MatrixXd standardize_new(const RawCovariateTable& raw_new,
                                       const CleanCovariateMatrix& fitted) {
  raw_new.validate();
  const Eigen::Index q = static_cast<Eigen::Index>(fitted.column_names.size());
  Eigen::MatrixXd z(raw_new.rows(), q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const Eigen::Index src = raw_new.column_index(fitted.column_names[j]);
    if (src < 0) throw ValidationError("schema mismatch: missing column " + fitted.column_names[j]);
    const Eigen::VectorXd col =
        detail::transformed_column(raw_new, src, fitted.kinds[j], fitted.options);
    z.col(j) = (col.array() - fitted.centering(j)) / fitted.scaling(j);
  }
  return z;
}

inline GisScoreMatrix apply_preprocessing(const RawCovariateTable& raw_new,
                                          const CleanCovariateMatrix& fitted,
                                          const GisScoreMatrix& gis) {
  GisScoreMatrix out;
  out.loadings = gis.loadings;
  out.singular_values = gis.singular_values;
  out.explained_variance_fraction = gis.explained_variance_fraction;
  out.scores = standardize_new(raw_new, fitted) * gis.loadings;
  return out;
}

}  // namespace predpca
