#pragma once

// Geographic designs built from covariates and coordinates:
//   UkDesign       = [1 | GIS scores]              (kriging mean)
//   CovariateBasis = [1 | GIS scores | splines]     (predictive PCA guide)
// A DesignBuilder produces both for a train/test split, fitting every
// statistic on the training rows only.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "predpca/kriging.hpp"
#include "predpca/linalg.hpp"
#include "predpca/pred_pca.hpp"
#include "predpca/preprocess.hpp"
#include "predpca/spline_basis.hpp"

namespace predpca {

struct DesignOptions {
  ComponentTarget gis_target = VarianceFraction{0.85};
  int spline_rank = 10;
  std::uint64_t knot_seed = 0;
  FilterOptions filter;
};

struct FittedDesign {
  CleanCovariateMatrix clean;
  GisScoreMatrix gis;  // scores at the fitting locations
  SplineBasis spline;

  CovariateBasis covariate_basis() const {
    return CovariateBasis::assemble(gis.scores, spline.without_intercept());
  }
  UkDesign uk_design() const { return UkDesign::intercept_plus(gis.scores); }

  Eigen::MatrixXd gis_scores_at(const RawCovariateTable& raw_new) const {
    return apply_preprocessing(raw_new, clean, gis).scores;
  }
  UkDesign uk_design_at(const RawCovariateTable& raw_new) const {
    return UkDesign::intercept_plus(gis_scores_at(raw_new));
  }
  CovariateBasis covariate_basis_at(const RawCovariateTable& raw_new,
                                    std::span<const Location> locs) const {
    const Eigen::MatrixXd s = eval_basis(spline, locs);
    return CovariateBasis::assemble(gis_scores_at(raw_new), s.rightCols(s.cols() - 1));
  }
};

inline FittedDesign fit_design(const RawCovariateTable& raw, std::span<const Location> locs,
                               const DesignOptions& opt = {}) {
  if (raw.rows() != static_cast<Eigen::Index>(locs.size()))
    throw ValidationError("covariate rows do not match locations");
  FittedDesign d;
  d.clean = filter_covariates(raw, opt.filter);
  d.gis = reduce_covariates_pca(d.clean, opt.gis_target);
  d.spline = tps_basis(locs, opt.spline_rank, opt.knot_seed);
  return d;
}

struct FoldDesign {
  CovariateBasis basis_train;
  UkDesign uk_train;
  UkDesign uk_test;
};

using DesignBuilder =
    std::function<FoldDesign(std::span<const std::size_t> train, std::span<const std::size_t> test)>;

/// Refits preprocessing, GIS PCA and the spline basis on each training set.
inline DesignBuilder refit_design_builder(RawCovariateTable raw, std::vector<Location> locs,
                                          DesignOptions opt = {}) {
  return [raw = std::move(raw), locs = std::move(locs), opt](std::span<const std::size_t> train,
                                                            std::span<const std::size_t> test) {
    const RawCovariateTable raw_train = raw.subset(train);
    const std::vector<Location> locs_train = take_rows(locs, train);
    const FittedDesign d = fit_design(raw_train, locs_train, opt);
    FoldDesign f{d.covariate_basis(), d.uk_design(), UkDesign::intercept_plus(Eigen::MatrixXd(0, d.gis.count()))};
    if (!test.empty()) f.uk_test = d.uk_design_at(raw.subset(test));
    return f;
  };
}

/// Slices precomputed GIS score and spline columns (no intercepts) by row.
inline DesignBuilder fixed_design_builder(Eigen::MatrixXd gis, Eigen::MatrixXd spline) {
  return [gis = std::move(gis), spline = std::move(spline)](std::span<const std::size_t> train,
                                                           std::span<const std::size_t> test) {
    const Eigen::MatrixXd g_train = take_rows(gis, train);
    const Eigen::MatrixXd s_train = spline.cols() ? take_rows(spline, train) : Eigen::MatrixXd(train.size(), 0);
    return FoldDesign{CovariateBasis::assemble(g_train, s_train), UkDesign::intercept_plus(g_train),
                      UkDesign::intercept_plus(take_rows(gis, test))};
  };
}

}  // namespace predpca
