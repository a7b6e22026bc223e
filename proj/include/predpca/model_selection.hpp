#pragma once

// Prediction metrics, K-fold cross-validation of the two-stage pipeline
// (PCA at training monitors, then kriging of each score to held-out
// monitors), and cross-validated penalty selection.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "predpca/design.hpp"
#include "predpca/error.hpp"
#include "predpca/kriging.hpp"
#include "predpca/parallel.hpp"
#include "predpca/pred_pca.hpp"
#include "predpca/rng.hpp"
#include "predpca/spca.hpp"

namespace predpca {

/// max(0, 1 - SSE / SST).
inline double r2(const Eigen::Ref<const Eigen::VectorXd>& observed,
                 const Eigen::Ref<const Eigen::VectorXd>& predicted) {
  if (observed.size() != predicted.size()) throw ValidationError("length mismatch");
  if (observed.size() < 2) throw ValidationError("R2 needs at least two values");
  const double sst = (observed.array() - observed.mean()).square().sum();
  if (!(sst > 0.0)) throw ValidationError("undefined R2: constant observations");
  const double sse = (observed - predicted).squaredNorm();
  return std::max(0.0, 1.0 - sse / sst);
}

inline double mse(const Eigen::Ref<const Eigen::VectorXd>& observed,
                  const Eigen::Ref<const Eigen::VectorXd>& predicted) {
  if (observed.size() != predicted.size()) throw ValidationError("length mismatch");
  if (observed.size() == 0) throw ValidationError("MSE of empty vectors");
  return (observed - predicted).squaredNorm() / static_cast<double>(observed.size());
}

/// ||X - Uhat V'||_F.
inline double frobenius_loss(const Eigen::MatrixXd& X, const Eigen::MatrixXd& U_hat,
                             const Eigen::MatrixXd& V) {
  return (X - U_hat * V.transpose()).norm();
}

/// Mean of |corr| over all pairs of columns.
inline double average_abs_correlation(const Eigen::MatrixXd& scores) {
  double sum = 0.0;
  int pairs = 0;
  for (Eigen::Index a = 0; a < scores.cols(); ++a)
    for (Eigen::Index b = a + 1; b < scores.cols(); ++b) {
      sum += std::abs(correlation(scores.col(a), scores.col(b)));
      ++pairs;
    }
  return pairs ? sum / pairs : 0.0;
}

inline Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& scores) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(scores.cols(), scores.cols());
  for (Eigen::Index a = 0; a < scores.cols(); ++a)
    for (Eigen::Index b = a + 1; b < scores.cols(); ++b)
      c(a, b) = c(b, a) = correlation(scores.col(a), scores.col(b));
  return c;
}

struct FoldAssignment {
  std::vector<int> labels;  // fold label per row, in 1..folds
  int folds = 0;
  std::uint64_t seed = 0;

  std::vector<std::size_t> test_rows(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == fold) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> train_rows(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] != fold) out.push_back(i);
    return out;
  }
};

/// Uniform random partition; fold sizes differ by at most one.
inline FoldAssignment make_folds(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2 || static_cast<std::size_t>(folds) > n)
    throw ValidationError("fold count must lie in [2, n]");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);
  FoldAssignment f;
  f.folds = folds;
  f.seed = seed;
  f.labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) f.labels[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(folds)) + 1;
  return f;
}

struct PipelineOptions {
  PcaMethod method = PcaMethod::traditional;
  int k = 3;
  std::vector<double> lambdas;  // one per component
  Rank1Options rank1;
  FitUkOptions uk;
};

inline PcModel fit_pca(const ExposureDataset& data, const CovariateBasis& basis, PcaMethod method,
                       int k, std::span<const double> lambdas, const Rank1Options& opt = {}) {
  return method == PcaMethod::traditional ? fit_traditional(data, k, lambdas, opt)
                                          : fit_predictive(data, basis, k, lambdas, opt);
}

/// One train/test split of the pipeline. Everything on the training side is
/// computed from training rows only.
struct FoldResult {
  std::vector<std::size_t> train, test;
  PcModel model;                          // carries the training centering
  std::vector<KrigingModel> kriging;      // one per component
  Eigen::MatrixXd predicted;              // test x k
  Eigen::MatrixXd truth;                  // test rows projected on training loadings
  Eigen::MatrixXd test_standardized;      // test rows in training units
};

/// Shared per-fold inputs (training subsets and designs) for repeated fits.
class CvWorkspace {
 public:
  struct Fold {
    std::vector<std::size_t> train, test;
    ExposureDataset train_data;
    FoldDesign design;
    Eigen::MatrixXd test_standardized;
    std::vector<Location> test_locs;
  };

  CvWorkspace(const ExposureDataset& data, const DesignBuilder& builder, const FoldAssignment& folds,
              int threads = 1)
      : data_(&data), folds_(folds) {
    fold_data_.resize(static_cast<std::size_t>(folds.folds));
    parallel_for(fold_data_.size(), threads, [&](std::size_t f) {
      fold_data_[f] = make_fold(data, builder, folds.train_rows(static_cast<int>(f) + 1),
                                folds.test_rows(static_cast<int>(f) + 1));
    });
  }

  static Fold make_fold(const ExposureDataset& data, const DesignBuilder& builder,
                        std::vector<std::size_t> train, std::vector<std::size_t> test) {
    Fold f;
    f.train = std::move(train);
    f.test = std::move(test);
    f.train_data = data.subset(f.train);
    f.design = builder(f.train, f.test);
    f.test_standardized = f.train_data.standardize(take_rows(data.raw, f.test));
    f.test_locs = take_rows(data.locations, f.test);
    if (f.train.size() < static_cast<std::size_t>(f.design.uk_train.cols() + 3))
      throw ValidationError("fold too small for UK fit");
    return f;
  }

  const ExposureDataset& data() const { return *data_; }
  const FoldAssignment& assignment() const { return folds_; }
  std::size_t size() const { return fold_data_.size(); }
  const Fold& fold(std::size_t f) const { return fold_data_[f]; }

 private:
  const ExposureDataset* data_;
  FoldAssignment folds_;
  std::vector<Fold> fold_data_;
};

inline FoldResult fit_fold(const CvWorkspace::Fold& fold, const PipelineOptions& opt) {
  FoldResult r;
  r.train = fold.train;
  r.test = fold.test;
  r.model = fit_pca(fold.train_data, fold.design.basis_train, opt.method, opt.k, opt.lambdas, opt.rank1);
  r.test_standardized = fold.test_standardized;
  r.truth = project_scores(fold.test_standardized, r.model);
  r.predicted.resize(static_cast<Eigen::Index>(fold.test.size()), opt.k);
  for (int l = 0; l < opt.k; ++l) {
    r.kriging.push_back(fit_uk(r.model.components[l].score, fold.design.uk_train,
                               fold.train_data.locations, opt.uk));
    r.predicted.col(l) = predict_uk(r.kriging.back(), fold.test_locs, fold.design.uk_test, false).mean;
  }
  return r;
}

/// Fits one split from scratch: training rows alone determine every fitted artifact.
inline FoldResult fit_fold(const ExposureDataset& data, const DesignBuilder& builder,
                           std::vector<std::size_t> train, std::vector<std::size_t> test,
                           const PipelineOptions& opt) {
  return fit_fold(CvWorkspace::make_fold(data, builder, std::move(train), std::move(test)), opt);
}

struct CvReport {
  PcaMethod method = PcaMethod::traditional;
  std::vector<double> lambdas;
  int folds = 0;
  std::uint64_t seed = 0;
  std::vector<double> r2;   // per component, over the union of held-out rows
  std::vector<double> mse;
  Eigen::MatrixXd score_correlation;  // in-sample scores of the full-data fit
  double avg_abs_correlation = 0.0;
  double sparseness = 0.0;            // full-data loadings
  std::vector<double> pollutant_r2;   // CV reconstruction in raw units
  double frobenius_loss = 0.0;        // held-out ||X - Uhat V'||_F, training units
  Eigen::MatrixXd observed;           // n x k held-out true scores
  Eigen::MatrixXd predicted;          // n x k held-out predictions
  std::vector<int> fold_of_row;
  PcModel full_model;
};

inline CvReport cv_pipeline(const ExposureDataset& data, const DesignBuilder& builder,
                            const PipelineOptions& opt, int folds, std::uint64_t seed,
                            int threads = 1) {
  const FoldAssignment assignment = make_folds(static_cast<std::size_t>(data.n()), folds, seed);
  const CvWorkspace ws(data, builder, assignment, threads);
  std::vector<FoldResult> results(ws.size());
  parallel_for(ws.size(), threads, [&](std::size_t f) { results[f] = fit_fold(ws.fold(f), opt); });

  CvReport rep;
  rep.method = opt.method;
  rep.lambdas = opt.lambdas;
  rep.folds = folds;
  rep.seed = seed;
  rep.fold_of_row = assignment.labels;
  const Eigen::Index n = data.n(), p = data.p();
  rep.observed.resize(n, opt.k);
  rep.predicted.resize(n, opt.k);
  Eigen::MatrixXd recon_raw(n, p);
  double frob_sq = 0.0;
  for (const FoldResult& r : results) {
    const Eigen::MatrixXd V = r.model.loadings();
    const Eigen::MatrixXd recon = r.predicted * V.transpose();
    frob_sq += (r.test_standardized - recon).squaredNorm();
    const Eigen::MatrixXd raw_hat =
        (recon.array().rowwise() * r.model.scaling.transpose().array()).rowwise() +
        r.model.centering.transpose().array();
    for (std::size_t i = 0; i < r.test.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(r.test[i]);
      rep.observed.row(row) = r.truth.row(static_cast<Eigen::Index>(i));
      rep.predicted.row(row) = r.predicted.row(static_cast<Eigen::Index>(i));
      recon_raw.row(row) = raw_hat.row(static_cast<Eigen::Index>(i));
    }
  }
  rep.frobenius_loss = std::sqrt(frob_sq);
  for (int l = 0; l < opt.k; ++l) {
    rep.r2.push_back(r2(rep.observed.col(l), rep.predicted.col(l)));
    rep.mse.push_back(mse(rep.observed.col(l), rep.predicted.col(l)));
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::VectorXd col = data.raw.col(j);
    const bool constant = (col.array() == col(0)).all();
    rep.pollutant_r2.push_back(constant ? 0.0 : r2(col, recon_raw.col(j)));
  }

  std::vector<std::size_t> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  const FoldDesign full = builder(all, {});
  rep.full_model = fit_pca(data, full.basis_train, opt.method, opt.k, opt.lambdas, opt.rank1);
  const Eigen::MatrixXd scores = rep.full_model.scores();
  rep.score_correlation = correlation_matrix(scores);
  rep.avg_abs_correlation = average_abs_correlation(scores);
  rep.sparseness = rep.full_model.sparseness();
  return rep;
}

enum class SelectionCriterion { max_scores, max_pollutants };

inline const char* to_string(SelectionCriterion c) {
  return c == SelectionCriterion::max_scores ? "max_scores" : "max_pollutants";
}

struct SelectionOptions {
  int folds = 10;
  std::uint64_t seed = 0;
  int grid_size = 30;          // automatic grid: 0 plus grid_size-1 log-spaced values
  double grid_low = 1e-2;      // smallest nonzero value as a fraction of lambda_max
  std::vector<double> grid;    // explicit grid (must contain 0); overrides the automatic one
  bool warm_start_uk = true;   // kriging ML starts from the previous grid point's fit
  double warm_step = 0.3;      // initial simplex size (log scale) around a warm start
  double warm_fabs_tol = 1e-4; // log-likelihood agreement that ends a warm-started search
  int threads = 1;
};

struct SelectionTraceRow {
  int component = 0;  // 1-based
  double lambda = 0.0;
  bool feasible = true;
  double score_r2 = 0.0;
  double frobenius = 0.0;
  bool chosen = false;
};

struct PenaltyChoice {
  std::vector<double> lambdas;
  SelectionCriterion criterion = SelectionCriterion::max_scores;
  std::vector<SelectionTraceRow> trace;
};

/// 0 followed by size-1 log-spaced values in [low * lambda_max, lambda_max].
inline std::vector<double> penalty_grid(double lambda_max, int size, double low = 1e-2) {
  std::vector<double> g{0.0};
  if (size <= 1 || !(lambda_max > 0.0)) return g;
  const int m = size - 1;
  for (int i = 0; i < m; ++i) {
    const double t = m == 1 ? 1.0 : static_cast<double>(i) / (m - 1);
    g.push_back(lambda_max * std::pow(low, 1.0 - t));
  }
  return g;
}

/// Sequential per-component penalty selection by K-fold CV. Component l's
/// penalty is chosen with components 1..l-1 frozen at their chosen values;
/// ties go to the larger penalty.
inline PenaltyChoice select_lambda(const ExposureDataset& data, const DesignBuilder& builder,
                                   const PipelineOptions& base, SelectionCriterion criterion,
                                   const SelectionOptions& opt) {
  if (!opt.grid.empty() && std::find(opt.grid.begin(), opt.grid.end(), 0.0) == opt.grid.end())
    throw ValidationError("penalty grid must contain 0");
  const int k = base.k;
  const FoldAssignment assignment = make_folds(static_cast<std::size_t>(data.n()), opt.folds, opt.seed);
  const CvWorkspace ws(data, builder, assignment, opt.threads);
  const std::size_t nf = ws.size();

  std::vector<std::size_t> all(static_cast<std::size_t>(data.n()));
  std::iota(all.begin(), all.end(), 0);
  const FoldDesign full = builder(all, {});

  PenaltyChoice choice;
  choice.criterion = criterion;
  std::vector<Eigen::MatrixXd> chosen_pred(nf);  // test x l predictions of frozen components
  for (std::size_t f = 0; f < nf; ++f) chosen_pred[f].resize(static_cast<Eigen::Index>(ws.fold(f).test.size()), 0);

  for (int l = 0; l < k; ++l) {
    std::vector<double> grid = opt.grid;
    if (grid.empty()) {
      Eigen::MatrixXd R = data.X;
      if (l > 0) {
        const PcModel prefix = fit_pca(data, full.basis_train, base.method, l, choice.lambdas, base.rank1);
        for (const auto& c : prefix.components) R -= c.u_tilde * (c.v_norm * c.loading).transpose();
      }
      grid = penalty_grid(lambda_max(R, base.method, &full.basis_train, base.rank1), opt.grid_size,
                          opt.grid_low);
    }
    std::sort(grid.begin(), grid.end());

    // Every fold's first kriging fit starts from the unpenalized full-data fit.
    std::vector<std::optional<CovParams>> warm(nf);
    if (opt.warm_start_uk) {
      std::vector<double> lambdas = choice.lambdas;
      lambdas.push_back(0.0);
      const PcModel m0 = fit_pca(data, full.basis_train, base.method, l + 1, lambdas, base.rank1);
      const CovParams seed_cov = fit_uk(m0.components[l].score, full.uk_train, data.locations, base.uk).cov;
      std::fill(warm.begin(), warm.end(), seed_cov);
    }
    std::vector<Eigen::VectorXd> best_pred(nf);
    double best_value = 0.0;
    std::optional<double> best_lambda;
    std::size_t best_trace = 0;

    for (double lambda : grid) {
      std::vector<double> lambdas = choice.lambdas;
      lambdas.push_back(lambda);
      std::vector<Eigen::VectorXd> pred(nf), truth(nf);
      std::vector<Eigen::MatrixXd> loadings(nf);
      std::vector<CovParams> fitted(nf);
      std::vector<char> feasible(nf, 1);
      parallel_for(nf, opt.threads, [&](std::size_t f) {
        const auto& fold = ws.fold(f);
        PcModel model;
        try {
          model = fit_pca(fold.train_data, fold.design.basis_train, base.method, l + 1, lambdas, base.rank1);
        } catch (const FullyThresholdedError&) {
          feasible[f] = 0;
          return;
        }
        FitUkOptions uk = base.uk;
        if (opt.warm_start_uk && warm[f]) {
          uk.warm_starts = {*warm[f]};
          uk.starts = 0;
          uk.nm.initial_step = opt.warm_step;
          uk.nm.fabs_tol = std::max(uk.nm.fabs_tol, opt.warm_fabs_tol);
        }
        const KrigingModel km =
            fit_uk(model.components[l].score, fold.design.uk_train, fold.train_data.locations, uk);
        fitted[f] = km.cov;
        pred[f] = predict_uk(km, fold.test_locs, fold.design.uk_test, false).mean;
        loadings[f] = model.loadings();
        truth[f] = fold.test_standardized * model.components[l].loading;
      });

      SelectionTraceRow row;
      row.component = l + 1;
      row.lambda = lambda;
      row.feasible = std::all_of(feasible.begin(), feasible.end(), [](char c) { return c != 0; });
      if (row.feasible) {
        const Eigen::Index n = data.n();
        Eigen::VectorXd obs(n), hat(n);
        double frob_sq = 0.0;
        Eigen::Index at = 0;
        for (std::size_t f = 0; f < nf; ++f) {
          const auto m = static_cast<Eigen::Index>(ws.fold(f).test.size());
          obs.segment(at, m) = truth[f];
          hat.segment(at, m) = pred[f];
          at += m;
          Eigen::MatrixXd u_hat(m, l + 1);
          u_hat.leftCols(l) = chosen_pred[f];
          u_hat.col(l) = pred[f];
          frob_sq += (ws.fold(f).test_standardized - u_hat * loadings[f].transpose()).squaredNorm();
          warm[f] = fitted[f];
        }
        const bool constant = (obs.array() == obs(0)).all();
        row.score_r2 = constant ? 0.0 : r2(obs, hat);
        row.frobenius = std::sqrt(frob_sq);
        const double value = criterion == SelectionCriterion::max_scores ? row.score_r2 : -row.frobenius;
        const double tol = 1e-9 * std::max(1.0, std::abs(best_value));
        if (!best_lambda || value >= best_value - tol) {
          best_value = best_lambda ? std::max(best_value, value) : value;
          best_lambda = lambda;
          best_pred = pred;
          best_trace = choice.trace.size();
        }
      }
      choice.trace.push_back(row);
    }
    if (!best_lambda) throw NumericalError("no feasible penalty for component " + std::to_string(l + 1));
    choice.trace[best_trace].chosen = true;
    choice.lambdas.push_back(*best_lambda);
    for (std::size_t f = 0; f < nf; ++f) {
      Eigen::MatrixXd next(chosen_pred[f].rows(), l + 1);
      next.leftCols(l) = chosen_pred[f];
      next.col(l) = best_pred[f];
      chosen_pred[f] = std::move(next);
    }
  }
  return choice;
}

inline PenaltyChoice select_lambda_scores(const ExposureDataset& data, const DesignBuilder& builder,
                                          const PipelineOptions& base, const SelectionOptions& opt) {
  return select_lambda(data, builder, base, SelectionCriterion::max_scores, opt);
}

inline PenaltyChoice select_lambda_pollutants(const ExposureDataset& data,
                                              const DesignBuilder& builder,
                                              const PipelineOptions& base,
                                              const SelectionOptions& opt) {
  return select_lambda(data, builder, base, SelectionCriterion::max_pollutants, opt);
}

}  // namespace predpca
