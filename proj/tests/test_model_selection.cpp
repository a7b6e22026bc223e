#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "predpca/model_selection.hpp"
#include "test_util.hpp"

using namespace predpca;
using testutil::random_locations;
using testutil::random_matrix;

namespace {

struct Spatial {
  std::vector<Location> locs;
  Eigen::MatrixXd gis;     // n x 2
  Eigen::MatrixXd spline;  // n x 9
};

Spatial spatial(int n, Rng& rng) {
  Spatial s;
  s.locs = random_locations(n, 100.0, rng);
  s.gis.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    s.gis(i, 0) = std::sin(s.locs[i].x_km / 20.0) + 0.3 * rng.normal();
    s.gis(i, 1) = std::cos(s.locs[i].y_km / 25.0) + 0.3 * rng.normal();
  }
  s.spline = tps_basis(s.locs, 10, 0).without_intercept();
  return s;
}

ExposureDataset dataset(const Spatial& s, const Eigen::MatrixXd& raw, bool scale = false) {
  return ExposureDataset::make({}, s.locs, {}, raw, scale);
}

// Exposures linear in the GIS columns plus a little white noise.
Eigen::MatrixXd spanned(const Spatial& s, int p, double noise, Rng& rng) {
  const Eigen::MatrixXd B = random_matrix(2, p, rng);
  return s.gis * B + noise * random_matrix(s.gis.rows(), p, rng);
}

PipelineOptions pipeline(PcaMethod method, int k, double lambda = 0.0) {
  PipelineOptions o;
  o.method = method;
  o.k = k;
  o.lambdas.assign(static_cast<std::size_t>(k), lambda);
  return o;
}

}  // namespace

TEST(Metrics, R2Examples) {
  Eigen::VectorXd obs(5);
  obs << 1, 3, 2, 5, 4;
  EXPECT_DOUBLE_EQ(r2(obs, obs), 1.0);
  EXPECT_DOUBLE_EQ(r2(obs, Eigen::VectorXd::Constant(5, obs.mean())), 0.0);
  Eigen::VectorXd bad(5);
  bad << 5, 1, 4, 0, 2;
  EXPECT_EQ(r2(obs, bad), 0.0);
  Eigen::VectorXd half(5);
  half << 1, 3, 2, 5, 3;  // SSE 1, SST 10
  EXPECT_NEAR(r2(obs, half), 0.9, 1e-15);
}

TEST(Metrics, R2Errors) {
  try {
    r2(Eigen::VectorXd::Constant(4, 2.0), Eigen::VectorXd::Zero(4));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("undefined R2"), std::string::npos);
  }
  EXPECT_THROW(r2(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(4)), ValidationError);
  EXPECT_THROW(r2(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)), ValidationError);
}

TEST(Metrics, MseExamples) {
  Eigen::VectorXd a(4), b(4);
  a << 1, 2, 3, 4;
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_NEAR(mse(a, (a.array() + 0.7).matrix()), 0.49, 1e-15);
  b << 1.5, 2, 2, 5;  // squared errors 0.25, 0, 1, 1
  EXPECT_DOUBLE_EQ(mse(a, b), 0.5625);
  EXPECT_THROW(mse(a, Eigen::VectorXd::Ones(3)), ValidationError);
}

TEST(Metrics, AverageAbsCorrelation) {
  Eigen::MatrixXd s(4, 3);
  s << 1, 2, -1,
       2, 4, -2,
       3, 6, -3,
       4, 8, -5;
  const double c02 = std::abs(correlation(s.col(0), s.col(2)));
  EXPECT_NEAR(average_abs_correlation(s), (1.0 + c02 + c02) / 3.0, 1e-14);
  EXPECT_EQ(average_abs_correlation(s.leftCols(1)), 0.0);
}

TEST(Folds, BalancedAndDeterministic) {
  for (std::size_t n : {10u, 37u, 284u}) {
    const auto f = make_folds(n, 10, 5);
    std::vector<int> sizes(10, 0);
    for (int l : f.labels) {
      ASSERT_GE(l, 1);
      ASSERT_LE(l, 10);
      ++sizes[static_cast<std::size_t>(l - 1)];
    }
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    EXPECT_LE(*hi - *lo, 1);
    EXPECT_EQ(f.labels, make_folds(n, 10, 5).labels);
    std::vector<std::size_t> all = f.train_rows(3);
    const auto test = f.test_rows(3);
    all.insert(all.end(), test.begin(), test.end());
    EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), n);
  }
  EXPECT_NE(make_folds(100, 10, 1).labels, make_folds(100, 10, 2).labels);
  EXPECT_THROW(make_folds(5, 10, 0), ValidationError);
  EXPECT_THROW(make_folds(5, 1, 0), ValidationError);
}

TEST(Frobenius, PerfectPredictionGivesInSampleResidual) {
  Rng rng(3);
  const Eigen::MatrixXd X = testutil::centered(random_matrix(40, 6, rng));
  const std::vector<double> zero(3, 0.0);
  const PcModel m = fit_traditional(X, 3, zero);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X);
  const double oracle = svd.singularValues().tail(3).norm();
  EXPECT_NEAR(frobenius_loss(X, m.scores(), m.loadings()), oracle, 1e-9);
}

TEST(PenaltyGrid, Shape) {
  const auto g = penalty_grid(4.0, 5, 1e-2);
  ASSERT_EQ(g.size(), 5u);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_NEAR(g[1], 0.04, 1e-15);
  EXPECT_NEAR(g[4], 4.0, 1e-14);
  EXPECT_NEAR(g[2] / g[1], g[3] / g[2], 1e-12);
  EXPECT_EQ(penalty_grid(4.0, 1), std::vector<double>{0.0});
  EXPECT_EQ(penalty_grid(0.0, 5), std::vector<double>{0.0});
}

TEST(CvPipeline, SpannedDataPredictsWell) {
  Rng rng(4);
  const Spatial s = spatial(120, rng);
  const auto data = dataset(s, spanned(s, 6, 1e-3, rng));
  const auto builder = fixed_design_builder(s.gis, s.spline);
  for (PcaMethod method : {PcaMethod::traditional, PcaMethod::predictive}) {
    const auto rep = cv_pipeline(data, builder, pipeline(method, 2), 10, 7);
    for (double v : rep.r2) EXPECT_GT(v, 0.95) << to_string(method);
  }
}

TEST(CvPipeline, LeaveOneOutMatchesLoop) {
  Rng rng(5);
  const Spatial s = spatial(30, rng);
  Eigen::MatrixXd raw = spanned(s, 5, 0.5, rng);
  const auto data = dataset(s, raw, true);
  const auto builder = fixed_design_builder(s.gis, s.spline);
  const auto rep = cv_pipeline(data, builder, pipeline(PcaMethod::traditional, 2), 30, 1);

  // Oracle: explicit loop, each row held out in turn, everything refit by hand.
  const std::vector<double> zero(2, 0.0);
  for (int i = 0; i < 30; ++i) {
    std::vector<std::size_t> train;
    for (int r = 0; r < 30; ++r)
      if (r != i) train.push_back(static_cast<std::size_t>(r));
    const Eigen::MatrixXd raw_tr = take_rows(raw, train);
    const Eigen::RowVectorXd mean = raw_tr.colwise().mean();
    Eigen::RowVectorXd sd(5);
    for (int j = 0; j < 5; ++j) sd(j) = std::sqrt((raw_tr.col(j).array() - mean(j)).square().sum() / 28.0);
    const Eigen::MatrixXd X_tr = (raw_tr.rowwise() - mean).array().rowwise() / sd.array();
    const Eigen::RowVectorXd x_te = (raw.row(i) - mean).array() / sd.array();
    const PcModel m = fit_traditional(X_tr, 2, zero);
    const std::vector<Location> locs_tr = take_rows(s.locs, train);
    const UkDesign z_tr = UkDesign::intercept_plus(take_rows(s.gis, train));
    const UkDesign z_te = UkDesign::intercept_plus(s.gis.row(i));
    const std::vector<Location> at{s.locs[static_cast<std::size_t>(i)]};
    for (int l = 0; l < 2; ++l) {
      const KrigingModel km = fit_uk(m.components[l].score, z_tr, locs_tr);
      const double pred = predict_uk(km, at, z_te, false).mean(0);
      EXPECT_NEAR(rep.predicted(i, l), pred, 1e-8) << i << "," << l;
      EXPECT_NEAR(rep.observed(i, l), x_te.dot(m.components[l].loading), 1e-8) << i << "," << l;
    }
  }
}

TEST(CvPipeline, DeterministicAcrossRunsAndThreads) {
  Rng rng(6);
  const Spatial s = spatial(80, rng);
  const auto data = dataset(s, spanned(s, 5, 0.3, rng), true);
  const auto builder = fixed_design_builder(s.gis, s.spline);
  const auto opt = pipeline(PcaMethod::predictive, 2, 0.1);
  const auto a = cv_pipeline(data, builder, opt, 10, 11, 1);
  const auto b = cv_pipeline(data, builder, opt, 10, 11, 1);
  const auto c = cv_pipeline(data, builder, opt, 10, 11, 3);
  EXPECT_EQ(a.predicted, b.predicted);
  EXPECT_EQ(a.r2, b.r2);
  EXPECT_EQ(a.predicted, c.predicted);
  EXPECT_EQ(a.frobenius_loss, c.frobenius_loss);
}

TEST(CvPipeline, ReportRanges) {
  Rng rng(7);
  const Spatial s = spatial(80, rng);
  const auto data = dataset(s, spanned(s, 5, 1.0, rng), true);
  const auto rep = cv_pipeline(data, fixed_design_builder(s.gis, s.spline),
                               pipeline(PcaMethod::traditional, 3, 0.5), 10, 3);
  for (double v : rep.r2) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  for (double v : rep.pollutant_r2) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GE(rep.sparseness, 0.0);
  EXPECT_LE(rep.sparseness, 1.0);
  EXPECT_EQ(rep.score_correlation.rows(), 3);
}

TEST(CvPipeline, FoldTooSmall) {
  Rng rng(8);
  const auto locs = random_locations(12, 50.0, rng);
  const auto data = ExposureDataset::make({}, locs, {}, random_matrix(12, 3, rng));
  // 9 training rows against an intercept plus 6 GIS columns.
  const auto builder = fixed_design_builder(random_matrix(12, 6, rng), Eigen::MatrixXd(12, 0));
  try {
    cv_pipeline(data, builder, pipeline(PcaMethod::traditional, 1), 4, 0);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("fold too small"), std::string::npos) << e.what();
  }
}

TEST(SelectLambda, ZeroGridReducesToUnpenalizedCv) {
  Rng rng(9);
  const Spatial s = spatial(70, rng);
  const auto data = dataset(s, spanned(s, 5, 0.5, rng), true);
  const auto builder = fixed_design_builder(s.gis, s.spline);
  SelectionOptions opt;
  opt.grid = {0.0};
  opt.seed = 21;
  opt.warm_start_uk = false;
  for (auto criterion : {SelectionCriterion::max_scores, SelectionCriterion::max_pollutants}) {
    const auto choice = select_lambda(data, builder, pipeline(PcaMethod::predictive, 2), criterion, opt);
    EXPECT_EQ(choice.lambdas, (std::vector<double>{0.0, 0.0}));
    ASSERT_EQ(choice.trace.size(), 2u);
    const auto rep = cv_pipeline(data, builder, pipeline(PcaMethod::predictive, 2), 10, 21);
    EXPECT_NEAR(choice.trace[0].score_r2, rep.r2[0], 1e-10);
    EXPECT_NEAR(choice.trace[1].score_r2, rep.r2[1], 1e-10);
    EXPECT_NEAR(choice.trace[1].frobenius, rep.frobenius_loss, 1e-8);
  }
}

TEST(SelectLambda, GridMustContainZero) {
  Rng rng(10);
  const Spatial s = spatial(40, rng);
  const auto data = dataset(s, spanned(s, 4, 0.5, rng));
  SelectionOptions opt;
  opt.grid = {0.1, 0.2};
  EXPECT_THROW(select_lambda_scores(data, fixed_design_builder(s.gis, s.spline),
                                    pipeline(PcaMethod::traditional, 1), opt),
               ValidationError);
}

TEST(SelectLambda, TraceCoversGridAndChoiceIsOptimal) {
  Rng rng(11);
  const Spatial s = spatial(70, rng);
  const auto data = dataset(s, spanned(s, 6, 0.8, rng), true);
  SelectionOptions opt;
  opt.grid_size = 6;
  opt.seed = 2;
  const auto choice = select_lambda_pollutants(data, fixed_design_builder(s.gis, s.spline),
                                               pipeline(PcaMethod::traditional, 2), opt);
  ASSERT_EQ(choice.lambdas.size(), 2u);
  for (int comp = 1; comp <= 2; ++comp) {
    int rows = 0, chosen = 0;
    double best = std::numeric_limits<double>::infinity();
    double chosen_value = 0.0, chosen_lambda = -1.0;
    for (const auto& r : choice.trace) {
      if (r.component != comp) continue;
      ++rows;
      if (!r.feasible) continue;
      best = std::min(best, r.frobenius);
      if (r.chosen) {
        ++chosen;
        chosen_value = r.frobenius;
        chosen_lambda = r.lambda;
      }
    }
    EXPECT_EQ(rows, 6);
    EXPECT_EQ(chosen, 1);
    EXPECT_LE(chosen_value, best * (1.0 + 1e-9));
    EXPECT_EQ(chosen_lambda, choice.lambdas[static_cast<std::size_t>(comp - 1)]);
  }
}

TEST(SelectLambda, SpannedDataFavoursNoPenalty) {
  Rng rng(12);
  const Spatial s = spatial(80, rng);
  const auto data = dataset(s, spanned(s, 6, 1e-3, rng));
  SelectionOptions opt;
  opt.grid_size = 6;
  opt.seed = 4;
  const auto choice = select_lambda_pollutants(data, fixed_design_builder(s.gis, s.spline),
                                               pipeline(PcaMethod::traditional, 1), opt);
  double at_zero = 0.0, best = std::numeric_limits<double>::infinity();
  for (const auto& r : choice.trace) {
    if (!r.feasible) continue;
    if (r.lambda == 0.0) at_zero = r.frobenius;
    best = std::min(best, r.frobenius);
  }
  EXPECT_LE(at_zero, best * (1.0 + 1e-6));
}

TEST(SelectLambda, NoisePollutantGetsZeroed) {
  // Oracle: the unpenalized fit never zeroes a loading; the selected penalty
  // should zero the pure-noise pollutant in a clear share of seeds.
  int zeroed = 0, zeroed_at_zero = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + static_cast<std::uint64_t>(seed));
    const Spatial s = spatial(60, rng);
    Eigen::MatrixXd raw(60, 6);
    raw.leftCols(5) = spanned(s, 5, 0.3, rng);
    for (int i = 0; i < 60; ++i) raw(i, 5) = rng.normal();
    const auto data = dataset(s, raw, true);
    const auto builder = fixed_design_builder(s.gis, s.spline);
    SelectionOptions opt;
    opt.grid_size = 8;
    opt.seed = static_cast<std::uint64_t>(seed);
    const auto choice = select_lambda_scores(data, builder, pipeline(PcaMethod::traditional, 1), opt);
    const PcModel fit = fit_traditional(data, 1, choice.lambdas);
    const PcModel plain = fit_traditional(data, 1, std::vector<double>{0.0});
    zeroed += fit.components[0].loading(5) == 0.0;
    zeroed_at_zero += plain.components[0].loading(5) == 0.0;
  }
  EXPECT_EQ(zeroed_at_zero, 0);
  EXPECT_GE(zeroed, 5);
}

TEST(Leakage, CorruptedTestRowsLeaveTrainingArtifactsUnchanged) {
  Rng rng(13);
  const int n = 60;
  const auto locs = random_locations(n, 100.0, rng);
  RawCovariateTable cov;
  cov.names = {"dist_road", "dist_rail", "buf_a", "buf_b"};
  for (const auto& nm : cov.names) cov.kinds.push_back(kind_from_name(nm));
  cov.values.resize(n, 4);
  for (int i = 0; i < n; ++i)
    cov.values.row(i) << rng.uniform(10, 20000), rng.uniform(10, 9000), rng.normal(), rng.uniform(0, 1);
  const Eigen::MatrixXd raw = random_matrix(n, 5, rng).cwiseAbs();
  DesignOptions dopt;
  dopt.gis_target = FixedComponents{2};
  dopt.spline_rank = 6;

  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) (i % 6 == 0 ? test : train).push_back(i);

  auto run = [&](const Eigen::MatrixXd& x, const RawCovariateTable& c) {
    const auto data = ExposureDataset::make({}, locs, {}, x, true);
    return fit_fold(data, refit_design_builder(c, locs, dopt), train, test,
                    pipeline(PcaMethod::predictive, 2, 0.05));
  };
  const FoldResult clean = run(raw, cov);
  for (int mutation = 0; mutation < 3; ++mutation) {
    Eigen::MatrixXd x = raw;
    RawCovariateTable c = cov;
    for (std::size_t i : test) {
      const auto r = static_cast<Eigen::Index>(i);
      if (mutation != 1) x.row(r).array() = 1e6 * (mutation + 1);
      if (mutation != 0) c.values.row(r).array() *= 37.0;
    }
    const FoldResult dirty = run(x, c);
    EXPECT_EQ(dirty.model.centering, clean.model.centering);
    EXPECT_EQ(dirty.model.scaling, clean.model.scaling);
    EXPECT_EQ(dirty.model.loadings(), clean.model.loadings());
    EXPECT_EQ(dirty.model.scores(), clean.model.scores());
    for (int l = 0; l < 2; ++l) {
      EXPECT_EQ(dirty.kriging[l].alpha, clean.kriging[l].alpha);
      EXPECT_EQ(dirty.kriging[l].cov.phi, clean.kriging[l].cov.phi);
      EXPECT_EQ(dirty.kriging[l].cov.psi, clean.kriging[l].cov.psi);
    }
    EXPECT_NE(dirty.truth == clean.truth && dirty.predicted == clean.predicted, true) << mutation;
  }
}
