#pragma once

// Simulation studies on the synthetic world: a two-scenario exposure
// generator X[,j] = Zt gamma_j + eps_j, the repeated train/test study that
// compares traditional and predictive (sparse) PCA, and a simulated cohort
// whose endpoints depend on individual pollutants.

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "predpca/design.hpp"
#include "predpca/error.hpp"
#include "predpca/kriging.hpp"
#include "predpca/model_selection.hpp"
#include "predpca/parallel.hpp"
#include "predpca/rng.hpp"
#include "predpca/spca.hpp"
#include "predpca/world.hpp"

namespace predpca {

enum class Scenario { high_predictability = 1, low_predictability = 2 };

/// Pollutant groups of the presets (1-based pollutant numbers).
struct PollutantGroups {
  std::vector<int> gis{1, 2, 3, 4, 9};
  std::vector<int> spline{6, 7, 8, 10, 11};
  std::vector<int> mixed{5, 12, 13, 14};
  std::vector<int> noise{15, 16, 17, 18, 19};
  std::vector<std::array<int, 2>> near_duplicates{{1, 2}, {7, 8}};
};

/// Knobs from which a preset's gamma and sigma are drawn.
struct PresetShape {
  double gis_strength = 1.0, spline_strength = 1.0, mixed_strength = 1.0;
  double gis_sigma = 0.3, spline_sigma = 0.3, mixed_sigma = 0.3, noise_sigma = 1.0;
  double spread = 0.35;           // within-group deviation from the group direction
  double duplicate_spread = 0.05; // deviation of a near-duplicate from its partner
  std::uint64_t seed = 7;
};

struct SimConfig {
  Scenario scenario = Scenario::high_predictability;
  int n_locations = 400;
  int gis_components = 5;
  int spline_rank = 10;
  std::uint64_t knot_seed = 0;
  double mean_level = 10.0;
  std::vector<std::string> column_names;  // Zt columns
  Eigen::MatrixXd gamma;                  // p x m, row j is gamma_j
  Eigen::VectorXd sigma;                  // p
  std::uint64_t seed = 1;
  std::uint64_t world_seed = kDefaultWorldSeed;
  int pool_size = 970;

  int p() const { return static_cast<int>(gamma.rows()); }
  int m() const { return gis_components + spline_rank - 1; }

  void validate() const {
    if (gamma.cols() != m()) throw ValidationError("gamma must have one column per Zt column");
    if (sigma.size() != gamma.rows()) throw ValidationError("sigma must have one entry per pollutant");
    if (!gamma.allFinite() || !sigma.allFinite() || (sigma.array() < 0.0).any())
      throw ValidationError("gamma and sigma must be finite, sigma >= 0");
    if (n_locations < 2 || n_locations > pool_size) throw ValidationError("bad location count");
    if (static_cast<int>(column_names.size()) != m()) throw ValidationError("Zt column names do not match gamma");
  }
};

inline std::vector<std::string> generating_column_names(int gis, int spline_rank) {
  std::vector<std::string> names;
  for (int c = 0; c < gis; ++c) names.push_back("gis_" + std::to_string(c + 1));
  for (int c = 0; c < spline_rank - 1; ++c) names.push_back("tps_" + std::to_string(c + 1));
  return names;
}

inline PresetShape preset_shape(Scenario s) {
  PresetShape shape;
  if (s == Scenario::high_predictability) {
    shape.gis_strength = 1.0;
    shape.spline_strength = 0.9;
    shape.mixed_strength = 0.7;
    shape.gis_sigma = 0.2;
    shape.spline_sigma = 0.25;
    shape.mixed_sigma = 0.75;
    shape.noise_sigma = 0.35;
  } else {
    shape.gis_strength = 0.8;
    shape.spline_strength = 1.0;
    shape.mixed_strength = 0.8;
    shape.gis_sigma = 1.2;
    shape.spline_sigma = 1.0;
    shape.mixed_sigma = 0.8;
    shape.noise_sigma = 2.0;
  }
  return shape;
}

/// Builds gamma and sigma from group directions. GIS-driven pollutants load
/// only on GIS columns, spline-driven ones only on spline columns, mixed ones
/// on both, and noise pollutants on nothing.
inline SimConfig make_sim_config(Scenario scenario, const PresetShape& shape,
                                 const PollutantGroups& groups = {}) {
  SimConfig cfg;
  cfg.scenario = scenario;
  cfg.column_names = generating_column_names(cfg.gis_components, cfg.spline_rank);
  const int g = cfg.gis_components, sdim = cfg.spline_rank - 1, m = cfg.m();
  constexpr int p = 19;
  cfg.gamma = Eigen::MatrixXd::Zero(p, m);
  cfg.sigma = Eigen::VectorXd::Zero(p);
  Rng rng(shape.seed);

  auto random_unit = [&](int offset, int len) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
    for (int c = 0; c < len; ++c) v(offset + c) = rng.normal();
    return Eigen::VectorXd(v / v.norm());
  };
  const Eigen::VectorXd dir_gis = random_unit(0, g);
  const Eigen::VectorXd dir_spline = random_unit(g, sdim);
  const Eigen::VectorXd dir_mixed = (random_unit(0, g) + random_unit(g, sdim)).normalized();

  auto fill = [&](const std::vector<int>& members, const Eigen::VectorXd& dir, int offset, int len,
                  double strength, double sigma) {
    for (int j : members) {
      Eigen::VectorXd v = dir + shape.spread * random_unit(offset, len);
      cfg.gamma.row(j - 1) = strength * v.normalized().transpose();
      cfg.sigma(j - 1) = sigma;
    }
  };
  fill(groups.gis, dir_gis, 0, g, shape.gis_strength, shape.gis_sigma);
  fill(groups.spline, dir_spline, g, sdim, shape.spline_strength, shape.spline_sigma);
  fill(groups.mixed, dir_mixed, 0, m, shape.mixed_strength, shape.mixed_sigma);
  for (int j : groups.noise) cfg.sigma(j - 1) = shape.noise_sigma;
  for (const auto& pair : groups.near_duplicates) {
    const Eigen::VectorXd base = cfg.gamma.row(pair[0] - 1).transpose();
    const Eigen::VectorXd v = base.normalized() + shape.duplicate_spread * random_unit(0, m);
    cfg.gamma.row(pair[1] - 1) = base.norm() * v.normalized().transpose();
  }
  return cfg;
}

inline SimConfig preset(Scenario s) { return make_sim_config(s, preset_shape(s)); }

/// Zt = [standardized GIS scores | standardized spline columns] at `locs`,
/// built from those locations alone.
inline Eigen::MatrixXd generating_design(const RawCovariateTable& raw, std::span<const Location> locs,
                                         int gis_components, int spline_rank, std::uint64_t knot_seed) {
  const CleanCovariateMatrix clean = filter_covariates(raw);
  const GisScoreMatrix gis = reduce_covariates_pca(clean, FixedComponents{gis_components});
  const SplineBasis spline = tps_basis(locs, spline_rank, knot_seed);
  Eigen::MatrixXd zt(raw.rows(), gis_components + spline_rank - 1);
  for (int c = 0; c < gis_components; ++c) {
    const Eigen::VectorXd col = gis.scores.col(c);
    zt.col(c) = (col.array() - col.mean()) / sample_sd(col);
  }
  zt.rightCols(spline_rank - 1) = spline.without_intercept();
  return zt;
}

/// Raw exposures mean_level + Zt gamma_j + eps_j.
inline Eigen::MatrixXd simulate_pollutants(const SimConfig& cfg, const Eigen::MatrixXd& zt, Rng& rng) {
  Eigen::MatrixXd x = (zt * cfg.gamma.transpose()).array() + cfg.mean_level;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) += cfg.sigma(j) * rng.normal();
  return x;
}

struct SimulatedExposure {
  ExposureDataset data;
  RawCovariateTable covariates;
  Eigen::MatrixXd zt;
};

inline SimulatedExposure gen_exposure(const SimConfig& cfg, const SyntheticWorld& world,
                                      std::vector<Location> locs, std::uint64_t seed) {
  cfg.validate();
  SimulatedExposure out;
  out.covariates = world.covariates(locs);
  out.zt = generating_design(out.covariates, locs, cfg.gis_components, cfg.spline_rank, cfg.knot_seed);
  Rng rng(seed);
  Eigen::MatrixXd raw = simulate_pollutants(cfg, out.zt, rng);
  out.data = ExposureDataset::make({}, std::move(locs), {}, std::move(raw));
  return out;
}

/// Selection settings for simulation replicates: a coarser penalty grid.
inline SelectionOptions coarse_selection() {
  SelectionOptions s;
  s.grid_size = 8;
  return s;
}

enum class PenaltyMode { none, max_scores, max_pollutants };

inline const char* to_string(PenaltyMode m) {
  switch (m) {
    case PenaltyMode::none: return "none";
    case PenaltyMode::max_scores: return "max_scores";
    default: return "max_pollutants";
  }
}

struct SimCellSpec {
  PcaMethod method;
  PenaltyMode penalty;
};

inline std::vector<SimCellSpec> all_sim_cells() {
  std::vector<SimCellSpec> cells;
  for (PenaltyMode p : {PenaltyMode::none, PenaltyMode::max_scores, PenaltyMode::max_pollutants})
    for (PcaMethod m : {PcaMethod::traditional, PcaMethod::predictive}) cells.push_back({m, p});
  return cells;
}

struct SimStudyOptions {
  int reps = 100;
  int n_train = 300;
  int n_test = 100;
  int k = 3;
  std::vector<SimCellSpec> cells = all_sim_cells();
  SelectionOptions selection = coarse_selection();
  FitUkOptions uk;
  DesignOptions design;
  int threads = 1;
};

struct CellOutcome {
  std::vector<double> r2;  // descending
  double avg_abs_correlation = 0.0;
  double sparseness = 0.0;
  std::vector<double> lambdas;
};

struct SimReplicate {
  int index = 0;
  std::uint64_t seed = 0;
  std::vector<CellOutcome> cells;  // aligned with SimStudyOptions::cells
};

struct SimCellSummary {
  SimCellSpec spec;
  std::vector<double> r2;
  double avg_abs_correlation = 0.0;
  double sparseness = 0.0;
};

struct SimStudyResult {
  std::vector<SimReplicate> replicates;
  std::vector<SimCellSummary> summary;
};

/// Fits one method/penalty cell on the training set and scores it on the test set.
inline CellOutcome evaluate_cell(const ExposureDataset& train, const FittedDesign& design,
                                 const DesignBuilder& builder, const Eigen::MatrixXd& test_raw,
                                 std::span<const Location> test_locs, const UkDesign& uk_test,
                                 const SimCellSpec& spec, int k, const SelectionOptions& sel,
                                 const FitUkOptions& uk) {
  std::vector<double> lambdas(static_cast<std::size_t>(k), 0.0);
  if (spec.penalty != PenaltyMode::none) {
    PipelineOptions base;
    base.method = spec.method;
    base.k = k;
    base.uk = uk;
    const auto crit = spec.penalty == PenaltyMode::max_scores ? SelectionCriterion::max_scores
                                                               : SelectionCriterion::max_pollutants;
    lambdas = select_lambda(train, builder, base, crit, sel).lambdas;
  }
  const CovariateBasis basis = design.covariate_basis();
  const PcModel model = fit_pca(train, basis, spec.method, k, lambdas);
  const Eigen::MatrixXd truth = project_scores(train.standardize(test_raw), model);
  const UkDesign uk_train = design.uk_design();
  Eigen::MatrixXd predicted(truth.rows(), k);
  for (int l = 0; l < k; ++l) {
    const KrigingModel km = fit_uk(model.components[l].score, uk_train, train.locations, uk);
    predicted.col(l) = predict_uk(km, test_locs, uk_test, false).mean;
  }

  CellOutcome out;
  for (int l = 0; l < k; ++l) {
    const Eigen::VectorXd t = truth.col(l);
    const bool constant = (t.array() == t(0)).all();
    out.r2.push_back(constant ? 0.0 : r2(t, predicted.col(l)));
  }
  std::sort(out.r2.begin(), out.r2.end(), std::greater<>());
  out.avg_abs_correlation = average_abs_correlation(truth);
  out.sparseness = model.sparseness();
  out.lambdas = lambdas;
  return out;
}

/// Draws the replicate's locations, simulates exposures, splits them into
/// training and test sets and evaluates every requested cell.
inline SimReplicate run_sim_replicate(const SimConfig& cfg, const SyntheticWorld& world,
                                      const std::vector<Location>& pool, int index,
                                      const SimStudyOptions& opt) {
  const int n = opt.n_train + opt.n_test;
  if (n > static_cast<int>(pool.size())) throw ValidationError("location pool too small");
  SimReplicate rep;
  rep.index = index;
  rep.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(index));
  Rng rng(rep.seed);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  order.resize(static_cast<std::size_t>(n));
  const std::vector<Location> locs = take_rows(pool, order);

  const SimulatedExposure sim = gen_exposure(cfg, world, locs, mix_seed(rep.seed, 1));
  std::vector<std::size_t> train_rows(static_cast<std::size_t>(opt.n_train)), test_rows(static_cast<std::size_t>(opt.n_test));
  std::iota(train_rows.begin(), train_rows.end(), 0);
  std::iota(test_rows.begin(), test_rows.end(), static_cast<std::size_t>(opt.n_train));

  const ExposureDataset train = sim.data.subset(train_rows);
  const RawCovariateTable raw_train = sim.covariates.subset(train_rows);
  const RawCovariateTable raw_test = sim.covariates.subset(test_rows);
  const FittedDesign design = fit_design(raw_train, train.locations, opt.design);
  const DesignBuilder builder = refit_design_builder(raw_train, train.locations, opt.design);
  const Eigen::MatrixXd test_raw = take_rows(sim.data.raw, test_rows);
  const std::vector<Location> test_locs = take_rows(sim.data.locations, test_rows);
  const UkDesign uk_test = design.uk_design_at(raw_test);

  SelectionOptions sel = opt.selection;
  sel.seed = mix_seed(rep.seed, 2);
  sel.threads = 1;
  for (const SimCellSpec& spec : opt.cells)
    rep.cells.push_back(evaluate_cell(train, design, builder, test_raw, test_locs, uk_test, spec,
                                      opt.k, sel, opt.uk));
  return rep;
}

inline std::vector<SimCellSummary> summarize(const std::vector<SimReplicate>& reps,
                                             const std::vector<SimCellSpec>& cells, int k) {
  std::vector<SimCellSummary> out;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    SimCellSummary s{cells[c], std::vector<double>(static_cast<std::size_t>(k), 0.0), 0.0, 0.0};
    for (const auto& r : reps) {
      for (int l = 0; l < k; ++l) s.r2[l] += r.cells[c].r2[l];
      s.avg_abs_correlation += r.cells[c].avg_abs_correlation;
      s.sparseness += r.cells[c].sparseness;
    }
    const double m = static_cast<double>(reps.size());
    for (double& v : s.r2) v /= m;
    s.avg_abs_correlation /= m;
    s.sparseness /= m;
    out.push_back(s);
  }
  return out;
}

inline SimStudyResult run_sim_study(const SimConfig& cfg, const SimStudyOptions& opt) {
  cfg.validate();
  if (opt.reps < 1) throw ValidationError("reps must be >= 1");
  if (opt.n_train + opt.n_test != cfg.n_locations)
    throw ValidationError("train/test split must add up to n_locations");
  const SyntheticWorld world(cfg.world_seed);
  const std::vector<Location> pool = world.location_pool(static_cast<std::size_t>(cfg.pool_size), 0);
  SimStudyResult res;
  res.replicates.resize(static_cast<std::size_t>(opt.reps));
  parallel_for(res.replicates.size(), opt.threads, [&](std::size_t r) {
    res.replicates[r] = run_sim_replicate(cfg, world, pool, static_cast<int>(r), opt);
  });
  res.summary = summarize(res.replicates, opt.cells, opt.k);
  return res;
}

// ---------------------------------------------------------------------------
// Simulated health analysis

struct HealthConfig {
  int n_monitors = 300;
  int n_subjects = 7075;
  int pool_size = 7375;
  double error_sd = 10.0;
  double exposure_scale = 3.0;  // pollutant units per simulated unit, at monitors and subjects alike
  double age_min = 30.0, age_max = 80.0;
  // Category proportions for race, income, education, smoking (codes 0..3).
  std::array<std::vector<double>, 4> proportions{
      std::vector<double>{0.60, 0.18, 0.14, 0.08}, std::vector<double>{0.25, 0.30, 0.28, 0.17},
      std::vector<double>{0.12, 0.28, 0.32, 0.28}, std::vector<double>{0.55, 0.25, 0.12, 0.08}};
  // Y1 = 0.35 P1 + Y_common,  Y2 = 0.6 P5 + 0.6 P8 + Y_common
  std::vector<std::pair<int, double>> y1_pollutants{{1, 0.35}};
  std::vector<std::pair<int, double>> y2_pollutants{{5, 0.6}, {8, 0.6}};
  std::array<double, 5> covariate_effects{0.5, 2.0, -0.5, -1.0, 1.0};  // A, R, I, E, S

  void validate() const {
    if (n_monitors < 10 || n_subjects < 10) throw ValidationError("cohort too small");
    if (n_monitors + n_subjects > pool_size) throw ValidationError("location pool too small");
    if (!(error_sd >= 0.0)) throw ValidationError("error_sd must be >= 0");
    if (!(exposure_scale > 0.0)) throw ValidationError("exposure_scale must be > 0");
    for (const auto& p : proportions)
      if (p.size() != 4) throw ValidationError("categorical covariates need 4 proportions");
  }
};

struct CohortSim {
  ExposureDataset monitors;                  // exposures at monitors
  RawCovariateTable monitor_covariates;
  std::vector<Location> subject_locations;
  RawCovariateTable subject_covariates;
  Eigen::MatrixXd subject_exposure;          // true raw exposures at subjects
  Eigen::MatrixXd subject_factors;           // n_subjects x 5: A, R, I, E, S
  Eigen::VectorXd y1, y2;
};

inline std::vector<std::string> subject_factor_names() { return {"A", "R", "I", "E", "S"}; }

inline CohortSim gen_cohort(const SimConfig& cfg, const HealthConfig& hc, const SyntheticWorld& world,
                            const std::vector<Location>& pool, std::uint64_t seed) {
  cfg.validate();
  hc.validate();
  if (static_cast<int>(pool.size()) < hc.n_monitors + hc.n_subjects)
    throw ValidationError("location pool too small");
  Rng rng(seed);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  order.resize(static_cast<std::size_t>(hc.n_monitors + hc.n_subjects));
  const std::vector<Location> locs = take_rows(pool, order);

  const RawCovariateTable raw = world.covariates(locs);
  const Eigen::MatrixXd zt = generating_design(raw, locs, cfg.gis_components, cfg.spline_rank, cfg.knot_seed);
  Rng exposure_rng(mix_seed(seed, 1));
  const Eigen::MatrixXd x = hc.exposure_scale * simulate_pollutants(cfg, zt, exposure_rng);

  std::vector<std::size_t> mon(static_cast<std::size_t>(hc.n_monitors)), sub(static_cast<std::size_t>(hc.n_subjects));
  std::iota(mon.begin(), mon.end(), 0);
  std::iota(sub.begin(), sub.end(), static_cast<std::size_t>(hc.n_monitors));

  CohortSim c;
  c.monitors = ExposureDataset::make({}, take_rows(locs, mon), {}, take_rows(x, mon));
  c.monitor_covariates = raw.subset(mon);
  c.subject_locations = take_rows(locs, sub);
  c.subject_covariates = raw.subset(sub);
  c.subject_exposure = take_rows(x, sub);

  Rng subject_rng(mix_seed(seed, 2));
  const Eigen::Index ns = hc.n_subjects;
  c.subject_factors.resize(ns, 5);
  for (Eigen::Index i = 0; i < ns; ++i) {
    c.subject_factors(i, 0) = subject_rng.uniform(hc.age_min, hc.age_max);
    for (int f = 0; f < 4; ++f) c.subject_factors(i, f + 1) = subject_rng.categorical(hc.proportions[f]);
  }
  Eigen::VectorXd common = Eigen::VectorXd::Zero(ns);
  for (int f = 0; f < 5; ++f) common += hc.covariate_effects[f] * c.subject_factors.col(f);
  c.y1 = common;
  c.y2 = common;
  for (const auto& [j, b] : hc.y1_pollutants) c.y1 += b * c.subject_exposure.col(j - 1);
  for (const auto& [j, b] : hc.y2_pollutants) c.y2 += b * c.subject_exposure.col(j - 1);
  Rng error_rng(mix_seed(seed, 3));
  for (Eigen::Index i = 0; i < ns; ++i) {
    c.y1(i) += hc.error_sd * error_rng.normal();
    c.y2(i) += hc.error_sd * error_rng.normal();
  }
  return c;
}

struct HealthFit {
  std::vector<std::string> names;  // "intercept", predictors...
  Eigen::VectorXd beta, se, t, p;
  double sigma = 0.0;
  int df = 0;
};

/// OLS of y on [1 | predictors] with two-sided t-test p-values.
inline HealthFit ols_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& predictors,
                         std::vector<std::string> names) {
  const Eigen::Index n = y.size(), q = predictors.cols() + 1;
  if (predictors.rows() != n) throw ValidationError("dimension mismatch");
  if (n <= q) throw ValidationError("too few observations for regression");
  Eigen::MatrixXd design(n, q);
  design.col(0).setOnes();
  design.rightCols(q - 1) = predictors;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < q) throw NumericalError("rank-deficient health design");

  HealthFit fit;
  fit.names.push_back("intercept");
  for (auto& s : names) fit.names.push_back(std::move(s));
  fit.beta = qr.solve(y);
  const Eigen::VectorXd resid = y - design * fit.beta;
  fit.df = static_cast<int>(n - q);
  fit.sigma = std::sqrt(resid.squaredNorm() / fit.df);
  const Eigen::MatrixXd cov = (design.transpose() * design).inverse() * (fit.sigma * fit.sigma);
  fit.se = cov.diagonal().cwiseSqrt();
  fit.t = fit.beta.cwiseQuotient(fit.se);
  fit.p.resize(q);
  const boost::math::students_t dist(fit.df);
  for (Eigen::Index c = 0; c < q; ++c)
    fit.p(c) = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(fit.t(c))));
  return fit;
}

/// Endpoint regressed on predicted scores plus subject factors.
inline HealthFit health_regression(const Eigen::VectorXd& y, const Eigen::MatrixXd& scores,
                                   const Eigen::MatrixXd& factors) {
  Eigen::MatrixXd pred(y.size(), scores.cols() + factors.cols());
  pred << scores, factors;
  std::vector<std::string> names;
  for (Eigen::Index l = 0; l < scores.cols(); ++l) names.push_back("PC" + std::to_string(l + 1));
  for (const auto& f : subject_factor_names()) names.push_back(f);
  return ols_fit(y, pred, std::move(names));
}

struct HealthMethodResult {
  PcaMethod method;
  PcModel model;
  std::vector<double> lambdas;
  std::vector<double> subject_r2;   // per component, predicted vs true at subjects
  HealthFit y1, y2;
};

struct HealthSimOptions {
  int k = 3;
  PenaltyMode penalty = PenaltyMode::max_pollutants;
  SelectionOptions selection = coarse_selection();
  FitUkOptions uk;
  DesignOptions design;
};

struct HealthSimResult {
  std::uint64_t seed = 0;
  std::vector<HealthMethodResult> methods;  // traditional, predictive
};

inline HealthMethodResult run_health_method(const CohortSim& c, PcaMethod method, const HealthSimOptions& opt,
                                            std::uint64_t seed) {
  const FittedDesign design = fit_design(c.monitor_covariates, c.monitors.locations, opt.design);
  std::vector<double> lambdas(static_cast<std::size_t>(opt.k), 0.0);
  if (opt.penalty != PenaltyMode::none) {
    PipelineOptions base;
    base.method = method;
    base.k = opt.k;
    base.uk = opt.uk;
    SelectionOptions sel = opt.selection;
    sel.seed = seed;
    const auto crit = opt.penalty == PenaltyMode::max_scores ? SelectionCriterion::max_scores
                                                              : SelectionCriterion::max_pollutants;
    lambdas = select_lambda(c.monitors, refit_design_builder(c.monitor_covariates, c.monitors.locations, opt.design),
                            base, crit, sel)
                  .lambdas;
  }
  HealthMethodResult r;
  r.method = method;
  r.lambdas = lambdas;
  r.model = fit_pca(c.monitors, design.covariate_basis(), method, opt.k, lambdas);
  const UkDesign uk_train = design.uk_design();
  const UkDesign uk_sub = design.uk_design_at(c.subject_covariates);
  const Eigen::MatrixXd truth = project_scores(c.monitors.standardize(c.subject_exposure), r.model);
  Eigen::MatrixXd u_hat(truth.rows(), opt.k);
  for (int l = 0; l < opt.k; ++l) {
    const KrigingModel km = fit_uk(r.model.components[l].score, uk_train, c.monitors.locations, opt.uk);
    u_hat.col(l) = predict_uk(km, c.subject_locations, uk_sub, false).mean;
    r.subject_r2.push_back(r2(truth.col(l), u_hat.col(l)));
  }
  r.y1 = health_regression(c.y1, u_hat, c.subject_factors);
  r.y2 = health_regression(c.y2, u_hat, c.subject_factors);
  return r;
}

inline HealthSimResult run_health_sim(const SimConfig& cfg, const HealthConfig& hc, const HealthSimOptions& opt,
                                      std::uint64_t seed) {
  const SyntheticWorld world(cfg.world_seed);
  const std::vector<Location> pool = world.location_pool(static_cast<std::size_t>(hc.pool_size), 1, 0.75);
  const CohortSim cohort = gen_cohort(cfg, hc, world, pool, seed);
  HealthSimResult res;
  res.seed = seed;
  for (PcaMethod m : {PcaMethod::traditional, PcaMethod::predictive})
    res.methods.push_back(run_health_method(cohort, m, opt, mix_seed(seed, 4)));
  return res;
}

/// Component with the largest |loading| on pollutant `j` (1-based).
inline int component_carrying(const PcModel& model, int j) {
  int best = 0;
  for (int l = 1; l < model.k(); ++l)
    if (std::abs(model.components[l].loading(j - 1)) > std::abs(model.components[best].loading(j - 1))) best = l;
  return best;
}

/// Pollutants (1-based) with nonzero loading, ordered by decreasing |loading|.
inline std::vector<int> mixture_members(const Eigen::VectorXd& loading, double min_abs = 0.0) {
  std::vector<int> idx;
  for (Eigen::Index j = 0; j < loading.size(); ++j)
    if (loading(j) != 0.0 && std::abs(loading(j)) >= min_abs) idx.push_back(static_cast<int>(j) + 1);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return std::abs(loading(a - 1)) > std::abs(loading(b - 1));
  });
  return idx;
}

}  // namespace predpca
