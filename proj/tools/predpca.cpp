// predpca command-line interface.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "predpca/predpca.hpp"

namespace fs = std::filesystem;
using namespace predpca;
using io::format_double;
using io::json;

namespace {

struct Common {
  std::string out;
  int threads = 0;
  int resolved_threads() const { return threads > 0 ? threads : default_threads(); }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--out", c.out, "Output directory")->required();
  app->add_option("--threads", c.threads, "Worker threads (default: PREDPCA_THREADS or hardware)");
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + format_double(v[i]);
  return s;
}

class OutputDir {
 public:
  OutputDir(const std::string& dir, io::RunManifest& manifest) : dir_(dir), manifest_(manifest) {
    fs::create_directories(dir_);
  }
  void write(const std::string& name, const std::string& content) {
    io::atomic_write(dir_ / name, content);
    manifest_.outputs.push_back(name);
  }
  void finish() { io::atomic_write(dir_ / "manifest.json", io::dump(manifest_.to_json())); }

 private:
  fs::path dir_;
  io::RunManifest& manifest_;
};

// Exposures aligned to design rows by location id.
struct FitInputs {
  io::DesignTable design;
  ExposureDataset data;
};

FitInputs load_fit_inputs(const std::string& design_path, const std::string& exposures_path, bool scale,
                          io::RunManifest& manifest) {
  manifest.add_input(design_path);
  manifest.add_input(exposures_path);
  FitInputs in;
  in.design = io::design_from(io::read_located(design_path));
  const io::LocatedTable ex = io::read_located(exposures_path).select_ids(in.design.ids, exposures_path);
  in.data = ExposureDataset::make(in.design.ids, in.design.locations, ex.names, ex.values, scale);
  return in;
}

std::vector<double> expand_lambdas(const std::vector<double>& given, int k) {
  if (given.empty()) return std::vector<double>(static_cast<std::size_t>(k), 0.0);
  if (given.size() == 1) return std::vector<double>(static_cast<std::size_t>(k), given[0]);
  if (static_cast<int>(given.size()) != k) throw ValidationError("--lambda needs 1 or k values");
  return given;
}

SelectionCriterion criterion_from(const std::string& s) {
  if (s == "scores") return SelectionCriterion::max_scores;
  if (s == "pollutants") return SelectionCriterion::max_pollutants;
  throw ValidationError("unknown selection criterion: " + s);
}

std::string loadings_csv(const PcModel& m) {
  io::CsvWriter w({"pollutant", "component", "loading", "lambda"});
  for (int l = 0; l < m.k(); ++l)
    for (std::size_t j = 0; j < m.pollutant_names.size(); ++j)
      w.row({m.pollutant_names[j], "PC" + std::to_string(l + 1),
             format_double(m.components[l].loading(static_cast<Eigen::Index>(j))),
             format_double(m.components[l].lambda)});
  return w.str();
}

std::vector<std::string> pc_names(int k) {
  std::vector<std::string> names;
  for (int l = 0; l < k; ++l) names.push_back("PC" + std::to_string(l + 1));
  return names;
}

// ---------------------------------------------------------------------------

struct PreprocessArgs {
  Common common;
  std::string monitors, covariates;
  bool sqrt = false;
  std::optional<int> gis_components;
  double gis_variance = 0.85;
  int spline_rank = 10;
  std::uint64_t knot_seed = 0;
  double identical_frac = 0.85, outlier_sd = 7.0;
};

void run_preprocess(const PreprocessArgs& a) {
  io::RunManifest manifest;
  manifest.command = "preprocess";
  manifest.flags = {{"sqrt", a.sqrt ? "1" : "0"},
                    {"gis_components", a.gis_components ? std::to_string(*a.gis_components) : ""},
                    {"gis_variance", format_double(a.gis_variance)},
                    {"spline_rank", std::to_string(a.spline_rank)},
                    {"knot_seed", std::to_string(a.knot_seed)},
                    {"identical_frac", format_double(a.identical_frac)},
                    {"outlier_sd", format_double(a.outlier_sd)}};
  manifest.add_input(a.monitors);
  manifest.add_input(a.covariates);

  io::LocatedTable mon = io::read_located(a.monitors);
  if (mon.names.empty()) throw ValidationError(a.monitors + ": no pollutant columns");
  const io::LocatedTable cov = io::read_located(a.covariates).select_ids(mon.ids, a.covariates);
  if (a.sqrt) {
    for (Eigen::Index i = 0; i < mon.values.rows(); ++i)
      for (Eigen::Index j = 0; j < mon.values.cols(); ++j) {
        if (mon.values(i, j) < 0.0)
          throw ValidationError(a.monitors + ": row " + std::to_string(i + 2) + ", column " +
                                mon.names[static_cast<std::size_t>(j)] + ": negative value cannot be square-root transformed");
        mon.values(i, j) = std::sqrt(mon.values(i, j));
      }
  }

  DesignOptions opt;
  if (a.gis_components) opt.gis_target = FixedComponents{*a.gis_components};
  else opt.gis_target = VarianceFraction{a.gis_variance};
  opt.spline_rank = a.spline_rank;
  opt.knot_seed = a.knot_seed;
  opt.filter.identical_frac = a.identical_frac;
  opt.filter.outlier_sd = a.outlier_sd;
  io::Preprocessor pre;
  pre.design = fit_design(io::to_covariates(cov), mon.locations, opt);
  pre.sqrt_exposures = a.sqrt;
  pre.pollutant_names = mon.names;

  io::DesignTable table{mon.ids, mon.locations, pre.design.gis.scores, pre.design.spline.without_intercept()};
  io::CsvWriter dropped({"column", "reason"});
  for (const auto& d : pre.design.clean.dropped) dropped.row({d.name, d.reason});

  OutputDir out(a.common.out, manifest);
  out.write("preprocessor.json", io::dump(io::to_json(pre)));
  out.write("design.csv", io::design_csv(table));
  out.write("exposures.csv", io::located_csv(mon.ids, mon.locations, mon.names, mon.values));
  out.write("dropped.csv", dropped.str());
  out.finish();
}

// ---------------------------------------------------------------------------

struct ModelArgs {
  Common common;
  std::string design, exposures, method = "predictive";
  int k = 3;
  std::vector<double> lambda;
  std::string select;
  std::optional<std::uint64_t> seed;
  int folds = 10;
  int grid_size = 30;
  std::vector<double> grid;
  bool scale = false;
  std::string covariates;  // raw covariates: refit preprocessing inside each fold
  std::string preprocessor;
};

void add_model_args(CLI::App* app, ModelArgs& a, bool with_lambda) {
  add_common(app, a.common);
  app->add_option("--design", a.design, "design.csv from preprocess")->required()->check(CLI::ExistingFile);
  app->add_option("--exposures", a.exposures, "exposures.csv (id,x_km,y_km,pollutants)")
      ->required()
      ->check(CLI::ExistingFile);
  app->add_option("--method", a.method, "traditional | predictive")
      ->check(CLI::IsMember({"traditional", "predictive"}));
  app->add_option("--k", a.k, "Number of components")->check(CLI::PositiveNumber);
  if (with_lambda)
    app->add_option("--lambda", a.lambda, "Penalty per component (one value applies to all)")->delimiter(',');
  app->add_option("--folds", a.folds, "Cross-validation folds");
  app->add_option("--scale", a.scale, "Scale pollutants to unit variance")->default_val(false);
}

/// Fixed design columns, or a per-fold refit when raw covariates are supplied.
DesignBuilder make_builder(const ModelArgs& a, const FitInputs& in, io::RunManifest& manifest) {
  if (a.covariates.empty())
    return fixed_design_builder(in.design.gis, in.design.spline);
  if (a.preprocessor.empty()) throw ValidationError("--covariates requires --preprocessor");
  manifest.add_input(a.covariates);
  manifest.add_input(a.preprocessor);
  const io::Preprocessor pre = io::preprocessor_from(io::parse_json(a.preprocessor));
  DesignOptions opt;
  opt.gis_target = FixedComponents{static_cast<int>(pre.design.gis.count())};
  opt.spline_rank = pre.design.spline.rank;
  opt.filter = pre.design.clean.options;
  const io::LocatedTable cov = io::read_located(a.covariates).select_ids(in.design.ids, a.covariates);
  return refit_design_builder(io::to_covariates(cov), in.design.locations, opt);
}

PenaltyChoice run_selection(const ModelArgs& a, const FitInputs& in, const DesignBuilder& builder,
                            SelectionCriterion crit, int threads) {
  PipelineOptions base;
  base.method = io::method_from(a.method);
  base.k = a.k;
  SelectionOptions sel;
  sel.folds = a.folds;
  sel.seed = *a.seed;
  sel.grid_size = a.grid_size;
  sel.grid = a.grid;
  sel.threads = threads;
  return select_lambda(in.data, builder, base, crit, sel);
}

void model_flags(const ModelArgs& a, io::RunManifest& m) {
  m.flags = {{"method", a.method},          {"k", std::to_string(a.k)},
             {"lambda", join(a.lambda)},    {"select", a.select},
             {"folds", std::to_string(a.folds)}, {"grid_size", std::to_string(a.grid_size)},
             {"grid", join(a.grid)},        {"scale", a.scale ? "1" : "0"},
             {"covariates", a.covariates}};
  m.seed = a.seed;
}

void run_fit(const ModelArgs& a) {
  io::RunManifest manifest;
  manifest.command = "fit";
  model_flags(a, manifest);
  if (!a.select.empty() && !a.lambda.empty()) throw ValidationError("--lambda and --select are exclusive");
  if (!a.select.empty() && !a.seed) throw ValidationError("--select requires --seed");
  const FitInputs in = load_fit_inputs(a.design, a.exposures, a.scale, manifest);
  const PcaMethod method = io::method_from(a.method);

  OutputDir out(a.common.out, manifest);
  std::vector<double> lambdas = expand_lambdas(a.lambda, a.k);
  if (!a.select.empty()) {
    const PenaltyChoice choice =
        run_selection(a, in, make_builder(a, in, manifest), criterion_from(a.select), a.common.resolved_threads());
    lambdas = choice.lambdas;
    out.write("penalty.json", io::dump(io::to_json(choice)));
    out.write("selection_trace.csv", io::selection_trace_csv(choice));
  }
  const CovariateBasis basis = CovariateBasis::assemble(in.design.gis, in.design.spline);
  const PcModel model = fit_pca(in.data, basis, method, a.k, lambdas);
  out.write("model.json", io::dump(io::to_json(model)));
  out.write("loadings.csv", loadings_csv(model));
  out.write("scores.csv", io::located_csv(in.data.ids, in.data.locations, pc_names(a.k), model.scores()));
  out.finish();
}

void run_select(const ModelArgs& a, const std::string& criterion) {
  io::RunManifest manifest;
  manifest.command = "select-lambda";
  model_flags(a, manifest);
  manifest.flags.push_back({"criterion", criterion});
  const FitInputs in = load_fit_inputs(a.design, a.exposures, a.scale, manifest);
  const PenaltyChoice choice =
      run_selection(a, in, make_builder(a, in, manifest), criterion_from(criterion), a.common.resolved_threads());
  OutputDir out(a.common.out, manifest);
  out.write("penalty.json", io::dump(io::to_json(choice)));
  out.write("selection_trace.csv", io::selection_trace_csv(choice));
  out.finish();
}

void run_cv(const ModelArgs& a) {
  io::RunManifest manifest;
  manifest.command = "cv";
  model_flags(a, manifest);
  const FitInputs in = load_fit_inputs(a.design, a.exposures, a.scale, manifest);
  PipelineOptions opt;
  opt.method = io::method_from(a.method);
  opt.k = a.k;
  opt.lambdas = expand_lambdas(a.lambda, a.k);
  const CvReport rep =
      cv_pipeline(in.data, make_builder(a, in, manifest), opt, a.folds, *a.seed, a.common.resolved_threads());

  io::CsvWriter scatter({"id", "x_km", "y_km", "component", "fold", "observed", "predicted"});
  for (int l = 0; l < a.k; ++l)
    for (Eigen::Index i = 0; i < in.data.n(); ++i)
      scatter.row({in.data.ids[static_cast<std::size_t>(i)], format_double(in.data.locations[static_cast<std::size_t>(i)].x_km),
                   format_double(in.data.locations[static_cast<std::size_t>(i)].y_km), "PC" + std::to_string(l + 1),
                   std::to_string(rep.fold_of_row[static_cast<std::size_t>(i)]), format_double(rep.observed(i, l)),
                   format_double(rep.predicted(i, l))});
  io::CsvWriter pollutants({"pollutant", "cv_r2"});
  for (std::size_t j = 0; j < rep.pollutant_r2.size(); ++j)
    pollutants.row({in.data.pollutant_names[j], format_double(rep.pollutant_r2[j])});

  OutputDir out(a.common.out, manifest);
  out.write("cv_report.csv", io::cv_report_csv(rep));
  out.write("cv_report.json", io::dump(io::to_json(rep)));
  out.write("scatter.csv", scatter.str());
  out.write("pollutant_r2.csv", pollutants.str());
  out.finish();
}

// ---------------------------------------------------------------------------

struct KrigeArgs {
  Common common;
  std::string design, exposures, model;
  bool reml = false;
};

void run_krige(const KrigeArgs& a) {
  io::RunManifest manifest;
  manifest.command = "krige";
  manifest.flags = {{"reml", a.reml ? "1" : "0"}};
  manifest.add_input(a.model);
  const PcModel model = io::pc_model_from(io::parse_json(a.model));
  const FitInputs in = load_fit_inputs(a.design, a.exposures, false, manifest);
  if (in.data.pollutant_names != model.pollutant_names)
    throw ValidationError("exposure columns do not match the model's pollutants");
  if (model.centering.size() != in.data.p() || model.scaling.size() != in.data.p())
    throw ValidationError("model centering does not match the exposures");
  const Eigen::MatrixXd X =
      (in.data.raw.rowwise() - model.centering.transpose()).array().rowwise() / model.scaling.transpose().array();
  const Eigen::MatrixXd scores = project_scores(X, model);
  const UkDesign Z = UkDesign::intercept_plus(in.design.gis);
  FitUkOptions opt;
  opt.reml = a.reml;
  json comps = json::array();
  io::CsvWriter params({"component", "psi", "kappa", "phi", "log_likelihood", "converged"});
  for (int l = 0; l < model.k(); ++l) {
    const KrigingModel km = fit_uk(scores.col(l), Z, in.data.locations, opt);
    comps.push_back(io::to_json(km));
    params.row({"PC" + std::to_string(l + 1), format_double(km.cov.psi), format_double(km.cov.kappa),
                format_double(km.cov.phi), format_double(km.log_likelihood), km.converged ? "1" : "0"});
  }
  OutputDir out(a.common.out, manifest);
  out.write("kriging.json", io::dump(json{{"kind", "kriging_set"}, {"components", comps}}));
  out.write("kriging_params.csv", params.str());
  out.finish();
}

struct GridArgs {
  Common common;
  std::string kriging, grid, preprocessor;
  bool variance = true;
};

void run_predict_grid(const GridArgs& a) {
  io::RunManifest manifest;
  manifest.command = "predict-grid";
  manifest.flags = {{"variance", a.variance ? "1" : "0"}};
  manifest.add_input(a.kriging);
  manifest.add_input(a.grid);
  const json kj = io::parse_json(a.kriging);
  if (kj.value("kind", "") != "kriging_set") throw ValidationError("not a kriging_set JSON");
  std::vector<KrigingModel> models;
  for (const auto& c : kj.at("components")) models.push_back(io::kriging_model_from(c));
  if (models.empty()) throw ValidationError("kriging set is empty");

  const io::LocatedTable grid = io::read_located(a.grid);
  const Eigen::Index g = models.front().train_Z.cols() - 1;
  Eigen::MatrixXd gis(static_cast<Eigen::Index>(grid.ids.size()), g);
  const auto gis_cols = grid.columns_with_prefix("gis_");
  if (g == 0) {
  } else if (static_cast<Eigen::Index>(gis_cols.size()) == g) {
    gis = grid.columns(gis_cols);
  } else {
    if (a.preprocessor.empty())
      throw ValidationError("grid lacks gis_* columns; pass --preprocessor to derive them from raw covariates");
    manifest.add_input(a.preprocessor);
    const io::Preprocessor pre = io::preprocessor_from(io::parse_json(a.preprocessor));
    if (pre.design.gis.count() != g) throw ValidationError("preprocessor does not match the kriging design");
    if (!grid.ids.empty()) gis = pre.design.gis_scores_at(io::to_covariates(grid));
  }
  const UkDesign Z = UkDesign::intercept_plus(gis);

  io::CsvWriter w({"id", "x_km", "y_km", "component", "mean", "variance"});
  for (std::size_t l = 0; l < models.size(); ++l) {
    if (grid.ids.empty()) break;
    const KrigingPrediction p = predict_uk(models[l], grid.locations, Z, a.variance);
    for (std::size_t i = 0; i < grid.ids.size(); ++i)
      w.row({grid.ids[i], format_double(grid.locations[i].x_km), format_double(grid.locations[i].y_km),
             "PC" + std::to_string(l + 1), format_double(p.mean(static_cast<Eigen::Index>(i))),
             a.variance ? format_double(p.variance(static_cast<Eigen::Index>(i))) : ""});
  }
  OutputDir out(a.common.out, manifest);
  out.write("heatmap.csv", w.str());
  out.finish();
}

// ---------------------------------------------------------------------------

struct SimArgs {
  Common common;
  int scenario = 1;
  int reps = 100;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string cells = "all";
  int grid_size = 8;
};

SimConfig load_sim_config(const std::string& path, int scenario, io::RunManifest& manifest) {
  if (path.empty()) return preset(scenario == 1 ? Scenario::high_predictability : Scenario::low_predictability);
  manifest.add_input(path);
  return io::sim_config_from(io::parse_json(path));
}

std::string penalty_label(PenaltyMode p) {
  switch (p) {
    case PenaltyMode::none: return "Without Penalty";
    case PenaltyMode::max_scores: return "Max.Scores";
    default: return "Max.Pollutants";
  }
}

void run_simulate(const SimArgs& a) {
  io::RunManifest manifest;
  manifest.command = "simulate";
  manifest.flags = {{"scenario", std::to_string(a.scenario)}, {"reps", std::to_string(a.reps)},
                    {"cells", a.cells}, {"grid_size", std::to_string(a.grid_size)}};
  manifest.seed = a.seed;
  SimConfig cfg = load_sim_config(a.config, a.scenario, manifest);
  cfg.seed = *a.seed;

  SimStudyOptions opt;
  opt.reps = a.reps;
  opt.threads = a.common.resolved_threads();
  opt.selection.grid_size = a.grid_size;
  if (a.cells == "none")
    opt.cells = {{PcaMethod::traditional, PenaltyMode::none}, {PcaMethod::predictive, PenaltyMode::none}};
  const SimStudyResult res = run_sim_study(cfg, opt);

  io::CsvWriter table({"penalty", "method", "PC1_r2", "PC2_r2", "PC3_r2", "avg_abs_correlation", "sparseness_pct"});
  for (const auto& s : res.summary)
    table.row({penalty_label(s.spec.penalty), s.spec.method == PcaMethod::traditional ? "Trad. PCA" : "Pred. PCA",
               format_double(s.r2[0]), format_double(s.r2[1]), format_double(s.r2[2]),
               format_double(s.avg_abs_correlation), format_double(100.0 * s.sparseness)});
  io::CsvWriter reps({"replicate", "penalty", "method", "PC1_r2", "PC2_r2", "PC3_r2", "avg_abs_correlation",
                      "sparseness_pct", "lambdas"});
  for (const auto& r : res.replicates)
    for (std::size_t c = 0; c < opt.cells.size(); ++c) {
      const CellOutcome& o = r.cells[c];
      reps.row({std::to_string(r.index + 1), to_string(opt.cells[c].penalty), to_string(opt.cells[c].method),
                format_double(o.r2[0]), format_double(o.r2[1]), format_double(o.r2[2]),
                format_double(o.avg_abs_correlation), format_double(100.0 * o.sparseness), join(o.lambdas)});
    }
  OutputDir out(a.common.out, manifest);
  out.write("config.json", io::dump(io::to_json(cfg)));
  out.write("summary_table.csv", table.str());
  out.write("replicates.csv", reps.str());
  out.finish();
}

struct HealthArgs {
  Common common;
  std::optional<std::uint64_t> seed;
  int reps = 1;
  std::string config, health_config;
  std::optional<int> subjects;
  std::string penalty = "pollutants";
  int grid_size = 8;
};

void run_health(const HealthArgs& a) {
  io::RunManifest manifest;
  manifest.command = "health-sim";
  manifest.flags = {{"reps", std::to_string(a.reps)}, {"penalty", a.penalty},
                    {"grid_size", std::to_string(a.grid_size)},
                    {"subjects", a.subjects ? std::to_string(*a.subjects) : ""}};
  manifest.seed = a.seed;
  const SimConfig cfg = load_sim_config(a.config, 2, manifest);
  HealthConfig hc;
  if (!a.health_config.empty()) {
    manifest.add_input(a.health_config);
    hc = io::health_config_from(io::parse_json(a.health_config));
  }
  if (a.subjects) hc.n_subjects = *a.subjects;
  HealthSimOptions opt;
  opt.penalty = a.penalty == "none" ? PenaltyMode::none
                : a.penalty == "scores" ? PenaltyMode::max_scores
                                        : PenaltyMode::max_pollutants;
  opt.selection.grid_size = a.grid_size;

  std::vector<HealthSimResult> results(static_cast<std::size_t>(a.reps));
  parallel_for(results.size(), a.common.resolved_threads(), [&](std::size_t r) {
    results[r] = run_health_sim(cfg, hc, opt, mix_seed(*a.seed, r));
  });

  io::CsvWriter t4({"replicate", "method", "component", "subject_r2", "lambda", "mixture"});
  io::CsvWriter t5({"replicate", "endpoint", "term", "trad_beta", "trad_pval", "pred_beta", "pred_pval"});
  io::CsvWriter match({"replicate", "endpoint", "pollutant", "trad_component", "trad_pval", "pred_component",
                       "pred_pval", "pred_significant", "pred_not_worse"});
  for (std::size_t r = 0; r < results.size(); ++r) {
    const auto& trad = results[r].methods[0];
    const auto& pred = results[r].methods[1];
    for (const auto* m : {&trad, &pred})
      for (int l = 0; l < m->model.k(); ++l) {
        std::string mix;
        for (int j : mixture_members(m->model.components[l].loading, 0.1)) mix += (mix.empty() ? "" : " ") + std::to_string(j);
        t4.row({std::to_string(r + 1), m->method == PcaMethod::traditional ? "Traditional sPCA" : "Predictive sPCA",
                "PC" + std::to_string(l + 1), format_double(m->subject_r2[static_cast<std::size_t>(l)]),
                format_double(m->lambdas[static_cast<std::size_t>(l)]), mix});
      }
    for (int e = 0; e < 2; ++e) {
      const HealthFit& ft = e == 0 ? trad.y1 : trad.y2;
      const HealthFit& fp = e == 0 ? pred.y1 : pred.y2;
      for (std::size_t t = 1; t < ft.names.size(); ++t)
        t5.row({std::to_string(r + 1), e == 0 ? "Y1" : "Y2", ft.names[t], format_double(ft.beta(static_cast<Eigen::Index>(t))),
                format_double(ft.p(static_cast<Eigen::Index>(t))), format_double(fp.beta(static_cast<Eigen::Index>(t))),
                format_double(fp.p(static_cast<Eigen::Index>(t)))});
    }
    const std::vector<std::pair<std::string, int>> drivers{{"Y1", 1}, {"Y2", 5}, {"Y2", 8}};
    for (const auto& [endpoint, j] : drivers) {
      const int lt = component_carrying(trad.model, j), lp = component_carrying(pred.model, j);
      const HealthFit& ft = endpoint == "Y1" ? trad.y1 : trad.y2;
      const HealthFit& fp = endpoint == "Y1" ? pred.y1 : pred.y2;
      const double pt = ft.p(lt + 1), pp = fp.p(lp + 1);
      match.row({std::to_string(r + 1), endpoint, "P" + std::to_string(j), "PC" + std::to_string(lt + 1),
                 format_double(pt), "PC" + std::to_string(lp + 1), format_double(pp), pp < 0.05 ? "1" : "0",
                 pt >= pp ? "1" : "0"});
    }
  }
  OutputDir out(a.common.out, manifest);
  out.write("config.json", io::dump(io::to_json(cfg)));
  out.write("health_config.json", io::dump(io::to_json(hc)));
  out.write("interpretation.csv", t4.str());
  out.write("inference.csv", t5.str());
  out.write("driver_match.csv", match.str());
  out.finish();
}

void emit_error(const char* kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predictive (sparse) PCA for spatially misaligned multi-pollutant data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", io::kVersion);

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Clean covariates, build GIS scores and the spline basis");
  add_common(c_pre, pre.common);
  c_pre->add_option("--monitors", pre.monitors, "id,x_km,y_km,pollutants...")->required()->check(CLI::ExistingFile);
  c_pre->add_option("--covariates", pre.covariates, "id,x_km,y_km,covariates...")->required()->check(CLI::ExistingFile);
  c_pre->add_flag("--sqrt", pre.sqrt, "Square-root transform pollutant columns");
  auto* gis_k = c_pre->add_option("--gis-components", pre.gis_components, "Fixed number of GIS scores");
  c_pre->add_option("--gis-variance", pre.gis_variance, "Variance fraction for GIS scores")->excludes(gis_k);
  c_pre->add_option("--spline-rank", pre.spline_rank, "Thin-plate basis rank (incl. intercept)");
  c_pre->add_option("--knot-seed", pre.knot_seed, "Seed of the knot selection");
  c_pre->add_option("--identical-frac", pre.identical_frac, "Drop columns whose modal value exceeds this fraction");
  c_pre->add_option("--outlier-sd", pre.outlier_sd, "Drop columns with a standardized value beyond this");

  ModelArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Fit traditional or predictive (sparse) PCA");
  add_model_args(c_fit, fit, true);
  c_fit->add_option("--select", fit.select, "Choose penalties by CV: scores | pollutants")
      ->check(CLI::IsMember({"scores", "pollutants"}));
  c_fit->add_option("--seed", fit.seed, "Seed for CV folds (required with --select)");
  c_fit->add_option("--grid-size", fit.grid_size, "Automatic penalty grid size");
  c_fit->add_option("--grid", fit.grid, "Explicit penalty grid (must contain 0)")->delimiter(',');
  c_fit->add_option("--covariates", fit.covariates, "Raw covariates: refit preprocessing per fold");
  c_fit->add_option("--preprocessor", fit.preprocessor, "preprocessor.json (with --covariates)");

  ModelArgs cv;
  auto* c_cv = app.add_subcommand("cv", "K-fold cross-validation of PCA followed by kriging");
  add_model_args(c_cv, cv, true);
  c_cv->add_option("--seed", cv.seed, "Seed for CV folds")->required();
  c_cv->add_option("--covariates", cv.covariates, "Raw covariates: refit preprocessing per fold");
  c_cv->add_option("--preprocessor", cv.preprocessor, "preprocessor.json (with --covariates)");

  ModelArgs sel;
  std::string criterion;
  auto* c_sel = app.add_subcommand("select-lambda", "Cross-validated penalty selection");
  add_model_args(c_sel, sel, false);
  c_sel->add_option("--criterion", criterion, "scores | pollutants")
      ->required()
      ->check(CLI::IsMember({"scores", "pollutants"}));
  c_sel->add_option("--seed", sel.seed, "Seed for CV folds")->required();
  c_sel->add_option("--grid-size", sel.grid_size, "Automatic penalty grid size");
  c_sel->add_option("--grid", sel.grid, "Explicit penalty grid (must contain 0)")->delimiter(',');
  c_sel->add_option("--covariates", sel.covariates, "Raw covariates: refit preprocessing per fold");
  c_sel->add_option("--preprocessor", sel.preprocessor, "preprocessor.json (with --covariates)");

  KrigeArgs kr;
  auto* c_kr = app.add_subcommand("krige", "Fit universal kriging to each principal score");
  add_common(c_kr, kr.common);
  c_kr->add_option("--design", kr.design)->required()->check(CLI::ExistingFile);
  c_kr->add_option("--exposures", kr.exposures)->required()->check(CLI::ExistingFile);
  c_kr->add_option("--model", kr.model, "model.json from fit")->required()->check(CLI::ExistingFile);
  c_kr->add_flag("--reml", kr.reml, "Restricted likelihood");

  GridArgs grid;
  auto* c_grid = app.add_subcommand("predict-grid", "Predict scores on a grid (heatmap data)");
  add_common(c_grid, grid.common);
  c_grid->add_option("--kriging", grid.kriging, "kriging.json from krige")->required()->check(CLI::ExistingFile);
  c_grid->add_option("--grid", grid.grid, "id,x_km,y_km[,gis_* | raw covariates]")->required()->check(CLI::ExistingFile);
  c_grid->add_option("--preprocessor", grid.preprocessor, "Derive GIS scores from raw grid covariates");
  bool no_variance = false;
  c_grid->add_flag("--no-variance", no_variance, "Skip prediction variances");

  SimArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Repeated simulation study (two scenarios)");
  add_common(c_sim, sim.common);
  c_sim->add_option("--scenario", sim.scenario)->check(CLI::IsMember({1, 2}));
  c_sim->add_option("--reps", sim.reps)->check(CLI::PositiveNumber);
  c_sim->add_option("--seed", sim.seed)->required();
  c_sim->add_option("--config", sim.config, "sim_config JSON (default: scenario preset)");
  c_sim->add_option("--cells", sim.cells, "all | none (no-penalty cells only)")->check(CLI::IsMember({"all", "none"}));
  c_sim->add_option("--grid-size", sim.grid_size, "Penalty grid size for the selection cells");

  HealthArgs health;
  auto* c_health = app.add_subcommand("health-sim", "Simulated cohort health analysis");
  add_common(c_health, health.common);
  c_health->add_option("--seed", health.seed)->required();
  c_health->add_option("--reps", health.reps)->check(CLI::PositiveNumber);
  c_health->add_option("--config", health.config, "sim_config JSON (default: scenario-2 preset)");
  c_health->add_option("--health-config", health.health_config, "health_config JSON");
  c_health->add_option("--subjects", health.subjects, "Number of cohort subjects");
  c_health->add_option("--penalty", health.penalty, "none | scores | pollutants")
      ->check(CLI::IsMember({"none", "scores", "pollutants"}));
  c_health->add_option("--grid-size", health.grid_size, "Penalty grid size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("validation", e.what());
    return 2;
  }

  try {
    if (*c_pre) run_preprocess(pre);
    else if (*c_fit) run_fit(fit);
    else if (*c_cv) run_cv(cv);
    else if (*c_sel) run_select(sel, criterion);
    else if (*c_kr) run_krige(kr);
    else if (*c_grid) {
      grid.variance = !no_variance;
      run_predict_grid(grid);
    } else if (*c_sim) run_simulate(sim);
    else if (*c_health) run_health(health);
  } catch (const ValidationError& e) {
    emit_error("validation", e.what());
    return 2;
  } catch (const NumericalError& e) {
    emit_error("numerical", e.what());
    return 3;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
  return 0;
}
