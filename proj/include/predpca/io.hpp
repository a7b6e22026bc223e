#pragma once

// File formats: CSV tables with an id/x_km/y_km prefix, JSON artifacts for
// fitted objects, atomic writes and run manifests.

#include <Eigen/Dense>

#include <cerrno>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "predpca/design.hpp"
#include "predpca/error.hpp"
#include "predpca/kriging.hpp"
#include "predpca/model_selection.hpp"
#include "predpca/simulation.hpp"
#include "predpca/spca.hpp"

namespace predpca::io {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  if (v == 0.0) return "0";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file, then renames it over `path`.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ValidationError("cannot write " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t size() const { return rows.size(); }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    return std::nullopt;
  }

  std::size_t column(std::string_view name) const {
    const auto c = find(name);
    if (!c) throw ValidationError(source + ": missing column " + std::string(name));
    return *c;
  }

  double number(std::size_t row, std::size_t col) const {
    const std::string& cell = rows[row][col];
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size() || errno == ERANGE || !std::isfinite(v))
      throw ValidationError(source + ": row " + std::to_string(row + 2) + ", column " + header[col] +
                            ": not a finite number: '" + cell + "'");
    return v;
  }
};

inline CsvTable parse_csv(std::string_view text, std::string source = "csv") {
  CsvTable t;
  t.source = std::move(source);
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, any = false;
  std::size_t line = 1;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    if (!(record.size() == 1 && record[0].empty())) {
      if (t.header.empty())
        t.header = std::move(record);
      else if (record.size() != t.header.size())
        throw ValidationError(t.source + ": line " + std::to_string(line) + " has " +
                              std::to_string(record.size()) + " fields, expected " +
                              std::to_string(t.header.size()));
      else
        t.rows.push_back(std::move(record));
    }
    record.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      end_record();
      ++line;
    } else if (c != '\r') {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ValidationError(t.source + ": unterminated quote");
  if (any || !field.empty()) end_record();
  if (t.header.empty()) throw ValidationError(t.source + ": empty file");
  return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(read_file(path), path.string());
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : width_(header.size()) { line(header); }

  CsvWriter& row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw std::logic_error("csv row width mismatch");
    line(cells);
    return *this;
  }

  const std::string& str() const { return out_; }

 private:
  void line(const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out_ += ',';
      out_ += csv_escape(cells[c]);
    }
    out_ += '\n';
  }
  std::size_t width_;
  std::string out_;
};

/// A table whose first three columns are id, x_km, y_km.
struct LocatedTable {
  std::vector<std::string> ids;
  std::vector<Location> locations;
  std::vector<std::string> names;
  Eigen::MatrixXd values;

  std::vector<std::size_t> columns_with_prefix(std::string_view prefix) const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < names.size(); ++c)
      if (names[c].rfind(prefix, 0) == 0) out.push_back(c);
    return out;
  }

  Eigen::MatrixXd columns(const std::vector<std::size_t>& cols) const {
    Eigen::MatrixXd m(values.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) m.col(static_cast<Eigen::Index>(c)) = values.col(static_cast<Eigen::Index>(cols[c]));
    return m;
  }

  /// Rows reordered to follow `wanted` ids.
  LocatedTable select_ids(const std::vector<std::string>& wanted, const std::string& what) const {
    std::unordered_map<std::string, std::size_t> at;
    for (std::size_t i = 0; i < ids.size(); ++i) at.emplace(ids[i], i);
    std::vector<std::size_t> rows;
    for (const auto& id : wanted) {
      const auto it = at.find(id);
      if (it == at.end()) throw ValidationError(what + ": no row for location id " + id);
      rows.push_back(it->second);
    }
    LocatedTable out;
    out.ids = take_rows(ids, rows);
    out.locations = take_rows(locations, rows);
    out.names = names;
    out.values = take_rows(values, rows);
    return out;
  }
};

inline LocatedTable to_located(const CsvTable& t) {
  if (t.header.size() < 3 || t.header[0] != "id" || t.header[1] != "x_km" || t.header[2] != "y_km")
    throw ValidationError(t.source + ": header must start with id,x_km,y_km");
  LocatedTable out;
  out.names.assign(t.header.begin() + 3, t.header.end());
  out.values.resize(static_cast<Eigen::Index>(t.size()), static_cast<Eigen::Index>(out.names.size()));
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const std::string& id = t.rows[r][0];
    if (id.empty()) throw ValidationError(t.source + ": row " + std::to_string(r + 2) + ": empty id");
    if (!seen.emplace(id, r).second) throw ValidationError(t.source + ": duplicate id " + id);
    out.ids.push_back(id);
    out.locations.push_back({t.number(r, 1), t.number(r, 2)});
    for (std::size_t c = 3; c < t.header.size(); ++c)
      out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 3)) = t.number(r, c);
  }
  return out;
}

inline LocatedTable read_located(const std::filesystem::path& path) { return to_located(read_csv(path)); }

inline RawCovariateTable to_covariates(const LocatedTable& t) {
  RawCovariateTable raw;
  raw.location_ids = t.ids;
  raw.names = t.names;
  for (const auto& n : t.names) raw.kinds.push_back(kind_from_name(n));
  raw.values = t.values;
  raw.validate();
  return raw;
}

inline std::string located_csv(const std::vector<std::string>& ids, std::span<const Location> locs,
                               const std::vector<std::string>& names, const Eigen::MatrixXd& values) {
  std::vector<std::string> header{"id", "x_km", "y_km"};
  header.insert(header.end(), names.begin(), names.end());
  CsvWriter w(header);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    std::vector<std::string> row{ids[static_cast<std::size_t>(i)], format_double(locs[static_cast<std::size_t>(i)].x_km),
                                 format_double(locs[static_cast<std::size_t>(i)].y_km)};
    for (Eigen::Index c = 0; c < values.cols(); ++c) row.push_back(format_double(values(i, c)));
    w.row(row);
  }
  return w.str();
}

// ---------------------------------------------------------------------------
// JSON helpers

inline json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(std::move(row));
  }
  return a;
}

inline Eigen::VectorXd vector_from(const json& a) {
  if (!a.is_array()) throw ValidationError("expected a JSON array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

inline Eigen::MatrixXd matrix_from(const json& a, Eigen::Index cols_if_empty = 0) {
  if (!a.is_array()) throw ValidationError("expected a JSON array of rows");
  if (a.empty()) return Eigen::MatrixXd(0, cols_if_empty);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(a[0].size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != static_cast<std::size_t>(m.cols())) throw ValidationError("ragged JSON matrix");
    for (std::size_t j = 0; j < a[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a[i][j].get<double>();
  }
  return m;
}

inline json to_json(std::span<const Location> locs) {
  json a = json::array();
  for (const auto& l : locs) a.push_back(json::array({l.x_km, l.y_km}));
  return a;
}

inline std::vector<Location> locations_from(const json& a) {
  std::vector<Location> out;
  for (const auto& p : a) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline json parse_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Fitted preprocessing (covariate filter, GIS PCA, spline basis)

struct Preprocessor {
  FittedDesign design;
  bool sqrt_exposures = false;
  std::vector<std::string> pollutant_names;
};

inline json to_json(const Preprocessor& p) {
  const auto& d = p.design;
  json dropped = json::array();
  for (const auto& c : d.clean.dropped) dropped.push_back({{"name", c.name}, {"reason", c.reason}});
  json kinds = json::array();
  for (auto k : d.clean.kinds) kinds.push_back(k == ColumnKind::distance ? "distance" : "other");
  return {{"kind", "preprocessor"},
          {"version", kVersion},
          {"sqrt_exposures", p.sqrt_exposures},
          {"pollutants", p.pollutant_names},
          {"filter",
           {{"identical_frac", d.clean.options.identical_frac},
            {"outlier_sd", d.clean.options.outlier_sd},
            {"truncate_m", d.clean.options.truncate_m},
            {"log_offset_m", d.clean.options.log_offset_m}}},
          {"retained", d.clean.column_names},
          {"kinds", kinds},
          {"centering", to_json(d.clean.centering)},
          {"scaling", to_json(d.clean.scaling)},
          {"dropped", dropped},
          {"gis",
           {{"loadings", to_json(d.gis.loadings)},
            {"singular_values", to_json(d.gis.singular_values)},
            {"explained_variance_fraction", d.gis.explained_variance_fraction}}},
          {"spline",
           {{"rank", d.spline.rank},
            {"knots", to_json(std::span<const Location>(d.spline.knots))},
            {"center", to_json(d.spline.center)},
            {"scale", to_json(d.spline.scale)}}}};
}

/// Restores everything needed to transform new locations; fitting-location
/// scores and basis rows are not stored.
inline Preprocessor preprocessor_from(const json& j) {
  if (j.value("kind", "") != "preprocessor") throw ValidationError("not a preprocessor JSON");
  Preprocessor p;
  p.sqrt_exposures = j.at("sqrt_exposures").get<bool>();
  p.pollutant_names = j.at("pollutants").get<std::vector<std::string>>();
  auto& c = p.design.clean;
  const auto& f = j.at("filter");
  c.options = {f.at("identical_frac").get<double>(), f.at("outlier_sd").get<double>(),
               f.at("truncate_m").get<double>(), f.at("log_offset_m").get<double>()};
  c.column_names = j.at("retained").get<std::vector<std::string>>();
  for (const auto& k : j.at("kinds")) c.kinds.push_back(k.get<std::string>() == "distance" ? ColumnKind::distance : ColumnKind::other);
  c.centering = vector_from(j.at("centering"));
  c.scaling = vector_from(j.at("scaling"));
  for (const auto& d : j.at("dropped")) c.dropped.push_back({d.at("name"), d.at("reason")});
  const auto& g = j.at("gis");
  p.design.gis.loadings = matrix_from(g.at("loadings"));
  p.design.gis.singular_values = vector_from(g.at("singular_values"));
  p.design.gis.explained_variance_fraction = g.at("explained_variance_fraction").get<double>();
  const auto& s = j.at("spline");
  p.design.spline.rank = s.at("rank").get<int>();
  p.design.spline.knots = locations_from(s.at("knots"));
  p.design.spline.center = vector_from(s.at("center"));
  p.design.spline.scale = vector_from(s.at("scale"));
  return p;
}

/// design.csv layout: id, x_km, y_km, gis_1..gis_g, tps_1..tps_{r-1}.
struct DesignTable {
  std::vector<std::string> ids;
  std::vector<Location> locations;
  Eigen::MatrixXd gis;
  Eigen::MatrixXd spline;
};

inline std::string design_csv(const DesignTable& d) {
  std::vector<std::string> names;
  for (Eigen::Index c = 0; c < d.gis.cols(); ++c) names.push_back("gis_" + std::to_string(c + 1));
  for (Eigen::Index c = 0; c < d.spline.cols(); ++c) names.push_back("tps_" + std::to_string(c + 1));
  Eigen::MatrixXd all(d.gis.rows(), d.gis.cols() + d.spline.cols());
  all << d.gis, d.spline;
  return located_csv(d.ids, d.locations, names, all);
}

inline DesignTable design_from(const LocatedTable& t) {
  DesignTable d;
  d.ids = t.ids;
  d.locations = t.locations;
  d.gis = t.columns(t.columns_with_prefix("gis_"));
  d.spline = t.columns(t.columns_with_prefix("tps_"));
  if (d.gis.cols() + d.spline.cols() != static_cast<Eigen::Index>(t.names.size()))
    throw ValidationError("design table: columns must be gis_* or tps_*");
  return d;
}

// ---------------------------------------------------------------------------
// Models

inline json to_json(const PcModel& m) {
  json comps = json::array();
  for (int l = 0; l < m.k(); ++l) {
    const auto& c = m.components[l];
    json cj{{"index", l + 1},
            {"lambda", c.lambda},
            {"loading", to_json(c.loading)},
            {"v_norm", c.v_norm},
            {"iterations", c.iterations},
            {"converged", c.converged},
            {"sparsity", c.sparsity()}};
    if (c.alpha) cj["alpha"] = to_json(*c.alpha);
    comps.push_back(std::move(cj));
  }
  json j{{"kind", "pc_model"},
         {"version", kVersion},
         {"method", to_string(m.method)},
         {"pollutants", m.pollutant_names},
         {"centering", to_json(m.centering)},
         {"scaling", to_json(m.scaling)},
         {"sparseness", m.sparseness()},
         {"components", comps}};
  if (m.method == PcaMethod::predictive) j["basis_columns"] = m.basis_columns;
  return j;
}

inline PcaMethod method_from(const std::string& s) {
  if (s == "traditional") return PcaMethod::traditional;
  if (s == "predictive") return PcaMethod::predictive;
  throw ValidationError("unknown method: " + s);
}

/// Loadings, centering and penalties; scores must be recomputed from data.
inline PcModel pc_model_from(const json& j) {
  if (j.value("kind", "") != "pc_model") throw ValidationError("not a pc_model JSON");
  PcModel m;
  m.method = method_from(j.at("method").get<std::string>());
  m.pollutant_names = j.at("pollutants").get<std::vector<std::string>>();
  m.centering = vector_from(j.at("centering"));
  m.scaling = vector_from(j.at("scaling"));
  if (j.contains("basis_columns")) m.basis_columns = j.at("basis_columns").get<std::vector<std::string>>();
  for (const auto& cj : j.at("components")) {
    PcComponent c;
    c.loading = vector_from(cj.at("loading"));
    c.lambda = cj.at("lambda").get<double>();
    c.v_norm = cj.at("v_norm").get<double>();
    c.iterations = cj.at("iterations").get<int>();
    c.converged = cj.at("converged").get<bool>();
    if (cj.contains("alpha")) c.alpha = vector_from(cj.at("alpha"));
    m.components.push_back(std::move(c));
  }
  return m;
}

inline json to_json(const KrigingModel& m) {
  return {{"kind", "kriging_model"},
          {"version", kVersion},
          {"psi", m.cov.psi},
          {"kappa", m.cov.kappa},
          {"phi", m.cov.phi},
          {"alpha", to_json(m.alpha)},
          {"design_columns", m.train_Z.column_names()},
          {"log_likelihood", m.log_likelihood},
          {"converged", m.converged},
          {"jitter", m.jitter},
          {"warnings", m.warnings},
          {"train_locations", to_json(std::span<const Location>(m.train_locs))},
          {"train_values", to_json(m.train_values)},
          {"train_design", to_json(m.train_Z.matrix())}};
}

/// Rebuilds the cached factorization from the stored parameters and data.
inline KrigingModel kriging_model_from(const json& j) {
  if (j.value("kind", "") != "kriging_model") throw ValidationError("not a kriging_model JSON");
  const auto names = j.at("design_columns").get<std::vector<std::string>>();
  const UkDesign Z(matrix_from(j.at("train_design"), static_cast<Eigen::Index>(names.size())), names);
  const CovParams cov{j.at("psi").get<double>(), j.at("kappa").get<double>(), j.at("phi").get<double>()};
  KrigingModel m =
      fit_uk_with_params(vector_from(j.at("train_values")), Z, locations_from(j.at("train_locations")), cov);
  m.converged = j.at("converged").get<bool>();
  m.warnings = j.at("warnings").get<std::vector<std::string>>();
  return m;
}

inline json to_json(const CvReport& r) {
  return {{"kind", "cv_report"},
          {"method", to_string(r.method)},
          {"lambdas", r.lambdas},
          {"folds", r.folds},
          {"seed", r.seed},
          {"r2", r.r2},
          {"mse", r.mse},
          {"score_correlation", to_json(r.score_correlation)},
          {"avg_abs_correlation", r.avg_abs_correlation},
          {"sparseness", r.sparseness},
          {"pollutant_r2", r.pollutant_r2},
          {"frobenius_loss", r.frobenius_loss}};
}

/// One row per component: Table-2/3 style columns.
inline std::string cv_report_csv(const CvReport& r) {
  CsvWriter w({"component", "lambda", "r2", "mse", "avg_abs_correlation", "sparseness_pct", "frobenius_loss"});
  for (std::size_t l = 0; l < r.r2.size(); ++l)
    w.row({"PC" + std::to_string(l + 1), format_double(r.lambdas[l]), format_double(r.r2[l]),
           format_double(r.mse[l]), format_double(r.avg_abs_correlation), format_double(100.0 * r.sparseness),
           format_double(r.frobenius_loss)});
  return w.str();
}

inline json to_json(const PenaltyChoice& c) {
  json trace = json::array();
  for (const auto& t : c.trace)
    trace.push_back({{"component", t.component},
                     {"lambda", t.lambda},
                     {"feasible", t.feasible},
                     {"score_r2", t.score_r2},
                     {"frobenius", t.frobenius},
                     {"chosen", t.chosen}});
  return {{"kind", "penalty_choice"}, {"criterion", to_string(c.criterion)}, {"lambdas", c.lambdas}, {"trace", trace}};
}

inline std::string selection_trace_csv(const PenaltyChoice& c) {
  CsvWriter w({"component", "lambda", "feasible", "score_r2", "frobenius", "chosen"});
  for (const auto& t : c.trace)
    w.row({std::to_string(t.component), format_double(t.lambda), t.feasible ? "1" : "0",
           t.feasible ? format_double(t.score_r2) : "", t.feasible ? format_double(t.frobenius) : "",
           t.chosen ? "1" : "0"});
  return w.str();
}

// ---------------------------------------------------------------------------
// Simulation configs

inline json to_json(const SimConfig& c) {
  json gamma = json::object();
  for (Eigen::Index j = 0; j < c.gamma.rows(); ++j) {
    json row = json::object();
    for (Eigen::Index k = 0; k < c.gamma.cols(); ++k) row[c.column_names[static_cast<std::size_t>(k)]] = c.gamma(j, k);
    gamma["P" + std::to_string(j + 1)] = row;
  }
  json sigma = json::object();
  for (Eigen::Index j = 0; j < c.sigma.size(); ++j) sigma["P" + std::to_string(j + 1)] = c.sigma(j);
  return {{"kind", "sim_config"},
          {"scenario", static_cast<int>(c.scenario)},
          {"n_locations", c.n_locations},
          {"pool_size", c.pool_size},
          {"gis_components", c.gis_components},
          {"spline_rank", c.spline_rank},
          {"knot_seed", c.knot_seed},
          {"mean_level", c.mean_level},
          {"seed", c.seed},
          {"world_seed", c.world_seed},
          {"gamma", gamma},
          {"sigma", sigma}};
}

inline SimConfig sim_config_from(const json& j) {
  if (j.value("kind", "") != "sim_config") throw ValidationError("not a sim_config JSON");
  SimConfig c;
  const int s = j.at("scenario").get<int>();
  if (s != 1 && s != 2) throw ValidationError("scenario must be 1 or 2");
  c.scenario = static_cast<Scenario>(s);
  c.n_locations = j.at("n_locations").get<int>();
  c.pool_size = j.at("pool_size").get<int>();
  c.gis_components = j.at("gis_components").get<int>();
  c.spline_rank = j.at("spline_rank").get<int>();
  c.knot_seed = j.at("knot_seed").get<std::uint64_t>();
  c.mean_level = j.at("mean_level").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.world_seed = j.at("world_seed").get<std::uint64_t>();
  c.column_names = generating_column_names(c.gis_components, c.spline_rank);
  const auto& gamma = j.at("gamma");
  c.gamma = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(gamma.size()), c.m());
  c.sigma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(gamma.size()));
  for (Eigen::Index p = 0; p < c.gamma.rows(); ++p) {
    const std::string key = "P" + std::to_string(p + 1);
    const auto& row = gamma.at(key);
    for (Eigen::Index k = 0; k < c.gamma.cols(); ++k)
      c.gamma(p, k) = row.at(c.column_names[static_cast<std::size_t>(k)]).get<double>();
    c.sigma(p) = j.at("sigma").at(key).get<double>();
  }
  c.validate();
  return c;
}

inline json to_json(const HealthConfig& h) {
  json y1 = json::array(), y2 = json::array();
  for (const auto& [p, b] : h.y1_pollutants) y1.push_back({{"pollutant", p}, {"effect", b}});
  for (const auto& [p, b] : h.y2_pollutants) y2.push_back({{"pollutant", p}, {"effect", b}});
  return {{"kind", "health_config"},
          {"n_monitors", h.n_monitors},
          {"n_subjects", h.n_subjects},
          {"pool_size", h.pool_size},
          {"error_sd", h.error_sd},
          {"exposure_scale", h.exposure_scale},
          {"age_range", {h.age_min, h.age_max}},
          {"proportions",
           {{"R", h.proportions[0]}, {"I", h.proportions[1]}, {"E", h.proportions[2]}, {"S", h.proportions[3]}}},
          {"covariate_effects",
           {{"A", h.covariate_effects[0]},
            {"R", h.covariate_effects[1]},
            {"I", h.covariate_effects[2]},
            {"E", h.covariate_effects[3]},
            {"S", h.covariate_effects[4]}}},
          {"y1_pollutants", y1},
          {"y2_pollutants", y2}};
}

inline HealthConfig health_config_from(const json& j) {
  if (j.value("kind", "") != "health_config") throw ValidationError("not a health_config JSON");
  HealthConfig h;
  h.n_monitors = j.at("n_monitors").get<int>();
  h.n_subjects = j.at("n_subjects").get<int>();
  h.pool_size = j.at("pool_size").get<int>();
  h.error_sd = j.at("error_sd").get<double>();
  h.exposure_scale = j.value("exposure_scale", 3.0);
  h.age_min = j.at("age_range").at(0).get<double>();
  h.age_max = j.at("age_range").at(1).get<double>();
  const char* keys[] = {"R", "I", "E", "S"};
  for (int f = 0; f < 4; ++f) h.proportions[f] = j.at("proportions").at(keys[f]).get<std::vector<double>>();
  const char* effects[] = {"A", "R", "I", "E", "S"};
  for (int f = 0; f < 5; ++f) h.covariate_effects[f] = j.at("covariate_effects").at(effects[f]).get<double>();
  h.y1_pollutants.clear();
  h.y2_pollutants.clear();
  for (const auto& e : j.at("y1_pollutants")) h.y1_pollutants.push_back({e.at("pollutant"), e.at("effect")});
  for (const auto& e : j.at("y2_pollutants")) h.y2_pollutants.push_back({e.at("pollutant"), e.at("effect")});
  h.validate();
  return h;
}

// ---------------------------------------------------------------------------
// Run manifest

struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> flags;   // name, value
  std::vector<std::pair<std::string, std::string>> inputs;  // path, content hash
  std::optional<std::uint64_t> seed;
  std::vector<std::string> outputs;

  std::string config_hash() const {
    std::string canon = command;
    for (const auto& [k, v] : flags) canon += "\n" + k + "=" + v;
    return hex64(fnv1a(canon));
  }

  void add_input(const std::filesystem::path& path) {
    inputs.push_back({path.string(), hex64(fnv1a(read_file(path)))});
  }

  /// Timestamps follow SOURCE_DATE_EPOCH so reruns stay byte-identical;
  /// without it the field is null.
  json to_json() const {
    json f = json::object();
    for (const auto& [k, v] : flags) f[k] = v;
    json in = json::array();
    for (const auto& [p, h] : inputs) in.push_back({{"path", p}, {"fnv1a", h}});
    json ts = nullptr;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) ts = std::string(epoch);
    return {{"kind", "run_manifest"},
            {"command", command},
            {"software_version", kVersion},
            {"config_hash", config_hash()},
            {"flags", f},
            {"inputs", in},
            {"seed", seed ? json(*seed) : json(nullptr)},
            {"outputs", outputs},
            {"timestamp_epoch", ts}};
  }
};

}  // namespace predpca::io
