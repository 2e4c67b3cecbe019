#include "mfk/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mfk/errors.hpp"

namespace mfk {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvTable read_csv(const fs::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  CsvTable table;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (table.header.empty()) {
      for (const auto& c : cells)
        if (c.empty()) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": empty header name");
      table.header = cells;
      continue;
    }
    if (cells.size() != table.header.size())
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size()) + " columns, found " + std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string& c = cells[j];
      const char* first = c.data();
      if (!c.empty() && c[0] == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, c.data() + c.size(), row[j]);
      if (c.empty() || ec != std::errc() || ptr != c.data() + c.size())
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": column " + std::to_string(j + 1) +
                         " is not a number ('" + c + "')");
      if (!std::isfinite(row[j]))
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": column " + std::to_string(j + 1) +
                         " is not finite");
    }
    rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw ParseError(path.string() + ": missing header row");
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) table.values(i, j) = rows[i][j];
  return table;
}

std::string to_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& values) {
  std::string out;
  for (std::size_t j = 0; j < header.size(); ++j) out += (j ? "," : "") + header[j];
  out += '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) out += (j ? "," : "") + format_double(values(i, j));
    out += '\n';
  }
  return out;
}

void atomic_write(const fs::path& path, const std::string& content) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!fs::exists(dir)) fs::create_directories(dir);
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw ParseError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw ParseError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

LevelData ingest_level_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const bool has_lower = t.header.back() == "z_lower";
  const Eigen::Index inputs = static_cast<Eigen::Index>(t.header.size()) - (has_lower ? 2 : 1);
  if (inputs < 1) throw ParseError(path.string() + ": need at least one input column and one output column");
  if (t.values.rows() < 1) throw ParseError(path.string() + ": no data rows");
  LevelData level;
  level.design = t.values.leftCols(inputs);
  level.observations = t.values.col(inputs);
  if (has_lower) {
    level.lower_observations = Eigen::VectorXd(t.values.col(inputs + 1));
    level.g_basis = BasisSpec::constant();
  }
  return level;
}

std::string level_csv(const LevelData& level) {
  std::vector<std::string> header;
  for (int j = 0; j < level.dim(); ++j) header.push_back("x" + std::to_string(j + 1));
  header.push_back("z");
  Eigen::MatrixXd values(level.n(), level.dim() + 1 + (level.lower_observations ? 1 : 0));
  values.leftCols(level.dim()) = level.design;
  values.col(level.dim()) = level.observations;
  if (level.lower_observations) {
    header.push_back("z_lower");
    values.col(level.dim() + 1) = *level.lower_observations;
  }
  return to_csv(header, values);
}

Design read_points_csv(const fs::path& path) { return read_csv(path).values; }

std::string design_csv(const Design& design) {
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < design.cols(); ++j) header.push_back("x" + std::to_string(j + 1));
  return to_csv(header, design);
}

std::string predictions_csv(const Design& points, const std::vector<Prediction>& predictions) {
  if (static_cast<std::size_t>(points.rows()) != predictions.size()) throw ShapeError("points and predictions differ");
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < points.cols(); ++j) header.push_back("x" + std::to_string(j + 1));
  const int s = predictions.empty() ? 0 : static_cast<int>(predictions.front().mean.size());
  header.push_back("mean");
  header.push_back("variance");
  for (int t = 0; t < s; ++t) {
    header.push_back("mean_" + std::to_string(t + 1));
    header.push_back("variance_" + std::to_string(t + 1));
  }
  Eigen::MatrixXd values(points.rows(), points.cols() + 2 + 2 * s);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Prediction& p = predictions[i];
    values.row(i).head(points.cols()) = points.row(i);
    values(i, points.cols()) = p.top_mean();
    values(i, points.cols() + 1) = p.top_variance();
    for (int t = 0; t < s; ++t) {
      values(i, points.cols() + 2 + 2 * t) = p.mean[t];
      values(i, points.cols() + 3 + 2 * t) = p.variance[t];
    }
  }
  return to_csv(header, values);
}

std::string cv_report_csv(const CVReport& report) {
  std::string out = "fold,index,error,variance\n";
  for (std::size_t f = 0; f < report.folds.size(); ++f) {
    const CVFold& fold = report.folds[f];
    for (std::size_t i = 0; i < fold.indices.size(); ++i)
      out += std::to_string(f + 1) + "," + std::to_string(fold.indices[i]) + "," + format_double(fold.errors[i]) + "," +
             format_double(fold.variances[i]) + "\n";
  }
  return out;
}

namespace {

json to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::VectorXd vector_of(const json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + " must be an array of numbers");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(what + " must be an array of numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd matrix_of(const json& j, const std::string& what, Eigen::Index cols = -1) {
  if (!j.is_array()) throw ParseError(what + " must be an array of rows");
  if (j.empty()) return Eigen::MatrixXd(0, cols < 0 ? 0 : cols);
  const Eigen::Index c = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(j.size(), c);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Eigen::VectorXd row = vector_of(j[i], what);
    if (row.size() != c) throw ParseError(what + " has ragged rows");
    m.row(i) = row.transpose();
  }
  return m;
}

json prior_json(const PriorSpec& p) {
  if (p.mode == PriorMode::NonInformative) return json{{"mode", "non_informative"}};
  return json{{"mode", "informative"}, {"b", to_json(p.b)}, {"V", to_json(p.V)}, {"alpha", p.alpha}, {"gamma", p.gamma}};
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ParseError("unknown key '" + it.key() + "' in " + where);
}

PriorSpec prior_of(const json& j, const std::string& where) {
  check_keys(j, {"mode", "b", "V", "alpha", "gamma"}, where);
  const std::string mode = j.value("mode", "non_informative");
  if (mode == "non_informative") return PriorSpec{};
  if (mode != "informative") throw ParseError(where + ": prior mode must be non_informative or informative");
  for (const char* k : {"b", "V", "alpha", "gamma"})
    if (!j.contains(k)) throw ParseError(where + ": informative prior needs '" + k + "'");
  PriorSpec p;
  p.mode = PriorMode::Informative;
  p.b = vector_of(j["b"], where + ".b");
  p.V = matrix_of(j["V"], where + ".V");
  p.alpha = j["alpha"].get<double>();
  p.gamma = j["gamma"].get<double>();
  p.validate(static_cast<int>(p.b.size()));
  return p;
}

std::string family_name(KernelFamily f) { return f == KernelFamily::Matern52 ? "matern52" : "squared_exponential"; }

KernelFamily family_of(const std::string& s) {
  if (s == "matern52") return KernelFamily::Matern52;
  if (s == "squared_exponential") return KernelFamily::SquaredExponential;
  throw ParseError("unknown kernel family '" + s + "'");
}

}  // namespace

std::string model_to_json(const MultiFidelityModel& model, const Provenance& provenance) {
  json root;
  root["format"] = "mfk-model";
  root["format_version"] = kFormatVersion;
  json prov{{"seed", provenance.seed}, {"objective", provenance.objective}};
  json est = json::array();
  for (bool b : provenance.theta_estimated) est.push_back(b);
  prov["theta_estimated"] = est;
  json nuggets = json::array();
  json modes = json::array();
  for (const auto& f : model.fitted) {
    nuggets.push_back(f.applied_nugget());
    modes.push_back(f.prior.mode == PriorMode::Informative ? "informative" : "non_informative");
  }
  prov["applied_nuggets"] = nuggets;
  prov["prior_modes"] = modes;
  root["provenance"] = prov;

  json levels = json::array();
  for (int t = 0; t < model.levels(); ++t) {
    const LevelData& d = model.data[t];
    const FittedLevel& f = model.fitted[t];
    json lv;
    lv["design"] = to_json(Eigen::MatrixXd(d.design));
    lv["observations"] = to_json(d.observations);
    lv["f_basis"] = d.f_basis.to_string();
    lv["g_basis"] = d.g_basis ? json(d.g_basis->to_string()) : json(nullptr);
    lv["kernel"] = json{{"family", family_name(f.kernel.family)}, {"theta", to_json(f.kernel.theta)},
                        {"nugget", f.kernel.nugget}};
    lv["prior"] = prior_json(f.prior);
    lv["trend_mean"] = to_json(f.trend_mean);
    lv["trend_cov_scale"] = to_json(f.trend_cov_scale);
    lv["Q"] = f.Q;
    lv["a"] = f.a;
    levels.push_back(lv);
  }
  root["levels"] = levels;
  return root.dump(1) + "\n";
}

MultiFidelityModel model_from_json(const std::string& text, Provenance* provenance) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model archive is not valid JSON: ") + e.what());
  }
  try {
    if (root.value("format", "") != "mfk-model") throw ParseError("not a model archive");
    const int version = root.value("format_version", 0);
    if (version != kFormatVersion)
      throw ParseError("unsupported archive format version " + std::to_string(version));
    if (provenance) {
      const json& p = root.at("provenance");
      provenance->seed = p.value("seed", std::uint64_t{0});
      provenance->objective = p.value("objective", std::string("reml"));
      provenance->theta_estimated.clear();
      for (const auto& b : p.value("theta_estimated", json::array())) provenance->theta_estimated.push_back(b.get<bool>());
    }
    std::vector<LevelData> data;
    std::vector<KernelSpec> kernels;
    std::vector<PriorSpec> priors;
    const json& levels = root.at("levels");
    if (!levels.is_array() || levels.empty()) throw ParseError("archive has no levels");
    for (std::size_t t = 0; t < levels.size(); ++t) {
      const json& lv = levels[t];
      const std::string where = "level " + std::to_string(t + 1);
      LevelData d;
      d.observations = vector_of(lv.at("observations"), where + " observations");
      d.design = matrix_of(lv.at("design"), where + " design");
      d.f_basis = BasisSpec::parse(lv.at("f_basis").get<std::string>());
      if (!lv.at("g_basis").is_null()) d.g_basis = BasisSpec::parse(lv["g_basis"].get<std::string>());
      data.push_back(std::move(d));
      const json& k = lv.at("kernel");
      KernelSpec spec;
      spec.family = family_of(k.at("family").get<std::string>());
      spec.theta = vector_of(k.at("theta"), where + " theta");
      spec.nugget = k.at("nugget").get<double>();
      kernels.push_back(spec);
      priors.push_back(prior_of(lv.at("prior"), where + " prior"));
    }
    // Lower observations come from the nesting; fill them before refactorizing.
    MultiFidelityModel shell = assemble(data, std::vector<FittedLevel>(data.size()));
    std::vector<FittedLevel> fitted;
    for (std::size_t t = 0; t < levels.size(); ++t) {
      const json& lv = levels[t];
      const std::string where = "level " + std::to_string(t + 1);
      const Eigen::VectorXd mean = vector_of(lv.at("trend_mean"), where + " trend_mean");
      const Eigen::MatrixXd cov = matrix_of(lv.at("trend_cov_scale"), where + " trend_cov_scale", mean.size());
      try {
        fitted.push_back(restore_level(shell.data[t], kernels[t], priors[t], mean, cov, lv.at("Q").get<double>(),
                                       lv.at("a").get<double>()));
      } catch (const Error& e) {
        throw LevelFitError(static_cast<int>(t) + 1, e);
      }
    }
    return assemble(std::move(shell.data), std::move(fitted));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model archive: ") + e.what());
  }
}

void save_model(const fs::path& path, const MultiFidelityModel& model, const Provenance& provenance) {
  atomic_write(path, model_to_json(model, provenance));
}

MultiFidelityModel load_model(const fs::path& path, Provenance* provenance) {
  return model_from_json(read_file(path), provenance);
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("configuration is not valid JSON: ") + e.what());
  }
  check_keys(j, {"levels", "f_basis", "g_basis", "priors", "theta", "objective", "bounds", "restarts", "seed", "nugget",
                 "mode"},
             "configuration");
  RunConfig c;
  try {
    if (!j.contains("levels") || !j["levels"].is_array() || j["levels"].empty())
      throw ParseError("configuration needs a nonempty 'levels' list of CSV paths");
    for (const auto& p : j["levels"]) {
      fs::path path = p.get<std::string>();
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      c.level_files.push_back(path);
    }
    const std::size_t s = c.level_files.size();
    auto per_level = [&](const char* key) {
      if (j[key].size() != s) throw ParseError(std::string("'") + key + "' needs one entry per level");
    };
    if (j.contains("f_basis")) {
      per_level("f_basis");
      for (const auto& b : j["f_basis"]) c.f_basis.push_back(b.get<std::string>());
    }
    if (j.contains("g_basis")) {
      per_level("g_basis");
      for (const auto& b : j["g_basis"]) c.g_basis.push_back(b.is_null() ? std::string() : b.get<std::string>());
    }
    if (j.contains("priors")) {
      per_level("priors");
      for (std::size_t t = 0; t < s; ++t) c.priors.push_back(prior_of(j["priors"][t], "priors[" + std::to_string(t) + "]"));
    }
    if (j.contains("theta")) {
      const json& th = j["theta"];
      if (th.is_string()) {
        if (th.get<std::string>() != "auto") throw ParseError("'theta' must be \"auto\" or a list");
      } else {
        per_level("theta");
        for (const auto& v : th) {
          if (v.is_string() && v.get<std::string>() == "auto")
            c.theta.emplace_back(std::nullopt);
          else
            c.theta.emplace_back(vector_of(v, "theta"));
        }
      }
    }
    if (j.contains("objective")) {
      const std::string o = j["objective"].get<std::string>();
      if (o == "reml")
        c.objective = ThetaObjective::Reml;
      else if (o == "loo_cv")
        c.objective = ThetaObjective::LooCv;
      else
        throw ParseError("'objective' must be reml or loo_cv");
    }
    if (j.contains("bounds")) {
      check_keys(j["bounds"], {"lower", "upper"}, "bounds");
      c.bounds = ThetaBounds{vector_of(j["bounds"].at("lower"), "bounds.lower"),
                             vector_of(j["bounds"].at("upper"), "bounds.upper")};
    }
    if (j.contains("restarts")) c.restarts = j["restarts"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("nugget")) c.nugget = j["nugget"].get<double>();
    if (j.contains("mode")) {
      const std::string m = j["mode"].get<std::string>();
      if (m == "simple")
        c.mode = PredictionMode::Simple;
      else if (m == "universal")
        c.mode = PredictionMode::Universal;
      else
        throw ParseError("'mode' must be simple or universal");
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed configuration: ") + e.what());
  }
  if (c.restarts < 1) throw InvalidHyperparameter("restarts must be at least 1");
  if (!(c.nugget >= 0.0) || !std::isfinite(c.nugget)) throw InvalidHyperparameter("nugget must be finite and nonnegative");
  return c;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_file(path), path.parent_path()); }

std::vector<LevelData> load_levels(const RunConfig& config) {
  std::vector<LevelData> levels;
  for (std::size_t t = 0; t < config.level_files.size(); ++t) {
    LevelData lv = ingest_level_csv(config.level_files[t]);
    if (!config.f_basis.empty() && !config.f_basis[t].empty()) lv.f_basis = BasisSpec::parse(config.f_basis[t]);
    if (t > 0 && !config.g_basis.empty() && !config.g_basis[t].empty()) lv.g_basis = BasisSpec::parse(config.g_basis[t]);
    if (t == 0 && lv.lower_observations)
      throw StructuralError(config.level_files[t].string() + ": level 1 cannot have a z_lower column");
    levels.push_back(std::move(lv));
  }
  return levels;
}

FitOptions fit_options(const RunConfig& config) {
  FitOptions o;
  o.priors = config.priors;
  for (const auto& th : config.theta) {
    if (th)
      o.kernels.emplace_back(matern52(*th, config.nugget));
    else
      o.kernels.emplace_back(std::nullopt);
  }
  o.search.objective = config.objective;
  o.search.restarts = config.restarts;
  o.search.seed = config.seed;
  o.search.bounds = config.bounds;
  o.auto_nugget = config.nugget;
  return o;
}

}  // namespace mfk
