#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "mfk/benchmark.hpp"
#include "mfk/crossval.hpp"
#include "mfk/design.hpp"
#include "mfk/errors.hpp"
#include "mfk/io.hpp"
#include "mfk/metrics.hpp"
#include "mfk/model.hpp"

namespace fs = std::filesystem;
using namespace mfk;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

std::string g_command_line;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void emit(const std::string& out, const std::string& content) {
  if (out.empty()) {
    std::cout << content;
    return;
  }
  atomic_write(out, content);
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  atomic_write(out + ".log", std::string(stamp) + " " + g_command_line + "\n");
}

std::vector<int> parse_ints(const std::string& text, const std::string& flag) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(flag + " expects comma-separated integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError(flag + " is empty");
  return out;
}

DesignBounds parse_bounds(const std::string& text) {
  DesignBounds b;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("--bounds expects lo:hi pairs separated by commas");
    try {
      b.push_back(Interval{std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw UsageError("--bounds expects numbers, got '" + item + "'");
    }
  }
  return b;
}

PredictionMode parse_mode(const std::string& m) {
  if (m == "simple") return PredictionMode::Simple;
  if (m == "universal") return PredictionMode::Universal;
  throw UsageError("--mode must be simple or universal");
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage:
      return kUsage;
    case ErrorCategory::Data:
      return kData;
    case ErrorCategory::Numerical:
      return kNumerical;
  }
  return kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_command_line += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Recursive multi-fidelity co-kriging"};
  app.require_subcommand(1);

  // design
  auto* design = app.add_subcommand("design", "Nested space-filling designs, one CSV per level");
  std::string sizes_text, bounds_text, method = "maximin_lhs", out_dir = ".";
  std::uint64_t seed = 0;
  design->add_option("--sizes", sizes_text, "Level sizes from finest to coarsest, e.g. 5,25")->required();
  design->add_option("--bounds", bounds_text, "Per-dimension lo:hi, e.g. 0:1,0:2")->required();
  design->add_option("--method", method, "lhs, maximin_lhs or random");
  design->add_option("--seed", seed);
  design->add_option("--out-dir", out_dir);

  // fit
  auto* fitc = app.add_subcommand("fit", "Fit a model from a JSON run configuration");
  std::string config_path, out;
  fitc->add_option("--config", config_path)->required();
  fitc->add_option("--out", out, "Model archive path (stdout if omitted)");

  // predict
  auto* predict = app.add_subcommand("predict", "Predict at query points");
  std::string model_path, points_path, mode = "simple";
  predict->add_option("--model", model_path)->required();
  predict->add_option("--points", points_path)->required();
  predict->add_option("--mode", mode, "simple or universal");
  predict->add_option("--out", out);

  // cv
  auto* cv = app.add_subcommand("cv", "Closed-form cross-validation of a fitted model");
  std::string depth = "top", folds = "loo", rho_source = "fold";
  bool fixed_trend = false, fixed_variance = false;
  cv->add_option("--model", model_path)->required();
  cv->add_option("--remove-depth", depth, "top, all, or a 1-based level");
  cv->add_option("--folds", folds, "loo or a fold count");
  cv->add_option("--seed", seed);
  cv->add_option("--mode", mode, "simple or universal");
  cv->add_option("--rho-source", rho_source, "fold or full");
  cv->add_flag("--fixed-trend", fixed_trend, "Keep the full-data trend in every fold");
  cv->add_flag("--fixed-variance", fixed_variance, "Keep the full-data variance in every fold");
  cv->add_option("--out", out);

  // eval
  auto* eval = app.add_subcommand("eval", "Accuracy metrics of a prediction CSV against truth");
  std::string pred_path, truth_path;
  eval->add_option("--predictions", pred_path)->required();
  eval->add_option("--truth", truth_path, "CSV whose column z (or last column) holds the truth")->required();
  eval->add_option("--out", out);

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Co-kriging versus kriging on the Forrester pair");
  BenchmarkRequest br;
  std::string n2_text = "5,10,15,20,25";
  bench->add_option("--n1", br.n1);
  bench->add_option("--n2", n2_text);
  bench->add_option("--repeats", br.repeats);
  bench->add_option("--dim", br.dim, "1 or 2");
  bench->add_option("--restarts", br.restarts);
  bench->add_option("--seed", br.seed);
  bench->add_option("--out", out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*design) {
      DesignRequest req;
      req.sizes = parse_ints(sizes_text, "--sizes");
      req.bounds = parse_bounds(bounds_text);
      req.seed = seed;
      if (method == "lhs")
        req.method = DesignMethod::Lhs;
      else if (method == "maximin_lhs")
        req.method = DesignMethod::MaximinLhs;
      else if (method == "random")
        req.method = DesignMethod::Random;
      else
        throw UsageError("--method must be lhs, maximin_lhs or random");
      const std::vector<Design> levels = nest(req);
      for (std::size_t t = 0; t < levels.size(); ++t) {
        const std::string path = (fs::path(out_dir) / ("level_" + std::to_string(t + 1) + ".csv")).string();
        emit(path, design_csv(levels[t]));
      }
    } else if (*fitc) {
      const RunConfig config = load_run_config(config_path);
      const FitOptions options = fit_options(config);
      const MultiFidelityModel model = fit(load_levels(config), options);
      for (const auto& w : model.warnings) std::cerr << "warning: " << w << "\n";
      Provenance prov;
      prov.seed = config.seed;
      prov.objective = config.objective == ThetaObjective::Reml ? "reml" : "loo_cv";
      for (int t = 0; t < model.levels(); ++t)
        prov.theta_estimated.push_back(options.kernels.empty() || !options.kernels[t].has_value());
      emit(out, model_to_json(model, prov));
    } else if (*predict) {
      const MultiFidelityModel model = load_model(model_path);
      const Design points = read_points_csv(points_path);
      emit(out, predictions_csv(points, predict_batch(model, points, parse_mode(mode))));
    } else if (*cv) {
      const MultiFidelityModel model = load_model(model_path);
      const int s = model.levels();
      const int n_top = model.data.back().n();
      int removal = s;
      if (depth == "all")
        removal = 1;
      else if (depth != "top")
        removal = parse_ints(depth, "--remove-depth").front();
      CVRequest req = folds == "loo" ? CVRequest::leave_one_out(n_top, removal)
                                     : CVRequest::k_fold(n_top, parse_ints(folds, "--folds").front(), seed, removal);
      req.mode = parse_mode(mode);
      req.reestimate_trend = !fixed_trend;
      req.reestimate_variance = !fixed_variance;
      if (rho_source == "fold")
        req.rho_source = RhoSource::FoldEstimate;
      else if (rho_source == "full")
        req.rho_source = RhoSource::FullData;
      else
        throw UsageError("--rho-source must be fold or full");
      const CVReport report = fast_cv(model, req);
      std::cerr << "rmse " << format_double(report.rmse) << "\n";
      emit(out, cv_report_csv(report));
    } else if (*eval) {
      const CsvTable pred = read_csv(pred_path);
      const CsvTable truth = read_csv(truth_path);
      auto column = [](const CsvTable& t, const std::string& name, bool fallback_last) -> Eigen::VectorXd {
        for (std::size_t j = 0; j < t.header.size(); ++j)
          if (t.header[j] == name) return t.values.col(j);
        if (fallback_last) return t.values.col(t.values.cols() - 1);
        throw ParseError("prediction file has no '" + name + "' column");
      };
      EvalSet e{column(truth, "z", true), column(pred, "mean", false), column(pred, "variance", false)};
      if (e.truth.size() != e.pred_mean.size())
        throw ShapeError("truth has " + std::to_string(e.truth.size()) + " rows, predictions " +
                         std::to_string(e.pred_mean.size()));
      std::string table = "metric,value\n";
      table += "rmse," + format_double(rmse(e)) + "\n";
      table += "maxae," + format_double(maxae(e)) + "\n";
      table += "q2," + format_double(q2(e)) + "\n";
      table += "rimse," + format_double(rimse(e)) + "\n";
      emit(out, table);
    } else if (*bench) {
      br.n2 = parse_ints(n2_text, "--n2");
      emit(out, benchmark_csv(run_benchmark(br)));
    }
  } catch (const UsageError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error[" << e.kind() << "]: " << e.detail() << "\n";
    return exit_code(e.category());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error[io]: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return kNumerical;
  }
  return kOk;
}
