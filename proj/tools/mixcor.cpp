// mixcor command line: `fit` and `simulate`.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "mixcor/errors.hpp"
#include "mixcor/io.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kNotConverged = 2;

struct FitArgs {
  std::string data;
  std::string continuous;
  std::string ordinal;
  std::string method = "two-step";
  std::string system = "max";
  std::string pairs;
  int legendre = 3;
  std::string cov = "corrected";
  std::string out;
  std::string format = "json";
  bool no_standardize = false;
};

struct SimulateArgs {
  std::string design;
  std::string out = ".";
  int threads = -1;
  long long seed = -1;
  int replications = -1;
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw mixcor::ParseError("cannot write '" + path + "'");
  out << text;
}

int run_fit(const FitArgs& args) {
  using namespace mixcor;
  const auto table = read_csv(args.data);
  const auto continuous = args.continuous.empty() ? std::vector<std::string>{}
                                                  : parse_name_list(args.continuous);
  const auto ordinal = args.ordinal.empty() ? std::vector<OrdinalColumn>{}
                                            : parse_ordinal_list(args.ordinal);
  const LoadedData loaded = load_dataset(table, continuous, ordinal, IngestOptions{!args.no_standardize});

  FitConfig cfg;
  cfg.method = parse_method(args.method);
  cfg.system_mode = parse_system_mode(args.system);
  cfg.legendre = parse_legendre(args.legendre);
  cfg.covariance = parse_covariance(args.cov);
  if (!args.pairs.empty()) {
    cfg.pairs = parse_pairs(args.pairs, loaded.data.specs());
    cfg.system_mode = SystemMode::Custom;
  } else if (cfg.system_mode == SystemMode::Custom) {
    throw InvalidArgument("--system custom requires --pairs");
  }

  const EstimationResult result = fit(loaded.data, cfg);
  if (args.format == "json") {
    write_text(args.out, fit_report_json(loaded, cfg, result).dump(2) + "\n");
  } else {
    write_text(args.out, fit_report_csv(loaded, result));
  }
  for (const auto& [name, labels] : loaded.recoding) {
    bool identity = true;
    for (std::size_t k = 0; k < labels.size(); ++k) identity = identity && labels[k] == static_cast<long long>(k + 1);
    if (!identity) {
      std::cerr << "recoded " << name << ":";
      for (std::size_t k = 0; k < labels.size(); ++k) std::cerr << " " << labels[k] << "->" << k + 1;
      std::cerr << "\n";
    }
  }
  if (loaded.data.dropped_rows() > 0) {
    std::cerr << "dropped " << loaded.data.dropped_rows() << " rows with missing cells\n";
  }
  if (!result.diagnostics.converged) {
    std::cerr << "warning: estimation did not converge after " << result.diagnostics.outer_iterations
              << " outer iterations (diff " << result.diagnostics.final_diff << ")\n";
    return kNotConverged;
  }
  return kOk;
}

int run_simulate(const SimulateArgs& args) {
  using namespace mixcor;
  SimDesign design = read_design(args.design);
  if (args.threads >= 0) {
    design.threads = args.threads;
  } else if (const char* env = std::getenv("MIXCOR_THREADS")) {
    design.threads = std::atoi(env);
  }
  if (args.seed >= 0) design.seed = static_cast<std::uint64_t>(args.seed);
  if (args.replications > 0) design.replications = args.replications;
  design.validate();

  const SimReport report = run_study(design);
  std::filesystem::create_directories(args.out);
  const auto base = std::filesystem::path(args.out) / (design.name.empty() ? "study" : design.name);
  write_text(base.string() + ".json", study_report_json(design, report).dump(2) + "\n");
  const std::string table = format_table(design, report);
  write_text(base.string() + ".txt", table);
  std::cout << table;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative GMM estimation of mixed Pearson, polyserial and polychoric correlations"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Estimate the correlation matrix of a CSV dataset");
  fit->add_option("--data", fit_args.data, "CSV file with a header row")->required();
  fit->add_option("--continuous", fit_args.continuous, "Continuous columns, comma separated");
  fit->add_option("--ordinal", fit_args.ordinal, "Ordinal columns as name:categories or name:infer");
  fit->add_option("--method", fit_args.method, "two-step or one-step")->capture_default_str();
  fit->add_option("--system", fit_args.system, "max, min or custom")->capture_default_str();
  fit->add_option("--pairs", fit_args.pairs, "Coefficient subset, e.g. Y1:X2,X1:X2");
  fit->add_option("--legendre", fit_args.legendre, "Bivariate CDF approximation order (2 or 3)")
      ->capture_default_str();
  fit->add_option("--cov", fit_args.cov, "Two-step covariance: plugin or corrected")->capture_default_str();
  fit->add_option("--out", fit_args.out, "Output file (default stdout)");
  fit->add_option("--format", fit_args.format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  fit->add_flag("--no-standardize", fit_args.no_standardize, "Use continuous columns as given");

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo study from a design file");
  sim->add_option("--design", sim_args.design, "Design JSON")->required();
  sim->add_option("--out", sim_args.out, "Output directory")->capture_default_str();
  sim->add_option("--threads", sim_args.threads, "Worker threads (0: all cores; env MIXCOR_THREADS)");
  sim->add_option("--seed", sim_args.seed, "Override the design seed");
  sim->add_option("--replications", sim_args.replications, "Override the replication count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*fit) return run_fit(fit_args);
    return run_simulate(sim_args);
  } catch (const mixcor::DegenerateWeight& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNotConverged;
  } catch (const mixcor::LineSearchFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNotConverged;
  } catch (const mixcor::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
}
