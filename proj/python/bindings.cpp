// Python extension `mixcor._core`. Reports cross the boundary as JSON text.

#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mixcor/errors.hpp"
#include "mixcor/estimator.hpp"
#include "mixcor/io.hpp"
#include "mixcor/normal.hpp"
#include "mixcor/simulation.hpp"

namespace py = pybind11;
using namespace mixcor;

namespace {

LoadedData make_dataset(const Eigen::MatrixXd& y, const Eigen::MatrixXi& x, std::vector<std::string> y_names,
                        std::vector<std::string> x_names, std::vector<int> categories, bool standardize) {
  if (y.rows() != x.rows() && y.cols() > 0 && x.cols() > 0) {
    throw InvalidArgument("continuous and ordinal arrays differ in row count");
  }
  if (static_cast<Eigen::Index>(y_names.size()) != y.cols() || static_cast<Eigen::Index>(x_names.size()) != x.cols() ||
      categories.size() != x_names.size()) {
    throw InvalidArgument("names and categories must match the array widths");
  }
  std::vector<VariableSpec> specs;
  for (auto& name : y_names) specs.push_back(VariableSpec::continuous(std::move(name)));
  Recoding recoding;
  for (std::size_t i = 0; i < x_names.size(); ++i) {
    std::vector<long long> labels;
    for (int k = 1; k <= categories[i]; ++k) labels.push_back(k);
    recoding[x_names[i]] = labels;
    specs.push_back(VariableSpec::ordinal(x_names[i], categories[i]));
  }
  const Eigen::Index n = y.cols() > 0 ? y.rows() : x.rows();
  Eigen::MatrixXd yy = y.cols() > 0 ? y : Eigen::MatrixXd(n, 0);
  Eigen::MatrixXi xx = x.cols() > 0 ? x : Eigen::MatrixXi(n, 0);
  return LoadedData{MixedDataset::from_columns(std::move(specs), std::move(yy), std::move(xx), IngestOptions{standardize}),
                    std::move(recoding), {}};
}

std::string fit_json(const Eigen::MatrixXd& y, const Eigen::MatrixXi& x, std::vector<std::string> y_names,
                     std::vector<std::string> x_names, std::vector<int> categories, const std::string& method,
                     const std::string& system, const std::string& pairs, int legendre, const std::string& cov,
                     bool standardize) {
  const LoadedData loaded =
      make_dataset(y, x, std::move(y_names), std::move(x_names), std::move(categories), standardize);
  FitConfig cfg;
  cfg.method = parse_method(method);
  cfg.system_mode = parse_system_mode(system);
  cfg.legendre = parse_legendre(legendre);
  cfg.covariance = parse_covariance(cov);
  if (!pairs.empty()) {
    cfg.pairs = parse_pairs(pairs, loaded.data.specs());
    cfg.system_mode = SystemMode::Custom;
  }
  EstimationResult result;
  {
    py::gil_scoped_release release;
    result = fit(loaded.data, cfg);
  }
  auto report = fit_report_json(loaded, cfg, result);
  report["R_hat"] = nlohmann::json::array();
  const Eigen::MatrixXd R = result.R_hat.to_matrix();
  for (Eigen::Index r = 0; r < R.rows(); ++r) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < R.cols(); ++c) row.push_back(R(r, c));
    report["R_hat"].push_back(row);
  }
  return report.dump();
}

std::string simulate_json(const std::string& design_text, int threads) {
  SimDesign design = design_from_json(nlohmann::json::parse(design_text));
  if (threads >= 0) design.threads = threads;
  SimReport report;
  {
    py::gil_scoped_release release;
    report = run_study(design);
  }
  auto j = study_report_json(design, report);
  j["table"] = format_table(design, report);
  std::vector<std::vector<double>> estimates;
  for (Eigen::Index r = 0; r < report.estimates.rows(); ++r) {
    estimates.emplace_back(report.estimates.row(r).begin(), report.estimates.row(r).end());
  }
  j["estimates"] = estimates;
  return j.dump();
}

py::tuple generate_arrays(const std::string& design_text, std::uint64_t replication) {
  const SimDesign design = design_from_json(nlohmann::json::parse(design_text));
  const MixedDataset data = generate(design, replication);
  return py::make_tuple(Eigen::MatrixXd(data.continuous()), Eigen::MatrixXi(data.ordinal()));
}

double oracle(const Eigen::MatrixXd& y, const Eigen::MatrixXi& x, std::vector<int> categories, int coefficient) {
  std::vector<std::string> y_names, x_names;
  for (Eigen::Index j = 0; j < y.cols(); ++j) y_names.push_back("Y" + std::to_string(j + 1));
  for (Eigen::Index i = 0; i < x.cols(); ++i) x_names.push_back("X" + std::to_string(i + 1));
  const LoadedData loaded = make_dataset(y, x, y_names, x_names, std::move(categories), false);
  return ml_pair_oracle(loaded.data, coefficient);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Iterative GMM estimation of mixed Pearson, polyserial and polychoric correlations";
  py::register_exception<Error>(m, "MixcorError", PyExc_ValueError);

  m.def("fit_json", &fit_json, py::arg("continuous"), py::arg("ordinal"), py::arg("continuous_names"),
        py::arg("ordinal_names"), py::arg("categories"), py::arg("method"), py::arg("system"), py::arg("pairs"),
        py::arg("legendre"), py::arg("cov"), py::arg("standardize"));
  m.def("simulate_json", &simulate_json, py::arg("design"), py::arg("threads") = -1);
  m.def("generate", &generate_arrays, py::arg("design"), py::arg("replication"));
  m.def("ml_pair_oracle", &oracle, py::arg("continuous"), py::arg("ordinal"), py::arg("categories"),
        py::arg("coefficient"));
  m.def(
      "binorm_cdf",
      [](double x, double y, double rho, int order) { return binorm_cdf_legendre(x, y, rho, parse_legendre(order)); },
      py::arg("x"), py::arg("y"), py::arg("rho"), py::arg("order") = 3);
  m.def("binorm_cdf_oracle", &binorm_cdf_oracle, py::arg("x"), py::arg("y"), py::arg("rho"));
  m.def("norm_cdf", &norm_cdf, py::arg("z"));
  m.def("norm_quantile", &norm_quantile, py::arg("p"));
}
