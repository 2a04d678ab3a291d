#include "mixcor/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "mixcor/errors.hpp"

namespace mixcor {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty() || cell == "NA" || cell == "nan" || cell == "NaN") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

const char* system_name(SystemMode mode) {
  switch (mode) {
    case SystemMode::MaxSet: return "max";
    case SystemMode::MinSet: return "min";
    case SystemMode::Custom: return "custom";
  }
  return "max";
}

// Ordinal variables touched by the estimated coefficients.
std::vector<bool> reported_ordinals(const EstimationResult& result, int ordinal_count) {
  std::vector<bool> used(static_cast<std::size_t>(ordinal_count), false);
  const auto& layout = result.R_hat.layout();
  const int c = layout.continuous();
  for (int index : result.coefficients) {
    const auto& coef = layout[index];
    if (coef.row >= c) used[static_cast<std::size_t>(coef.row - c)] = true;
    if (coef.col >= c) used[static_cast<std::size_t>(coef.col - c)] = true;
  }
  return used;
}

}  // namespace

CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (number == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    if (table.header.empty()) {
      std::set<std::string> seen;
      for (auto& name : cells) {
        if (name.size() >= 2 && name.front() == '"' && name.back() == '"') name = name.substr(1, name.size() - 2);
        if (name.empty()) throw ParseError("line " + std::to_string(number) + ": empty column name");
        if (!seen.insert(name).second) {
          throw ParseError("line " + std::to_string(number) + ": duplicate column '" + name + "'");
        }
      }
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw ParseError("line " + std::to_string(number) + ": expected " +
                       std::to_string(table.header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto value = parse_number(cells[j]);
      if (!value) {
        throw ParseError("line " + std::to_string(number) + ", column '" + table.header[j] +
                         "': not a number: '" + cells[j] + "'");
      }
      row.push_back(*value);
    }
    table.rows.push_back(std::move(row));
    table.lines.push_back(number);
  }
  if (table.header.empty()) throw ParseError("missing header row");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  return parse_csv(in);
}

std::vector<std::string> parse_name_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto& name : split(text, ',')) {
    if (name.empty()) throw InvalidArgument("empty name in list '" + text + "'");
    out.push_back(std::move(name));
  }
  return out;
}

std::vector<OrdinalColumn> parse_ordinal_list(const std::string& text) {
  std::vector<OrdinalColumn> out;
  for (const auto& item : parse_name_list(text)) {
    const auto colon = item.find(':');
    OrdinalColumn col{trim(item.substr(0, colon)), std::nullopt};
    if (colon != std::string::npos) {
      const std::string count = trim(item.substr(colon + 1));
      if (lower(count) != "infer") {
        int s = 0;
        const auto [ptr, ec] = std::from_chars(count.data(), count.data() + count.size(), s);
        if (ec != std::errc() || ptr != count.data() + count.size() || s < 2) {
          throw InvalidArgument("bad category count '" + count + "' for '" + col.name + "'");
        }
        col.categories = s;
      }
    }
    if (col.name.empty()) throw InvalidArgument("empty ordinal column name");
    out.push_back(std::move(col));
  }
  return out;
}

LoadedData load_dataset(const CsvTable& table, const std::vector<std::string>& continuous,
                        const std::vector<OrdinalColumn>& ordinal, IngestOptions options) {
  if (continuous.empty() && ordinal.empty()) throw InvalidArgument("no columns selected");
  auto column_of = [&](const std::string& name) {
    const auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw InvalidArgument("no column named '" + name + "'");
    return static_cast<std::size_t>(it - table.header.begin());
  };
  std::vector<std::size_t> cols;
  std::set<std::string> names;
  for (const auto& name : continuous) {
    if (!names.insert(name).second) throw InvalidArgument("column '" + name + "' selected twice");
    cols.push_back(column_of(name));
  }
  for (const auto& col : ordinal) {
    if (!names.insert(col.name).second) throw InvalidArgument("column '" + col.name + "' selected twice");
    cols.push_back(column_of(col.name));
  }

  std::vector<std::vector<double>> rows;
  rows.reserve(table.rows.size());
  std::vector<bool> complete;
  for (const auto& src : table.rows) {
    std::vector<double> row;
    bool ok = true;
    for (auto j : cols) {
      row.push_back(src[j]);
      ok = ok && !std::isnan(src[j]);
    }
    rows.push_back(std::move(row));
    complete.push_back(ok);
  }

  Recoding recoding;
  std::vector<std::string> unused;
  std::vector<VariableSpec> specs;
  for (const auto& name : continuous) specs.push_back(VariableSpec::continuous(name));
  const std::size_t c = continuous.size();
  for (std::size_t i = 0; i < ordinal.size(); ++i) {
    const auto& col = ordinal[i];
    std::set<long long> labels;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!complete[r]) continue;
      const double v = rows[r][c + i];
      if (!std::isfinite(v) || v != std::round(v) || std::fabs(v) > 1e15) {
        throw ParseError("line " + std::to_string(table.lines[r]) + ", column '" + col.name +
                         "': ordinal label is not an integer");
      }
      labels.insert(static_cast<long long>(v));
    }
    if (labels.empty()) throw TooFewRows("no complete rows");
    const long long lo = *labels.begin();
    const long long hi = *labels.rbegin();
    std::vector<long long> mapping;
    int s = 0;
    const bool codes = col.categories ? (lo >= 1 && hi <= *col.categories) : lo == 1;
    if (codes) {
      s = col.categories ? *col.categories : static_cast<int>(hi);
      for (int k = 1; k <= s; ++k) mapping.push_back(k);
    } else {
      if (col.categories && static_cast<int>(labels.size()) != *col.categories) {
        throw CodeOutOfRange("column '" + col.name + "' has " + std::to_string(labels.size()) +
                             " distinct labels outside 1.." + std::to_string(*col.categories));
      }
      mapping.assign(labels.begin(), labels.end());
      s = static_cast<int>(mapping.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!complete[r]) continue;
        const auto label = static_cast<long long>(rows[r][c + i]);
        rows[r][c + i] = static_cast<double>(
            std::lower_bound(mapping.begin(), mapping.end(), label) - mapping.begin() + 1);
      }
    }
    if (s < 2) throw InvalidArgument("ordinal column '" + col.name + "' has a single category");
    specs.push_back(VariableSpec::ordinal(col.name, s));
    recoding[col.name] = std::move(mapping);
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!complete[r]) std::fill(rows[r].begin(), rows[r].end(), std::numeric_limits<double>::quiet_NaN());
  }
  for (const auto& name : table.header) {
    if (!names.count(name)) unused.push_back(name);
  }
  return LoadedData{ingest(rows, specs, options), std::move(recoding), std::move(unused)};
}

std::vector<int> parse_pairs(const std::string& text, const std::vector<VariableSpec>& specs) {
  int c = 0;
  for (const auto& s : specs) c += s.is_ordinal() ? 0 : 1;
  const CorrelationLayout layout(c, static_cast<int>(specs.size()) - c);
  auto position = [&](const std::string& name) {
    for (std::size_t j = 0; j < specs.size(); ++j) {
      if (specs[j].name == name) return static_cast<int>(j);
    }
    throw UnknownPair("unknown variable '" + name + "' in pair list");
  };
  std::vector<int> out;
  for (const auto& item : parse_name_list(text)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UnknownPair("pair '" + item + "' is not of the form A:B");
    const int a = position(trim(item.substr(0, colon)));
    const int b = position(trim(item.substr(colon + 1)));
    const int index = layout.index_of(a, b);
    if (std::find(out.begin(), out.end(), index) == out.end()) out.push_back(index);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Method parse_method(const std::string& text) {
  const auto t = lower(text);
  if (t == "two-step" || t == "twostep" || t == "two") return Method::TwoStep;
  if (t == "one-step" || t == "onestep" || t == "one") return Method::OneStep;
  throw InvalidArgument("unknown method '" + text + "'");
}

SystemMode parse_system_mode(const std::string& text) {
  const auto t = lower(text);
  if (t == "max" || t == "maxset") return SystemMode::MaxSet;
  if (t == "min" || t == "minset") return SystemMode::MinSet;
  if (t == "custom") return SystemMode::Custom;
  throw InvalidArgument("unknown system mode '" + text + "'");
}

CovarianceVariant parse_covariance(const std::string& text) {
  const auto t = lower(text);
  if (t == "plugin") return CovarianceVariant::PlugInSigma;
  if (t == "corrected") return CovarianceVariant::CorrectedAvar;
  throw InvalidArgument("unknown covariance variant '" + text + "'");
}

LegendreOrder parse_legendre(int order) {
  if (order == 2) return LegendreOrder::Second;
  if (order == 3) return LegendreOrder::Third;
  throw InvalidArgument("legendre order must be 2 or 3");
}

json to_json(const FitConfig& cfg) {
  json j{{"method", to_string(cfg.method)},
         {"system", system_name(cfg.system_mode)},
         {"legendre", static_cast<int>(cfg.legendre)},
         {"covariance", to_string(cfg.covariance)},
         {"max_outer_iter", cfg.max_outer_iter},
         {"outer_tol", cfg.outer_tol},
         {"inner_grad_tol", cfg.inner_grad_tol},
         {"inner_max_iter", cfg.inner_max_iter}};
  j["pairs"] = cfg.pairs ? json(*cfg.pairs) : json(nullptr);
  return j;
}

FitConfig fit_config_from_json(const json& j) {
  FitConfig cfg;
  try {
    if (j.contains("method")) cfg.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("system")) cfg.system_mode = parse_system_mode(j.at("system").get<std::string>());
    if (j.contains("legendre")) cfg.legendre = parse_legendre(j.at("legendre").get<int>());
    if (j.contains("covariance")) cfg.covariance = parse_covariance(j.at("covariance").get<std::string>());
    if (j.contains("max_outer_iter")) cfg.max_outer_iter = j.at("max_outer_iter").get<int>();
    if (j.contains("outer_tol")) cfg.outer_tol = j.at("outer_tol").get<double>();
    if (j.contains("inner_grad_tol")) cfg.inner_grad_tol = j.at("inner_grad_tol").get<double>();
    if (j.contains("inner_max_iter")) cfg.inner_max_iter = j.at("inner_max_iter").get<int>();
    if (j.contains("pairs") && !j.at("pairs").is_null()) cfg.pairs = j.at("pairs").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("fit config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json fit_report_json(const LoadedData& loaded, const FitConfig& cfg, const EstimationResult& result) {
  const auto& data = loaded.data;
  const auto& specs = data.specs();
  const auto& layout = result.R_hat.layout();
  const Eigen::VectorXd est = result.estimates();
  const Eigen::VectorXd se = result.standard_errors();

  json variables = json::array();
  for (const auto& s : specs) {
    json v{{"name", s.name}, {"kind", s.is_ordinal() ? "ordinal" : "continuous"}};
    if (s.is_ordinal()) {
      v["categories"] = s.categories;
      v["labels"] = loaded.recoding.at(s.name);
    }
    variables.push_back(std::move(v));
  }

  json coefficients = json::array();
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < result.coefficients.size(); ++k) {
    const int index = result.coefficients[k];
    const auto& coef = layout[index];
    const auto ki = static_cast<Eigen::Index>(k);
    labels.push_back(coefficient_label(specs, index));
    coefficients.push_back({{"index", index},
                            {"label", labels.back()},
                            {"kind", to_string(coef.kind)},
                            {"i", specs[static_cast<std::size_t>(coef.col)].name},
                            {"j", specs[static_cast<std::size_t>(coef.row)].name},
                            {"estimate", est[ki]},
                            {"se", se[ki]}});
  }

  json thresholds = json::object();
  const auto used = reported_ordinals(result, data.ordinal_count());
  for (int i = 0; i < data.ordinal_count(); ++i) {
    if (!used[static_cast<std::size_t>(i)]) continue;
    const auto interior = result.a_hat.interior(static_cast<std::size_t>(i));
    thresholds[data.ordinal_spec(i).name] = std::vector<double>(interior.begin(), interior.end());
  }

  const auto& diag = result.diagnostics;
  json report{{"schema", kFitSchema},
              {"config", to_json(cfg)},
              {"n", result.n},
              {"dropped_rows", data.dropped_rows()},
              {"variables", variables},
              {"coefficients", coefficients},
              {"var_R", {{"labels", labels}, {"matrix", matrix_json(result.var_R)}}},
              {"thresholds", thresholds},
              {"diagnostics",
               {{"converged", diag.converged},
                {"outer_iterations", diag.outer_iterations},
                {"final_diff", diag.final_diff},
                {"final_loss", diag.final_loss},
                {"inner_iterations", diag.inner_iterations},
                {"inner_grad_norm", diag.inner_grad_norm},
                {"weight_conditions", diag.weight_conditions},
                {"pseudo_inverse_used", diag.pseudo_inverse_used},
                {"correlation_psd", diag.correlation_psd}}}};
  if (!loaded.unused_columns.empty()) report["unused_columns"] = loaded.unused_columns;
  return report;
}

std::string fit_report_csv(const LoadedData& loaded, const EstimationResult& result) {
  const auto& data = loaded.data;
  const auto& specs = data.specs();
  const auto& layout = result.R_hat.layout();
  const Eigen::VectorXd est = result.estimates();
  const Eigen::VectorXd se = result.standard_errors();
  std::ostringstream out;
  out << std::setprecision(17);
  out << "section,label,kind,i,j,estimate,se";
  std::vector<std::string> labels;
  for (int index : result.coefficients) labels.push_back(coefficient_label(specs, index));
  for (const auto& l : labels) out << ",var:" << l;
  out << "\n";
  const auto P = static_cast<Eigen::Index>(labels.size());
  for (Eigen::Index k = 0; k < P; ++k) {
    const auto& coef = layout[result.coefficients[static_cast<std::size_t>(k)]];
    out << "coefficient," << labels[static_cast<std::size_t>(k)] << "," << to_string(coef.kind) << ","
        << specs[static_cast<std::size_t>(coef.col)].name << "," << specs[static_cast<std::size_t>(coef.row)].name
        << "," << est[k] << "," << se[k];
    for (Eigen::Index j = 0; j < P; ++j) out << "," << result.var_R(k, j);
    out << "\n";
  }
  auto blanks = [&] {
    for (Eigen::Index j = 0; j < P; ++j) out << ",";
  };
  const auto used = reported_ordinals(result, data.ordinal_count());
  for (int i = 0; i < data.ordinal_count(); ++i) {
    if (!used[static_cast<std::size_t>(i)]) continue;
    const auto interior = result.a_hat.interior(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < interior.size(); ++k) {
      out << "threshold," << data.ordinal_spec(i).name << "_" << k + 1 << ",threshold,"
          << data.ordinal_spec(i).name << "," << k + 1 << "," << interior[k] << ",";
      blanks();
      out << "\n";
    }
  }
  const auto& diag = result.diagnostics;
  const std::pair<const char*, double> items[] = {
      {"converged", diag.converged ? 1.0 : 0.0},
      {"outer_iterations", diag.outer_iterations},
      {"final_diff", diag.final_diff},
      {"final_loss", diag.final_loss},
      {"n", result.n},
      {"dropped_rows", data.dropped_rows()}};
  for (const auto& [key, value] : items) {
    out << "diagnostic," << key << ",,,," << value << ",";
    blanks();
    out << "\n";
  }
  return out.str();
}

SimDesign design_from_json(const json& j) {
  SimDesign d;
  try {
    d.name = j.value("name", std::string("study"));
    const auto R = j.at("R").get<std::vector<std::vector<double>>>();
    const auto p = static_cast<Eigen::Index>(R.size());
    d.R.resize(p, p);
    for (Eigen::Index r = 0; r < p; ++r) {
      if (static_cast<Eigen::Index>(R[static_cast<std::size_t>(r)].size()) != p) {
        throw InvalidArgument("R must be square");
      }
      for (Eigen::Index c = 0; c < p; ++c) d.R(r, c) = R[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    d.thresholds = j.at("thresholds").get<std::vector<std::vector<double>>>();
    d.n = j.at("n").get<int>();
    d.replications = j.value("replications", 1000);
    d.seed = j.value("seed", std::uint64_t{1});
    d.standardize = j.value("standardize", false);
    d.threads = j.value("threads", 0);
    if (j.contains("fit")) d.fit = fit_config_from_json(j.at("fit"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("design: ") + e.what());
  }
  d.validate();
  return d;
}

SimDesign read_design(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return design_from_json(j);
}

json to_json(const SimDesign& d) {
  return {{"name", d.name},
          {"R", matrix_json(d.R)},
          {"thresholds", d.thresholds},
          {"n", d.n},
          {"replications", d.replications},
          {"seed", d.seed},
          {"standardize", d.standardize},
          {"threads", d.threads},
          {"fit", to_json(d.fit)}};
}

json study_report_json(const SimDesign& design, const SimReport& report) {
  return {{"schema", kStudySchema},
          {"design", to_json(design)},
          {"labels", report.labels},
          {"coefficients", report.coefficients},
          {"truth", vector_json(report.truth)},
          {"mean", vector_json(report.mean)},
          {"covr", matrix_json(report.covr)},
          {"mcov", matrix_json(report.mcov)},
          {"succeeded", report.estimates.rows()},
          {"failures", report.failures},
          {"nonconverged", report.nonconverged},
          {"wall_seconds", report.wall_seconds}};
}

void write_csv(std::ostream& out, const LoadedData& loaded) {
  const auto& data = loaded.data;
  const auto& specs = data.specs();
  for (std::size_t j = 0; j < specs.size(); ++j) out << (j ? "," : "") << specs[j].name;
  out << "\n" << std::setprecision(17);
  const int c = data.continuous_count();
  for (int r = 0; r < data.rows(); ++r) {
    for (int j = 0; j < c; ++j) out << (j ? "," : "") << data.continuous()(r, j);
    for (int i = 0; i < data.ordinal_count(); ++i) {
      const auto& labels = loaded.recoding.at(data.ordinal_spec(i).name);
      out << (c + i ? "," : "") << labels[static_cast<std::size_t>(data.ordinal()(r, i) - 1)];
    }
    out << "\n";
  }
}

}  // namespace mixcor
