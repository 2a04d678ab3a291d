#pragma once

// File formats: CSV datasets, fit reports (JSON or CSV), simulation designs
// and reports (JSON).

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mixcor/estimator.hpp"
#include "mixcor/simulation.hpp"

namespace mixcor {

inline constexpr const char* kFitSchema = "mixcor.fit/1";
inline constexpr const char* kStudySchema = "mixcor.study/1";

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;  // NaN for empty, "NA" or "nan" cells
  std::vector<int> lines;                 // source line of each row, 1-based
};

// Comma-separated with a mandatory header. Throws ParseError naming the line.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

struct OrdinalColumn {
  std::string name;
  std::optional<int> categories;  // nullopt: infer
};

// Parses "a:2,b:infer,c" (a bare name means infer).
std::vector<OrdinalColumn> parse_ordinal_list(const std::string& text);
std::vector<std::string> parse_name_list(const std::string& text);

// Original label of each code 1..s, per ordinal variable.
using Recoding = std::map<std::string, std::vector<long long>>;

struct LoadedData {
  MixedDataset data;
  Recoding recoding;
  std::vector<std::string> unused_columns;
};

// Selects the named columns, drops rows with a missing selected cell and
// recodes ordinal labels. Labels are taken as codes when they fit 1..s for a
// declared s, or start at 1 when s is inferred (s is then the largest label);
// a missing middle category then raises EmptyCategory. Any other integer
// labels are mapped in ascending order onto 1..s.
LoadedData load_dataset(const CsvTable& table, const std::vector<std::string>& continuous,
                        const std::vector<OrdinalColumn>& ordinal, IngestOptions options = {});

// "Y1:X2,X1:X2" into layout indices of `specs` (continuous first).
std::vector<int> parse_pairs(const std::string& text, const std::vector<VariableSpec>& specs);

Method parse_method(const std::string& text);
SystemMode parse_system_mode(const std::string& text);
CovarianceVariant parse_covariance(const std::string& text);
LegendreOrder parse_legendre(int order);

nlohmann::json to_json(const FitConfig& cfg);
FitConfig fit_config_from_json(const nlohmann::json& j);

nlohmann::json fit_report_json(const LoadedData& loaded, const FitConfig& cfg,
                               const EstimationResult& result);
std::string fit_report_csv(const LoadedData& loaded, const EstimationResult& result);

SimDesign design_from_json(const nlohmann::json& j);
SimDesign read_design(const std::filesystem::path& path);
nlohmann::json to_json(const SimDesign& design);
nlohmann::json study_report_json(const SimDesign& design, const SimReport& report);

// Writes the dataset as CSV with full precision and the original labels.
void write_csv(std::ostream& out, const LoadedData& loaded);

}  // namespace mixcor
