#pragma once

#include "subpop/common.hpp"
#include "subpop/pipeline.hpp"
#include "subpop/simgen.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace subpop {

/// Unreadable, malformed or unusable input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvOptions {
  std::string group_column;           // header name, or 1-based index without header
  std::vector<std::string> features;  // empty: every other column not excluded
  std::vector<std::string> exclude;
  std::optional<std::string> control_value;  // default: lexicographically smaller value
  char delimiter = '\0';                     // '\0': detect comma or tab
};

struct LoadedData {
  TwoSampleData data;
  std::vector<std::string> feature_names;
  std::string control_label;
  std::string treatment_label;
  std::string sha256;  // of the raw file bytes
  Index rows = 0;
};

/// The header is taken to be present when no field of the first line is
/// numeric. Errors name the offending line and column.
LoadedData load_csv(const std::string& path, const CsvOptions& options);

/// Raw rows of a delimited file, split and trimmed.
struct CsvTable {
  std::vector<std::string> header;  // empty when the file has none
  std::vector<std::vector<std::string>> rows;
  std::string sha256;
};
CsvTable read_table(const std::string& path, char delimiter = '\0');

std::string sha256_hex(const std::string& bytes);

struct PcaResult {
  std::vector<double> scores;
  double explained_fraction = 0.0;
  Vector loading;
};

/// Projection on the leading eigenvector of the covariance. With a tied
/// leading eigenvalue the loading is the first coordinate axis with a
/// non-zero projection onto the tied eigenspace. The first non-zero loading
/// is positive.
PcaResult pca_first_component(const PointSet& points);

nlohmann::json report_to_json(const AnalysisReport& report);
nlohmann::json config_to_json(const AnalysisConfig& cfg);
nlohmann::json experiment_to_json(const ExperimentResult& result);

nlohmann::json experiment_spec_to_json(const ExperimentSpec& spec);
/// Missing keys keep the defaults of ExperimentSpec.
ExperimentSpec experiment_spec_from_json(const nlohmann::json& doc);

/// Data sets resampled from a file rather than drawn from a mixture.
/// iris-power: 25 versicolor against 25 virginica; iris-level: two disjoint
/// halves of 25 versicolor. abalone-level / abalone-power use rings 9 and 10
/// reduced to their first principal component, with sex as hidden strata.
std::vector<std::string> resampling_design_names();
struct ResamplingDesign {
  DataSampler sampler;
  Alternative alternative = Alternative::TwoSided;
  int replicates = 200;
};
ResamplingDesign resampling_design(const std::string& name, const std::string& path);

/// Entry point of the command line tool; returns the process exit code.
/// 0 success, 2 usage error, 3 data error, 4 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace subpop
