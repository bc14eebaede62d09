#include "subpop/cli.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#ifndef SUBPOP_VERSION
#define SUBPOP_VERSION "0.0.0"
#endif
#ifndef SUBPOP_DATA_DIR
#define SUBPOP_DATA_DIR "data"
#endif

namespace subpop {

using nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

CsvTable read_table(const std::string& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string bytes = buffer.str();

  CsvTable table;
  table.sha256 = sha256_hex(bytes);
  std::istringstream lines(bytes);
  std::string line;
  std::size_t width = 0;
  bool first = true;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (delimiter == '\0') delimiter = line.find('\t') != std::string::npos ? '\t' : ',';
    auto fields = split(line, delimiter);
    if (first) {
      first = false;
      width = fields.size();
      const bool any_numeric =
          std::any_of(fields.begin(), fields.end(), [](const auto& f) { return parse_number(f).has_value(); });
      if (!any_numeric) {
        table.header = std::move(fields);
        continue;
      }
    }
    if (fields.size() != width) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                      " fields, found " + std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (table.rows.empty()) throw DataError("'" + path + "' contains no data rows");
  return table;
}

namespace {

std::size_t resolve_column(const CsvTable& t, const std::string& name, const std::string& path) {
  if (!t.header.empty()) {
    const auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it != t.header.end()) return static_cast<std::size_t>(it - t.header.begin());
  }
  if (auto idx = parse_number(name); idx && *idx >= 1 && *idx == std::floor(*idx) &&
                                     *idx <= static_cast<double>(t.rows.front().size())) {
    return static_cast<std::size_t>(*idx) - 1;
  }
  throw DataError("'" + path + "': no column named '" + name + "'");
}

std::string column_name(const CsvTable& t, std::size_t j) {
  return t.header.empty() ? std::to_string(j + 1) : t.header[j];
}

}  // namespace

LoadedData load_csv(const std::string& path, const CsvOptions& options) {
  const CsvTable table = read_table(path, options.delimiter);
  if (options.group_column.empty()) throw DataError("a group column is required");
  const std::size_t group = resolve_column(table, options.group_column, path);

  std::set<std::size_t> excluded{group};
  for (const auto& e : options.exclude) excluded.insert(resolve_column(table, e, path));
  std::vector<std::size_t> feats;
  if (options.features.empty()) {
    for (std::size_t j = 0; j < table.rows.front().size(); ++j) {
      if (!excluded.count(j)) feats.push_back(j);
    }
  } else {
    for (const auto& f : options.features) {
      const auto j = resolve_column(table, f, path);
      if (j == group) throw DataError("the group column cannot also be a feature");
      feats.push_back(j);
    }
  }
  if (feats.empty()) throw DataError("no feature columns selected");

  std::vector<std::string> values;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& g = table.rows[i][group];
    if (std::find(values.begin(), values.end(), g) != values.end()) continue;
    if (values.size() == 2) {
      throw DataError("group column '" + column_name(table, group) + "' has more than two values: '" +
                      values[0] + "', '" + values[1] + "' and '" + g + "'");
    }
    values.push_back(g);
  }
  if (values.size() != 2) throw DataError("group column must contain exactly two distinct values");
  std::sort(values.begin(), values.end());
  if (options.control_value) {
    if (*options.control_value == values[1]) {
      std::swap(values[0], values[1]);
    } else if (*options.control_value != values[0]) {
      throw DataError("control value '" + *options.control_value + "' does not occur in the group column");
    }
  }

  std::vector<std::vector<double>> rows1;
  std::vector<std::vector<double>> rows2;
  const std::size_t header_lines = table.header.empty() ? 0 : 1;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    std::vector<double> row;
    for (auto j : feats) {
      const auto v = parse_number(table.rows[i][j]);
      if (!v) {
        throw DataError("row " + std::to_string(i + 1 + header_lines) + ", column '" +
                        column_name(table, j) + "': '" + table.rows[i][j] + "' is not a number");
      }
      row.push_back(*v);
    }
    (table.rows[i][group] == values[0] ? rows1 : rows2).push_back(std::move(row));
  }
  if (rows1.size() < 2 || rows2.size() < 2) throw DataError("each group needs at least two rows");

  LoadedData out;
  out.data.x1 = PointSet::from_rows(rows1);
  out.data.x2 = PointSet::from_rows(rows2);
  for (auto j : feats) out.feature_names.push_back(column_name(table, j));
  out.control_label = values[0];
  out.treatment_label = values[1];
  out.sha256 = table.sha256;
  out.rows = static_cast<Index>(table.rows.size());
  return out;
}

PcaResult pca_first_component(const PointSet& points) {
  if (points.size() < 2) throw InvalidArgument("pca: at least two points required");
  const Matrix& x = points.matrix();
  const Matrix c = x.rowwise() - x.colwise().mean();
  const Matrix cov = c.transpose() * c / static_cast<double>(points.size());
  const double trace = cov.trace();
  if (!(trace > 0.0)) throw DegenerateInput("pca: zero total variance");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector& ev = eig.eigenvalues();  // ascending
  const Index d = cov.rows();
  const double top = ev(d - 1);
  const double tol = 1e-10 * top;
  Index first_tied = d - 1;
  while (first_tied > 0 && top - ev(first_tied - 1) <= tol) --first_tied;
  const Matrix basis = eig.eigenvectors().rightCols(d - first_tied);

  Vector loading = basis.col(basis.cols() - 1);
  if (basis.cols() > 1) {
    for (Index j = 0; j < d; ++j) {
      const Vector proj = basis * basis.row(j).transpose();
      if (proj.norm() > 1e-8) {
        loading = proj.normalized();
        break;
      }
    }
  }
  for (Index j = 0; j < d; ++j) {
    if (std::abs(loading(j)) > 1e-12) {
      if (loading(j) < 0) loading = -loading;
      break;
    }
  }

  PcaResult out;
  out.loading = loading;
  out.explained_fraction = std::min(1.0, top / trace);
  const Vector s = c * loading;
  out.scores.assign(s.data(), s.data() + s.size());
  return out;
}

namespace {

json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

json k_single_json(const KSingle& s) {
  json j;
  j["k"] = s.k;
  json dunn = json::object();
  for (const auto& [k, v] : s.dunn_scores) dunn[std::to_string(k)] = number(v);
  j["dunn"] = dunn;
  json surv = json::object();
  for (const auto& [k, v] : s.surviving_k) surv[std::to_string(k)] = v;
  j["surviving_k"] = surv;
  if (s.gap) {
    j["gap"] = {{"gap1", s.gap->gap1}, {"gap2", s.gap->gap2}, {"s1", s.gap->s1},
                {"s2", s.gap->s2},     {"k", s.gap->k}};
  }
  return j;
}

json outcome_json(const TestOutcome& o) {
  json j{{"statistic", number(o.statistic)},
         {"p_value", o.p_value},
         {"reject", o.reject},
         {"alpha", o.alpha},
         {"alternative", to_string(o.alternative)},
         {"p_method", to_string(o.p_method)}};
  if (o.n_permutations) j["n_permutations"] = *o.n_permutations;
  if (o.degenerate) j["degenerate"] = true;
  return j;
}

}  // namespace

json config_to_json(const AnalysisConfig& cfg) {
  json tests = json::array();
  for (auto t : cfg.tests) tests.push_back(to_string(t));
  return {{"alpha", cfg.alpha},     {"beta", cfg.beta},     {"k_max", cfg.k_max},
          {"gap_B", cfg.gap_B},     {"perm_B", cfg.perm_B}, {"M", cfg.M},
          {"enumeration_cap", cfg.enumeration_cap},         {"seed", cfg.seed},
          {"tests", tests},         {"alternative", to_string(cfg.alternative)}};
}

json report_to_json(const AnalysisReport& r) {
  json j;
  j["mode"] = to_string(r.mode);
  if (r.k_selection) {
    j["k_selection"] = {{"k1", r.k_selection->k1},
                        {"k2", r.k_selection->k2},
                        {"k0", r.k_selection->k0},
                        {"group1", k_single_json(r.k_selection->group1)},
                        {"group2", k_single_json(r.k_selection->group2)}};
  }
  j["guard_triggered"] = r.guard_triggered;
  json clusters = json::array();
  for (const auto& c : r.assignment_summary) clusters.push_back({{"group1", c.group1}, {"group2", c.group2}});
  j["clusters"] = clusters;
  if (r.em) {
    j["em"] = {{"iterations", r.em->iterations},
               {"log_likelihood", number(r.em->log_likelihood)},
               {"converged", r.em->converged}};
  }
  json outcomes = json::object();
  for (const auto& [kind, o] : r.outcomes) outcomes[std::string(to_string(kind))] = outcome_json(o);
  j["outcomes"] = outcomes;
  if (r.phi) {
    json phi = json::object();
    for (const auto& [kind, v] : *r.phi) phi[std::string(to_string(kind))] = v;
    j["phi"] = phi;
    j["phi_exact"] = r.phi_exact;
    j["assignments_evaluated"] = r.assignments_evaluated;
  }
  return j;
}

json experiment_to_json(const ExperimentResult& result) {
  json j;
  j["replicates"] = result.replicates;
  j["failed"] = result.failed;
  json props = json::object();
  for (const auto& [key, p] : result.rejection_proportion) {
    props[std::string(to_string(key.first))][std::string(to_string(key.second))] = {
        {"proportion", p}, {"se", result.standard_error.at(key)}};
  }
  j["rejection_proportion"] = props;
  json reps = json::array();
  for (const auto& rec : result.records) {
    json r{{"index", rec.index}, {"data_seed", rec.data_seed}, {"analysis_seed", rec.analysis_seed}};
    if (rec.failed) {
      r["failed"] = rec.failure;
    } else {
      if (rec.k0) r["k0"] = *rec.k0;
      json dec = json::object();
      for (const auto& [mode, per] : rec.decisions) {
        for (const auto& [kind, rej] : per) {
          dec[std::string(to_string(mode))][std::string(to_string(kind))] = rej;
        }
      }
      r["decisions"] = dec;
    }
    reps.push_back(std::move(r));
  }
  j["records"] = reps;
  return j;
}

namespace {

json vector_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json matrix_json(const Matrix& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
  return a;
}

Vector vector_from(const json& a) {
  Vector v(static_cast<Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = a.at(i).get<double>();
  return v;
}

Matrix matrix_from(const json& a) {
  const auto rows = a.size();
  if (rows == 0) throw InvalidArgument("empty matrix in config");
  Matrix m(static_cast<Index>(rows), static_cast<Index>(a.at(0).size()));
  for (std::size_t i = 0; i < rows; ++i) {
    if (a.at(i).size() != static_cast<std::size_t>(m.cols())) throw InvalidArgument("ragged matrix in config");
    m.row(static_cast<Index>(i)) = vector_from(a.at(i)).transpose();
  }
  return m;
}

json mixture_json(const MixtureSpec& s) {
  json comps = json::array();
  for (const auto& c : s.components) {
    comps.push_back({{"location", vector_json(c.location)},
                     {"scale", matrix_json(c.scale)},
                     {"family", to_string(c.family)}});
  }
  return {{"components", comps}, {"weights", s.weights}, {"fixed_composition", s.fixed_composition}};
}

MixtureSpec mixture_from(const json& j) {
  MixtureSpec s;
  for (const auto& c : j.at("components")) {
    MixtureComponent mc;
    mc.location = vector_from(c.at("location"));
    mc.scale = matrix_from(c.at("scale"));
    const auto fam = c.value("family", std::string("gaussian"));
    if (fam == "gaussian") {
      mc.family = Family::Gaussian;
    } else if (fam == "cauchy") {
      mc.family = Family::Cauchy;
    } else {
      throw InvalidArgument("unknown family '" + fam + "'");
    }
    s.components.push_back(std::move(mc));
  }
  s.weights = j.at("weights").get<std::vector<double>>();
  s.fixed_composition = j.value("fixed_composition", false);
  return s;
}

AnalysisConfig config_from(const json& j, AnalysisConfig cfg) {
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.k_max = j.value("k_max", cfg.k_max);
  cfg.gap_B = j.value("gap_B", cfg.gap_B);
  cfg.perm_B = j.value("perm_B", cfg.perm_B);
  cfg.M = j.value("M", cfg.M);
  cfg.enumeration_cap = j.value("enumeration_cap", cfg.enumeration_cap);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("tests")) {
    cfg.tests.clear();
    for (const auto& t : j.at("tests")) cfg.tests.push_back(parse_test_kind(t.get<std::string>()));
  }
  if (j.contains("alternative")) cfg.alternative = parse_alternative(j.at("alternative").get<std::string>());
  return cfg;
}

}  // namespace

json experiment_spec_to_json(const ExperimentSpec& spec) {
  json modes = json::array();
  for (auto m : spec.modes) modes.push_back(to_string(m));
  return {{"name", spec.name},
          {"control", mixture_json(spec.control)},
          {"treatment", mixture_json(spec.treatment)},
          {"shift_direction", vector_json(spec.shift_direction)},
          {"delta", spec.delta},
          {"n1", spec.n1},
          {"n2", spec.n2},
          {"replicates", spec.replicates},
          {"modes", modes},
          {"config", config_to_json(spec.cfg)}};
}

ExperimentSpec experiment_spec_from_json(const json& doc) {
  try {
    ExperimentSpec spec;
    spec.name = doc.value("name", std::string("custom"));
    spec.control = mixture_from(doc.at("control"));
    spec.treatment = mixture_from(doc.at("treatment"));
    if (doc.contains("shift_direction")) spec.shift_direction = vector_from(doc.at("shift_direction"));
    spec.delta = doc.value("delta", spec.delta);
    spec.n1 = doc.value("n1", spec.n1);
    spec.n2 = doc.value("n2", spec.n2);
    spec.replicates = doc.value("replicates", spec.replicates);
    if (doc.contains("modes")) {
      spec.modes.clear();
      for (const auto& m : doc.at("modes")) spec.modes.push_back(parse_mode(m.get<std::string>()));
    }
    if (doc.contains("config")) spec.cfg = config_from(doc.at("config"), spec.cfg);
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("experiment config: ") + e.what());
  }
}

std::vector<std::string> resampling_design_names() {
  return {"abalone-level", "abalone-power", "iris-level", "iris-power"};
}

namespace {

ResamplingDesign iris_design(const std::string& name, const std::string& path) {
  const CsvTable t = read_table(path);
  const std::size_t width = t.rows.front().size();
  if (width != 5) throw DataError("iris file must have 5 columns, found " + std::to_string(width));
  std::map<std::string, std::vector<std::vector<double>>> by_species;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    std::vector<double> row;
    for (std::size_t j = 0; j < 4; ++j) {
      const auto v = parse_number(t.rows[i][j]);
      if (!v) throw DataError("iris row " + std::to_string(i + 1) + ": non-numeric feature");
      row.push_back(*v);
    }
    auto species = t.rows[i][4];
    if (const auto dash = species.find('-'); dash != std::string::npos) species = species.substr(dash + 1);
    by_species[species].push_back(std::move(row));
  }
  for (const char* s : {"versicolor", "virginica"}) {
    if (by_species[s].size() < 50) throw DataError(std::string("iris file lacks 50 ") + s + " rows");
  }
  std::vector<PointSet> strata{PointSet::from_rows(by_species["versicolor"]),
                               PointSet::from_rows(by_species["virginica"])};
  ResamplingDesign d;
  d.replicates = 200;
  if (name == "iris-power") {
    d.sampler = stratified_sampler(std::move(strata), {{0}, {1.0}, 25, true}, {{1}, {1.0}, 25, true});
  } else {
    d.sampler = stratified_sampler(std::move(strata), {{0}, {1.0}, 25, true}, {{0}, {1.0}, 25, true});
  }
  return d;
}

ResamplingDesign abalone_design(const std::string& name, const std::string& path) {
  const CsvTable t = read_table(path);
  const std::size_t width = t.rows.front().size();
  if (width != 9 || t.rows.size() != 4177) {
    throw DataError("abalone file must have 4177 rows of 9 columns, found " + std::to_string(t.rows.size()) +
                    " rows of " + std::to_string(width));
  }
  // Rings 9 and 10 only; the seven measurements are reduced to one score.
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<int, int>> tags;  // (class 0/1, sex 0..2)
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto rings = parse_number(t.rows[i][8]);
    if (!rings) throw DataError("abalone row " + std::to_string(i + 1) + ": non-numeric rings");
    if (*rings != 9.0 && *rings != 10.0) continue;
    const std::string& sex = t.rows[i][0];
    const int s = sex == "M" ? 0 : sex == "F" ? 1 : sex == "I" ? 2 : -1;
    if (s < 0) throw DataError("abalone row " + std::to_string(i + 1) + ": unknown sex '" + sex + "'");
    std::vector<double> row;
    for (std::size_t j = 1; j < 8; ++j) {
      const auto v = parse_number(t.rows[i][j]);
      if (!v) throw DataError("abalone row " + std::to_string(i + 1) + ": non-numeric measurement");
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
    tags.emplace_back(*rings == 9.0 ? 0 : 1, s);
  }
  const auto pca = pca_first_component(PointSet::from_rows(rows));
  std::vector<std::vector<double>> strata_values(6);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    strata_values[static_cast<std::size_t>(tags[i].first * 3 + tags[i].second)].push_back(pca.scores[i]);
  }
  std::vector<PointSet> strata;
  for (const auto& v : strata_values) strata.push_back(PointSet::univariate(v));

  ResamplingDesign d;
  d.alternative = Alternative::Greater;
  d.replicates = 200;
  if (name == "abalone-level") {
    d.sampler = stratified_sampler(std::move(strata), {{0, 1, 2}, {0.2, 0.2, 0.6}, 100, true},
                                   {{0, 1, 2}, {0.25, 0.5, 0.25}, 100, true});
  } else {
    d.sampler = stratified_sampler(std::move(strata), {{0, 1, 2}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 100, false},
                                   {{3, 4, 5}, {0.2, 0.2, 0.6}, 100, false});
  }
  return d;
}

}  // namespace

ResamplingDesign resampling_design(const std::string& name, const std::string& path) {
  if (name == "iris-level" || name == "iris-power") return iris_design(name, path);
  if (name == "abalone-level" || name == "abalone-power") return abalone_design(name, path);
  throw InvalidArgument("unknown resampling design '" + name + "'");
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void print_report(std::ostream& out, const AnalysisReport& r, const LoadedData& in) {
  out << "mode: " << to_string(r.mode) << "\n";
  out << "groups: control '" << in.control_label << "' (n=" << in.data.x1.size() << "), treatment '"
      << in.treatment_label << "' (n=" << in.data.x2.size() << ")\n";
  if (r.k_selection) {
    out << "clusters: k1=" << r.k_selection->k1 << " k2=" << r.k_selection->k2
        << " k0=" << r.k_selection->k0 << "\n";
  }
  if (!r.assignment_summary.empty()) {
    out << "composition (group1/group2):";
    for (const auto& c : r.assignment_summary) out << " " << c.group1 << "/" << c.group2;
    out << "\n";
  }
  if (r.guard_triggered) out << "guard: a cluster is dominated by one group; usual tests on raw data\n";
  out << "test         statistic     p-value   reject";
  if (r.phi) out << "   phi";
  out << "\n";
  for (const auto& [kind, o] : r.outcomes) {
    char line[128];
    std::snprintf(line, sizeof line, "%-10s %11.4f %11.4g   %-6s", std::string(to_string(kind)).c_str(),
                  o.statistic, o.p_value, o.reject ? "yes" : "no");
    out << line;
    if (r.phi) out << fmt("   %.3f", r.phi->at(kind));
    out << "\n";
  }
}

void print_experiment(std::ostream& out, const std::string& name, const ExperimentResult& r) {
  out << "design: " << name << "  replicates: " << r.replicates << "  failed: " << r.failed << "\n";
  std::map<Mode, std::map<TestKind, double>> table;
  std::set<TestKind> kinds;
  for (const auto& [key, p] : r.rejection_proportion) {
    table[key.first][key.second] = p;
    kinds.insert(key.second);
  }
  char cell[64];
  out << "mode      ";
  for (auto k : kinds) {
    std::snprintf(cell, sizeof cell, " %11s", std::string(to_string(k)).c_str());
    out << cell;
  }
  out << "\n";
  for (const auto& [mode, row] : table) {
    std::snprintf(cell, sizeof cell, "%-10s", std::string(to_string(mode)).c_str());
    out << cell;
    for (auto k : kinds) {
      std::snprintf(cell, sizeof cell, " %11.3f", row.count(k) ? row.at(k) : std::nan(""));
      out << cell;
    }
    out << "\n";
  }
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path + "'");
  f << doc.dump(2) << "\n";
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    for (auto& s : split(item, ',')) {
      if (!s.empty()) out.push_back(s);
    }
  }
  return out;
}

struct CommonFlags {
  std::vector<std::string> tests;
  std::string alternative;
  double alpha = 0.05;
  double beta = 0.1;
  int kmax = 6;
  int perm_B = 999;
  int M = 100;
  Seed seed = 0;
  std::string out;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--tests", f.tests, "Tests to run: t, wmw, ks, hotelling, coordinate, spatial");
  app->add_option("--alternative", f.alternative, "two-sided, greater or less (univariate tests)");
  app->add_option("--alpha", f.alpha, "Test level");
  app->add_option("--beta", f.beta, "Minimum share of each group in a cluster");
  app->add_option("--kmax", f.kmax, "Largest number of clusters considered");
  app->add_option("--perm-B", f.perm_B, "Permutations per test");
  app->add_option("--M", f.M, "Posterior draws for method2");
  app->add_option("--seed", f.seed, "Random seed");
  app->add_option("--out", f.out, "Write a JSON report to this file");
}

// Flags given on the command line override `cfg`.
AnalysisConfig apply_common(const CLI::App* app, const CommonFlags& f, AnalysisConfig cfg) {
  if (app->count("--tests")) {
    cfg.tests.clear();
    for (const auto& t : split_list(f.tests)) cfg.tests.push_back(parse_test_kind(t));
  }
  if (app->count("--alternative")) cfg.alternative = parse_alternative(f.alternative);
  if (app->count("--alpha")) cfg.alpha = f.alpha;
  if (app->count("--beta")) cfg.beta = f.beta;
  if (app->count("--kmax")) cfg.k_max = f.kmax;
  if (app->count("--perm-B")) cfg.perm_B = f.perm_B;
  if (app->count("--M")) cfg.M = f.M;
  if (app->count("--seed")) cfg.seed = f.seed;
  cfg.validate();
  return cfg;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-sample tests robust to hidden sub-populations", "subpop"};
  app.set_version_flag("--version", SUBPOP_VERSION);
  app.require_subcommand(1);

  CommonFlags af;
  std::string input;
  std::string group;
  std::vector<std::string> features;
  std::vector<std::string> exclude;
  std::string control;
  std::string delimiter;
  bool pca = false;
  std::string mode_name = "method1";
  auto* analyze_cmd = app.add_subcommand("analyze", "Analyse a two-group data file");
  analyze_cmd->add_option("--input", input, "Delimited data file")->required();
  analyze_cmd->add_option("--group", group, "Group column (name, or 1-based index)")->required();
  analyze_cmd->add_option("--features", features, "Feature columns (default: all others)");
  analyze_cmd->add_option("--exclude", exclude, "Columns to leave out");
  analyze_cmd->add_option("--control", control, "Group value treated as control");
  analyze_cmd->add_option("--delimiter", delimiter, "Field delimiter (default: detect comma or tab)");
  analyze_cmd->add_flag("--pca", pca, "Reduce the features to their first principal component");
  analyze_cmd->add_option("--mode", mode_name, "usual, method1 or method2");
  add_common(analyze_cmd, af);

  CommonFlags ef;
  std::string design;
  std::string config_path;
  std::string data_path;
  double delta = 0.0;
  int replicates = 0;
  std::vector<std::string> modes;
  bool print_config = false;
  bool list = false;
  auto* exp_cmd = app.add_subcommand("experiment", "Run a Monte-Carlo experiment");
  exp_cmd->add_option("--design", design, "Built-in design name");
  exp_cmd->add_option("--config", config_path, "JSON experiment description");
  exp_cmd->add_option("--input", data_path, "Data file for resampling designs");
  exp_cmd->add_option("--delta", delta, "Shift size");
  exp_cmd->add_option("--replicates", replicates, "Number of replicates");
  exp_cmd->add_option("--modes", modes, "Subset of usual, method1, method2");
  exp_cmd->add_flag("--print-config", print_config, "Print the design as JSON and exit");
  exp_cmd->add_flag("--list", list, "List design names");
  add_common(exp_cmd, ef);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (analyze_cmd->parsed()) {
      CsvOptions opts;
      opts.group_column = group;
      opts.features = split_list(features);
      opts.exclude = split_list(exclude);
      if (!control.empty()) opts.control_value = control;
      if (!delimiter.empty()) opts.delimiter = delimiter == "\\t" || delimiter == "tab" ? '\t' : delimiter[0];
      const Mode mode = parse_mode(mode_name);
      const AnalysisConfig cfg = apply_common(analyze_cmd, af, AnalysisConfig{});

      LoadedData loaded = load_csv(input, opts);
      std::optional<double> explained;
      if (pca) {
        const auto p = pca_first_component(PointSet::concat(loaded.data.x1, loaded.data.x2));
        const auto n1 = static_cast<std::size_t>(loaded.data.x1.size());
        loaded.data.x1 = PointSet::univariate(std::span(p.scores).first(n1));
        loaded.data.x2 = PointSet::univariate(std::span(p.scores).subspan(n1));
        explained = p.explained_fraction;
      }
      const auto report = analyze(loaded.data, cfg, mode);
      print_report(out, report, loaded);
      if (explained) out << "first principal component explains " << fmt("%.4f", *explained) << "\n";

      if (!af.out.empty()) {
        json doc;
        doc["tool"] = {{"name", "subpop"}, {"version", SUBPOP_VERSION}};
        doc["input"] = {{"path", input},
                        {"sha256", loaded.sha256},
                        {"rows", loaded.rows},
                        {"group_column", group},
                        {"features", loaded.feature_names},
                        {"control", loaded.control_label},
                        {"treatment", loaded.treatment_label},
                        {"pca", pca}};
        if (explained) doc["input"]["explained_fraction"] = *explained;
        doc["config"] = config_to_json(cfg);
        doc["report"] = report_to_json(report);
        write_json(af.out, doc);
      }
      return 0;
    }

    // experiment
    const auto builtin = builtin_designs(delta);
    const auto resampled = resampling_design_names();
    std::vector<std::string> names;
    for (const auto& [n, s] : builtin) names.push_back(n);
    names.insert(names.end(), resampled.begin(), resampled.end());
    if (list) {
      for (const auto& n : names) out << n << "\n";
      return 0;
    }
    if (design.empty() == config_path.empty()) {
      err << "experiment: give exactly one of --design or --config\n";
      return 2;
    }

    std::vector<Mode> mode_list;
    for (const auto& m : split_list(modes)) mode_list.push_back(parse_mode(m));

    json doc;
    doc["tool"] = {{"name", "subpop"}, {"version", SUBPOP_VERSION}};
    ExperimentResult result;
    std::string label;

    const bool is_resampled = std::find(resampled.begin(), resampled.end(), design) != resampled.end();
    if (is_resampled) {
      std::string path = data_path;
      if (path.empty()) {
        if (design.rfind("iris", 0) != 0) {
          err << "experiment: design '" << design << "' needs --input\n";
          return 2;
        }
        path = std::string(SUBPOP_DATA_DIR) + "/iris.csv";
      }
      auto rd = resampling_design(design, path);
      AnalysisConfig base;
      base.alternative = rd.alternative;
      const AnalysisConfig cfg = apply_common(exp_cmd, ef, base);
      const int reps = replicates > 0 ? replicates : rd.replicates;
      if (mode_list.empty()) mode_list = {Mode::Usual, Mode::Method1, Mode::Method2};
      if (print_config) {
        err << "experiment: resampling designs have no mixture description\n";
        return 2;
      }
      result = run_replicates(rd.sampler, reps, cfg, mode_list);
      label = design;
      std::ifstream f(path, std::ios::binary);
      std::stringstream bytes;
      bytes << f.rdbuf();
      json modes_json = json::array();
      for (auto m : mode_list) modes_json.push_back(to_string(m));
      doc["experiment"] = {{"design", design},     {"input", path},     {"sha256", sha256_hex(bytes.str())},
                           {"replicates", reps},   {"modes", modes_json}, {"config", config_to_json(cfg)}};
    } else {
      ExperimentSpec spec;
      if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw DataError("cannot open '" + config_path + "'");
        json parsed;
        try {
          parsed = json::parse(f);
        } catch (const json::exception& e) {
          throw DataError("'" + config_path + "': " + e.what());
        }
        spec = experiment_spec_from_json(parsed);
        if (exp_cmd->count("--delta")) spec.delta = delta;
      } else {
        const auto it = builtin.find(design);
        if (it == builtin.end()) {
          err << "experiment: unknown design '" << design << "'. Valid names: " << join(names) << "\n";
          return 2;
        }
        spec = it->second;
      }
      spec.cfg = apply_common(exp_cmd, ef, spec.cfg);
      if (replicates > 0) spec.replicates = replicates;
      if (!mode_list.empty()) spec.modes = mode_list;
      spec.validate();
      if (print_config) {
        out << experiment_spec_to_json(spec).dump(2) << "\n";
        return 0;
      }
      result = run_experiment(spec);
      label = spec.name;
      doc["experiment"] = experiment_spec_to_json(spec);
    }

    print_experiment(out, label, result);
    if (!ef.out.empty()) {
      doc["result"] = experiment_to_json(result);
      write_json(ef.out, doc);
    }
    return 0;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DegenerateInput& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace subpop
