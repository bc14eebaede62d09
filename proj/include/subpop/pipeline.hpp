#pragma once

#include "subpop/clustering.hpp"
#include "subpop/common.hpp"
#include "subpop/stats_tests.hpp"

#include <map>
#include <optional>
#include <string_view>
#include <vector>

namespace subpop {

enum class TestKind { T, Wmw, Ks, Hotelling, Coordinate, Spatial };
enum class Mode { Usual, Method1, Method2 };

std::string_view to_string(TestKind kind);
std::string_view to_string(Mode mode);
TestKind parse_test_kind(std::string_view text);
Mode parse_mode(std::string_view text);

/// True for the tests that only accept one-dimensional data.
bool is_univariate(TestKind kind);

/// t, WMW and KS for d = 1; Hotelling, coordinate-wise and spatial rank
/// tests otherwise.
std::vector<TestKind> default_tests(Index dim);

struct TwoSampleData {
  PointSet x1;  // control
  PointSet x2;  // treatment

  /// Equal dimensions and at least two points per group.
  void validate() const;
};

struct AnalysisConfig {
  double alpha = 0.05;
  double beta = 0.1;
  int k_max = 6;
  int gap_B = 50;
  int perm_B = 999;
  int M = 100;
  double enumeration_cap = 1e5;  // Method-2 enumerates when k0^n <= cap
  Seed seed = 0;
  std::vector<TestKind> tests;  // empty: default_tests(dim)
  Alternative alternative = Alternative::TwoSided;  // univariate tests only

  void validate() const;
};

struct ClusterComposition {
  Index group1 = 0;
  Index group2 = 0;
};

struct EmSummary {
  int iterations = 0;
  double log_likelihood = 0.0;
  bool converged = false;
};

struct AnalysisReport {
  Mode mode = Mode::Usual;
  std::optional<KSelection> k_selection;  // absent in usual mode
  bool guard_triggered = false;
  /// For Method-2, statistic and p-value come from the MAP labelling and
  /// `reject` is phi >= 0.5.
  std::map<TestKind, TestOutcome> outcomes;
  std::optional<std::map<TestKind, double>> phi;  // Method-2 only
  bool phi_exact = false;                         // phi from full enumeration
  int assignments_evaluated = 0;                  // distinct labellings tested
  std::vector<ClusterComposition> assignment_summary;  // MAP clusters when k0 >= 2
  std::optional<EmSummary> em;
};

/// Every requested test on the raw data. Univariate tests use their
/// classical p-values, multivariate ones a permutation distribution.
AnalysisReport usual_test(const TwoSampleData& data, const AnalysisConfig& cfg);

/// Cluster once, whiten every point with its MAP component, then test.
AnalysisReport method1(const TwoSampleData& data, const AnalysisConfig& cfg);

/// Average the conditional rejection indicator over the posterior of the
/// cluster labels; reject iff the averaged value phi is at least 0.5.
AnalysisReport method2(const TwoSampleData& data, const AnalysisConfig& cfg);

AnalysisReport analyze(const TwoSampleData& data, const AnalysisConfig& cfg, Mode mode);

/// Per-cluster group counts for labels in 0..k-1.
std::vector<ClusterComposition> cluster_composition(std::span<const int> labels1,
                                                    std::span<const int> labels2, int k);

/// True iff some non-empty cluster draws less than a fraction `beta` of its
/// members from one of the groups.
bool degeneracy_guard(std::span<const ClusterComposition> clusters, double beta);

}  // namespace subpop
