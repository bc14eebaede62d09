#pragma once

#include "subpop/common.hpp"
#include "subpop/pipeline.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace subpop {

enum class Family { Gaussian, Cauchy };

std::string_view to_string(Family family);

struct MixtureComponent {
  Vector location;
  Matrix scale;  // covariance for Gaussian, scatter for Cauchy
  Family family = Family::Gaussian;
};

struct MixtureSpec {
  std::vector<MixtureComponent> components;
  std::vector<double> weights;
  Vector shift;  // added to every draw; empty means no shift
  /// Draw round(w_r * n) points from component r (largest remainder)
  /// instead of sampling component indices.
  bool fixed_composition = false;

  Index dim() const;
  void validate() const;
};

/// Component index from the weights, then a deviate from that component,
/// then the shift. Cauchy components are multivariate t with one degree of
/// freedom: a N(0, scale) deviate divided by an independent |N(0, 1)|.
PointSet sample_mixture(const MixtureSpec& spec, Index n, Rng& rng);

using DataSampler = std::function<TwoSampleData(Rng&)>;

struct ExperimentSpec {
  std::string name;
  MixtureSpec control;
  MixtureSpec treatment;  // its shift is delta * shift_direction
  Vector shift_direction;
  double delta = 0.0;
  Index n1 = 100;
  Index n2 = 100;
  int replicates = 100;
  AnalysisConfig cfg;
  std::vector<Mode> modes{Mode::Usual, Mode::Method1, Mode::Method2};

  void validate() const;
  DataSampler sampler() const;
};

struct ReplicateRecord {
  int index = 0;
  Seed data_seed = 0;
  Seed analysis_seed = 0;
  bool failed = false;
  std::string failure;
  std::optional<int> k0;
  std::map<Mode, bool> guard;
  std::map<Mode, std::map<TestKind, bool>> decisions;
};

struct ExperimentResult {
  int replicates = 0;
  int failed = 0;
  std::map<std::pair<Mode, TestKind>, double> rejection_proportion;
  std::map<std::pair<Mode, TestKind>, double> standard_error;  // binomial
  std::vector<ReplicateRecord> records;
};

/// Runs `replicates` independent analyses. Replicate r draws its data from
/// derive_seed(seed, 2r) and analyses it with seed derive_seed(seed, 2r + 1).
/// Replicates raising NumericalFailure are counted and excluded.
ExperimentResult run_replicates(const DataSampler& sampler, int replicates, const AnalysisConfig& cfg,
                                const std::vector<Mode>& modes);
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Named simulation designs at the given shift size.
std::map<std::string, ExperimentSpec> builtin_designs(double delta = 0.0);
std::vector<std::string> builtin_design_names();

/// Without-replacement subsampling from labelled strata. Each group lists
/// the strata it draws from with their weights; strata shared by the two
/// groups are split disjointly.
struct StratifiedGroup {
  std::vector<int> strata;
  std::vector<double> weights;
  Index n = 0;
  bool fixed_composition = true;
};

DataSampler stratified_sampler(std::vector<PointSet> strata, StratifiedGroup control,
                               StratifiedGroup treatment);

/// Counts per category summing to n: largest remainder on n * weights.
std::vector<Index> apportion(std::span<const double> weights, Index n);

}  // namespace subpop
