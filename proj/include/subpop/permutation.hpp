#pragma once

#include "subpop/common.hpp"
#include "subpop/stats_tests.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace subpop {

/// Pooled sample with group membership, the input of every permutation test.
struct LabeledPool {
  PointSet pooled;
  std::vector<std::uint8_t> in_group2;
  Index n1 = 0;
  Index n2 = 0;

  static LabeledPool from_groups(const PointSet& x1, const PointSet& x2);
  /// Validates sizes and membership against `pooled`.
  static LabeledPool from_membership(PointSet pooled, std::vector<std::uint8_t> in_group2);

  std::vector<Index> group2_indices() const;
  PointSet group(int which) const;  // 1 or 2
};

/// A statistic of the pooled sample, evaluated for a given set of group-2
/// indices (sorted ascending).
using GroupStatistic = std::function<double(std::span<const Index>)>;

enum class PlanMode { Auto, Sample, Enumerate };

/// Group-2 index sets to evaluate. Depends only on (n1, n2, B, seed), so the
/// same plan can be reused across different data with identical group sizes.
class PermutationPlan {
 public:
  /// Auto enumerates every split when C(n1 + n2, n1) <= B and samples B
  /// uniform splits otherwise.
  static PermutationPlan build(Index n1, Index n2, int B, Seed seed, PlanMode mode = PlanMode::Auto);

  bool exact() const { return exact_; }
  Index count() const { return n2_ == 0 ? 0 : static_cast<Index>(flat_.size()) / n2_; }
  Index n1() const { return n1_; }
  Index n2() const { return n2_; }
  std::span<const Index> group2(Index b) const {
    return {flat_.data() + b * n2_, static_cast<std::size_t>(n2_)};
  }

 private:
  Index n1_ = 0;
  Index n2_ = 0;
  bool exact_ = false;
  std::vector<Index> flat_;
};

/// C(n, k) in floating point.
double binomial_coefficient(Index n, Index k);

struct PermutationOptions {
  int B = 999;
  Seed seed = 0;
  /// Greater: large statistics are extreme. Less: small ones. TwoSided: |T|.
  Alternative alternative = Alternative::Greater;
  double alpha = 0.05;
  PlanMode mode = PlanMode::Auto;
};

/// Sampled: p = (1 + #{T_b >= T_obs}) / (B + 1).
/// Enumerated: p = #{T_perm >= T_obs} / C(n, n1), the observed split included.
TestOutcome permutation_pvalue(const GroupStatistic& statistic, const LabeledPool& pool,
                               const PermutationOptions& options);
TestOutcome permutation_pvalue(const GroupStatistic& statistic, const LabeledPool& pool,
                               const PermutationPlan& plan, Alternative alternative, double alpha);

/// Precomputed statistics: each factors out everything that does not depend
/// on the group split, so one evaluation costs O(n2 * d).
GroupStatistic t_statistic(const PointSet& pooled);  // signed, d == 1
GroupStatistic hotelling_statistic(const PointSet& pooled);
GroupStatistic coordwise_rank_statistic(const PointSet& pooled);
GroupStatistic spatial_rank_statistic(const PointSet& pooled);

}  // namespace subpop
