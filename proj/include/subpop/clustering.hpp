#pragma once

#include "subpop/common.hpp"

#include <map>
#include <optional>
#include <vector>

namespace subpop {

/// Hard partition of a point set.
///
/// Labels are 0-based cluster indices. Points flagged as outliers keep
/// `label == kOutlier` until `reassign_outliers` maps them to the nearest
/// surviving medoid; the flag itself is never cleared.
struct ClusterAssignment {
  static constexpr int kOutlier = -1;

  int k = 0;
  std::vector<int> labels;
  std::vector<Index> medoids;  // medoids[r] is the point index representing cluster r
  std::vector<bool> outlier;

  Index size() const { return static_cast<Index>(labels.size()); }
  /// Number of non-outlier members per cluster.
  std::vector<Index> cluster_sizes() const;
};

/// Full n x n Euclidean distance matrix.
Matrix pairwise_distances(const PointSet& points);

struct PamResult {
  ClusterAssignment assignment;
  double cost = 0.0;                 // sum of point-to-medoid distances
  std::vector<double> cost_history;  // after BUILD, then after each accepted swap
};

/// Partitioning around medoids (BUILD + SWAP) under Euclidean distance.
///
/// Clusters are numbered by increasing medoid index so that the result does
/// not depend on the order in which medoids were found. The seed only
/// decides which candidate wins an exact tie.
PamResult pam_with_trace(const Matrix& distances, int k, Seed seed);
ClusterAssignment pam(const PointSet& points, int k, Seed seed);

/// Original Dunn index: smallest single-linkage separation between clusters
/// over the largest complete diameter. Outlier-flagged points are ignored.
double dunn_index(const PointSet& points, const ClusterAssignment& assignment);

struct GapDecision {
  double log_w1 = 0.0;
  double log_w2 = 0.0;
  double gap1 = 0.0;
  double gap2 = 0.0;
  double s1 = 0.0;  // sd * sqrt(1 + 1/B)
  double s2 = 0.0;
  int k = 1;
};

/// Pooled within-cluster dispersion W = sum_r D_r / (2 n_r), with D_r the sum
/// of squared pairwise distances inside cluster r.
double within_dispersion(const PointSet& points, const ClusterAssignment& assignment);

/// Gap statistic restricted to k in {1, 2}, uniform reference over the
/// per-coordinate range. Chooses k = 1 iff Gap(1) >= Gap(2) - s2.
GapDecision gap_statistic(const PointSet& points, int B, Seed seed);

/// Same decision rule with caller-supplied reference sets.
GapDecision gap_statistic_with_references(const PointSet& points,
                                          std::span<const PointSet> references,
                                          Seed seed);

/// Flag members of clusters with fewer than `min_frac * n_total` members as
/// outliers and relabel the survivors 0..k'-1.
ClusterAssignment trim_small_clusters(const ClusterAssignment& assignment, Index n_total,
                                      double min_frac = 0.02);

/// Give every outlier the label of its nearest surviving medoid.
ClusterAssignment reassign_outliers(const PointSet& points, ClusterAssignment assignment);

struct KSingle {
  int k = 1;
  std::map<int, double> dunn_scores;   // keyed by the k handed to PAM
  std::map<int, int> surviving_k;      // clusters left after trimming
  std::optional<GapDecision> gap;
};

struct KSelection {
  int k1 = 1;
  int k2 = 1;
  int k0 = 1;
  KSingle group1;
  KSingle group2;
};

struct SelectionOptions {
  int k_max = 6;
  int gap_B = 50;
  double min_frac = 0.02;
};

/// Number of sub-populations in one sample: PAM for k = 2..k_max, Dunn on
/// the trimmed partitions, and a gap-statistic check whenever 2 wins.
KSingle select_k_single(const PointSet& points, const SelectionOptions& options, Seed seed);

/// k0 = min(k1, k2) with each group examined on its own. Each group's random
/// stream is derived from its content, so swapping the groups swaps k1/k2.
KSelection select_k0(const PointSet& x1, const PointSet& x2, const SelectionOptions& options,
                     Seed seed);

}  // namespace subpop
