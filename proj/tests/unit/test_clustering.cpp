#include "subpop/clustering.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace subpop;

namespace {

PointSet line(std::vector<double> v) { return PointSet::univariate(v); }

oracle::Rows rows_of(const PointSet& p) {
  oracle::Rows r;
  for (Index i = 0; i < p.size(); ++i) {
    r.emplace_back(p.point(i).begin(), p.point(i).end());
  }
  return r;
}

// Same partition up to relabelling.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    }
  }
  return true;
}

ClusterAssignment labelled(std::vector<int> labels) {
  ClusterAssignment a;
  a.k = *std::max_element(labels.begin(), labels.end()) + 1;
  a.labels = std::move(labels);
  a.outlier.assign(a.labels.size(), false);
  a.medoids.assign(static_cast<std::size_t>(a.k), 0);
  for (int r = a.k - 1; r >= 0; --r) {
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
      if (a.labels[i] == r) a.medoids[static_cast<std::size_t>(r)] = static_cast<Index>(i);
    }
  }
  return a;
}

PointSet normal_cloud(Index n, Index d, double mean, double sd, Seed seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(mean, sd);
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) m(i, j) = z(rng);
  }
  return PointSet(m);
}

PointSet tight_clusters(const std::vector<double>& centres, Index per, Seed seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 0.05);
  std::vector<double> v;
  for (double c : centres) {
    for (Index i = 0; i < per; ++i) v.push_back(c + z(rng));
  }
  return line(v);
}

}  // namespace

TEST(Pam, SeparatedPairsMatchExhaustiveOptimum) {
  const auto pts = line({0.0, 0.1, 10.0, 10.1});
  const auto a = pam(pts, 2, 1);
  const auto best = oracle::best_medoids(rows_of(pts), 2);
  EXPECT_TRUE(same_partition(a.labels, best.labels));
  EXPECT_EQ(a.labels[0], a.labels[1]);
  EXPECT_NE(a.labels[1], a.labels[2]);
}

TEST(Pam, SingleClusterMedoidMinimisesDistance) {
  const auto pts = line({0.0, 1.0, 2.0});
  const auto a = pam(pts, 1, 3);
  const auto best = oracle::best_medoids(rows_of(pts), 1);
  ASSERT_EQ(a.medoids.size(), 1u);
  EXPECT_EQ(a.medoids[0], 1);
  EXPECT_EQ(static_cast<std::size_t>(a.medoids[0]), best.medoids[0]);
}

TEST(Pam, EveryPointItsOwnCluster) {
  const auto pts = line({3.0, -1.0, 7.5, 2.0});
  const auto r = pam_with_trace(pairwise_distances(pts), 4, 0);
  EXPECT_DOUBLE_EQ(r.cost, 0.0);
  std::set<int> labels(r.assignment.labels.begin(), r.assignment.labels.end());
  EXPECT_EQ(labels.size(), 4u);
}

TEST(Pam, RejectsBadK) {
  const auto pts = line({1.0, 2.0});
  EXPECT_THROW(pam(pts, 3, 0), InvalidArgument);
  EXPECT_THROW(pam(pts, 0, 0), InvalidArgument);
  EXPECT_THROW(pam(PointSet(Matrix(0, 1)), 1, 0), InvalidArgument);
}

TEST(Pam, ReachesExhaustiveOptimumOnSmallSets) {
  for (Seed s = 0; s < 10; ++s) {
    const auto pts = normal_cloud(12, 2, 0.0, 1.0, 100 + s);
    for (int k : {2, 3}) {
      const auto r = pam_with_trace(pairwise_distances(pts), k, s);
      const auto best = oracle::best_medoids(rows_of(pts), static_cast<std::size_t>(k));
      EXPECT_LE(r.cost, best.cost * 1.05 + 1e-12) << "seed " << s << " k " << k;
    }
  }
}

TEST(PamProperty, CostNeverIncreasesAcrossSwaps) {
  for (Seed s = 0; s < 20; ++s) {
    const auto pts = normal_cloud(40, 2, 0.0, 1.0, 200 + s);
    const auto r = pam_with_trace(pairwise_distances(pts), 3, s);
    ASSERT_FALSE(r.cost_history.empty());
    for (std::size_t i = 1; i < r.cost_history.size(); ++i) {
      EXPECT_LE(r.cost_history[i], r.cost_history[i - 1] + 1e-12);
    }
  }
}

TEST(PamProperty, EveryPointAssignedToNearestMedoid) {
  const auto pts = normal_cloud(30, 2, 0.0, 1.0, 7);
  const auto a = pam(pts, 3, 7);
  const auto rows = rows_of(pts);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double own = oracle::dist(rows[i], rows[static_cast<std::size_t>(a.medoids[static_cast<std::size_t>(a.labels[i])])]);
    for (auto m : a.medoids) EXPECT_LE(own, oracle::dist(rows[i], rows[static_cast<std::size_t>(m)]) + 1e-12);
  }
  for (int r = 0; r < a.k; ++r) EXPECT_EQ(a.labels[static_cast<std::size_t>(a.medoids[static_cast<std::size_t>(r)])], r);
}

TEST(PamProperty, PartitionIndependentOfPointOrder) {
  const auto pts = normal_cloud(25, 2, 0.0, 1.0, 8);
  std::vector<Index> rev(25);
  for (Index i = 0; i < 25; ++i) rev[static_cast<std::size_t>(i)] = 24 - i;
  const auto a = pam(pts, 3, 1);
  const auto b = pam(pts.subset(rev), 3, 1);
  std::vector<int> b_back(25);
  for (Index i = 0; i < 25; ++i) b_back[static_cast<std::size_t>(24 - i)] = b.labels[static_cast<std::size_t>(i)];
  EXPECT_TRUE(same_partition(a.labels, b_back));
}

TEST(PamProperty, Reproducible) {
  const auto pts = normal_cloud(30, 2, 0.0, 1.0, 9);
  const auto a = pam(pts, 4, 42);
  const auto b = pam(pts, 4, 42);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.medoids, b.medoids);
}

TEST(Dunn, HandComputedExamples) {
  EXPECT_NEAR(dunn_index(line({0.0, 0.1, 10.0, 10.1}), labelled({0, 0, 1, 1})), 99.0, 1e-9);
  EXPECT_NEAR(dunn_index(line({0.0, 2.0, 2.5, 4.0}), labelled({0, 0, 1, 1})), 0.25, 1e-12);
}

TEST(Dunn, MatchesBruteForceOnRandomPartitions) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto pts = normal_cloud(15, 3, 0.0, 1.0, 300 + rep);
    std::vector<int> labels(15);
    for (int i = 0; i < 15; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
    std::shuffle(labels.begin(), labels.end(), rng);
    EXPECT_NEAR(dunn_index(pts, labelled(labels)), oracle::dunn(rows_of(pts), labels), 1e-12);
  }
}

TEST(Dunn, Errors) {
  EXPECT_THROW(dunn_index(line({1.0, 2.0}), labelled({0, 0})), InvalidArgument);
  EXPECT_THROW(dunn_index(line({1.0, 1.0, 1.0}), labelled({0, 1, 1})), DegenerateInput);
}

TEST(DunnProperty, ScaleInvariant) {
  const auto pts = normal_cloud(20, 2, 0.0, 1.0, 11);
  const auto a = pam(pts, 3, 0);
  const PointSet scaled(pts.matrix() * 7.5);
  EXPECT_NEAR(dunn_index(pts, a), dunn_index(scaled, a), 1e-12);
}

TEST(Dunn, IgnoresOutliers) {
  auto a = labelled({0, 0, 1, 1, 1});
  a.outlier[4] = true;
  a.labels[4] = ClusterAssignment::kOutlier;
  // The outlier at 100 would otherwise dominate the diameter of cluster 1.
  EXPECT_NEAR(dunn_index(line({0.0, 0.1, 10.0, 10.1, 100.0}), a), 99.0, 1e-9);
}

namespace {

// Gap recomputed in test code from 2-medoid partitions. PAM can stop in a
// local optimum on a reference set, so the partitions come from pam() run with
// the seeds the gap statistic uses: derive(seed, 0) for the data and
// derive(seed, 1 + b) for reference b.
struct GapOracle {
  double gap1, gap2, s2;
  int k;
};

GapOracle gap_oracle(const PointSet& pts, const std::vector<PointSet>& refs, Seed seed) {
  auto logw = [](const PointSet& p, int k, Seed s) {
    const auto rows = rows_of(p);
    std::vector<int> labels(rows.size(), 0);
    if (k == 2) labels = pam(p, 2, s).labels;
    return std::log(oracle::within_ss(rows, labels));
  };
  std::vector<double> r1, r2;
  for (std::size_t b = 0; b < refs.size(); ++b) {
    r1.push_back(logw(refs[b], 1, 0));
    r2.push_back(logw(refs[b], 2, derive_seed(seed, 1 + b)));
  }
  const double B = static_cast<double>(refs.size());
  const double m1 = oracle::mean(r1), m2 = oracle::mean(r2);
  double ss = 0.0;
  for (double v : r2) ss += (v - m2) * (v - m2);
  GapOracle g;
  g.gap1 = m1 - logw(pts, 1, 0);
  g.gap2 = m2 - logw(pts, 2, derive_seed(seed, 0));
  g.s2 = std::sqrt(ss / B) * std::sqrt(1.0 + 1.0 / B);
  g.k = g.gap1 >= g.gap2 - g.s2 ? 1 : 2;
  return g;
}

std::vector<PointSet> uniform_refs(const PointSet& pts, int B, Seed seed) {
  const auto v = pts.column(0);
  const double lo = *std::min_element(v.begin(), v.end());
  const double hi = *std::max_element(v.begin(), v.end());
  std::mt19937 rng(static_cast<unsigned>(seed));
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<PointSet> refs;
  for (int b = 0; b < B; ++b) {
    std::vector<double> r(static_cast<std::size_t>(pts.size()));
    for (auto& x : r) x = u(rng);
    refs.push_back(line(r));
  }
  return refs;
}

}  // namespace

TEST(Gap, TwoTightGroupsChooseTwo) {
  const auto pts = tight_clusters({0.0, 10.0}, 25, 21);
  const auto refs = uniform_refs(pts, 20, 4);
  const auto got = gap_statistic_with_references(pts, refs, 3);
  const auto want = gap_oracle(pts, refs, 3);
  EXPECT_TRUE(same_partition(pam(pts, 2, derive_seed(3, 0)).labels,
                             oracle::best_medoids(rows_of(pts), 2).labels));
  EXPECT_NEAR(got.gap1, want.gap1, 1e-9);
  EXPECT_NEAR(got.gap2, want.gap2, 1e-9);
  EXPECT_NEAR(got.s2, want.s2, 1e-9);
  EXPECT_EQ(want.k, 2);
  EXPECT_EQ(got.k, 2);
  EXPECT_EQ(gap_statistic(pts, 50, 3).k, 2);
}

TEST(Gap, UniformSampleChoosesOne) {
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(50);
  for (auto& x : v) x = u(rng);
  const auto pts = line(v);
  const auto refs = uniform_refs(pts, 20, 5);
  const auto got = gap_statistic_with_references(pts, refs, 3);
  const auto want = gap_oracle(pts, refs, 3);
  EXPECT_NEAR(got.gap1, want.gap1, 1e-9);
  EXPECT_NEAR(got.gap2, want.gap2, 1e-9);
  EXPECT_NEAR(got.s2, want.s2, 1e-9);
  EXPECT_EQ(want.k, 1);
  EXPECT_EQ(got.k, 1);
  EXPECT_EQ(gap_statistic(pts, 50, 3).k, 1);
}

TEST(Gap, IdenticalPointsChooseOne) {
  EXPECT_EQ(gap_statistic(line({2.0, 2.0, 2.0, 2.0}), 10, 0).k, 1);
  EXPECT_THROW(gap_statistic(line({1.0, 2.0}), 0, 0), InvalidArgument);
}

TEST(Trim, StrictBoundary) {
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) labels.push_back(0);
  for (int i = 0; i < 38; ++i) labels.push_back(1);
  labels.push_back(2);
  labels.push_back(2);
  const auto kept = trim_small_clusters(labelled(labels), 100);
  EXPECT_EQ(kept.k, 3);

  labels[98] = 1;  // sizes 60, 39, 1
  const auto trimmed = trim_small_clusters(labelled(labels), 100);
  EXPECT_EQ(trimmed.k, 2);
  EXPECT_TRUE(trimmed.outlier[99]);
  EXPECT_EQ(trimmed.labels[99], ClusterAssignment::kOutlier);
}

TEST(Trim, ZeroFractionNeverTrims) {
  const auto a = labelled({0, 1, 1, 1, 1, 1, 1, 1, 1, 1});
  EXPECT_EQ(trim_small_clusters(a, 10, 0.0).k, 2);
}

TEST(Trim, AllTrimmedIsDegenerate) {
  EXPECT_THROW(trim_small_clusters(labelled({0, 1}), 100, 0.5), DegenerateInput);
}

TEST(TrimProperty, Idempotent) {
  std::vector<int> labels(100, 0);
  labels[0] = 1;
  for (int i = 1; i < 40; ++i) labels[static_cast<std::size_t>(i)] = 2;
  const auto once = trim_small_clusters(labelled(labels), 100);
  const auto twice = trim_small_clusters(once, 100);
  EXPECT_EQ(once.labels, twice.labels);
  EXPECT_EQ(once.outlier, twice.outlier);
  EXPECT_EQ(once.k, twice.k);
}

TEST(Trim, OutliersReassignedToNearestSurvivingMedoid) {
  const auto pts = line({0.0, 0.1, 0.2, 10.0, 10.1, 10.2, 9.0});
  auto a = labelled({0, 0, 0, 1, 1, 1, 2});
  a.medoids = {1, 4, 6};
  const auto t = trim_small_clusters(a, 7, 0.2);
  const auto r = reassign_outliers(pts, t);
  EXPECT_EQ(r.labels[6], r.labels[3]);
  EXPECT_TRUE(r.outlier[6]);
}

TEST(SelectK, ThreeTightClusters) {
  const auto pts = tight_clusters({0.0, 5.0, 10.0}, 15, 31);
  const auto s = select_k_single(pts, {}, 1);
  EXPECT_EQ(s.k, 3);
  // The Dunn scores themselves agree with the brute-force index.
  const auto a = trim_small_clusters(pam(pts, 3, derive_seed(1, 3)), pts.size());
  EXPECT_NEAR(s.dunn_scores.at(3), oracle::dunn(rows_of(pts), a.labels), 1e-12);
}

TEST(SelectK, NormalCloudGoesToOneThroughGap) {
  const auto pts = normal_cloud(40, 1, 0.0, 1.0, 4);
  const auto s = select_k_single(pts, {}, 1);
  ASSERT_TRUE(s.gap.has_value());
  EXPECT_EQ(s.k, 1);
}

TEST(SelectK, RejectsBadRange) {
  const auto pts = normal_cloud(10, 1, 0.0, 1.0, 3);
  EXPECT_THROW(select_k_single(pts, {1, 50, 0.02}, 0), InvalidArgument);
  EXPECT_THROW(select_k_single(pts, {10, 50, 0.02}, 0), InvalidArgument);
}

TEST(SelectK0, MinimumOfGroups) {
  const auto two = tight_clusters({0.0, 10.0}, 15, 41);
  const auto three = tight_clusters({0.0, 5.0, 10.0}, 15, 42);
  const auto sel = select_k0(two, three, {}, 9);
  EXPECT_EQ(sel.k1, 2);
  EXPECT_EQ(sel.k2, 3);
  EXPECT_EQ(sel.k0, 2);

  const auto three_b = tight_clusters({0.0, 5.0, 10.0}, 15, 43);
  EXPECT_EQ(select_k0(three, three_b, {}, 9).k0, 3);
}

TEST(SelectK0Property, SymmetricUnderGroupSwap) {
  for (Seed s = 0; s < 5; ++s) {
    const auto a = normal_cloud(30, 2, 0.0, 1.0, 500 + s);
    const auto b = tight_clusters({0.0, 4.0}, 15, 600 + s);
    const auto c = PointSet(Matrix(b.matrix().replicate(1, 2)) + Matrix::Constant(30, 2, 0.01 * s));
    const auto ab = select_k0(a, c, {}, s);
    const auto ba = select_k0(c, a, {}, s);
    EXPECT_EQ(ab.k1, ba.k2);
    EXPECT_EQ(ab.k2, ba.k1);
    EXPECT_EQ(ab.k0, ba.k0);
  }
}

TEST(SelectK0, SmallGroupsClampSearchRange) {
  const auto a = line({0.0, 1.0, 2.0});
  const auto b = line({0.0, 5.0, 10.0, 15.0});
  const auto sel = select_k0(a, b, {}, 0);
  EXPECT_GE(sel.k0, 1);
  EXPECT_EQ(select_k0(line({1.0, 2.0}), b, {}, 0).k1, 1);
}
