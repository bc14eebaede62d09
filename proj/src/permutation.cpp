#include "subpop/permutation.hpp"

#include "combinations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace subpop {

LabeledPool LabeledPool::from_groups(const PointSet& x1, const PointSet& x2) {
  std::vector<std::uint8_t> member(static_cast<std::size_t>(x1.size()), 0);
  member.resize(static_cast<std::size_t>(x1.size() + x2.size()), 1);
  return from_membership(PointSet::concat(x1, x2), std::move(member));
}

LabeledPool LabeledPool::from_membership(PointSet pooled, std::vector<std::uint8_t> in_group2) {
  if (in_group2.size() != static_cast<std::size_t>(pooled.size())) {
    throw InvalidArgument("LabeledPool: one membership flag per point required");
  }
  LabeledPool pool;
  pool.n2 = std::count(in_group2.begin(), in_group2.end(), std::uint8_t{1});
  pool.n1 = pooled.size() - pool.n2;
  if (pool.n1 < 1 || pool.n2 < 1) throw InvalidArgument("LabeledPool: both groups must be non-empty");
  pool.pooled = std::move(pooled);
  pool.in_group2 = std::move(in_group2);
  return pool;
}

std::vector<Index> LabeledPool::group2_indices() const {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(n2));
  for (std::size_t i = 0; i < in_group2.size(); ++i) {
    if (in_group2[i]) out.push_back(static_cast<Index>(i));
  }
  return out;
}

PointSet LabeledPool::group(int which) const {
  std::vector<Index> idx;
  const std::uint8_t want = which == 2 ? 1 : 0;
  for (std::size_t i = 0; i < in_group2.size(); ++i) {
    if (in_group2[i] == want) idx.push_back(static_cast<Index>(i));
  }
  return pooled.subset(idx);
}

double binomial_coefficient(Index n, Index k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (Index i = 1; i <= k; ++i) {
    c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return std::round(c);
}

PermutationPlan PermutationPlan::build(Index n1, Index n2, int B, Seed seed, PlanMode mode) {
  if (B < 1) throw InvalidArgument("permutation plan: B must be >= 1");
  if (n1 < 1 || n2 < 1) throw InvalidArgument("permutation plan: both groups must be non-empty");
  const Index n = n1 + n2;
  PermutationPlan plan;
  plan.n1_ = n1;
  plan.n2_ = n2;
  const double splits = binomial_coefficient(n, n2);
  plan.exact_ = mode == PlanMode::Enumerate || (mode == PlanMode::Auto && splits <= B);

  if (plan.exact_) {
    if (splits > 5e7) throw InvalidArgument("permutation plan: too many splits to enumerate");
    plan.flat_.reserve(static_cast<std::size_t>(splits) * static_cast<std::size_t>(n2));
    detail::for_each_combination(n, n2, [&](std::span<const Index> pick) {
      plan.flat_.insert(plan.flat_.end(), pick.begin(), pick.end());
    });
    return plan;
  }

  // Draw the smaller group (group 1 on a tie) and derive group 2 from it.
  // With symmetric statistics this keeps p-values unchanged when the two
  // groups trade places.
  const bool draw_group1 = n1 <= n2;
  const Index m = draw_group1 ? n1 : n2;
  plan.flat_.reserve(static_cast<std::size_t>(B) * static_cast<std::size_t>(n2));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> mark(static_cast<std::size_t>(n));
  for (int b = 0; b < B; ++b) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = 0; i < m; ++i) {
      std::uniform_int_distribution<Index> pick(i, n - 1);
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
    }
    std::fill(mark.begin(), mark.end(), 0);
    for (Index i = 0; i < m; ++i) mark[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = 1;
    const std::uint8_t want = draw_group1 ? 0 : 1;
    for (Index i = 0; i < n; ++i) {
      if (mark[static_cast<std::size_t>(i)] == want) plan.flat_.push_back(i);
    }
  }
  return plan;
}

TestOutcome permutation_pvalue(const GroupStatistic& statistic, const LabeledPool& pool,
                               const PermutationPlan& plan, Alternative alternative, double alpha) {
  if (plan.n1() != pool.n1 || plan.n2() != pool.n2) {
    throw InvalidArgument("permutation_pvalue: plan does not match the group sizes");
  }
  const auto observed_idx = pool.group2_indices();
  const double observed = statistic(observed_idx);
  const double slack = detail::tie_slack(observed);

  Index hits = 0;
  const Index count = plan.count();
  for (Index b = 0; b < count; ++b) {
    const double t = statistic(plan.group2(b));
    bool extreme = false;
    switch (alternative) {
      case Alternative::Greater: extreme = t >= observed - slack; break;
      case Alternative::Less: extreme = t <= observed + slack; break;
      case Alternative::TwoSided: extreme = std::abs(t) >= std::abs(observed) - slack; break;
    }
    hits += extreme ? 1 : 0;
  }
  const double p = plan.exact()
                       ? static_cast<double>(hits) / static_cast<double>(count)
                       : static_cast<double>(1 + hits) / static_cast<double>(count + 1);
  auto out = make_outcome(observed, p, alpha, alternative, PMethod::Permutation);
  out.n_permutations = static_cast<int>(count);
  return out;
}

TestOutcome permutation_pvalue(const GroupStatistic& statistic, const LabeledPool& pool,
                               const PermutationOptions& options) {
  const auto plan = PermutationPlan::build(pool.n1, pool.n2, options.B, options.seed, options.mode);
  return permutation_pvalue(statistic, pool, plan, options.alternative, options.alpha);
}

namespace {

Matrix centered(const PointSet& pooled) {
  const Matrix& x = pooled.matrix();
  return x.rowwise() - x.colwise().mean();
}

Vector sum_rows(const Matrix& m, std::span<const Index> idx) {
  Vector s = Vector::Zero(m.cols());
  for (Index i : idx) s += m.row(i).transpose();
  return s;
}

Matrix inverse_or_fail(const Matrix& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  const Vector& ev = eig.eigenvalues();
  const double top = ev.maxCoeff();
  if (!(top > 0.0) || ev.minCoeff() <= 1e-10 * top) {
    throw NumericalFailure(std::string(what) + ": singular covariance");
  }
  const Matrix& v = eig.eigenvectors();
  return v * ev.cwiseInverse().asDiagonal() * v.transpose();
}

}  // namespace

GroupStatistic t_statistic(const PointSet& pooled) {
  if (pooled.dim() != 1) throw InvalidArgument("t_statistic: univariate data required");
  const Matrix c = centered(pooled);
  const double total_ss = c.squaredNorm();
  const Index n = pooled.size();
  return [c, total_ss, n](std::span<const Index> g2) {
    const auto n2 = static_cast<double>(g2.size());
    const auto n1 = static_cast<double>(n) - n2;
    double s2 = 0.0;
    for (Index i : g2) s2 += c(i, 0);
    const double m2 = s2 / n2;
    const double m1 = -s2 / n1;
    const double within = total_ss - n1 * m1 * m1 - n2 * m2 * m2;
    const double diff = m1 - m2;
    if (!(within > 1e-14 * total_ss)) {
      if (diff == 0.0) return 0.0;
      return diff > 0 ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
    }
    const double sp2 = within / (n1 + n2 - 2.0);
    return diff / std::sqrt(sp2 * (1.0 / n1 + 1.0 / n2));
  };
}

GroupStatistic hotelling_statistic(const PointSet& pooled) {
  const Index n = pooled.size();
  const Index d = pooled.dim();
  if (n - 2 <= d) throw InvalidArgument("hotelling_statistic: needs n1 + n2 - 2 > d");
  const Matrix c = centered(pooled);
  Matrix scatter = c.transpose() * c;
  Matrix inv;
  try {
    inv = inverse_or_fail(scatter, "hotelling_statistic");
  } catch (const NumericalFailure&) {
    scatter.diagonal().array() += 1e-6 * scatter.trace() / static_cast<double>(d);
    inv = inverse_or_fail(scatter, "hotelling_statistic");
  }
  // With T the total scatter and dbar the mean difference, the pooled
  // within scatter is T - c dbar dbar' (c = n1 n2 / n); Sherman-Morrison then
  // gives T^2 = c (n - 2) q / (1 - c q) with q = dbar' T^{-1} dbar.
  return [c, inv, n](std::span<const Index> g2) {
    const auto n2 = static_cast<double>(g2.size());
    const auto nd = static_cast<double>(n);
    const double n1 = nd - n2;
    const Vector s2 = sum_rows(c, g2);
    const Vector diff = -s2 * (nd / (n1 * n2));
    const double scale = n1 * n2 / nd;
    const double q = diff.dot(inv * diff);
    const double denom = 1.0 - scale * q;
    if (!(denom > 1e-14)) return std::numeric_limits<double>::infinity();
    return scale * (nd - 2.0) * q / denom;
  };
}

GroupStatistic coordwise_rank_statistic(const PointSet& pooled) {
  const Index n = pooled.size();
  const Index d = pooled.dim();
  const double center = (static_cast<double>(n) + 1.0) / 2.0;
  Matrix r(n, d);
  for (Index j = 0; j < d; ++j) {
    const auto rk = midranks(pooled.column(j));
    for (Index i = 0; i < n; ++i) r(i, j) = rk[static_cast<std::size_t>(i)] - center;
  }
  const Matrix inv_v = inverse_or_fail(r.transpose() * r, "coordwise_rank_statistic");
  return [r, inv_v, n](std::span<const Index> g2) {
    const auto n2 = static_cast<double>(g2.size());
    const auto nd = static_cast<double>(n);
    const double n1 = nd - n2;
    const Vector s = sum_rows(r, g2);
    // Cov(S) = n1 n2 / (n (n - 1)) * V.
    return (nd * (nd - 1.0) / (n1 * n2)) * s.dot(inv_v * s);
  };
}

GroupStatistic spatial_rank_statistic(const PointSet& pooled) {
  const Index n = pooled.size();
  const Matrix r = spatial_ranks(pooled);
  const Matrix inv_b =
      inverse_or_fail(r.transpose() * r / static_cast<double>(n), "spatial_rank_statistic");
  return [r, inv_b, n](std::span<const Index> g2) {
    const Vector rbar = sum_rows(r, g2) / static_cast<double>(g2.size());
    return static_cast<double>(n) * rbar.dot(inv_b * rbar);
  };
}

}  // namespace subpop
