#include "subpop/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace subpop {

std::vector<Index> ClusterAssignment::cluster_sizes() const {
  std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!outlier.empty() && outlier[i]) continue;
    if (labels[i] >= 0 && labels[i] < k) ++sizes[static_cast<std::size_t>(labels[i])];
  }
  return sizes;
}

Matrix pairwise_distances(const PointSet& points) {
  const Index n = points.size();
  const Matrix& x = points.matrix();
  Matrix d(n, n);
  for (Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Index j = i + 1; j < n; ++j) {
      const double v = (x.row(i) - x.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

namespace {

// Nearest medoid per point; ties go to the lower cluster index.
void assign_to_medoids(const Matrix& dist, const std::vector<Index>& medoids,
                       std::vector<int>& labels, double& cost) {
  const Index n = dist.rows();
  labels.assign(static_cast<std::size_t>(n), 0);
  cost = 0.0;
  for (Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_r = 0;
    for (std::size_t r = 0; r < medoids.size(); ++r) {
      const double v = dist(i, medoids[r]);
      if (v < best) {
        best = v;
        best_r = static_cast<int>(r);
      }
    }
    labels[static_cast<std::size_t>(i)] = best_r;
    cost += best;
  }
}

}  // namespace

PamResult pam_with_trace(const Matrix& dist, int k, Seed seed) {
  const Index n = dist.rows();
  if (n == 0) throw InvalidArgument("pam: empty point set");
  if (k < 1 || k > n) throw InvalidArgument("pam: k must lie in [1, number of points]");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<bool> is_medoid(static_cast<std::size_t>(n), false);
  std::vector<Index> medoids;
  medoids.reserve(static_cast<std::size_t>(k));
  std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());

  // BUILD: the first medoid minimises total distance, each further one
  // maximises the reduction in total distance.
  {
    double best = std::numeric_limits<double>::infinity();
    Index best_i = order.front();
    for (Index i : order) {
      const double total = dist.col(i).sum();
      if (total < best) {
        best = total;
        best_i = i;
      }
    }
    medoids.push_back(best_i);
    is_medoid[static_cast<std::size_t>(best_i)] = true;
    for (Index j = 0; j < n; ++j) nearest[static_cast<std::size_t>(j)] = dist(j, best_i);
  }
  while (static_cast<int>(medoids.size()) < k) {
    double best_gain = -1.0;
    Index best_i = -1;
    for (Index i : order) {
      if (is_medoid[static_cast<std::size_t>(i)]) continue;
      double gain = 0.0;
      for (Index j = 0; j < n; ++j) {
        gain += std::max(nearest[static_cast<std::size_t>(j)] - dist(j, i), 0.0);
      }
      if (gain > best_gain) {
        best_gain = gain;
        best_i = i;
      }
    }
    medoids.push_back(best_i);
    is_medoid[static_cast<std::size_t>(best_i)] = true;
    for (Index j = 0; j < n; ++j) {
      auto& nj = nearest[static_cast<std::size_t>(j)];
      nj = std::min(nj, dist(j, best_i));
    }
  }

  PamResult result;
  std::vector<int> labels;
  double cost = 0.0;
  assign_to_medoids(dist, medoids, labels, cost);
  result.cost_history.push_back(cost);

  // SWAP: steepest descent over (medoid, non-medoid) exchanges.
  std::vector<double> second(static_cast<std::size_t>(n));
  const int max_swaps = 10000;
  for (int iter = 0; iter < max_swaps && k < n; ++iter) {
    for (Index j = 0; j < n; ++j) {
      double d1 = std::numeric_limits<double>::infinity();
      double d2 = std::numeric_limits<double>::infinity();
      for (Index m : medoids) {
        const double v = dist(j, m);
        if (v < d1) {
          d2 = d1;
          d1 = v;
        } else if (v < d2) {
          d2 = v;
        }
      }
      nearest[static_cast<std::size_t>(j)] = d1;
      second[static_cast<std::size_t>(j)] = d2;
    }

    double best_delta = 0.0;
    std::size_t best_slot = 0;
    Index best_h = -1;
    for (std::size_t slot = 0; slot < medoids.size(); ++slot) {
      const Index m = medoids[slot];
      for (Index h : order) {
        if (is_medoid[static_cast<std::size_t>(h)]) continue;
        double delta = 0.0;
        for (Index j = 0; j < n; ++j) {
          const double dj = nearest[static_cast<std::size_t>(j)];
          const double djh = dist(j, h);
          // A point served by m falls back to its second-nearest medoid
          // unless h is closer; others only move if h beats their current.
          if (dist(j, m) == dj) {
            delta += std::min(djh, second[static_cast<std::size_t>(j)]) - dj;
          } else if (djh < dj) {
            delta += djh - dj;
          }
        }
        if (delta < best_delta) {
          best_delta = delta;
          best_slot = slot;
          best_h = h;
        }
      }
    }
    if (best_h < 0 || best_delta > -1e-12 * (1.0 + cost)) break;

    is_medoid[static_cast<std::size_t>(medoids[best_slot])] = false;
    medoids[best_slot] = best_h;
    is_medoid[static_cast<std::size_t>(best_h)] = true;
    assign_to_medoids(dist, medoids, labels, cost);
    result.cost_history.push_back(cost);
  }

  std::sort(medoids.begin(), medoids.end());
  assign_to_medoids(dist, medoids, labels, cost);
  result.cost = cost;
  result.assignment.k = k;
  result.assignment.labels = std::move(labels);
  result.assignment.medoids = std::move(medoids);
  result.assignment.outlier.assign(static_cast<std::size_t>(n), false);
  return result;
}

ClusterAssignment pam(const PointSet& points, int k, Seed seed) {
  if (points.empty()) throw InvalidArgument("pam: empty point set");
  return pam_with_trace(pairwise_distances(points), k, seed).assignment;
}

double dunn_index(const PointSet& points, const ClusterAssignment& assignment) {
  if (assignment.size() != points.size()) {
    throw InvalidArgument("dunn_index: assignment does not match the point set");
  }
  if (assignment.k < 2) throw InvalidArgument("dunn_index: needs at least two clusters");
  const auto sizes = assignment.cluster_sizes();
  for (Index s : sizes) {
    if (s == 0) throw InvalidArgument("dunn_index: empty cluster");
  }

  const Matrix& x = points.matrix();
  const Index n = points.size();
  double min_sep = std::numeric_limits<double>::infinity();
  double max_diam = 0.0;
  for (Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (assignment.outlier[ui]) continue;
    for (Index j = i + 1; j < n; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      if (assignment.outlier[uj]) continue;
      const double d = (x.row(i) - x.row(j)).norm();
      if (assignment.labels[ui] == assignment.labels[uj]) {
        max_diam = std::max(max_diam, d);
      } else {
        min_sep = std::min(min_sep, d);
      }
    }
  }
  if (max_diam == 0.0) {
    if (min_sep == 0.0) throw DegenerateInput("dunn_index: all points identical");
    return std::numeric_limits<double>::infinity();
  }
  return min_sep / max_diam;
}

double within_dispersion(const PointSet& points, const ClusterAssignment& assignment) {
  const Matrix& x = points.matrix();
  const auto sizes = assignment.cluster_sizes();
  // sum_{i,j in C} |xi - xj|^2 / (2 n_C) equals the within-cluster sum of
  // squares about the centroid, which is cheaper to accumulate.
  Matrix sums = Matrix::Zero(assignment.k, points.dim());
  for (Index i = 0; i < points.size(); ++i) {
    const int r = assignment.labels[static_cast<std::size_t>(i)];
    if (r < 0) continue;
    sums.row(r) += x.row(i);
  }
  double w = 0.0;
  for (Index i = 0; i < points.size(); ++i) {
    const int r = assignment.labels[static_cast<std::size_t>(i)];
    if (r < 0) continue;
    const double nr = static_cast<double>(sizes[static_cast<std::size_t>(r)]);
    w += (x.row(i) - sums.row(r) / nr).squaredNorm();
  }
  return w;
}

namespace {

ClusterAssignment single_cluster(Index n) {
  ClusterAssignment a;
  a.k = 1;
  a.labels.assign(static_cast<std::size_t>(n), 0);
  a.medoids = {0};
  a.outlier.assign(static_cast<std::size_t>(n), false);
  return a;
}

struct LogDispersion {
  double log_w1;
  double log_w2;
};

LogDispersion log_dispersions(const PointSet& points, Seed seed) {
  const double w1 = within_dispersion(points, single_cluster(points.size()));
  const double w2 = within_dispersion(points, pam(points, 2, seed));
  return {std::log(w1), std::log(w2)};
}

}  // namespace

GapDecision gap_statistic_with_references(const PointSet& points,
                                          std::span<const PointSet> references, Seed seed) {
  if (points.size() < 2) throw InvalidArgument("gap_statistic: needs at least two points");
  if (references.empty()) throw InvalidArgument("gap_statistic: B must be >= 1");

  GapDecision out;
  const double w1 = within_dispersion(points, single_cluster(points.size()));
  if (w1 == 0.0) {
    out.k = 1;
    return out;
  }
  const double w2 = within_dispersion(points, pam(points, 2, derive_seed(seed, 0)));
  out.log_w1 = std::log(w1);
  out.log_w2 = std::log(w2);

  const auto B = static_cast<double>(references.size());
  std::vector<double> ref1;
  std::vector<double> ref2;
  for (std::size_t b = 0; b < references.size(); ++b) {
    const auto lw = log_dispersions(references[b], derive_seed(seed, 1 + b));
    ref1.push_back(lw.log_w1);
    ref2.push_back(lw.log_w2);
  }
  auto mean_sd = [&](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / B;
    double ss = 0.0;
    for (double t : v) ss += (t - mean) * (t - mean);
    return std::pair{mean, std::sqrt(ss / B)};
  };
  const auto [m1, sd1] = mean_sd(ref1);
  const auto [m2, sd2] = mean_sd(ref2);
  const double inflate = std::sqrt(1.0 + 1.0 / B);
  out.gap1 = m1 - out.log_w1;
  out.gap2 = m2 - out.log_w2;  // +inf when W2 == 0, which selects k = 2
  out.s1 = sd1 * inflate;
  out.s2 = sd2 * inflate;
  out.k = out.gap1 >= out.gap2 - out.s2 ? 1 : 2;
  return out;
}

GapDecision gap_statistic(const PointSet& points, int B, Seed seed) {
  if (B < 1) throw InvalidArgument("gap_statistic: B must be >= 1");
  if (points.size() < 2) throw InvalidArgument("gap_statistic: needs at least two points");

  const Matrix& x = points.matrix();
  const Eigen::RowVectorXd lo = x.colwise().minCoeff();
  const Eigen::RowVectorXd hi = x.colwise().maxCoeff();
  if ((hi - lo).maxCoeff() == 0.0) return GapDecision{};

  std::vector<PointSet> refs;
  refs.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    Rng rng(derive_seed(seed, 0x5245460000ULL + static_cast<std::uint64_t>(b)));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Matrix r(points.size(), points.dim());
    for (Index i = 0; i < r.rows(); ++i) {
      for (Index j = 0; j < r.cols(); ++j) {
        r(i, j) = lo(j) + (hi(j) - lo(j)) * unif(rng);
      }
    }
    refs.emplace_back(std::move(r));
  }
  return gap_statistic_with_references(points, refs, seed);
}

ClusterAssignment trim_small_clusters(const ClusterAssignment& assignment, Index n_total,
                                      double min_frac) {
  if (min_frac < 0.0 || min_frac >= 1.0) {
    throw InvalidArgument("trim_small_clusters: min_frac must lie in [0, 1)");
  }
  const auto sizes = assignment.cluster_sizes();
  const double threshold = min_frac * static_cast<double>(n_total);

  std::vector<int> remap(static_cast<std::size_t>(assignment.k), ClusterAssignment::kOutlier);
  ClusterAssignment out;
  for (int r = 0; r < assignment.k; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    if (sizes[ur] > 0 && static_cast<double>(sizes[ur]) >= threshold) {
      remap[ur] = out.k++;
      out.medoids.push_back(assignment.medoids[ur]);
    }
  }
  if (out.k == 0) throw DegenerateInput("trim_small_clusters: every cluster was trimmed");

  out.labels.resize(assignment.labels.size());
  out.outlier.resize(assignment.labels.size());
  for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
    const int old = assignment.labels[i];
    const bool was_outlier = !assignment.outlier.empty() && assignment.outlier[i];
    const int mapped = (was_outlier || old < 0) ? ClusterAssignment::kOutlier
                                                : remap[static_cast<std::size_t>(old)];
    out.labels[i] = mapped;
    out.outlier[i] = mapped == ClusterAssignment::kOutlier;
  }
  return out;
}

ClusterAssignment reassign_outliers(const PointSet& points, ClusterAssignment assignment) {
  const Matrix& x = points.matrix();
  for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
    if (!assignment.outlier[i]) continue;
    double best = std::numeric_limits<double>::infinity();
    int best_r = 0;
    for (int r = 0; r < assignment.k; ++r) {
      const double d =
          (x.row(static_cast<Index>(i)) - x.row(assignment.medoids[static_cast<std::size_t>(r)]))
              .norm();
      if (d < best) {
        best = d;
        best_r = r;
      }
    }
    assignment.labels[i] = best_r;
  }
  return assignment;
}

KSingle select_k_single(const PointSet& points, const SelectionOptions& options, Seed seed) {
  if (options.k_max < 2) throw InvalidArgument("select_k_single: k_max must be >= 2");
  if (points.size() <= options.k_max) {
    throw InvalidArgument("select_k_single: need more points than k_max");
  }

  const Matrix dist = pairwise_distances(points);
  KSingle out;
  double best = -1.0;
  int best_k = 0;
  for (int k = 2; k <= options.k_max; ++k) {
    const auto raw = pam_with_trace(dist, k, derive_seed(seed, static_cast<std::uint64_t>(k)));
    ClusterAssignment trimmed;
    try {
      trimmed = trim_small_clusters(raw.assignment, points.size(), options.min_frac);
    } catch (const DegenerateInput&) {
      continue;
    }
    out.surviving_k[k] = trimmed.k;
    if (trimmed.k < 2) continue;
    double score = 0.0;
    try {
      score = dunn_index(points, trimmed);
    } catch (const DegenerateInput&) {
      continue;
    }
    out.dunn_scores[k] = score;
    if (score > best) {  // strict: ties keep the smaller k
      best = score;
      best_k = trimmed.k;
    }
  }

  if (best_k == 0) {
    out.k = 1;
  } else if (best_k == 2) {
    out.gap = gap_statistic(points, options.gap_B, derive_seed(seed, 0x474150ULL));
    out.k = out.gap->k;
  } else {
    out.k = best_k;
  }
  return out;
}

KSelection select_k0(const PointSet& x1, const PointSet& x2, const SelectionOptions& options,
                     Seed seed) {
  if (x1.empty() || x2.empty()) throw InvalidArgument("select_k0: both groups must be non-empty");
  if (options.k_max < 2) throw InvalidArgument("select_k0: k_max must be >= 2");

  auto one_group = [&](const PointSet& x) {
    // Small groups cannot support the full search range.
    SelectionOptions local = options;
    local.k_max = std::min<Index>(options.k_max, x.size() - 1);
    if (local.k_max < 2) return KSingle{};
    return select_k_single(x, local, derive_seed(seed, content_hash(x)));
  };

  KSelection out;
  out.group1 = one_group(x1);
  out.group2 = one_group(x2);
  out.k1 = out.group1.k;
  out.k2 = out.group2.k;
  out.k0 = std::min(out.k1, out.k2);
  return out;
}

}  // namespace subpop
