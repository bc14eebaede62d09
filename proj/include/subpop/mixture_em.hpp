#pragma once

#include "subpop/clustering.hpp"
#include "subpop/common.hpp"

#include <utility>
#include <vector>

namespace subpop {

/// Multivariate normal density with a cached Cholesky factor.
class GaussianComponent {
 public:
  GaussianComponent() = default;
  /// Throws InvalidArgument if `covariance` is not symmetric to 1e-10 and
  /// NumericalFailure if it is not positive definite.
  GaussianComponent(Vector mean, Matrix covariance);

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  Index dim() const { return mean_.size(); }

  double log_pdf(const Eigen::Ref<const Vector>& x) const;

 private:
  Vector mean_;
  Matrix covariance_;
  Matrix chol_;  // lower triangular
  double log_norm_ = 0.0;
};

/// Gaussian mixture with weights pinned at 1/k.
struct MixtureModel {
  std::vector<GaussianComponent> components;
  std::vector<double> weights;
  double log_likelihood = 0.0;
  std::vector<double> log_likelihood_trace;  // one entry per E-step
  int iterations = 0;
  bool converged = false;

  int k() const { return static_cast<int>(components.size()); }
  Index dim() const { return components.empty() ? 0 : components.front().dim(); }
};

struct EmOptions {
  double tol = 1e-8;  // relative change in log-likelihood
  int max_iter = 500;
  double ridge = 1e-6;
};

/// Adds ridge * (trace/d) * I when the smallest eigenvalue drops below that
/// level. Returns true when the ridge was applied.
bool regularize_covariance(Matrix& covariance, double ridge);

/// EM for an equal-weight Gaussian mixture started from a hard partition.
///
/// Only means and covariances are updated. Clusters with fewer than d + 1
/// members start from the pooled covariance.
MixtureModel em_fit(const PointSet& points, int k0, const ClusterAssignment& init,
                    const EmOptions& options = {});

/// Mixture built directly from given components, equal weights.
MixtureModel make_mixture(std::vector<GaussianComponent> components);

/// Posterior membership probabilities, normalised in log space.
Vector responsibilities(const MixtureModel& model, const Eigen::Ref<const Vector>& x);
/// Row i holds the responsibilities of point i.
Matrix responsibilities(const MixtureModel& model, const PointSet& points);

/// Largest-posterior labels, ties to the lower component index.
ClusterAssignment map_assign(const MixtureModel& model, const PointSet& points);

/// Per-point log density under every component (n x k).
Matrix component_log_densities(const MixtureModel& model, const PointSet& points);

/// log f(X | C) = sum over points of log f_{c_i}(x_i).
double pseudo_log_likelihood(const MixtureModel& model, const PointSet& x1, const PointSet& x2,
                             std::span<const int> labels1, std::span<const int> labels2);

/// Exact draw from P(C | X) under a uniform prior: the posterior factorises
/// over points, so each label is drawn independently from its
/// responsibilities.
std::pair<std::vector<int>, std::vector<int>> sample_assignment(const MixtureModel& model,
                                                                const PointSet& x1,
                                                                const PointSet& x2, Rng& rng);

/// Single-set version on a precomputed responsibility matrix.
std::vector<int> sample_labels(const Matrix& resp, Rng& rng);

}  // namespace subpop
