#pragma once

#include "subpop/common.hpp"
#include "subpop/mixture_em.hpp"

#include <span>
#include <vector>

namespace subpop {

/// Symmetric inverse square root via eigendecomposition. Eigenvalues below
/// eps * trace/d are clamped to that level before inversion.
Matrix matrix_inv_sqrt(const Matrix& sigma, double eps = 1e-6);

/// Sigma^{-1/2} (x - mu) for one component.
Vector whiten(const Eigen::Ref<const Vector>& x, const GaussianComponent& component);

/// Caches Sigma_r^{-1/2} for every component of a mixture so that the same
/// model can be applied to many label configurations.
class Whitener {
 public:
  explicit Whitener(const MixtureModel& model);

  int k() const { return static_cast<int>(roots_.size()); }

  /// Map every point through the component named by its label.
  PointSet apply(const PointSet& points, std::span<const int> labels) const;

 private:
  std::vector<Vector> means_;
  std::vector<Matrix> roots_;
};

struct TransformedPair {
  PointSet t1;
  PointSet t2;
  std::vector<int> labels1;
  std::vector<int> labels2;
};

TransformedPair transform_pair(const PointSet& x1, const PointSet& x2, const MixtureModel& model,
                               std::span<const int> labels1, std::span<const int> labels2);

}  // namespace subpop
