#include "subpop/transform.hpp"

#include <algorithm>
#include <cmath>

namespace subpop {

Matrix matrix_inv_sqrt(const Matrix& sigma, double eps) {
  const Index d = sigma.rows();
  if (d < 1 || sigma.cols() != d) throw InvalidArgument("matrix_inv_sqrt: matrix must be square");
  if (!sigma.allFinite()) throw InvalidArgument("matrix_inv_sqrt: non-finite entries");
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidArgument("matrix_inv_sqrt: matrix is not symmetric");
  }
  const Matrix sym = 0.5 * (sigma + sigma.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalFailure("matrix_inv_sqrt: eigensolver failed");

  const double floor = eps * std::abs(sym.trace()) / static_cast<double>(d);
  Vector values = eig.eigenvalues();
  for (Index i = 0; i < d; ++i) {
    values(i) = std::max(values(i), floor);
  }
  if (!(values.minCoeff() > 0.0)) {
    throw NumericalFailure("matrix_inv_sqrt: matrix has no positive spread");
  }
  const Matrix& v = eig.eigenvectors();
  Matrix root = v * values.array().rsqrt().matrix().asDiagonal() * v.transpose();
  return 0.5 * (root + root.transpose());
}

Vector whiten(const Eigen::Ref<const Vector>& x, const GaussianComponent& component) {
  if (x.size() != component.dim()) throw InvalidArgument("whiten: dimension mismatch");
  return matrix_inv_sqrt(component.covariance()) * (x - component.mean());
}

Whitener::Whitener(const MixtureModel& model) {
  for (const auto& c : model.components) {
    means_.push_back(c.mean());
    roots_.push_back(matrix_inv_sqrt(c.covariance()));
  }
}

PointSet Whitener::apply(const PointSet& points, std::span<const int> labels) const {
  if (labels.size() != static_cast<std::size_t>(points.size())) {
    throw InvalidArgument("Whitener: one label per point required");
  }
  const Matrix& x = points.matrix();
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const int r = labels[static_cast<std::size_t>(i)];
    if (r < 0 || r >= k()) throw InvalidArgument("Whitener: label outside the model");
    const auto ur = static_cast<std::size_t>(r);
    out.row(i) = (roots_[ur] * (x.row(i).transpose() - means_[ur])).transpose();
  }
  return PointSet(std::move(out));
}

TransformedPair transform_pair(const PointSet& x1, const PointSet& x2, const MixtureModel& model,
                               std::span<const int> labels1, std::span<const int> labels2) {
  const Whitener w(model);
  TransformedPair out{w.apply(x1, labels1), w.apply(x2, labels2),
                      std::vector<int>(labels1.begin(), labels1.end()),
                      std::vector<int>(labels2.begin(), labels2.end())};
  return out;
}

}  // namespace subpop
