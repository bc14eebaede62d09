#include "subpop/mixture_em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace subpop {

GaussianComponent::GaussianComponent(Vector mean, Matrix covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  const Index d = mean_.size();
  if (d < 1 || covariance_.rows() != d || covariance_.cols() != d) {
    throw InvalidArgument("GaussianComponent: mean and covariance shapes disagree");
  }
  if (!mean_.allFinite() || !covariance_.allFinite()) {
    throw NumericalFailure("GaussianComponent: non-finite parameters");
  }
  const double scale = std::max(1.0, covariance_.cwiseAbs().maxCoeff());
  if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidArgument("GaussianComponent: covariance is not symmetric");
  }
  Eigen::LLT<Matrix> llt(covariance_);
  if (llt.info() != Eigen::Success) {
    throw NumericalFailure("GaussianComponent: covariance is not positive definite");
  }
  chol_ = llt.matrixL();
  const double log_det = 2.0 * chol_.diagonal().array().log().sum();
  log_norm_ = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
}

double GaussianComponent::log_pdf(const Eigen::Ref<const Vector>& x) const {
  const Vector z = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
  return log_norm_ - 0.5 * z.squaredNorm();
}

bool regularize_covariance(Matrix& covariance, double ridge) {
  const Index d = covariance.rows();
  covariance = 0.5 * (covariance + covariance.transpose());
  const double level = ridge * covariance.trace() / static_cast<double>(d);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < level) {
    covariance.diagonal().array() += level;
    return true;
  }
  return false;
}

namespace {

Matrix sample_covariance(const Matrix& x, const Vector& mean) {
  const Matrix centered = x.rowwise() - mean.transpose();
  return centered.transpose() * centered / static_cast<double>(x.rows());
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// A component sitting on tied points has zero spread; it gets the ridge at the
// pooled scale instead.
GaussianComponent checked_component(Vector mean, Matrix cov, double ridge, double floor) {
  if (!cov.allFinite()) throw NumericalFailure("em_fit: non-finite covariance");
  if (cov.trace() <= 0.0) {
    if (!(floor > 0.0)) throw NumericalFailure("em_fit: collapsed covariance");
    cov.diagonal().array() += floor;
  }
  regularize_covariance(cov, ridge);
  return GaussianComponent(std::move(mean), std::move(cov));
}

}  // namespace

MixtureModel make_mixture(std::vector<GaussianComponent> components) {
  if (components.empty()) throw InvalidArgument("make_mixture: no components");
  MixtureModel m;
  const auto k = components.size();
  m.components = std::move(components);
  m.weights.assign(k, 1.0 / static_cast<double>(k));
  return m;
}

Matrix component_log_densities(const MixtureModel& model, const PointSet& points) {
  if (points.dim() != model.dim()) {
    throw InvalidArgument("mixture: point dimension does not match the model");
  }
  const Index n = points.size();
  Matrix out(n, model.k());
  for (Index i = 0; i < n; ++i) {
    const Vector x = points.point(i).transpose();
    for (int r = 0; r < model.k(); ++r) {
      out(i, r) = model.components[static_cast<std::size_t>(r)].log_pdf(x);
    }
  }
  return out;
}

MixtureModel em_fit(const PointSet& points, int k0, const ClusterAssignment& init,
                    const EmOptions& options) {
  const Index n = points.size();
  const Index d = points.dim();
  if (k0 < 1) throw InvalidArgument("em_fit: k0 must be >= 1");
  if (n < static_cast<Index>(k0) * (d + 1)) throw InvalidArgument("em_fit: too few points");
  if (init.k != k0 || init.size() != n) {
    throw InvalidArgument("em_fit: initial partition does not match k0 / point count");
  }
  if (!(options.tol > 0.0)) throw InvalidArgument("em_fit: tol must be positive");

  const Matrix& x = points.matrix();
  const Vector pooled_mean = x.colwise().mean().transpose();
  const Matrix pooled_cov = sample_covariance(x, pooled_mean);
  const double floor = options.ridge * pooled_cov.trace() / static_cast<double>(d);

  std::vector<GaussianComponent> comps;
  for (int r = 0; r < k0; ++r) {
    std::vector<Index> members;
    for (Index i = 0; i < n; ++i) {
      if (init.labels[static_cast<std::size_t>(i)] == r) members.push_back(i);
    }
    if (members.empty()) throw InvalidArgument("em_fit: initial cluster is empty");
    const Matrix xr = points.subset(members).matrix();
    const Vector mean = xr.colwise().mean().transpose();
    const Matrix cov =
        static_cast<Index>(members.size()) < d + 1 ? pooled_cov : sample_covariance(xr, mean);
    comps.push_back(checked_component(mean, cov, options.ridge, floor));
  }

  MixtureModel model = make_mixture(std::move(comps));
  const double log_weight = -std::log(static_cast<double>(k0));
  Matrix resp(n, k0);
  double previous = -std::numeric_limits<double>::infinity();

  for (int iter = 0;; ++iter) {
    // E-step under the current parameters.
    Matrix logd = component_log_densities(model, points).array() + log_weight;
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double lse = log_sum_exp(logd.row(i));
      ll += lse;
      resp.row(i) = (logd.row(i).array() - lse).exp();
    }
    if (!std::isfinite(ll)) throw NumericalFailure("em_fit: non-finite log-likelihood");
    model.log_likelihood = ll;
    model.log_likelihood_trace.push_back(ll);
    model.iterations = iter;
    if (std::isfinite(previous) && std::abs(ll - previous) < options.tol * std::abs(previous)) {
      model.converged = true;
      break;
    }
    if (iter >= options.max_iter) break;
    previous = ll;

    // M-step: means and covariances only; weights stay at 1/k0.
    std::vector<GaussianComponent> next;
    for (int r = 0; r < k0; ++r) {
      const double mass = resp.col(r).sum();
      if (!(mass > 0.0)) throw NumericalFailure("em_fit: component lost all mass");
      const Vector mean = (x.transpose() * resp.col(r)) / mass;
      const Matrix centered = x.rowwise() - mean.transpose();
      const Matrix cov =
          centered.transpose() * resp.col(r).asDiagonal() * centered / mass;
      next.push_back(checked_component(mean, cov, options.ridge, floor));
    }
    model.components = std::move(next);
  }
  return model;
}

Vector responsibilities(const MixtureModel& model, const Eigen::Ref<const Vector>& x) {
  if (x.size() != model.dim()) throw InvalidArgument("responsibilities: dimension mismatch");
  if (!x.allFinite()) throw InvalidArgument("responsibilities: non-finite input");
  Eigen::RowVectorXd logd(model.k());
  for (int r = 0; r < model.k(); ++r) {
    logd(r) = model.components[static_cast<std::size_t>(r)].log_pdf(x);
  }
  const double lse = log_sum_exp(logd);
  return (logd.array() - lse).exp().transpose();
}

Matrix responsibilities(const MixtureModel& model, const PointSet& points) {
  Matrix logd = component_log_densities(model, points);
  for (Index i = 0; i < logd.rows(); ++i) {
    const double lse = log_sum_exp(logd.row(i));
    logd.row(i) = (logd.row(i).array() - lse).exp();
  }
  return logd;
}

ClusterAssignment map_assign(const MixtureModel& model, const PointSet& points) {
  const Matrix logd = component_log_densities(model, points);
  ClusterAssignment out;
  out.k = model.k();
  out.labels.resize(static_cast<std::size_t>(points.size()));
  out.outlier.assign(static_cast<std::size_t>(points.size()), false);
  for (Index i = 0; i < points.size(); ++i) {
    int best = 0;
    for (int r = 1; r < model.k(); ++r) {
      if (logd(i, r) > logd(i, best)) best = r;
    }
    out.labels[static_cast<std::size_t>(i)] = best;
  }
  // Medoid slot holds the member closest to each component mean.
  out.medoids.assign(static_cast<std::size_t>(model.k()), -1);
  std::vector<double> best_d(static_cast<std::size_t>(model.k()),
                             std::numeric_limits<double>::infinity());
  for (Index i = 0; i < points.size(); ++i) {
    const auto r = static_cast<std::size_t>(out.labels[static_cast<std::size_t>(i)]);
    const double dist = (points.point(i).transpose() - model.components[r].mean()).norm();
    if (dist < best_d[r]) {
      best_d[r] = dist;
      out.medoids[r] = i;
    }
  }
  return out;
}

double pseudo_log_likelihood(const MixtureModel& model, const PointSet& x1, const PointSet& x2,
                             std::span<const int> labels1, std::span<const int> labels2) {
  if (labels1.size() != static_cast<std::size_t>(x1.size()) ||
      labels2.size() != static_cast<std::size_t>(x2.size())) {
    throw InvalidArgument("pseudo_log_likelihood: label count mismatch");
  }
  double total = 0.0;
  auto accumulate = [&](const PointSet& x, std::span<const int> labels) {
    for (Index i = 0; i < x.size(); ++i) {
      const int r = labels[static_cast<std::size_t>(i)];
      if (r < 0 || r >= model.k()) throw InvalidArgument("pseudo_log_likelihood: bad label");
      total += model.components[static_cast<std::size_t>(r)].log_pdf(x.point(i).transpose());
    }
  };
  accumulate(x1, labels1);
  accumulate(x2, labels2);
  if (!std::isfinite(total)) throw NumericalFailure("pseudo_log_likelihood: non-finite density");
  return total;
}

std::vector<int> sample_labels(const Matrix& resp, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> labels(static_cast<std::size_t>(resp.rows()));
  for (Index i = 0; i < resp.rows(); ++i) {
    const double u = unif(rng);
    double acc = 0.0;
    int r = 0;
    const int last = static_cast<int>(resp.cols()) - 1;
    for (; r < last; ++r) {
      acc += resp(i, r);
      if (u < acc) break;
    }
    labels[static_cast<std::size_t>(i)] = r;
  }
  return labels;
}

std::pair<std::vector<int>, std::vector<int>> sample_assignment(const MixtureModel& model,
                                                                const PointSet& x1,
                                                                const PointSet& x2, Rng& rng) {
  const Matrix r1 = responsibilities(model, x1);
  const Matrix r2 = responsibilities(model, x2);
  auto l1 = sample_labels(r1, rng);
  auto l2 = sample_labels(r2, rng);
  return {std::move(l1), std::move(l2)};
}

}  // namespace subpop
