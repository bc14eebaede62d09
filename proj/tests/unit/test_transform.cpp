#include "subpop/transform.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace subpop;

namespace {

Matrix random_spd(Index d, Rng& rng) {
  std::normal_distribution<double> z;
  Matrix a(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) a(i, j) = z(rng);
  }
  return a * a.transpose() + 0.1 * Matrix::Identity(d, d);
}

Matrix random_rotation(Index d, Rng& rng) {
  std::normal_distribution<double> z;
  Matrix a(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) a(i, j) = z(rng);
  }
  return Eigen::HouseholderQR<Matrix>(a).householderQ();
}

}  // namespace

TEST(InvSqrt, Identity) {
  EXPECT_TRUE(matrix_inv_sqrt(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3), 1e-14));
}

TEST(InvSqrt, Diagonal) {
  Matrix s = Matrix::Zero(2, 2);
  s.diagonal() << 4.0, 9.0;
  const Matrix r = matrix_inv_sqrt(s);
  EXPECT_NEAR(r(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(r(1, 1), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(r(0, 1), 0.0, 1e-14);
}

TEST(InvSqrt, MultipliesBackToIdentity) {
  Rng rng(1);
  for (Index d : {1, 2, 3, 5}) {
    const Matrix s = random_spd(d, rng);
    const Matrix r = matrix_inv_sqrt(s);
    EXPECT_LE((r * s * r - Matrix::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((r - r.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(InvSqrt, ClampsTinyEigenvalues) {
  Matrix s = Matrix::Zero(2, 2);
  s.diagonal() << 2.0, 0.0;
  const Matrix r = matrix_inv_sqrt(s);
  EXPECT_NEAR(r(1, 1), 1.0 / std::sqrt(1e-6), 1e-6);
  EXPECT_TRUE(r.allFinite());
}

TEST(InvSqrt, RejectsAsymmetric) {
  Matrix s(2, 2);
  s << 1.0, 0.3, 0.2, 1.0;
  EXPECT_THROW(matrix_inv_sqrt(s), InvalidArgument);
}

TEST(Whiten, Examples) {
  const GaussianComponent g(Vector::Constant(1, 3.0), Matrix::Constant(1, 1, 0.25));
  EXPECT_NEAR(whiten(Vector::Constant(1, 4.0), g)(0), 2.0, 1e-12);
  EXPECT_NEAR(whiten(Vector::Constant(1, 3.0), g)(0), 0.0, 1e-15);

  const GaussianComponent std2(Vector::Zero(2), Matrix::Identity(2, 2));
  Vector x(2);
  x << -1.5, 7.0;
  EXPECT_TRUE(whiten(x, std2).isApprox(x, 1e-15));
}

TEST(WhitenProperty, AffineEquivariantUpToRotation) {
  Rng rng(2);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix sigma = random_spd(3, rng);
    const Vector mu = Vector::NullaryExpr(3, [&] { return z(rng); });
    const Vector x = Vector::NullaryExpr(3, [&] { return z(rng); });
    const Matrix a = random_rotation(3, rng) * Vector(Vector::LinSpaced(3, 0.5, 3.0)).asDiagonal();
    const Vector b = Vector::NullaryExpr(3, [&] { return z(rng); });
    const GaussianComponent orig(mu, sigma);
    Matrix moved_sigma = a * sigma * a.transpose();
    moved_sigma = 0.5 * (moved_sigma + moved_sigma.transpose());
    const GaussianComponent moved(a * mu + b, moved_sigma);
    EXPECT_NEAR(whiten(a * x + b, moved).norm(), whiten(x, orig).norm(), 1e-8);
  }
}

TEST(TransformPair, PooledMomentsWhitenToStandard) {
  Rng rng(3);
  std::normal_distribution<double> z;
  Matrix m(60, 2);
  for (Index i = 0; i < 60; ++i) {
    m(i, 0) = 2.0 + z(rng);
    m(i, 1) = -1.0 + 0.7 * m(i, 0) + 0.3 * z(rng);
  }
  const Vector mu = m.colwise().mean();
  const Matrix c = m.rowwise() - mu.transpose();
  const Matrix cov = c.transpose() * c / 60.0;
  const auto model = make_mixture({GaussianComponent(mu, cov)});
  const PointSet x1(m.topRows(25)), x2(m.bottomRows(35));
  const auto t = transform_pair(x1, x2, model, std::vector<int>(25, 0), std::vector<int>(35, 0));
  ASSERT_EQ(t.t1.size(), 25);
  ASSERT_EQ(t.t2.size(), 35);
  const Matrix all = PointSet::concat(t.t1, t.t2).matrix();
  const Vector tm = all.colwise().mean();
  const Matrix tc = all.rowwise() - tm.transpose();
  EXPECT_LE(tm.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((tc.transpose() * tc / 60.0 - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(TransformPair, RelabelChangesOnlyThatPoint) {
  const auto model = make_mixture({GaussianComponent(Vector::Constant(1, 0.0), Matrix::Constant(1, 1, 1.0)),
                                   GaussianComponent(Vector::Constant(1, 5.0), Matrix::Constant(1, 1, 4.0))});
  const auto x1 = PointSet::univariate(std::vector<double>{0.5, 4.0});
  const auto x2 = PointSet::univariate(std::vector<double>{6.0});
  const auto a = transform_pair(x1, x2, model, std::vector<int>{0, 1}, std::vector<int>{1});
  const auto b = transform_pair(x1, x2, model, std::vector<int>{0, 0}, std::vector<int>{1});
  EXPECT_EQ(a.t1.matrix()(0, 0), b.t1.matrix()(0, 0));
  EXPECT_EQ(a.t2.matrix()(0, 0), b.t2.matrix()(0, 0));
  EXPECT_NEAR(a.t1.matrix()(1, 0), -0.5, 1e-12);
  EXPECT_NEAR(b.t1.matrix()(1, 0), 4.0, 1e-12);
}

TEST(TransformPair, TwoComponentExampleLooksNormal) {
  Rng rng(2024);
  std::normal_distribution<double> z(0.0, 0.5);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> v;
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) {
    const int r = coin(rng) ? 1 : 0;
    v.push_back(3.0 * r + z(rng));
    labels.push_back(r);
  }
  const auto model = make_mixture({GaussianComponent(Vector::Constant(1, 0.0), Matrix::Constant(1, 1, 0.25)),
                                   GaussianComponent(Vector::Constant(1, 3.0), Matrix::Constant(1, 1, 0.25))});
  const auto t = transform_pair(PointSet::univariate(v), PointSet(Matrix(0, 1)), model, labels, std::vector<int>{});
  const auto w = t.t1.column(0);
  double mean = 0.0;
  for (double x : w) mean += x / 200.0;
  double m2 = 0.0, m3 = 0.0;
  for (double x : w) {
    m2 += (x - mean) * (x - mean) / 200.0;
    m3 += (x - mean) * (x - mean) * (x - mean) / 200.0;
  }
  EXPECT_LT(std::abs(m3 / std::pow(m2, 1.5)), 0.5);
  EXPECT_LT(std::abs(mean), 0.25);
}

TEST(TransformPair, PreservesCountsAndRejectsBadLabels) {
  const auto model = make_mixture({GaussianComponent(Vector::Zero(2), Matrix::Identity(2, 2))});
  const auto x1 = PointSet::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const auto x2 = PointSet::from_rows({{0, 0}});
  const auto t = transform_pair(x1, x2, model, std::vector<int>(3, 0), std::vector<int>(1, 0));
  EXPECT_EQ(t.t1.size(), 3);
  EXPECT_EQ(t.t2.size(), 1);
  EXPECT_EQ(t.labels1.size(), 3u);
  EXPECT_THROW(transform_pair(x1, x2, model, std::vector<int>{0, 1, 0}, std::vector<int>{0}), InvalidArgument);
  EXPECT_THROW(transform_pair(x1, x2, model, std::vector<int>{0}, std::vector<int>{0}), InvalidArgument);
}
