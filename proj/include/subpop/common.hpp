#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace subpop {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using Seed = std::uint64_t;
using Rng = std::mt19937_64;

// Error taxonomy shared by every module. Callers that need to distinguish
// "bad call" from "data cannot support the computation" catch these.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A set of d-dimensional observations, one per row.
///
/// All coordinates are finite. An empty set still carries its dimension so
/// that samplers can return zero rows of the right shape.
class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(Matrix rows);

  static PointSet univariate(std::span<const double> values);
  static PointSet from_rows(const std::vector<std::vector<double>>& rows);

  Index size() const { return data_.rows(); }
  Index dim() const { return data_.cols(); }
  bool empty() const { return data_.rows() == 0; }

  auto point(Index i) const { return data_.row(i); }
  const Matrix& matrix() const { return data_; }

  /// Coordinate j of every point.
  std::vector<double> column(Index j) const;

  /// Points at the given indices, in the given order.
  PointSet subset(std::span<const Index> indices) const;

  /// Vertical concatenation; dimensions must agree.
  static PointSet concat(const PointSet& a, const PointSet& b);

 private:
  Matrix data_;
};

/// Stream splitting for reproducible, order-independent randomness: the
/// result depends only on (base, stream), never on how many draws other
/// streams consumed.
Seed derive_seed(Seed base, std::uint64_t stream);

/// Hash of the raw coordinate bits; equal point sets hash equally.
std::uint64_t content_hash(const PointSet& points);

/// Indices that sort the points lexicographically by coordinates.
std::vector<Index> lexicographic_order(const PointSet& points);

}  // namespace subpop
