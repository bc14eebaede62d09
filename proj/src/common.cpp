#include "subpop/common.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

namespace subpop {

PointSet::PointSet(Matrix rows) : data_(std::move(rows)) {
  if (data_.cols() < 1) {
    throw InvalidArgument("point set must have dimension >= 1");
  }
  if (!data_.allFinite()) {
    throw InvalidArgument("point set contains non-finite coordinates");
  }
}

PointSet PointSet::univariate(std::span<const double> values) {
  Matrix m(static_cast<Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    m(static_cast<Index>(i), 0) = values[i];
  }
  return PointSet(std::move(m));
}

PointSet PointSet::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) {
    throw InvalidArgument("from_rows needs at least one row to infer dimension");
  }
  const auto d = rows.front().size();
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) {
      throw InvalidArgument("rows have inconsistent dimensions");
    }
    for (std::size_t j = 0; j < d; ++j) {
      m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  return PointSet(std::move(m));
}

std::vector<double> PointSet::column(Index j) const {
  std::vector<double> out(static_cast<std::size_t>(size()));
  for (Index i = 0; i < size(); ++i) {
    out[static_cast<std::size_t>(i)] = data_(i, j);
  }
  return out;
}

PointSet PointSet::subset(std::span<const Index> indices) const {
  Matrix m(static_cast<Index>(indices.size()), dim());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    m.row(static_cast<Index>(r)) = data_.row(indices[r]);
  }
  return PointSet(std::move(m));
}

PointSet PointSet::concat(const PointSet& a, const PointSet& b) {
  if (a.dim() != b.dim()) {
    throw InvalidArgument("cannot concatenate point sets of different dimension");
  }
  Matrix m(a.size() + b.size(), a.dim());
  m.topRows(a.size()) = a.data_;
  m.bottomRows(b.size()) = b.data_;
  return PointSet(std::move(m));
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Seed derive_seed(Seed base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

std::uint64_t content_hash(const PointSet& points) {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(points.dim()));
  const Matrix& m = points.matrix();
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      // +0.0 and -0.0 compare equal, so they must hash equally too.
      const double v = m(i, j) == 0.0 ? 0.0 : m(i, j);
      h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v));
    }
  }
  return h;
}

std::vector<Index> lexicographic_order(const PointSet& points) {
  std::vector<Index> order(static_cast<std::size_t>(points.size()));
  std::iota(order.begin(), order.end(), Index{0});
  const Matrix& m = points.matrix();
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (m(a, j) < m(b, j)) return true;
      if (m(b, j) < m(a, j)) return false;
    }
    return false;
  });
  return order;
}

}  // namespace subpop
