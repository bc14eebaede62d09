#pragma once

#include "subpop/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace subpop::detail {

// Calls fn(span) for every k-subset of {0..n-1} in lexicographic order.
template <typename Fn>
void for_each_combination(Index n, Index k, Fn&& fn) {
  std::vector<Index> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), Index{0});
  if (k > n) return;
  while (true) {
    fn(std::span<const Index>(idx));
    Index i = k - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) return;
    ++idx[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < k; ++j) {
      idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
}

// Relative slack used when comparing permuted statistics with the observed
// one, so that algebraically equal splits count as ties.
inline double tie_slack(double observed) {
  return 1e-9 * std::max(1.0, std::abs(observed));
}

}  // namespace subpop::detail
