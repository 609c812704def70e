#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace spb {

/// Pairwise (tree-order) summation. The result depends only on the
/// sequence, never on how work was split, and the rounding error grows as
/// O(log n) instead of O(n).
inline double pairwise_sum(std::span<const double> v)
{
  if (v.empty())
    return 0.0;
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v)
      s += x;
    return s;
  }
  const auto half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double pairwise_mean(std::span<const double> v)
{
  return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

} // namespace spb
