#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spb/activations.hpp"
#include "spb/core.hpp"
#include "spb/error.hpp"
#include "spb/metrics.hpp"
#include "spb/numeric.hpp"
#include "spb/rng.hpp"

namespace spb {

// ---------------------------------------------------------------------------
// Output-space statistics
// ---------------------------------------------------------------------------

struct Heatmap
{
  int cols = 0;
  int rows = 0;
  Canvas canvas;
  std::vector<long> counts; // row-major, rows * cols

  long at(int col, int row) const
  {
    return counts[static_cast<std::size_t>(row * cols + col)];
  }

  long total() const { return std::accumulate(counts.begin(), counts.end(), 0L); }

  long max() const
  {
    return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  }
};

/// Fixation counts per grid cell, binned exactly like metrics::quantize.
inline Heatmap fixation_heatmap(const Dataset& d, int cols, int rows, Subset subset)
{
  if (cols < 1 || rows < 1)
    throw PreconditionError("heatmap grid must be at least 1x1");
  MetricConfig grid;
  grid.grid_cols = cols;
  grid.grid_rows = rows;
  Heatmap map{cols, rows, d.canvas,
              std::vector<long>(static_cast<std::size_t>(cols * rows), 0)};
  for (const auto& s : d.samples) {
    if (!in_subset(s, subset))
      continue;
    for (int cell : quantize(s.scanpath, grid, d.canvas))
      ++map.counts[static_cast<std::size_t>(cell)];
  }
  return map;
}

struct FixationCount
{
  long x = 0;
  long y = 0;
  long count = 0;

  friend bool operator==(const FixationCount&, const FixationCount&) = default;
};

/// Most frequent fixation positions after rounding to whole pixels, by
/// descending count with ties ordered by x then y.
inline std::vector<FixationCount> frequent_fixations(const Dataset& d,
                                                     std::size_t top_k,
                                                     Subset subset)
{
  if (top_k < 1)
    throw PreconditionError("frequent_fixations: top_k must be >= 1");
  std::map<std::pair<long, long>, long> table;
  for (const auto& s : d.samples)
    if (in_subset(s, subset))
      for (const auto& f : s.scanpath)
        ++table[{std::lround(f.x), std::lround(f.y)}];

  std::vector<FixationCount> out;
  out.reserve(table.size());
  for (const auto& [xy, n] : table)
    out.push_back({xy.first, xy.second, n});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.count != b.count)
      return a.count > b.count;
    if (a.x != b.x)
      return a.x < b.x;
    return a.y < b.y;
  });
  if (out.size() > top_k)
    out.resize(top_k);
  return out;
}

// ---------------------------------------------------------------------------
// Activation clustering
// ---------------------------------------------------------------------------

struct ClusterConfig
{
  int pca_dims = 10;
  std::size_t min_group = 50;
  double min_silhouette = 0.2;
  double max_small_frac = 0.2;
  std::uint64_t seed = 0;
  int max_iterations = 300;

  void validate() const
  {
    if (pca_dims < 1)
      throw ConfigError("pca_dims must be >= 1");
    if (!(max_small_frac > 0.0 && max_small_frac < 0.5))
      throw ConfigError("max_small_frac must lie in (0, 0.5)");
    if (!(min_silhouette > -1.0 && min_silhouette < 1.0))
      throw ConfigError("min_silhouette must lie in (-1, 1)");
  }
};

struct ClusterResult
{
  std::vector<std::string> flagged;
  std::vector<int> labels;     // 0/1 per row
  std::size_t small_label = 0; // label of the smaller cluster
  std::size_t small_size = 0;
  double silhouette = 0.0;
  int iterations = 0;
  bool size_gate = false;
  bool silhouette_gate = false;
};

namespace detail {

/// Index of the largest value; exact ties are broken by the RNG so the
/// result never depends on row order.
inline std::size_t argmax_tiebreak(const std::vector<double>& v, Rng& rng)
{
  const double best = *std::max_element(v.begin(), v.end());
  std::vector<std::size_t> ties;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] == best)
      ties.push_back(i);
  return ties.size() == 1 ? ties[0] : ties[rng.below(ties.size())];
}

/// Centered data projected on the leading principal components. Each
/// component's sign is fixed so its largest-magnitude loading is positive.
inline Eigen::MatrixXd pca_project(const ActivationMatrix& m, int dims)
{
  const auto n = static_cast<Eigen::Index>(m.rows());
  const auto d = static_cast<Eigen::Index>(m.dim);
  Eigen::MatrixXd x =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      m.values.data(), n, d);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  if (!(cov.trace() > 0.0))
    throw PreconditionError("activation_clustering: activation matrix has zero variance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw PreconditionError("activation_clustering: eigendecomposition failed");

  const auto k = std::min<Eigen::Index>(dims, d);
  Eigen::MatrixXd basis(d, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    // Eigen orders eigenvalues ascending.
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0)
      v = -v;
    basis.col(c) = v;
  }
  return x * basis;
}

inline double sq_dist(const Eigen::MatrixXd& z, Eigen::Index i, const Eigen::RowVectorXd& c)
{
  return (z.row(i) - c).squaredNorm();
}

/// Mean silhouette over all points for a two-cluster labelling. Points in
/// singleton clusters contribute 0.
inline double mean_silhouette(const Eigen::MatrixXd& z, const std::vector<int>& labels)
{
  const auto n = z.rows();
  std::size_t sizes[2] = {0, 0};
  for (int l : labels)
    ++sizes[l];
  std::vector<double> s(static_cast<std::size_t>(n), 0.0);
  std::vector<double> own, other;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int li = labels[static_cast<std::size_t>(i)];
    if (sizes[li] <= 1)
      continue;
    own.clear();
    other.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i)
        continue;
      const double dist = (z.row(i) - z.row(j)).norm();
      (labels[static_cast<std::size_t>(j)] == li ? own : other).push_back(dist);
    }
    const double a = pairwise_mean(own);
    const double b = pairwise_mean(other);
    const double denom = std::max(a, b);
    s[static_cast<std::size_t>(i)] = denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return pairwise_mean(s);
}

} // namespace detail

/// PCA projection, 2-means, silhouette, then the size and silhouette gates.
/// The smaller cluster is flagged only when both gates pass.
inline ClusterResult activation_clustering_detailed(const ActivationMatrix& m,
                                                    const ClusterConfig& cfg)
{
  cfg.validate();
  if (m.dim < 2)
    throw PreconditionError("activation_clustering: need D >= 2");
  if (m.rows() < 2)
    throw PreconditionError("activation_clustering: need at least 2 rows");
  if (m.values.size() != m.rows() * m.dim)
    throw StructuralError("activation matrix storage does not match its shape");

  const Eigen::MatrixXd z = detail::pca_project(m, cfg.pca_dims);
  const auto n = z.rows();
  Rng rng(derive_seed(cfg.seed, "kmeans-init"));

  // Farthest-point initialization: the point farthest from the centroid
  // (the origin after centering), then the point farthest from it.
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    dist[static_cast<std::size_t>(i)] = z.row(i).squaredNorm();
  const auto first = detail::argmax_tiebreak(dist, rng);
  Eigen::RowVectorXd centers[2];
  centers[0] = z.row(static_cast<Eigen::Index>(first));
  for (Eigen::Index i = 0; i < n; ++i)
    dist[static_cast<std::size_t>(i)] = detail::sq_dist(z, i, centers[0]);
  const auto second = detail::argmax_tiebreak(dist, rng);
  centers[1] = z.row(static_cast<Eigen::Index>(second));
  if (!(dist[second] > 0.0))
    throw PreconditionError("activation_clustering: projected points are all identical");

  ClusterResult result;
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int l = detail::sq_dist(z, i, centers[1]) < detail::sq_dist(z, i, centers[0]) ? 1 : 0;
      if (labels[static_cast<std::size_t>(i)] != l) {
        labels[static_cast<std::size_t>(i)] = l;
        changed = true;
      }
    }
    result.iterations = iter;
    if (!changed)
      break;
    Eigen::RowVectorXd sums[2] = {Eigen::RowVectorXd::Zero(z.cols()),
                                  Eigen::RowVectorXd::Zero(z.cols())};
    std::size_t counts[2] = {0, 0};
    for (Eigen::Index i = 0; i < n; ++i) {
      const int l = labels[static_cast<std::size_t>(i)];
      sums[l] += z.row(i);
      ++counts[l];
    }
    for (int c = 0; c < 2; ++c)
      if (counts[c] > 0)
        centers[c] = sums[c] / static_cast<double>(counts[c]);
  }

  std::size_t sizes[2] = {0, 0};
  for (int l : labels)
    ++sizes[l];
  result.labels = labels;
  result.small_label = sizes[1] < sizes[0] ? 1 : 0;
  result.small_size = sizes[result.small_label];
  if (sizes[0] == 0 || sizes[1] == 0)
    return result;

  result.silhouette = detail::mean_silhouette(z, labels);
  const double n_rows = static_cast<double>(n);
  result.size_gate = result.small_size >= cfg.min_group &&
                     static_cast<double>(result.small_size) <= cfg.max_small_frac * n_rows;
  result.silhouette_gate = result.silhouette >= cfg.min_silhouette;
  if (result.size_gate && result.silhouette_gate) {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (static_cast<std::size_t>(labels[i]) == result.small_label)
        result.flagged.push_back(m.ids[i]);
  }
  return result;
}

inline std::vector<std::string> activation_clustering(const ActivationMatrix& m,
                                                      const ClusterConfig& cfg)
{
  return activation_clustering_detailed(m, cfg).flagged;
}

// ---------------------------------------------------------------------------
// Kernel density estimate
// ---------------------------------------------------------------------------

namespace detail {

// Linear interpolation between order statistics (R type 7).
inline double quantile_sorted(const std::vector<double>& v, double q)
{
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace detail

/// Silverman's rule of thumb: 0.9 * min(sd, IQR / 1.34) * n^(-1/5). Falls
/// back to the standard deviation when the IQR is zero.
inline double silverman_bandwidth(std::vector<double> values)
{
  if (values.size() < 2)
    throw PreconditionError("kde: need at least 2 values");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  const double mean = pairwise_mean(values);
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    sq[i] = (values[i] - mean) * (values[i] - mean);
  const double sd = std::sqrt(pairwise_sum(sq) / (n - 1.0));
  if (!(sd > 0.0))
    throw PreconditionError("kde: values have zero spread");
  const double iqr = detail::quantile_sorted(values, 0.75) - detail::quantile_sorted(values, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(n, -0.2);
}

/// Gaussian-kernel density of `values` at each point of `eval_grid`.
inline std::vector<double> kde_1d(const std::vector<double>& values,
                                  const std::vector<double>& eval_grid)
{
  const double h = silverman_bandwidth(values);
  const double norm = 1.0 / (static_cast<double>(values.size()) * h *
                             std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> out;
  out.reserve(eval_grid.size());
  std::vector<double> terms(values.size());
  for (double g : eval_grid) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double u = (g - values[i]) / h;
      terms[i] = std::exp(-0.5 * u * u);
    }
    out.push_back(norm * pairwise_sum(terms));
  }
  return out;
}

/// `points` evenly spaced values spanning [min - 3h, max + 3h].
inline std::vector<double> kde_grid(const std::vector<double>& values, std::size_t points)
{
  if (points < 2)
    throw PreconditionError("kde grid needs at least 2 points");
  const double h = silverman_bandwidth(values);
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it - 3.0 * h;
  const double hi = *hi_it + 3.0 * h;
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i)
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return grid;
}

// ---------------------------------------------------------------------------
// Mann-Whitney U
// ---------------------------------------------------------------------------

struct UTestResult
{
  double u = 0.0;        // statistic for the first sample
  double p_two_sided = 1.0;
  bool exact = false;
};

/// Below this smaller-group size the p-value comes from the exact
/// permutation distribution.
inline constexpr std::size_t u_test_exact_below = 8;

namespace detail {

/// Midranks (1-based) of the pooled sample, in pooled order, and the tie
/// correction term sum(t^3 - t).
inline std::pair<std::vector<double>, double> midranks(const std::vector<double>& pooled)
{
  const auto n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> ranks(n);
  double ties = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]])
      ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k)
      ranks[order[k]] = r;
    const double t = static_cast<double>(j - i + 1);
    ties += t * t * t - t;
    i = j + 1;
  }
  return {ranks, ties};
}

/// Exact two-sided p for rank sum `observed2` (twice the rank sum) of a
/// group of size m drawn from `ranks2` (twice the midranks, integers).
/// Counts every size-m subset by its rank sum.
inline double exact_rank_sum_p(const std::vector<long>& ranks2, std::size_t m, long observed2)
{
  const long max_sum = std::accumulate(ranks2.begin(), ranks2.end(), 0L);
  // ways[k][s]: number of k-subsets of the items seen so far with sum s.
  std::vector<std::vector<double>> ways(m + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
  ways[0][0] = 1.0;
  for (long r : ranks2) {
    for (std::size_t k = m; k >= 1; --k) {
      auto& dst = ways[k];
      const auto& src = ways[k - 1];
      for (long s = max_sum; s >= r; --s)
        dst[static_cast<std::size_t>(s)] += src[static_cast<std::size_t>(s - r)];
    }
  }
  double total = 0.0, le = 0.0, ge = 0.0;
  for (long s = 0; s <= max_sum; ++s) {
    const double w = ways[m][static_cast<std::size_t>(s)];
    total += w;
    if (s <= observed2)
      le += w;
    if (s >= observed2)
      ge += w;
  }
  return std::min(1.0, 2.0 * std::min(le, ge) / total);
}

} // namespace detail

/// Two-sided Mann-Whitney U test of `a` against `b`. U is computed from
/// midranks. p is exact when the smaller sample has fewer than 8 values
/// and otherwise uses the tie-corrected normal approximation with
/// continuity correction.
inline UTestResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b)
{
  if (a.empty() || b.empty())
    throw PreconditionError("mann_whitney_u: both samples must be non-empty");
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  for (double v : pooled)
    if (!std::isfinite(v))
      throw PreconditionError("mann_whitney_u: non-finite value");
  const auto [ranks, ties] = detail::midranks(pooled);

  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  double rank_sum_a = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    rank_sum_a += ranks[i];

  UTestResult res;
  res.u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;

  if (std::min(a.size(), b.size()) < u_test_exact_below) {
    std::vector<long> ranks2(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i)
      ranks2[i] = std::lround(2.0 * ranks[i]);
    // The two-sided p is the same from either group; enumerate the smaller.
    const long obs_a = std::lround(2.0 * rank_sum_a);
    if (a.size() <= b.size()) {
      res.p_two_sided = detail::exact_rank_sum_p(ranks2, a.size(), obs_a);
    } else {
      const long all = std::accumulate(ranks2.begin(), ranks2.end(), 0L);
      res.p_two_sided = detail::exact_rank_sum_p(ranks2, b.size(), all - obs_a);
    }
    res.exact = true;
    return res;
  }

  const double n = n1 + n2;
  const double mu = n1 * n2 / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  if (!(var > 0.0)) {
    res.p_two_sided = 1.0;
    return res;
  }
  const double z = std::max(0.0, std::abs(res.u - mu) - 0.5) / std::sqrt(var);
  const double p = std::erfc(z / std::numbers::sqrt2);
  res.p_two_sided = std::clamp(p, std::numeric_limits<double>::min(), 1.0);
  return res;
}

} // namespace spb
