#pragma once

// Maximum mean discrepancy between two embedded samples and its permutation
// test. With kernel k, samples x_1..x_m and y_1..y_n:
//
//   unbiased  MMD^2 = S_xx / (m(m-1)) + S_yy / (n(n-1)) - 2 S_xy / (mn)
//   biased    MMD^2 = T_xx / m^2      + T_yy / n^2      - 2 S_xy / (mn)
//
// where S_xx, S_yy sum k over distinct pairs (i != j), T_xx, T_yy include the
// diagonal, and S_xy sums every cross pair.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmmd/embeddings.hpp"
#include "kmmd/error.hpp"
#include "kmmd/kernels.hpp"
#include "kmmd/parallel.hpp"
#include "kmmd/random.hpp"

namespace kmmd {

inline constexpr std::size_t kDefaultPermutations = 1000;
inline constexpr double kDefaultAlpha = 0.01;

struct MmdResult {
  double estimate = 0.0;    // unbiased MMD^2, may be negative
  double null_lower = 0.0;  // alpha/2 percentile of the permutation null
  double null_upper = 0.0;  // 1 - alpha/2 percentile
  double p_value = 1.0;     // (1 + #{null >= estimate}) / (permutations + 1)
  std::size_t permutations = 0;
  double alpha = kDefaultAlpha;
  std::uint64_t seed = 0;
  KernelSpec spec;
  std::size_t m = 0;
  std::size_t n = 0;

  /// Estimate above the upper edge of the null band.
  [[nodiscard]] bool significant() const noexcept { return estimate > null_upper; }
};

inline nlohmann::ordered_json to_json(const MmdResult& r) {
  nlohmann::ordered_json j;
  j["estimate"] = r.estimate;
  j["lower"] = r.null_lower;
  j["upper"] = r.null_upper;
  j["p_value"] = r.p_value;
  j["permutations"] = r.permutations;
  j["alpha"] = r.alpha;
  j["seed"] = r.seed;
  j["kernel"] = r.spec.to_string();
  j["m"] = r.m;
  j["n"] = r.n;
  return j;
}

namespace detail {

inline void require_unbiased_sizes(std::size_t m, std::size_t n) {
  if (m < 2 || n < 2) {
    throw DataError("unbiased estimator undefined for sample sizes m=" + std::to_string(m) + ", n=" +
                    std::to_string(n) + " (need m >= 2 and n >= 2)");
  }
}

inline double diagonal_sum(const EmbeddingMatrix& x, const KernelSpec& spec) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) s += kernel_eval(x.row(i), x.row(i), spec);
  return s;
}

inline EmbeddingMatrix concat_rows(const EmbeddingMatrix& x, const EmbeddingMatrix& y) {
  check_same_dim(x, y);
  std::vector<std::string> ids = x.ids();
  ids.insert(ids.end(), y.ids().begin(), y.ids().end());
  std::vector<float> data(x.data().begin(), x.data().end());
  data.insert(data.end(), y.data().begin(), y.data().end());
  return EmbeddingMatrix(std::move(ids), std::move(data), x.dim(), x.model(), x.normalized() && y.normalized());
}

/// Kernel matrix over the pooled rows [x; y], computed once and re-indexed
/// for every permutation.
class PooledGram {
 public:
  PooledGram(const EmbeddingMatrix& x, const EmbeddingMatrix& y, const KernelSpec& spec, const GramBlockPlan& plan)
      : m_(x.rows()), n_(y.rows()) {
    const std::size_t total = m_ + n_;
    if (total * total * sizeof(double) > plan.memory_budget) {
      throw DataError("pooled kernel matrix for " + std::to_string(total) + " rows needs " +
                      std::to_string(total * total * sizeof(double)) + " bytes, over the memory budget of " +
                      std::to_string(plan.memory_budget) + "; subsample the inputs");
    }
    const EmbeddingMatrix pooled = concat_rows(x, y);
    k_ = gram(pooled, pooled, spec, plan);
    offdiag_total_ = k_.sum() - k_.diagonal().sum();
  }

  [[nodiscard]] std::size_t size() const noexcept { return m_ + n_; }

  /// Unbiased MMD^2 with rows labels[0, m) as the first sample and the rest as the second.
  [[nodiscard]] double statistic(std::span<const std::size_t> labels) const {
    const double sxx = within_sum(labels.subspan(0, m_));
    const double syy = within_sum(labels.subspan(m_));
    const double sxy = 0.5 * (offdiag_total_ - sxx - syy);
    const auto m = static_cast<double>(m_);
    const auto n = static_cast<double>(n_);
    return sxx / (m * (m - 1.0)) + syy / (n * (n - 1.0)) - 2.0 * sxy / (m * n);
  }

 private:
  [[nodiscard]] double within_sum(std::span<const std::size_t> idx) const {
    double s = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      const double* row = k_.data() + idx[a] * size();
      double part = 0.0;
      for (std::size_t b = a + 1; b < idx.size(); ++b) part += row[idx[b]];
      s += part;
    }
    return 2.0 * s;
  }

  std::size_t m_;
  std::size_t n_;
  Matrix k_;
  double offdiag_total_ = 0.0;
};

inline std::vector<double> run_permutations(const PooledGram& pooled, std::size_t permutations, std::uint64_t seed,
                                            std::size_t threads) {
  std::vector<double> null(permutations);
  parallel_for(permutations, threads, [&](std::size_t, std::size_t b) {
    Rng rng(derive_seed(seed, b));
    std::vector<std::size_t> labels(pooled.size());
    std::iota(labels.begin(), labels.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(labels), rng);
    null[b] = pooled.statistic(labels);
  });
  return null;
}

/// Percentile with linear interpolation between order statistics of a sorted sample.
inline double interpolated_quantile(std::span<const double> sorted, double p) {
  if (sorted.size() == 1) return sorted.front();
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

inline double mmd2_unbiased(const EmbeddingMatrix& x, const EmbeddingMatrix& y, const KernelSpec& spec,
                            const GramBlockPlan& plan = {}) {
  detail::check_same_dim(x, y);
  detail::require_unbiased_sizes(x.rows(), y.rows());
  const KernelSpec k = resolve_kernel(spec, x, y, plan.threads);
  const double sxx = kernel_sum_offdiagonal(x, k, plan).sum;
  const double syy = kernel_sum_offdiagonal(y, k, plan).sum;
  const double sxy = kernel_sum(x, y, k, plan).sum;
  const auto m = static_cast<double>(x.rows());
  const auto n = static_cast<double>(y.rows());
  return sxx / (m * (m - 1.0)) + syy / (n * (n - 1.0)) - 2.0 * sxy / (m * n);
}

/// Squared RKHS distance between the empirical mean embeddings; nonnegative up to rounding.
inline double mmd2_biased(const EmbeddingMatrix& x, const EmbeddingMatrix& y, const KernelSpec& spec,
                          const GramBlockPlan& plan = {}) {
  detail::check_same_dim(x, y);
  if (x.rows() == 0 || y.rows() == 0) throw DataError("biased MMD needs at least one row per sample");
  const KernelSpec k = resolve_kernel(spec, x, y, plan.threads);
  const double txx = kernel_sum_offdiagonal(x, k, plan).sum + detail::diagonal_sum(x, k);
  const double tyy = kernel_sum_offdiagonal(y, k, plan).sum + detail::diagonal_sum(y, k);
  const double sxy = kernel_sum(x, y, k, plan).sum;
  const auto m = static_cast<double>(x.rows());
  const auto n = static_cast<double>(y.rows());
  return txx / (m * m) + tyy / (n * n) - 2.0 * sxy / (m * n);
}

/// Unbiased MMD^2 of `permutations` random relabelings of the pooled rows.
/// Iteration b draws its permutation from a stream seeded by (seed, b), so
/// the result does not depend on the thread count.
inline std::vector<double> permutation_null(const EmbeddingMatrix& x, const EmbeddingMatrix& y, const KernelSpec& spec,
                                            std::size_t permutations, std::uint64_t seed,
                                            const GramBlockPlan& plan = {}) {
  if (permutations < 1) throw DataError("permutation count must be >= 1");
  detail::check_same_dim(x, y);
  detail::require_unbiased_sizes(x.rows(), y.rows());
  const KernelSpec k = resolve_kernel(spec, x, y, plan.threads);
  const detail::PooledGram pooled(x, y, k, plan);
  return detail::run_permutations(pooled, permutations, seed, plan.threads);
}

inline MmdResult mmd_test(const EmbeddingMatrix& x, const EmbeddingMatrix& y, const KernelSpec& spec,
                          std::size_t permutations = kDefaultPermutations, double alpha = kDefaultAlpha,
                          std::uint64_t seed = 0, const GramBlockPlan& plan = {}) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("alpha must lie in (0, 1), got " + format_double(alpha));
  if (permutations < 1) throw DataError("permutation count must be >= 1");
  detail::check_same_dim(x, y);
  detail::require_unbiased_sizes(x.rows(), y.rows());

  MmdResult result;
  result.spec = resolve_kernel(spec, x, y, plan.threads);
  result.permutations = permutations;
  result.alpha = alpha;
  result.seed = seed;
  result.m = x.rows();
  result.n = y.rows();

  const detail::PooledGram pooled(x, y, result.spec, plan);
  std::vector<std::size_t> identity(pooled.size());
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  result.estimate = pooled.statistic(identity);

  std::vector<double> null = detail::run_permutations(pooled, permutations, seed, plan.threads);
  const auto exceed = static_cast<std::size_t>(
      std::count_if(null.begin(), null.end(), [&](double v) { return v >= result.estimate; }));
  result.p_value = static_cast<double>(1 + exceed) / static_cast<double>(permutations + 1);
  std::sort(null.begin(), null.end());
  result.null_lower = detail::interpolated_quantile(null, alpha / 2.0);
  result.null_upper = detail::interpolated_quantile(null, 1.0 - alpha / 2.0);
  return result;
}

}  // namespace kmmd
