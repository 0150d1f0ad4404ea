#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "kmmd/csv.hpp"
#include "kmmd/embeddings.hpp"
#include "kmmd/error.hpp"
#include "kmmd/format.hpp"
#include "kmmd/parallel.hpp"
#include "kmmd/random.hpp"

namespace kmmd {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Kernel families

struct LinearKernel {
  bool operator==(const LinearKernel&) const = default;
};

/// k(x, y) = <x, y>^degree
struct PolynomialKernel {
  int degree = 2;
  bool operator==(const PolynomialKernel&) const = default;
};

/// k(x, y) = exp(-|x - y|^2 / (2 bandwidth^2)); no bandwidth means "median heuristic".
struct RbfKernel {
  std::optional<double> bandwidth;
  bool operator==(const RbfKernel&) const = default;
};

class KernelSpec {
 public:
  using Family = std::variant<LinearKernel, PolynomialKernel, RbfKernel>;

  /// Homogeneous polynomial of degree 2.
  KernelSpec() : family_(PolynomialKernel{2}) {}

  static KernelSpec linear() { return KernelSpec(LinearKernel{}); }
  static KernelSpec polynomial(int degree) {
    if (degree < 1) throw DataError("polynomial kernel degree must be >= 1, got " + std::to_string(degree));
    return KernelSpec(PolynomialKernel{degree});
  }
  static KernelSpec poly2() { return polynomial(2); }
  static KernelSpec rbf(double bandwidth) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
      throw DataError("rbf bandwidth must be positive and finite, got " + format_double(bandwidth));
    }
    return KernelSpec(RbfKernel{bandwidth});
  }
  static KernelSpec rbf_median() { return KernelSpec(RbfKernel{std::nullopt}); }

  [[nodiscard]] const Family& family() const noexcept { return family_; }
  [[nodiscard]] bool is_linear() const noexcept { return std::holds_alternative<LinearKernel>(family_); }
  [[nodiscard]] bool is_polynomial() const noexcept { return std::holds_alternative<PolynomialKernel>(family_); }
  [[nodiscard]] bool is_rbf() const noexcept { return std::holds_alternative<RbfKernel>(family_); }
  [[nodiscard]] int degree() const { return std::get<PolynomialKernel>(family_).degree; }
  [[nodiscard]] std::optional<double> bandwidth() const { return std::get<RbfKernel>(family_).bandwidth; }
  [[nodiscard]] bool needs_bandwidth() const noexcept { return is_rbf() && !bandwidth(); }

  /// "linear", "poly(degree=2)", "rbf(bandwidth=0.5)", "rbf(median)".
  [[nodiscard]] std::string to_string() const {
    if (is_linear()) return "linear";
    if (is_polynomial()) return "poly(degree=" + std::to_string(degree()) + ")";
    return bandwidth() ? "rbf(bandwidth=" + format_double(*bandwidth()) + ")" : "rbf(median)";
  }

  bool operator==(const KernelSpec&) const = default;

 private:
  explicit KernelSpec(Family f) : family_(f) {}
  Family family_;
};

namespace detail {

inline double ipow(double base, int exp) noexcept {
  double result = 1.0;
  while (exp > 0) {
    if (exp & 1) result *= base;
    base *= base;
    exp >>= 1;
  }
  return result;
}

inline void require_resolved(const KernelSpec& spec) {
  if (spec.needs_bandwidth()) {
    throw DataError("rbf(median) must be resolved to a bandwidth before evaluation (see resolve_kernel)");
  }
}

}  // namespace detail

template <class T, class U>
double kernel_eval(std::span<const T> x, std::span<const U> y, const KernelSpec& spec) {
  if (x.size() != y.size()) {
    throw DataError("kernel_eval dimension mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  detail::require_resolved(spec);
  if (spec.is_rbf()) {
    double sq = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double diff = static_cast<double>(x[k]) - static_cast<double>(y[k]);
      sq += diff * diff;
    }
    const double h = *spec.bandwidth();
    return std::exp(-sq / (2.0 * h * h));
  }
  double dot = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) dot += static_cast<double>(x[k]) * static_cast<double>(y[k]);
  return spec.is_linear() ? dot : detail::ipow(dot, spec.degree());
}

inline double kernel_eval(std::span<const double> x, std::span<const double> y, const KernelSpec& spec) {
  return kernel_eval<double, double>(x, y, spec);
}

// ---------------------------------------------------------------------------
// Blocked Gram computation

/// Output tiling for Gram computations. Each worker holds one block's inputs
/// (as doubles) plus its output tile; working_bytes * threads must fit the budget.
struct GramBlockPlan {
  std::size_t block_rows = 1024;
  std::size_t block_cols = 1024;
  std::size_t memory_budget = std::size_t{2} << 30;
  std::size_t threads = 1;

  [[nodiscard]] std::size_t working_bytes(std::size_t dim) const noexcept {
    return ((block_rows + block_cols) * dim + block_rows * block_cols) * sizeof(double);
  }

  void validate(std::size_t dim) const {
    if (block_rows == 0 || block_cols == 0) throw DataError("gram block sizes must be >= 1");
    if (threads == 0) throw DataError("gram thread count must be >= 1");
    const std::size_t need = working_bytes(dim) * threads;
    if (need > memory_budget) {
      throw DataError("memory budget of " + std::to_string(memory_budget) + " bytes is smaller than one block (" +
                      std::to_string(need) + " bytes for " + std::to_string(block_rows) + "x" +
                      std::to_string(block_cols) + " at dim " + std::to_string(dim) + " across " +
                      std::to_string(threads) + " workers)");
    }
  }

  /// Largest square block (<= 2048) that fits the budget at this dimension.
  static GramBlockPlan for_budget(std::size_t dim, std::size_t budget, std::size_t threads = 1) {
    GramBlockPlan plan;
    plan.memory_budget = budget;
    plan.threads = std::max<std::size_t>(threads, 1);
    std::size_t b = 2048;
    while (b > 1) {
      plan.block_rows = plan.block_cols = b;
      if (plan.working_bytes(dim) * plan.threads <= budget) return plan;
      b /= 2;
    }
    plan.block_rows = plan.block_cols = 1;
    plan.validate(dim);
    return plan;
  }
};

namespace detail {

inline void check_same_dim(const EmbeddingMatrix& x, const EmbeddingMatrix& y) {
  if (x.dim() != y.dim()) {
    throw DataError("embedding dimension mismatch: " + std::to_string(x.dim()) + " vs " + std::to_string(y.dim()));
  }
}

inline Matrix to_double_rows(const EmbeddingMatrix& m, std::size_t begin, std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(m.dim()));
  const float* src = m.data().data() + begin * m.dim();
  const std::size_t count = (end - begin) * m.dim();
  double* dst = out.data();
  for (std::size_t k = 0; k < count; ++k) dst[k] = src[k];
  return out;
}

/// Kernel tile for X[r0, r1) x Y[c0, c1), accumulated in double.
inline Matrix kernel_block(const EmbeddingMatrix& x, std::size_t r0, std::size_t r1, const EmbeddingMatrix& y,
                           std::size_t c0, std::size_t c1, const KernelSpec& spec) {
  const Matrix xb = to_double_rows(x, r0, r1);
  const Matrix yb = to_double_rows(y, c0, c1);
  Matrix tile = xb * yb.transpose();
  if (spec.is_polynomial()) {
    const int p = spec.degree();
    if (p > 1) tile = tile.unaryExpr([p](double v) { return ipow(v, p); });
  } else if (spec.is_rbf()) {
    const double h = *spec.bandwidth();
    const double scale = -1.0 / (2.0 * h * h);
    const Eigen::VectorXd xn = xb.rowwise().squaredNorm();
    const Eigen::VectorXd yn = yb.rowwise().squaredNorm();
    for (Eigen::Index i = 0; i < tile.rows(); ++i) {
      for (Eigen::Index j = 0; j < tile.cols(); ++j) {
        const double sq = std::max(0.0, xn(i) + yn(j) - 2.0 * tile(i, j));
        tile(i, j) = std::exp(scale * sq);
      }
    }
  }
  return tile;
}

struct BlockGrid {
  std::size_t row_blocks;
  std::size_t col_blocks;
};

inline BlockGrid grid_for(std::size_t n, std::size_t m, const GramBlockPlan& plan) {
  return {(n + plan.block_rows - 1) / plan.block_rows, (m + plan.block_cols - 1) / plan.block_cols};
}

}  // namespace detail

/// Full n x m kernel matrix. The output itself must also fit the budget.
inline Matrix gram(const EmbeddingMatrix& x, const EmbeddingMatrix& y, const KernelSpec& spec,
                   const GramBlockPlan& plan = {}) {
  detail::check_same_dim(x, y);
  detail::require_resolved(spec);
  plan.validate(x.dim());
  const std::size_t n = x.rows();
  const std::size_t m = y.rows();
  if (n * m * sizeof(double) > plan.memory_budget) {
    throw DataError("gram output " + std::to_string(n) + "x" + std::to_string(m) +
                    " exceeds the memory budget; request kernel sums instead");
  }
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  const auto grid = detail::grid_for(n, m, plan);
  parallel_for(grid.row_blocks * grid.col_blocks, plan.threads, [&](std::size_t, std::size_t b) {
    const std::size_t r0 = (b / grid.col_blocks) * plan.block_rows;
    const std::size_t c0 = (b % grid.col_blocks) * plan.block_cols;
    const std::size_t r1 = std::min(r0 + plan.block_rows, n);
    const std::size_t c1 = std::min(c0 + plan.block_cols, m);
    out.block(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(r1 - r0),
              static_cast<Eigen::Index>(c1 - c0)) = detail::kernel_block(x, r0, r1, y, c0, c1, spec);
  });
  // Same input on both sides: mirror the upper triangle so K is exactly symmetric.
  if (&x == &y) {
    for (Eigen::Index i = 1; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < i; ++j) out(i, j) = out(j, i);
  }
  return out;
}

/// Result of a streaming kernel reduction; no n x m matrix is ever held.
struct KernelSum {
  double sum = 0.0;
  std::size_t blocks = 0;
  std::size_t peak_working_bytes = 0;  // largest per-worker footprint of a block
};

/// sum_{i,j} k(x_i, y_j), tile by tile.
inline KernelSum kernel_sum(const EmbeddingMatrix& x, const EmbeddingMatrix& y, const KernelSpec& spec,
                            const GramBlockPlan& plan = {}) {
  detail::check_same_dim(x, y);
  detail::require_resolved(spec);
  plan.validate(x.dim());
  const auto grid = detail::grid_for(x.rows(), y.rows(), plan);
  const std::size_t count = grid.row_blocks * grid.col_blocks;
  std::vector<double> partial(count, 0.0);
  std::vector<std::size_t> footprint(count, 0);
  parallel_for(count, plan.threads, [&](std::size_t, std::size_t b) {
    const std::size_t r0 = (b / grid.col_blocks) * plan.block_rows;
    const std::size_t c0 = (b % grid.col_blocks) * plan.block_cols;
    const std::size_t r1 = std::min(r0 + plan.block_rows, x.rows());
    const std::size_t c1 = std::min(c0 + plan.block_cols, y.rows());
    partial[b] = detail::kernel_block(x, r0, r1, y, c0, c1, spec).sum();
    footprint[b] = ((r1 - r0 + c1 - c0) * x.dim() + (r1 - r0) * (c1 - c0)) * sizeof(double);
  });
  KernelSum out;
  out.blocks = count;
  for (std::size_t b = 0; b < count; ++b) {
    out.sum += partial[b];
    out.peak_working_bytes = std::max(out.peak_working_bytes, footprint[b]);
  }
  return out;
}

/// sum_{i != j} k(x_i, x_j), visiting only tiles on or above the diagonal.
inline KernelSum kernel_sum_offdiagonal(const EmbeddingMatrix& x, const KernelSpec& spec,
                                        const GramBlockPlan& plan = {}) {
  detail::require_resolved(spec);
  GramBlockPlan square = plan;
  square.block_cols = square.block_rows;
  square.validate(x.dim());
  const std::size_t blocks_per_side = (x.rows() + square.block_rows - 1) / square.block_rows;
  std::vector<std::pair<std::size_t, std::size_t>> tiles;
  for (std::size_t i = 0; i < blocks_per_side; ++i) {
    for (std::size_t j = i; j < blocks_per_side; ++j) tiles.emplace_back(i, j);
  }
  std::vector<double> partial(tiles.size(), 0.0);
  std::vector<std::size_t> footprint(tiles.size(), 0);
  parallel_for(tiles.size(), square.threads, [&](std::size_t, std::size_t t) {
    const auto [bi, bj] = tiles[t];
    const std::size_t r0 = bi * square.block_rows;
    const std::size_t c0 = bj * square.block_rows;
    const std::size_t r1 = std::min(r0 + square.block_rows, x.rows());
    const std::size_t c1 = std::min(c0 + square.block_rows, x.rows());
    const Matrix tile = detail::kernel_block(x, r0, r1, x, c0, c1, spec);
    if (bi == bj) {
      partial[t] = tile.sum() - tile.diagonal().sum();
    } else {
      partial[t] = 2.0 * tile.sum();
    }
    footprint[t] = ((r1 - r0 + c1 - c0) * x.dim() + (r1 - r0) * (c1 - c0)) * sizeof(double);
  });
  KernelSum out;
  out.blocks = tiles.size();
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    out.sum += partial[t];
    out.peak_working_bytes = std::max(out.peak_working_bytes, footprint[t]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bandwidth selection

/// Rows above this pooled count are subsampled for the median heuristic.
inline constexpr std::size_t kMedianHeuristicMaxRows = 2000;
inline constexpr std::uint64_t kMedianHeuristicSeed = 0x6D656469616E6877ULL;

/// Median pairwise Euclidean distance over the pooled rows of x and y (exact
/// up to 2000 rows, seeded uniform subsample of 2000 rows above that).
inline double median_heuristic_bandwidth(const EmbeddingMatrix& x, const EmbeddingMatrix& y,
                                         std::size_t threads = 1) {
  detail::check_same_dim(x, y);
  std::vector<std::span<const float>> rows;
  rows.reserve(x.rows() + y.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) rows.push_back(x.row(i));
  for (std::size_t i = 0; i < y.rows(); ++i) rows.push_back(y.row(i));
  if (rows.size() < 2) throw DataError("median heuristic needs at least 2 pooled rows");
  if (rows.size() > kMedianHeuristicMaxRows) {
    Rng rng(kMedianHeuristicSeed);
    auto keep = sample_without_replacement(rows.size(), kMedianHeuristicMaxRows, rng);
    std::sort(keep.begin(), keep.end());
    std::vector<std::span<const float>> sub;
    sub.reserve(keep.size());
    for (std::size_t k : keep) sub.push_back(rows[k]);
    rows = std::move(sub);
  }
  const std::size_t n = rows.size();
  std::vector<double> dist(n * (n - 1) / 2);
  parallel_for(n - 1, threads, [&](std::size_t, std::size_t i) {
    std::size_t slot = i * (2 * n - i - 1) / 2;
    for (std::size_t j = i + 1; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < rows[i].size(); ++k) {
        const double d = static_cast<double>(rows[i][k]) - static_cast<double>(rows[j][k]);
        sq += d * d;
      }
      dist[slot++] = std::sqrt(sq);
    }
  });
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (lower + median);
  }
  if (!(median > 0.0)) throw DataError("degenerate bandwidth: median pairwise distance is 0");
  return median;
}

/// Replaces rbf(median) by rbf(bandwidth) computed from the pooled rows; other specs pass through.
inline KernelSpec resolve_kernel(const KernelSpec& spec, const EmbeddingMatrix& x, const EmbeddingMatrix& y,
                                 std::size_t threads = 1) {
  if (!spec.needs_bandwidth()) return spec;
  return KernelSpec::rbf(median_heuristic_bandwidth(x, y, threads));
}

// ---------------------------------------------------------------------------
// Explicit degree-2 feature map, kept as an oracle for the kernel trick.

/// Features (x_a^2 for a == b, sqrt(2) x_a x_b for a < b), upper triangle in
/// row-major order, so <phi(x), phi(y)> = <x, y>^2.
inline Matrix explicit_poly2_features(const EmbeddingMatrix& x, std::size_t memory_budget = std::size_t{256} << 20) {
  const std::size_t d = x.dim();
  const std::size_t width = d * (d + 1) / 2;
  if (x.rows() * width * sizeof(double) > memory_budget) {
    throw DataError("explicit degree-2 features need " + std::to_string(x.rows() * width * sizeof(double)) +
                    " bytes, over the budget of " + std::to_string(memory_budget));
  }
  const double root2 = std::sqrt(2.0);
  Matrix out(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    Eigen::Index col = 0;
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) {
        const double v = static_cast<double>(r[a]) * static_cast<double>(r[b]);
        out(static_cast<Eigen::Index>(i), col++) = a == b ? v : root2 * v;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cosine similarity

inline Matrix cosine_similarity_matrix(const EmbeddingMatrix& x, const EmbeddingMatrix& y,
                                       const GramBlockPlan& plan = {}) {
  auto norms = [](const EmbeddingMatrix& m) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(m.rows()));
    for (std::size_t i = 0; i < m.rows(); ++i) {
      out(static_cast<Eigen::Index>(i)) = m.row_norm(i);
      if (out(static_cast<Eigen::Index>(i)) == 0.0) {
        throw DataError("cosine similarity undefined for zero-norm row \"" + m.ids()[i] + "\"");
      }
    }
    return out;
  };
  const Eigen::VectorXd nx = norms(x);
  const Eigen::VectorXd ny = norms(y);
  Matrix out = gram(x, y, KernelSpec::linear(), plan);
  if (!(x.normalized() && y.normalized())) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) /= nx(i) * ny(j);
    }
  }
  return out.cwiseMax(-1.0).cwiseMin(1.0);
}

/// CSV with a header of column ids; the first column holds row ids.
inline void write_matrix_csv(std::ostream& os, const std::vector<std::string>& row_ids,
                             const std::vector<std::string>& col_ids, const Matrix& m) {
  std::vector<std::string> header{"id"};
  header.insert(header.end(), col_ids.begin(), col_ids.end());
  os << csv::join_row(header);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row{row_ids[static_cast<std::size_t>(i)]};
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(format_double(m(i, j)));
    os << csv::join_row(row);
  }
}

}  // namespace kmmd
