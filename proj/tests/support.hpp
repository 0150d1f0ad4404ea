#pragma once

// Test-only generators and brute-force oracles. Oracles here never call the
// library's kernel, Gram or MMD code paths.

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "kmmd/embeddings.hpp"

namespace kmmd::testing {

using Rows = std::vector<std::vector<double>>;

inline EmbeddingMatrix make_matrix(const Rows& rows, bool normalized = false, const std::string& prefix = "r") {
  std::vector<std::string> ids;
  std::vector<float> data;
  const std::size_t dim = rows.empty() ? 1 : rows.front().size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ids.push_back(prefix + std::to_string(i));
    for (double v : rows[i]) data.push_back(static_cast<float>(v));
  }
  return EmbeddingMatrix(std::move(ids), std::move(data), dim, "test", normalized);
}

/// Rows as stored (float-rounded), widened to double.
inline Rows rows_of(const EmbeddingMatrix& m) {
  Rows out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i].assign(m.row(i).begin(), m.row(i).end());
  return out;
}

inline Rows gaussian_rows(std::size_t n, std::size_t dim, std::mt19937_64& rng, const std::vector<double>& center = {},
                          double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Rows out(n, std::vector<double>(dim));
  for (auto& row : out) {
    for (std::size_t k = 0; k < dim; ++k) row[k] = (center.empty() ? 0.0 : center[k]) + normal(rng);
  }
  return out;
}

inline std::vector<double> random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(dim);
  double sq = 0.0;
  for (auto& x : v) {
    x = normal(rng);
    sq += x * x;
  }
  for (auto& x : v) x /= std::sqrt(sq);
  return v;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

using KernelFn = std::function<double(const std::vector<double>&, const std::vector<double>&)>;

inline KernelFn oracle_linear() { return [](const auto& a, const auto& b) { return dot(a, b); }; }
inline KernelFn oracle_poly(int p) {
  return [p](const auto& a, const auto& b) { return std::pow(dot(a, b), p); };
}
inline KernelFn oracle_rbf(double h) {
  return [h](const auto& a, const auto& b) {
    double sq = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) sq += (a[k] - b[k]) * (a[k] - b[k]);
    return std::exp(-sq / (2.0 * h * h));
  };
}

/// Direct three-term double sum of the unbiased estimator.
inline double brute_mmd2_unbiased(const Rows& x, const Rows& y, const KernelFn& k) {
  const double m = static_cast<double>(x.size());
  const double n = static_cast<double>(y.size());
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j)
      if (i != j) sxx += k(x[i], x[j]);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (i != j) syy += k(y[i], y[j]);
  for (const auto& a : x)
    for (const auto& b : y) sxy += k(a, b);
  return sxx / (m * (m - 1)) + syy / (n * (n - 1)) - 2.0 * sxy / (m * n);
}

inline double brute_mmd2_biased(const Rows& x, const Rows& y, const KernelFn& k) {
  const double m = static_cast<double>(x.size());
  const double n = static_cast<double>(y.size());
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const auto& a : x)
    for (const auto& b : x) sxx += k(a, b);
  for (const auto& a : y)
    for (const auto& b : y) syy += k(a, b);
  for (const auto& a : x)
    for (const auto& b : y) sxy += k(a, b);
  return sxx / (m * m) + syy / (n * n) - 2.0 * sxy / (m * n);
}

/// Degree-2 feature vector built independently of the library: all ordered
/// pairs (a, b) -> x_a x_b, so <phi(x), phi(y)> = <x, y>^2.
inline std::vector<double> ordered_pair_features(const std::vector<double>& x) {
  std::vector<double> f;
  f.reserve(x.size() * x.size());
  for (double a : x)
    for (double b : x) f.push_back(a * b);
  return f;
}

/// Unbiased estimator evaluated in an explicit feature space:
/// sum_{i != j} <f_i, f_j> = |sum f|^2 - sum |f_i|^2.
inline double feature_space_mmd2_unbiased(const Rows& fx, const Rows& fy) {
  auto pieces = [](const Rows& f, std::vector<double>& total, double& self) {
    total.assign(f.front().size(), 0.0);
    self = 0.0;
    for (const auto& v : f) {
      for (std::size_t k = 0; k < v.size(); ++k) total[k] += v[k];
      self += dot(v, v);
    }
  };
  std::vector<double> tx, ty;
  double selfx = 0.0, selfy = 0.0;
  pieces(fx, tx, selfx);
  pieces(fy, ty, selfy);
  const double m = static_cast<double>(fx.size());
  const double n = static_cast<double>(fy.size());
  return (dot(tx, tx) - selfx) / (m * (m - 1)) + (dot(ty, ty) - selfy) / (n * (n - 1)) - 2.0 * dot(tx, ty) / (m * n);
}

/// Edit distance by memoized recursion over suffixes; independent of the DP.
inline std::size_t memo_levenshtein(const std::u32string& a, const std::u32string& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best;
    if (a[i] == b[j]) {
      best = go(i + 1, j + 1);
    } else {
      best = 1 + std::min({go(i + 1, j), go(i, j + 1), go(i + 1, j + 1)});
    }
    memo.emplace(key, best);
    return best;
  };
  return go(0, 0);
}

inline std::u32string random_u32(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len,
                                 std::u32string_view alphabet) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::u32string s(len(rng), U' ');
  for (auto& c : s) c = alphabet[pick(rng)];
  return s;
}

}  // namespace kmmd::testing
