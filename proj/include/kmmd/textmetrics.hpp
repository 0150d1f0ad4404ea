#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "kmmd/corpus.hpp"
#include "kmmd/error.hpp"
#include "kmmd/parallel.hpp"
#include "kmmd/utf8.hpp"

namespace kmmd {

// ---------------------------------------------------------------------------
// Surprisal

enum class SurprisalMode { mean, sum };

/// Per-word surprisal -log2(count(w) / total) under the corpus word
/// distribution, averaged over the title (or summed with SurprisalMode::sum).
inline double title_surprisal(std::span<const std::string> tokens, const TokenStats& stats,
                              SurprisalMode mode = SurprisalMode::mean) {
  if (tokens.empty()) throw DataError("surprisal of an empty token list");
  if (stats.total == 0) throw DataError("token statistics are empty");
  const double total = static_cast<double>(stats.total);
  double sum = 0.0;
  for (const auto& token : tokens) {
    const std::size_t c = stats.count(token);
    if (c == 0) throw DataError("token \"" + token + "\" absent from token statistics");
    sum += -std::log2(static_cast<double>(c) / total);
  }
  return mode == SurprisalMode::sum ? sum : sum / static_cast<double>(tokens.size());
}

struct EntropyPoint {
  std::uint64_t seq = 0;
  double surprisal = 0.0;
  bool operator==(const EntropyPoint&) const = default;
};

struct EntropySeries {
  std::vector<EntropyPoint> points;       // sorted by seq
  std::optional<std::size_t> window;      // moving-average width, when requested
  std::vector<double> smoothed;           // same length as points when window is set
  std::size_t skipped = 0;                // documents with no tokens
};

/// Centered moving average of odd width; near the ends the window is
/// truncated to the points that exist.
inline std::vector<double> centered_moving_average(std::span<const double> values, std::size_t width) {
  if (width == 0 || width % 2 == 0) throw DataError("moving-average width must be odd, got " + std::to_string(width));
  const std::size_t half = width / 2;
  std::vector<double> prefix(values.size() + 1, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) prefix[i + 1] = prefix[i] + values[i];
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(values.size(), i + half + 1);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

inline EntropySeries entropy_series(const Corpus& corpus, const TokenizerConfig& config = {},
                                    std::optional<std::size_t> window = std::nullopt,
                                    SurprisalMode mode = SurprisalMode::mean) {
  const TokenStats stats = build_token_stats(corpus, config);
  EntropySeries series;
  series.window = window;
  for (std::size_t i : corpus.seq_order()) {
    const auto tokens = tokenize(corpus[i].text, config);
    if (tokens.empty()) {
      ++series.skipped;
      continue;
    }
    series.points.push_back({corpus[i].seq.value_or(i), title_surprisal(tokens, stats, mode)});
  }
  if (window) {
    std::vector<double> raw;
    raw.reserve(series.points.size());
    for (const auto& p : series.points) raw.push_back(p.surprisal);
    series.smoothed = centered_moving_average(raw, *window);
  }
  return series;
}

// ---------------------------------------------------------------------------
// Levenshtein distance

/// Unit-cost edit distance over Unicode scalar values.
inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return a.size();
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + cost});
      diag = up;
    }
  }
  return row[b.size()];
}

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(std::u32string_view(utf8::decode(a)), std::u32string_view(utf8::decode(b)));
}

/// Distribution of all C(u, 2) pairwise distances. Quartiles and median use
/// the lower nearest-rank convention sorted[floor(p * (N - 1))]; std_dev is
/// the population standard deviation over all pairs.
struct LevenshteinSummary {
  std::uint64_t pair_count = 0;
  double mean = 0.0;
  double median = 0.0;
  double std_dev = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::uint64_t count_at_1 = 0;
  std::uint64_t count_at_2 = 0;
  std::vector<std::uint64_t> histogram;  // histogram[k] = pairs at distance k

  [[nodiscard]] double percent_at_1() const { return pair_count ? 100.0 * count_at_1 / pair_count : 0.0; }
  [[nodiscard]] double percent_at_2() const { return pair_count ? 100.0 * count_at_2 / pair_count : 0.0; }
};

inline LevenshteinSummary summarize_distance_histogram(std::vector<std::uint64_t> histogram) {
  LevenshteinSummary s;
  // Integer moments keep mean and variance exact up to the final division.
  unsigned __int128 sum = 0;
  unsigned __int128 sum_sq = 0;
  for (std::size_t k = 0; k < histogram.size(); ++k) {
    s.pair_count += histogram[k];
    sum += static_cast<unsigned __int128>(histogram[k]) * k;
    sum_sq += static_cast<unsigned __int128>(histogram[k]) * k * k;
  }
  if (s.pair_count == 0) throw DataError("no distances to summarize");
  const auto count = static_cast<unsigned __int128>(s.pair_count);
  s.mean = static_cast<double>(sum) / static_cast<double>(s.pair_count);
  const unsigned __int128 spread = count * sum_sq - sum * sum;  // N^2 * variance
  s.std_dev = std::sqrt(static_cast<double>(spread) / (static_cast<double>(s.pair_count) * static_cast<double>(s.pair_count)));

  auto value_at_rank = [&](std::uint64_t rank) {
    std::uint64_t seen = 0;
    for (std::size_t k = 0; k < histogram.size(); ++k) {
      seen += histogram[k];
      if (seen > rank) return static_cast<double>(k);
    }
    return static_cast<double>(histogram.size() - 1);
  };
  const std::uint64_t last = s.pair_count - 1;
  s.q1 = value_at_rank(last / 4);
  s.median = value_at_rank(last / 2);
  s.q3 = value_at_rank(last * 3 / 4);
  s.count_at_1 = histogram.size() > 1 ? histogram[1] : 0;
  s.count_at_2 = histogram.size() > 2 ? histogram[2] : 0;
  s.histogram = std::move(histogram);
  return s;
}

struct LevenshteinOptions {
  bool case_fold = false;
  std::size_t threads = 1;
};

/// All pairwise distances among `names` (distinct strings, deduplicated by the
/// caller). Rows of the pair triangle are spread over workers, each keeping
/// its own histogram.
inline LevenshteinSummary pairwise_levenshtein_summary(std::span<const std::string> names,
                                                       const LevenshteinOptions& options = {}) {
  if (names.size() < 2) throw DataError("pairwise Levenshtein summary needs at least 2 strings");
  std::vector<std::u32string> decoded;
  decoded.reserve(names.size());
  std::size_t max_len = 0;
  for (const auto& name : names) {
    decoded.push_back(options.case_fold ? utf8::to_lower(utf8::decode(name)) : utf8::decode(name));
    max_len = std::max(max_len, decoded.back().size());
  }
  const std::size_t threads = std::max<std::size_t>(options.threads, 1);
  std::vector<std::vector<std::uint64_t>> partial(threads, std::vector<std::uint64_t>(max_len + 1, 0));
  parallel_for(decoded.size() - 1, threads, [&](std::size_t worker, std::size_t i) {
    auto& hist = partial[worker];
    for (std::size_t j = i + 1; j < decoded.size(); ++j) ++hist[levenshtein(decoded[i], decoded[j])];
  });
  std::vector<std::uint64_t> histogram(max_len + 1, 0);
  for (const auto& hist : partial) {
    for (std::size_t k = 0; k < hist.size(); ++k) histogram[k] += hist[k];
  }
  return summarize_distance_histogram(std::move(histogram));
}

/// Distinct strings in first-occurrence order (optionally compared case-insensitively).
inline std::vector<std::string> unique_strings(std::span<const std::string> values, bool case_fold = false) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& v : values) {
    if (seen.insert(case_fold ? utf8::to_lower(v) : v).second) out.push_back(v);
  }
  return out;
}

}  // namespace kmmd
