#pragma once

// End-to-end analyses: per-category and per-window MMD tables, sample-size
// sweeps and word-frequency tables, plus their CSV/JSON renderings.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmmd/corpus.hpp"
#include "kmmd/csv.hpp"
#include "kmmd/embeddings.hpp"
#include "kmmd/error.hpp"
#include "kmmd/format.hpp"
#include "kmmd/hash.hpp"
#include "kmmd/kernels.hpp"
#include "kmmd/mmd.hpp"
#include "kmmd/random.hpp"
#include "kmmd/textmetrics.hpp"

namespace kmmd {

inline constexpr std::uint64_t kDefaultSeed = 20240229;
inline constexpr std::size_t kDefaultMinGroup = 250;
inline constexpr std::size_t kDefaultWindowSize = 500;
inline constexpr std::string_view kOtherLabel = "Other";
inline constexpr std::string_view kOverallLabel = "Overall";

struct AnalysisSettings {
  KernelSpec spec = KernelSpec::poly2();
  std::size_t permutations = kDefaultPermutations;
  double alpha = kDefaultAlpha;
  std::uint64_t seed = kDefaultSeed;
  GramBlockPlan plan;
};

/// A corpus together with its embeddings, row i of the matrix belonging to document i.
struct EmbeddedCorpus {
  const Corpus& corpus;
  const EmbeddingMatrix& embeddings;

  void check_aligned() const {
    if (corpus.size() != embeddings.rows()) {
      throw DataError("corpus \"" + corpus.name() + "\" has " + std::to_string(corpus.size()) + " documents but " +
                      std::to_string(embeddings.rows()) + " embedding rows");
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (corpus[i].id != embeddings.ids()[i]) {
        throw DataError("embedding row " + std::to_string(i) + " is \"" + embeddings.ids()[i] +
                        "\" but the corpus has \"" + corpus[i].id + "\"");
      }
    }
  }
};

/// Stream seed for a report row; depends only on the master seed and the label.
inline std::uint64_t row_seed(std::uint64_t master, std::string_view label) {
  return derive_seed(master, fnv1a64(label));
}

/// Short SHA-256 digest of a canonical "key=value;" rendering of the settings.
inline std::string config_digest(std::string_view analysis, const AnalysisSettings& s,
                                 const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  std::string canon = "analysis=" + std::string(analysis) + ";kernel=" + s.spec.to_string() +
                      ";permutations=" + std::to_string(s.permutations) + ";alpha=" + format_double(s.alpha) +
                      ";seed=" + std::to_string(s.seed) + ";";
  for (const auto& [k, v] : extra) canon += k + "=" + v + ";";
  return sha256_hex(canon).substr(0, 16);
}

struct GroupRow {
  std::string label;
  MmdResult result;
};

struct GroupReport {
  std::vector<GroupRow> rows;
  std::optional<MmdResult> overall;
  std::string config_digest;
  std::size_t omitted_documents = 0;  // field documents in an "Other" group too small to test
};

namespace detail {

inline std::vector<std::pair<std::string, std::string>> sample_settings(const EmbeddingMatrix& a,
                                                                         const EmbeddingMatrix& b) {
  return {{"model_a", a.model()},
          {"model_b", b.model()},
          {"normalized_a", a.normalized() ? "true" : "false"},
          {"normalized_b", b.normalized() ? "true" : "false"},
          {"dim", std::to_string(a.dim())}};
}

}  // namespace detail

/// One row per field category with at least `min_group` documents, each tested
/// against all generated rows; smaller categories (and uncategorized
/// documents) are pooled into "Other". The overall row uses the whole field corpus.
inline GroupReport category_mmd(const EmbeddedCorpus& field, const EmbeddedCorpus& generated,
                                const AnalysisSettings& settings, std::size_t min_group = kDefaultMinGroup) {
  field.check_aligned();
  generated.check_aligned();
  if (field.corpus.size() < 2) throw DataError("field corpus needs at least 2 documents");

  std::map<std::string, std::vector<std::size_t>> by_category;
  std::vector<std::size_t> other;
  for (std::size_t i = 0; i < field.corpus.size(); ++i) {
    const auto& cat = field.corpus[i].category;
    if (cat && *cat != kOtherLabel) by_category[*cat].push_back(i);
    else other.push_back(i);
  }

  auto extra = detail::sample_settings(field.embeddings, generated.embeddings);
  extra.emplace_back("min_group", std::to_string(min_group));

  GroupReport report;
  report.config_digest = config_digest("categories", settings, extra);
  auto run = [&](std::string_view label, std::span<const std::size_t> idx) {
    return mmd_test(field.embeddings.select(idx), generated.embeddings, settings.spec, settings.permutations,
                    settings.alpha, row_seed(settings.seed, label), settings.plan);
  };
  // A row needs at least 2 documents for the unbiased estimator.
  const std::size_t threshold = std::max<std::size_t>(min_group, 2);
  for (const auto& [label, idx] : by_category) {
    if (idx.size() >= threshold) {
      report.rows.push_back({label, run(label, idx)});
    } else {
      other.insert(other.end(), idx.begin(), idx.end());
    }
  }
  std::sort(other.begin(), other.end());
  if (other.size() >= 2) {
    report.rows.push_back({std::string(kOtherLabel), run(kOtherLabel, other)});
  } else {
    report.omitted_documents = other.size();
  }
  std::vector<std::size_t> all(field.corpus.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  report.overall = run(kOverallLabel, all);
  return report;
}

/// Consecutive non-overlapping windows of `window_size` generated documents in
/// seq order, each tested against the full field sample. A trailing partial
/// window is dropped. Labels are 1-based positions, e.g. "1-500".
inline GroupReport window_mmd(const EmbeddedCorpus& generated, const EmbeddedCorpus& field,
                              const AnalysisSettings& settings, std::size_t window_size = kDefaultWindowSize) {
  generated.check_aligned();
  field.check_aligned();
  if (window_size < 2) throw DataError("window size must be at least 2");
  for (const auto& doc : generated.corpus) {
    if (!doc.seq) throw DataError("generated document \"" + doc.id + "\" has no seq");
  }
  const std::size_t windows = generated.corpus.size() / window_size;
  if (windows == 0) {
    throw DataError("generated corpus has " + std::to_string(generated.corpus.size()) +
                    " documents, fewer than one window of " + std::to_string(window_size));
  }
  auto extra = detail::sample_settings(generated.embeddings, field.embeddings);
  extra.emplace_back("window_size", std::to_string(window_size));

  GroupReport report;
  report.config_digest = config_digest("windows", settings, extra);
  const auto order = generated.corpus.seq_order();
  for (std::size_t w = 0; w < windows; ++w) {
    const std::span<const std::size_t> idx(order.data() + w * window_size, window_size);
    std::string label = std::to_string(w * window_size + 1) + "-" + std::to_string((w + 1) * window_size);
    auto result = mmd_test(generated.embeddings.select(idx), field.embeddings, settings.spec, settings.permutations,
                           settings.alpha, row_seed(settings.seed, label), settings.plan);
    report.rows.push_back({std::move(label), std::move(result)});
  }
  return report;
}

// ---------------------------------------------------------------------------
// Sample-size sweep

struct SweepRow {
  std::size_t sample_size = 0;
  std::size_t trials = 0;
  double mean_estimate = 0.0;
  double rejection_rate = 0.0;
  double mean_lower = 0.0;
  double mean_upper = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;  // strictly increasing sample_size
  std::string config_digest;
};

/// For each size s, `trials` experiments drawing s rows without replacement
/// from each matrix and running the permutation test.
inline SweepReport sample_size_sweep(const EmbeddingMatrix& x, const EmbeddingMatrix& y, std::vector<std::size_t> sizes,
                                     std::size_t trials, const AnalysisSettings& settings) {
  if (trials < 1) throw DataError("sweep needs at least 1 trial");
  if (sizes.empty()) throw DataError("sweep needs at least one sample size");
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  const std::size_t available = std::min(x.rows(), y.rows());
  for (std::size_t s : sizes) {
    if (s < 2) throw DataError("sample size " + std::to_string(s) + " is below 2");
    if (s > available) {
      throw DataError("sample size " + std::to_string(s) + " exceeds the available rows (" + std::to_string(available) +
                      ")");
    }
  }
  auto extra = detail::sample_settings(x, y);
  std::string size_list;
  for (std::size_t s : sizes) size_list += std::to_string(s) + ",";
  extra.emplace_back("sizes", size_list);
  extra.emplace_back("trials", std::to_string(trials));

  SweepReport report;
  report.config_digest = config_digest("sweep", settings, extra);
  for (std::size_t s : sizes) {
    SweepRow row;
    row.sample_size = s;
    row.trials = trials;
    std::size_t rejections = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::uint64_t trial_seed = derive_seed(settings.seed, s, t);
      Rng rng(trial_seed);
      const auto xi = sample_without_replacement(x.rows(), s, rng);
      const auto yi = sample_without_replacement(y.rows(), s, rng);
      const auto r = mmd_test(x.select(xi), y.select(yi), settings.spec, settings.permutations, settings.alpha,
                              derive_seed(trial_seed, 1), settings.plan);
      row.mean_estimate += r.estimate;
      row.mean_lower += r.null_lower;
      row.mean_upper += r.null_upper;
      if (r.significant()) ++rejections;
    }
    const auto n = static_cast<double>(trials);
    row.mean_estimate /= n;
    row.mean_lower /= n;
    row.mean_upper /= n;
    row.rejection_rate = static_cast<double>(rejections) / n;
    report.rows.push_back(row);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Word frequencies

/// Top `top_k` words by descending count, ties broken lexicographically.
inline std::vector<std::pair<std::string, std::size_t>> word_frequency_report(const Corpus& corpus,
                                                                               const TokenizerConfig& config,
                                                                               std::size_t top_k) {
  const TokenStats stats = build_token_stats(corpus, config);
  std::vector<std::pair<std::string, std::size_t>> ranked(stats.counts.begin(), stats.counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > top_k) ranked.resize(top_k);
  return ranked;
}

// ---------------------------------------------------------------------------
// Renderings. All numbers use shortest round-trip formatting so identical
// inputs give byte-identical files.

inline void write_csv(std::ostream& os, const GroupReport& report) {
  os << csv::join_row({"label", "estimate", "lower", "upper", "p_value", "significant", "m", "n", "kernel",
                       "permutations", "alpha", "seed", "config_digest"});
  auto emit = [&](std::string_view label, const MmdResult& r) {
    os << csv::join_row({std::string(label), format_double(r.estimate), format_double(r.null_lower),
                         format_double(r.null_upper), format_double(r.p_value), r.significant() ? "true" : "false",
                         std::to_string(r.m), std::to_string(r.n), r.spec.to_string(), std::to_string(r.permutations),
                         format_double(r.alpha), std::to_string(r.seed), report.config_digest});
  };
  for (const auto& row : report.rows) emit(row.label, row.result);
  if (report.overall) emit(kOverallLabel, *report.overall);
}

inline nlohmann::ordered_json to_json(const GroupReport& report) {
  nlohmann::ordered_json j;
  j["config_digest"] = report.config_digest;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json r;
    r["label"] = row.label;
    r.update(to_json(row.result));
    r["significant"] = row.result.significant();
    r["config_digest"] = report.config_digest;
    j["rows"].push_back(std::move(r));
  }
  if (report.overall) {
    auto o = to_json(*report.overall);
    o["significant"] = report.overall->significant();
    o["config_digest"] = report.config_digest;
    j["overall"] = std::move(o);
  }
  j["omitted_documents"] = report.omitted_documents;
  return j;
}

inline void write_csv(std::ostream& os, const SweepReport& report) {
  os << csv::join_row({"sample_size", "trials", "mean_estimate", "rejection_rate", "mean_lower", "mean_upper",
                       "config_digest"});
  for (const auto& r : report.rows) {
    os << csv::join_row({std::to_string(r.sample_size), std::to_string(r.trials), format_double(r.mean_estimate),
                         format_double(r.rejection_rate), format_double(r.mean_lower), format_double(r.mean_upper),
                         report.config_digest});
  }
}

inline nlohmann::ordered_json to_json(const SweepReport& report) {
  nlohmann::ordered_json j;
  j["config_digest"] = report.config_digest;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    j["rows"].push_back({{"sample_size", r.sample_size},
                         {"trials", r.trials},
                         {"mean_estimate", r.mean_estimate},
                         {"rejection_rate", r.rejection_rate},
                         {"mean_lower", r.mean_lower},
                         {"mean_upper", r.mean_upper}});
  }
  return j;
}

inline void write_csv(std::ostream& os, const EntropySeries& series) {
  std::vector<std::string> header{"seq", "surprisal"};
  if (series.window) header.push_back("moving_average");
  os << csv::join_row(header);
  for (std::size_t i = 0; i < series.points.size(); ++i) {
    std::vector<std::string> row{std::to_string(series.points[i].seq), format_double(series.points[i].surprisal)};
    if (series.window) row.push_back(format_double(series.smoothed[i]));
    os << csv::join_row(row);
  }
}

inline nlohmann::ordered_json to_json(const EntropySeries& series) {
  nlohmann::ordered_json j;
  j["window"] = series.window ? nlohmann::ordered_json(*series.window) : nlohmann::ordered_json(nullptr);
  j["skipped"] = series.skipped;
  j["points"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < series.points.size(); ++i) {
    nlohmann::ordered_json p{{"seq", series.points[i].seq}, {"surprisal", series.points[i].surprisal}};
    if (series.window) p["moving_average"] = series.smoothed[i];
    j["points"].push_back(std::move(p));
  }
  return j;
}

inline void write_csv(std::ostream& os, const LevenshteinSummary& s) {
  os << csv::join_row({"statistic", "value"});
  const std::vector<std::pair<std::string, std::string>> rows = {
      {"pair_count", std::to_string(s.pair_count)}, {"mean", format_double(s.mean)},
      {"median", format_double(s.median)},          {"std_dev", format_double(s.std_dev)},
      {"q1", format_double(s.q1)},                  {"q3", format_double(s.q3)},
      {"count_at_1", std::to_string(s.count_at_1)}, {"percent_at_1", format_double(s.percent_at_1())},
      {"count_at_2", std::to_string(s.count_at_2)}, {"percent_at_2", format_double(s.percent_at_2())}};
  for (const auto& [k, v] : rows) os << csv::join_row({k, v});
}

/// Plot-ready (distance, pairs) columns.
inline void write_histogram_csv(std::ostream& os, const LevenshteinSummary& s) {
  os << csv::join_row({"distance", "pairs"});
  for (std::size_t k = 0; k < s.histogram.size(); ++k) {
    os << csv::join_row({std::to_string(k), std::to_string(s.histogram[k])});
  }
}

inline nlohmann::ordered_json to_json(const LevenshteinSummary& s) {
  return {{"pair_count", s.pair_count}, {"mean", s.mean},           {"median", s.median},
          {"std_dev", s.std_dev},       {"q1", s.q1},               {"q3", s.q3},
          {"count_at_1", s.count_at_1}, {"percent_at_1", s.percent_at_1()},
          {"count_at_2", s.count_at_2}, {"percent_at_2", s.percent_at_2()},
          {"histogram", s.histogram}};
}

inline void write_csv(std::ostream& os, const DuplicationProfile& p) {
  os << csv::join_row({"name", "count"});
  for (const auto& [name, count] : p.per_name) os << csv::join_row({name, std::to_string(count)});
}

inline nlohmann::ordered_json to_json(const DuplicationProfile& p) {
  nlohmann::ordered_json buckets;
  for (const auto& [k, v] : p.buckets) {
    buckets[k == DuplicationProfile::kTopBucket ? std::to_string(k) + "+" : std::to_string(k)] = v;
  }
  nlohmann::ordered_json names = nlohmann::ordered_json::array();
  for (const auto& [name, count] : p.per_name) names.push_back({{"name", name}, {"count", count}});
  return {{"total", p.total}, {"unique", p.unique_names()}, {"buckets", buckets}, {"names", names}};
}

inline void write_frequency_csv(std::ostream& os, std::span<const std::pair<std::string, std::size_t>> ranked) {
  os << csv::join_row({"word", "count"});
  for (const auto& [word, count] : ranked) os << csv::join_row({word, std::to_string(count)});
}

inline nlohmann::ordered_json frequency_json(std::span<const std::pair<std::string, std::size_t>> ranked) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& [word, count] : ranked) j.push_back({{"word", word}, {"count", count}});
  return j;
}

}  // namespace kmmd
