#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmmd/csv.hpp"
#include "kmmd/error.hpp"
#include "kmmd/stopwords.hpp"
#include "kmmd/utf8.hpp"

namespace kmmd {

struct Document {
  std::string id;
  std::string text;
  std::optional<std::string> category;
  std::optional<std::uint64_t> seq;  // generation order

  bool operator==(const Document&) const = default;
};

/// Ordered, validated collection of documents. Immutable once built.
class Corpus {
 public:
  Corpus() = default;

  Corpus(std::string name, std::vector<Document> documents)
      : name_(std::move(name)), documents_(std::move(documents)) {
    std::unordered_set<std::string_view> ids;
    std::unordered_set<std::uint64_t> seqs;
    for (const auto& doc : documents_) {
      if (doc.id.empty()) throw DataError("document with empty id");
      if (!ids.insert(doc.id).second) throw DataError("duplicate id \"" + doc.id + "\"");
      if (utf8::trim(doc.text).empty()) throw DataError("empty text for id \"" + doc.id + "\"");
      if (doc.seq && !seqs.insert(*doc.seq).second) {
        throw DataError("duplicate seq " + std::to_string(*doc.seq) + " at id \"" + doc.id + "\"");
      }
    }
  }

  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] std::span<const Document> documents() const noexcept { return documents_; }
  [[nodiscard]] std::size_t size() const noexcept { return documents_.size(); }
  [[nodiscard]] bool empty() const noexcept { return documents_.empty(); }
  [[nodiscard]] const Document& operator[](std::size_t i) const { return documents_[i]; }
  [[nodiscard]] auto begin() const noexcept { return documents_.begin(); }
  [[nodiscard]] auto end() const noexcept { return documents_.end(); }

  /// Document indices ordered by seq (documents without seq keep row order, after those with one).
  [[nodiscard]] std::vector<std::size_t> seq_order() const {
    std::vector<std::size_t> order(documents_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& sa = documents_[a].seq;
      const auto& sb = documents_[b].seq;
      if (sa && sb) return *sa < *sb;
      return sa.has_value() && !sb.has_value();
    });
    return order;
  }

  bool operator==(const Corpus&) const = default;

 private:
  std::string name_;
  std::vector<Document> documents_;
};

enum class CorpusFormat { csv, jsonl };

/// Source column/key names for each document field. Empty category/seq
/// names mean "not mapped".
struct FieldMapping {
  std::string id = "id";
  std::string text = "text";
  std::string category = "category";
  std::string seq = "seq";
};

inline CorpusFormat corpus_format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv" ? CorpusFormat::csv : CorpusFormat::jsonl;
}

namespace detail {

inline std::string row_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

inline std::uint64_t parse_seq(std::string_view raw, std::size_t line) {
  const std::string s = utf8::trim(raw);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw DataError(row_prefix(line) + "seq must be a nonnegative integer, got \"" + std::string(raw) + "\"");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw DataError(row_prefix(line) + "seq out of range: " + s);
  }
}

// Checks row-level invariants with line numbers before Corpus re-validates.
inline void check_rows(const std::vector<Document>& docs, const std::vector<std::size_t>& lines) {
  std::unordered_map<std::string_view, std::size_t> seen;
  std::unordered_map<std::uint64_t, std::size_t> seqs;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& doc = docs[i];
    if (doc.id.empty()) throw DataError(row_prefix(lines[i]) + "empty id");
    if (auto [it, fresh] = seen.emplace(doc.id, lines[i]); !fresh) {
      throw DataError(row_prefix(lines[i]) + "duplicate id \"" + doc.id + "\" (first seen on line " +
                      std::to_string(it->second) + ")");
    }
    if (utf8::trim(doc.text).empty()) throw DataError(row_prefix(lines[i]) + "empty text for id \"" + doc.id + "\"");
    if (doc.seq) {
      if (auto [it, fresh] = seqs.emplace(*doc.seq, lines[i]); !fresh) {
        throw DataError(row_prefix(lines[i]) + "duplicate seq " + std::to_string(*doc.seq));
      }
    }
  }
}

inline std::vector<Document> parse_jsonl_rows(std::string_view content, const FieldMapping& map,
                                              std::vector<std::size_t>& lines) {
  std::vector<Document> docs;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    std::string_view line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (utf8::trim(line).empty()) {
      if (nl == content.size()) break;
      continue;
    }
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(row_prefix(line_no) + "invalid JSON: " + e.what());
    }
    if (!obj.is_object()) throw DataError(row_prefix(line_no) + "expected a JSON object");
    auto string_field = [&](const std::string& key, bool required) -> std::optional<std::string> {
      auto it = obj.find(key);
      if (it == obj.end() || it->is_null()) {
        if (required) throw DataError(row_prefix(line_no) + "missing field \"" + key + "\"");
        return std::nullopt;
      }
      if (!it->is_string()) throw DataError(row_prefix(line_no) + "field \"" + key + "\" must be a string");
      return it->get<std::string>();
    };
    Document doc;
    doc.id = *string_field(map.id, true);
    doc.text = *string_field(map.text, true);
    if (!map.category.empty()) doc.category = string_field(map.category, false);
    if (!map.seq.empty()) {
      if (auto it = obj.find(map.seq); it != obj.end() && !it->is_null()) {
        if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
          throw DataError(row_prefix(line_no) + "field \"" + map.seq + "\" must be a nonnegative integer");
        }
        doc.seq = it->get<std::uint64_t>();
      }
    }
    if (!doc.seq) doc.seq = docs.size();
    docs.push_back(std::move(doc));
    lines.push_back(line_no);
    if (nl == content.size()) break;
  }
  return docs;
}

inline std::vector<Document> parse_csv_rows(std::string_view content, const FieldMapping& map,
                                            std::vector<std::size_t>& lines) {
  auto records = csv::parse(content);
  if (records.empty()) return {};
  const auto& header = records.front().fields;
  auto column = [&](const std::string& name, bool required) -> std::optional<std::size_t> {
    if (name.empty()) return std::nullopt;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (utf8::trim(header[c]) == name) return c;
    }
    if (required) throw DataError("csv header has no column \"" + name + "\"");
    return std::nullopt;
  };
  const auto id_col = *column(map.id, true);
  const auto text_col = *column(map.text, true);
  const auto cat_col = column(map.category, false);
  const auto seq_col = column(map.seq, false);

  std::vector<Document> docs;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    auto cell = [&](std::size_t c) -> const std::string& {
      if (c >= rec.fields.size()) {
        throw DataError(row_prefix(rec.line) + "expected " + std::to_string(header.size()) + " columns, got " +
                        std::to_string(rec.fields.size()));
      }
      return rec.fields[c];
    };
    Document doc;
    doc.id = cell(id_col);
    doc.text = cell(text_col);
    if (cat_col && !cell(*cat_col).empty()) doc.category = cell(*cat_col);
    if (seq_col && !utf8::trim(cell(*seq_col)).empty()) doc.seq = parse_seq(cell(*seq_col), rec.line);
    if (!doc.seq) doc.seq = docs.size();
    docs.push_back(std::move(doc));
    lines.push_back(rec.line);
  }
  return docs;
}

}  // namespace detail

/// Parses corpus text. Row order is preserved; seq defaults to the 0-based row index.
inline Corpus parse_corpus(std::string_view content, CorpusFormat format, const FieldMapping& mapping = {},
                           std::string name = {}) {
  std::vector<std::size_t> lines;
  auto docs = format == CorpusFormat::csv ? detail::parse_csv_rows(content, mapping, lines)
                                          : detail::parse_jsonl_rows(content, mapping, lines);
  if (docs.empty()) throw DataError("empty corpus");
  detail::check_rows(docs, lines);
  return Corpus(std::move(name), std::move(docs));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format, const FieldMapping& mapping = {}) {
  if (!std::filesystem::exists(path)) throw DataError("missing file " + path.string());
  try {
    return parse_corpus(read_file(path), format, mapping, path.stem().string());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline Corpus load_corpus(const std::filesystem::path& path) {
  return load_corpus(path, corpus_format_from_path(path));
}

/// Canonical JSONL (schema keys id/text/category/seq), one document per line.
inline std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& doc : corpus) {
    nlohmann::ordered_json obj;
    obj["id"] = doc.id;
    obj["text"] = doc.text;
    if (doc.category) obj["category"] = *doc.category;
    if (doc.seq) obj["seq"] = *doc.seq;
    out += obj.dump();
    out.push_back('\n');
  }
  return out;
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_jsonl(corpus);
}

// ---------------------------------------------------------------------------
// Tokenization

struct TokenizerConfig {
  bool lowercase = true;
  bool strip_punctuation = true;
  bool remove_stopwords = true;
  std::vector<std::string> extra_stopwords;  // matched case-insensitively

  bool operator==(const TokenizerConfig&) const = default;
};

namespace detail {

inline void trim_apostrophes(std::u32string& token) {
  std::size_t b = 0;
  std::size_t e = token.size();
  while (b < e && token[b] == U'\'') ++b;
  while (e > b && token[e - 1] == U'\'') --e;
  token = token.substr(b, e - b);
}

}  // namespace detail

/// Lowercases, deletes characters other than letters/digits/apostrophes,
/// splits on whitespace and drops stopwords.
inline std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config = {}) {
  std::vector<std::string> tokens;
  std::u32string current;
  std::unordered_set<std::string> extra;
  for (const auto& w : config.extra_stopwords) extra.insert(utf8::to_lower(utf8::trim(w)));

  auto flush = [&] {
    detail::trim_apostrophes(current);
    if (!current.empty()) {
      std::string token = utf8::encode(current);
      bool drop = false;
      if (config.remove_stopwords || !extra.empty()) {
        const std::string folded = config.lowercase ? token : utf8::to_lower(token);
        drop = (config.remove_stopwords && is_english_stopword(folded)) || extra.contains(folded);
      }
      if (!drop) tokens.push_back(std::move(token));
    }
    current.clear();
  };

  for (char32_t cp : utf8::decode(text)) {
    if (utf8::is_whitespace(cp)) {
      flush();
    } else if (utf8::is_apostrophe(cp)) {
      current.push_back(U'\'');
    } else if (utf8::is_word_char(cp)) {
      current.push_back(config.lowercase ? utf8::to_lower(cp) : cp);
    } else if (!config.strip_punctuation) {
      current.push_back(cp);
    }
  }
  flush();
  return tokens;
}

/// Word occurrence counts over a corpus.
struct TokenStats {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  TokenizerConfig config;

  [[nodiscard]] std::size_t count(const std::string& word) const {
    auto it = counts.find(word);
    return it == counts.end() ? 0 : it->second;
  }
};

inline TokenStats build_token_stats(const Corpus& corpus, const TokenizerConfig& config = {}) {
  if (corpus.empty()) throw DataError("empty corpus");
  TokenStats stats;
  stats.config = config;
  for (const auto& doc : corpus) {
    for (auto& token : tokenize(doc.text, config)) {
      ++stats.counts[std::move(token)];
      ++stats.total;
    }
  }
  if (stats.total == 0) throw DataError("no tokens");
  return stats;
}

// ---------------------------------------------------------------------------
// Brand names and duplication

/// Trimmed text before the first ':' when that prefix is nonempty.
inline std::optional<std::string> extract_brand_name(std::string_view title) {
  const auto colon = title.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  std::string prefix = utf8::trim(title.substr(0, colon));
  if (prefix.empty()) return std::nullopt;
  return prefix;
}

/// Brand names of every title that has one, in corpus order.
inline std::vector<std::string> extract_brand_names(const Corpus& corpus) {
  std::vector<std::string> names;
  for (const auto& doc : corpus) {
    if (auto name = extract_brand_name(doc.text)) names.push_back(std::move(*name));
  }
  return names;
}

struct DuplicationProfile {
  static constexpr std::size_t kTopBucket = 4;  // "4 or more"

  /// multiplicity k -> number of distinct names seen exactly k times (k = 4 means 4+); zero buckets omitted.
  std::map<std::size_t, std::size_t> buckets;
  /// (folded name, count), descending count then ascending name.
  std::vector<std::pair<std::string, std::size_t>> per_name;
  std::size_t total = 0;

  [[nodiscard]] std::size_t count_of(std::string_view name) const {
    const std::string folded = utf8::to_lower(utf8::trim(name));
    for (const auto& [n, c] : per_name) {
      if (n == folded) return c;
    }
    return 0;
  }
  [[nodiscard]] std::size_t unique_names() const noexcept { return per_name.size(); }
};

inline DuplicationProfile duplication_profile(std::span<const std::string> names) {
  if (names.empty()) throw DataError("duplication profile of an empty name list");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& name : names) ++counts[utf8::to_lower(utf8::trim(name))];

  DuplicationProfile profile;
  profile.total = names.size();
  profile.per_name.assign(counts.begin(), counts.end());
  std::sort(profile.per_name.begin(), profile.per_name.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  for (const auto& [name, count] : profile.per_name) {
    ++profile.buckets[std::min(count, DuplicationProfile::kTopBucket)];
  }
  return profile;
}

}  // namespace kmmd
