#pragma once

// Text -> vector embedding through an OpenAI-compatible HTTP endpoint, with a
// content-addressed on-disk cache so repeated runs are offline and bit-stable.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "kmmd/corpus.hpp"
#include "kmmd/embeddings.hpp"
#include "kmmd/error.hpp"
#include "kmmd/hash.hpp"
#include "kmmd/parallel.hpp"
#include "kmmd/random.hpp"

namespace kmmd {

struct ProviderConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "text-embedding-3-large";
  std::size_t batch_size = 100;
  std::size_t max_retries = 3;
  std::chrono::milliseconds timeout{60'000};
  std::string api_key_env = "OPENAI_API_KEY";
  std::size_t max_in_flight = 4;
  std::chrono::milliseconds backoff_initial{500};
};

/// Maps a batch of texts to one vector each, in input order. Implementations
/// must be safe to call from several threads at once.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<std::vector<float>> embed(std::span<const std::string> texts) const = 0;
};

/// Deterministic offline provider: each vector is seeded from SHA-256 of
/// (model, text), entries uniform in [-1, 1).
class MockProvider final : public EmbeddingProvider {
 public:
  explicit MockProvider(std::size_t dim, std::string model = "mock", std::uint64_t seed = 0)
      : dim_(dim), model_(std::move(model)), seed_(seed) {}

  std::vector<std::vector<float>> embed(std::span<const std::string> texts) const override {
    requests_.fetch_add(1);
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) out.push_back(vector_for(text));
    return out;
  }

  [[nodiscard]] std::vector<float> vector_for(const std::string& text) const {
    std::string key = model_;
    key.push_back('\0');
    key += text;
    Rng rng(sha256_u64(key) ^ seed_);
    std::vector<float> v(dim_);
    for (auto& x : v) x = static_cast<float>(2.0 * uniform_unit(rng) - 1.0);
    return v;
  }

  [[nodiscard]] std::size_t requests() const noexcept { return requests_.load(); }

 private:
  std::size_t dim_;
  std::string model_;
  std::uint64_t seed_;
  mutable std::atomic<std::size_t> requests_{0};
};

namespace detail {

struct SplitUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw DataError("base URL must include a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  out.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

}  // namespace detail

/// POST {base_url}/embeddings {"model", "input"} with bearer auth. Retries
/// transport errors, 429 and 5xx with exponential backoff.
class HttpProvider final : public EmbeddingProvider {
 public:
  explicit HttpProvider(ProviderConfig config) : config_(std::move(config)), url_(detail::split_url(config_.base_url)) {}

  std::vector<std::vector<float>> embed(std::span<const std::string> texts) const override {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw ProviderError("API key environment variable " + config_.api_key_env + " is not set");
    }
    nlohmann::json body;
    body["model"] = config_.model;
    body["input"] = std::vector<std::string>(texts.begin(), texts.end());
    const std::string payload = body.dump();
    const httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};

    std::string last_error;
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        const auto shift = std::min<std::size_t>(attempt - 1, 16);
        std::this_thread::sleep_for(config_.backoff_initial * (std::int64_t{1} << shift));
      }
      httplib::Client client(url_.scheme_host_port);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());

      auto res = client.Post(url_.path_prefix + "/embeddings", headers, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw ProviderError("embeddings endpoint returned HTTP " + std::to_string(res->status) + ": " +
                            res->body.substr(0, 300));
      }
      return parse_response(res->body, texts.size());
    }
    throw ProviderError("embeddings request failed after " + std::to_string(config_.max_retries + 1) +
                        " attempts: " + last_error);
  }

  /// Reads "data"[i]["embedding"]; orders by "index" when present. Entries
  /// that are not numbers become NaN so the caller can name the document.
  static std::vector<std::vector<float>> parse_response(const std::string& body, std::size_t expected) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProviderError(std::string("embeddings response is not JSON: ") + e.what());
    }
    if (!doc.contains("data") || !doc["data"].is_array()) throw ProviderError("embeddings response lacks a data array");
    const auto& data = doc["data"];
    if (data.size() != expected) {
      throw ProviderError("embeddings response has " + std::to_string(data.size()) + " rows for " +
                          std::to_string(expected) + " inputs");
    }
    std::vector<std::vector<float>> out(expected);
    std::vector<bool> filled(expected, false);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& item = data[i];
      std::size_t slot = i;
      if (item.contains("index") && item["index"].is_number_unsigned()) slot = item["index"].get<std::size_t>();
      if (slot >= expected || filled[slot]) throw ProviderError("embeddings response has a bad or repeated index");
      filled[slot] = true;
      if (!item.contains("embedding") || !item["embedding"].is_array()) {
        throw ProviderError("embeddings response row " + std::to_string(i) + " lacks an embedding array");
      }
      auto& row = out[slot];
      row.reserve(item["embedding"].size());
      for (const auto& v : item["embedding"]) {
        row.push_back(v.is_number() ? static_cast<float>(v.get<double>()) : std::numeric_limits<float>::quiet_NaN());
      }
    }
    return out;
  }

 private:
  ProviderConfig config_;
  detail::SplitUrl url_;
};

inline std::string cache_key(std::string_view text) { return sha256_hex(text); }

/// One row per document in corpus order. Cached rows (keyed by SHA-256 of the
/// text, one cache file per model) are reused; missing unique texts are
/// fetched in batches of config.batch_size with up to config.max_in_flight
/// requests in flight, then appended to the cache.
inline EmbeddingMatrix embed_corpus(const Corpus& corpus, const ProviderConfig& config,
                                    const EmbeddingProvider& provider,
                                    const std::optional<std::filesystem::path>& cache_path = std::nullopt) {
  if (config.batch_size == 0) throw DataError("batch_size must be at least 1");
  if (corpus.empty()) throw DataError("empty corpus");

  std::optional<EmbeddingMatrix> cache;
  if (cache_path && std::filesystem::exists(*cache_path)) {
    cache = load_embeddings(*cache_path);
    if (cache->model() != config.model) {
      throw DataError("cache " + cache_path->string() + " holds model \"" + cache->model() + "\", configured \"" +
                      config.model + "\"");
    }
  }
  std::unordered_map<std::string, std::size_t> cached_rows;
  if (cache) {
    for (std::size_t i = 0; i < cache->rows(); ++i) cached_rows.emplace(cache->ids()[i], i);
  }

  // Unique texts that still need fetching, in first-occurrence order.
  std::vector<std::string> doc_keys(corpus.size());
  std::vector<std::string> missing_texts;
  std::vector<std::string> missing_keys;
  std::vector<std::string> missing_first_id;
  std::unordered_map<std::string, std::size_t> missing_index;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    doc_keys[i] = cache_key(corpus[i].text);
    if (cached_rows.contains(doc_keys[i]) || missing_index.contains(doc_keys[i])) continue;
    missing_index.emplace(doc_keys[i], missing_texts.size());
    missing_texts.push_back(corpus[i].text);
    missing_keys.push_back(doc_keys[i]);
    missing_first_id.push_back(corpus[i].id);
  }

  const std::size_t batches = (missing_texts.size() + config.batch_size - 1) / config.batch_size;
  std::vector<std::optional<std::vector<std::vector<float>>>> results(batches);
  std::exception_ptr failure;
  try {
    parallel_for(batches, std::max<std::size_t>(config.max_in_flight, 1), [&](std::size_t, std::size_t b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(begin + config.batch_size, missing_texts.size());
      auto rows = provider.embed(std::span<const std::string>(missing_texts).subspan(begin, end - begin));
      if (rows.size() != end - begin) {
        throw ProviderError("provider returned " + std::to_string(rows.size()) + " rows for " +
                            std::to_string(end - begin) + " inputs");
      }
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (float v : rows[r]) {
          if (!std::isfinite(v)) {
            throw DataError("non-finite value in embedding response for document \"" + missing_first_id[begin + r] +
                            "\"");
          }
        }
      }
      results[b] = std::move(rows);
    });
  } catch (...) {
    failure = std::current_exception();
  }

  // Establish a single dimension across cache and every completed batch.
  std::size_t dim = cache ? cache->dim() : 0;
  for (std::size_t b = 0; b < batches; ++b) {
    if (!results[b]) continue;
    for (std::size_t r = 0; r < results[b]->size(); ++r) {
      const auto& row = (*results[b])[r];
      if (row.empty()) throw DataError("empty embedding for document \"" + missing_first_id[b * config.batch_size + r] + "\"");
      if (dim == 0) dim = row.size();
      if (row.size() != dim) {
        throw DataError("embedding dimension mismatch for document \"" +
                        missing_first_id[b * config.batch_size + r] + "\": got " + std::to_string(row.size()) +
                        ", expected " + std::to_string(dim) + (cache ? " (from cache)" : ""));
      }
    }
  }

  // Append fetched rows to the cache; also done on failure so paid rows survive.
  std::vector<std::string> new_keys;
  std::vector<float> new_data;
  std::vector<std::size_t> fetched_slot(missing_texts.size(), SIZE_MAX);
  for (std::size_t b = 0; b < batches; ++b) {
    if (!results[b]) continue;
    for (std::size_t r = 0; r < results[b]->size(); ++r) {
      const std::size_t m = b * config.batch_size + r;
      fetched_slot[m] = new_keys.size();
      new_keys.push_back(missing_keys[m]);
      new_data.insert(new_data.end(), (*results[b])[r].begin(), (*results[b])[r].end());
    }
  }
  if (cache_path && !new_keys.empty()) {
    std::vector<std::string> ids = cache ? cache->ids() : std::vector<std::string>{};
    std::vector<float> data = cache ? std::vector<float>(cache->data().begin(), cache->data().end()) : std::vector<float>{};
    ids.insert(ids.end(), new_keys.begin(), new_keys.end());
    data.insert(data.end(), new_data.begin(), new_data.end());
    save_embeddings(EmbeddingMatrix(std::move(ids), std::move(data), dim, config.model, false), *cache_path);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<std::string> ids;
  std::vector<float> data;
  ids.reserve(corpus.size());
  data.reserve(corpus.size() * dim);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    ids.push_back(corpus[i].id);
    std::span<const float> row;
    if (auto it = cached_rows.find(doc_keys[i]); it != cached_rows.end()) {
      row = cache->row(it->second);
    } else {
      const std::size_t slot = fetched_slot[missing_index.at(doc_keys[i])];
      row = std::span<const float>(new_data).subspan(slot * dim, dim);
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return EmbeddingMatrix(std::move(ids), std::move(data), dim, config.model, false);
}

}  // namespace kmmd
