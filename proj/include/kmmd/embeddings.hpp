#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmmd/error.hpp"

namespace kmmd {

static_assert(std::endian::native == std::endian::little, "EMB1 I/O assumes a little-endian host");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

/// n x d row-major float32 matrix with one row per document id.
class EmbeddingMatrix {
 public:
  static constexpr double kUnitNormTolerance = 1e-6;

  EmbeddingMatrix() = default;

  EmbeddingMatrix(std::vector<std::string> ids, std::vector<float> data, std::size_t dim, std::string model,
                  bool normalized = false)
      : ids_(std::move(ids)), data_(std::move(data)), dim_(dim), model_(std::move(model)), normalized_(normalized) {
    if (dim_ == 0) throw DataError("embedding dimension must be at least 1");
    if (data_.size() != ids_.size() * dim_) {
      throw DataError("embedding payload has " + std::to_string(data_.size()) + " values, expected " +
                      std::to_string(ids_.size()) + " x " + std::to_string(dim_));
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      for (float v : row(i)) {
        if (!std::isfinite(v)) throw DataError("non-finite embedding value for id \"" + ids_[i] + "\"");
      }
      if (normalized_) {
        const double norm = row_norm(i);
        if (std::abs(norm - 1.0) > kUnitNormTolerance) {
          throw DataError("row \"" + ids_[i] + "\" flagged normalized but has norm " + std::to_string(norm));
        }
      }
    }
  }

  [[nodiscard]] std::size_t rows() const noexcept { return ids_.size(); }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] const std::vector<std::string>& ids() const noexcept { return ids_; }
  [[nodiscard]] const std::string& model() const noexcept { return model_; }
  [[nodiscard]] bool normalized() const noexcept { return normalized_; }
  [[nodiscard]] std::span<const float> data() const noexcept { return data_; }

  [[nodiscard]] std::span<const float> row(std::size_t i) const noexcept {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
  }

  [[nodiscard]] double row_norm(std::size_t i) const noexcept {
    double sq = 0.0;
    for (float v : row(i)) sq += static_cast<double>(v) * v;
    return std::sqrt(sq);
  }

  /// Rows at the given indices, in the given order.
  [[nodiscard]] EmbeddingMatrix select(std::span<const std::size_t> indices) const {
    std::vector<std::string> ids;
    std::vector<float> data;
    ids.reserve(indices.size());
    data.reserve(indices.size() * dim_);
    for (std::size_t i : indices) {
      if (i >= rows()) throw DataError("row index " + std::to_string(i) + " out of range");
      ids.push_back(ids_[i]);
      const auto r = row(i);
      data.insert(data.end(), r.begin(), r.end());
    }
    EmbeddingMatrix out;
    out.ids_ = std::move(ids);
    out.data_ = std::move(data);
    out.dim_ = dim_;
    out.model_ = model_;
    out.normalized_ = normalized_;
    return out;
  }

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::size_t dim_ = 0;
  std::string model_;
  bool normalized_ = false;
};

/// Scales every row to unit Euclidean norm. Rows already within 2^-22 of unit
/// norm are kept bit-for-bit, which makes the operation idempotent.
inline EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
  constexpr double kKeepTolerance = 0x1.0p-22;
  std::vector<float> data(m.data().begin(), m.data().end());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double norm = m.row_norm(i);
    if (norm == 0.0) throw DataError("cannot normalize zero-norm row \"" + m.ids()[i] + "\"");
    if (std::abs(norm - 1.0) <= kKeepTolerance) continue;
    float* r = data.data() + i * m.dim();
    for (std::size_t k = 0; k < m.dim(); ++k) r[k] = static_cast<float>(static_cast<double>(r[k]) / norm);
  }
  return EmbeddingMatrix(m.ids(), std::move(data), m.dim(), m.model(), true);
}

// ---------------------------------------------------------------------------
// EMB1 file format:
//   "EMB1" | u32 LE header length | UTF-8 JSON header | n*d float32 LE, row-major
// header = {"model": str, "dim": int, "normalized": bool, "ids": [str]}

inline constexpr char kEmbMagic[4] = {'E', 'M', 'B', '1'};

inline std::string serialize_embeddings(const EmbeddingMatrix& m) {
  nlohmann::ordered_json header;
  header["model"] = m.model();
  header["dim"] = m.dim();
  header["normalized"] = m.normalized();
  header["ids"] = m.ids();
  const std::string json = header.dump();
  const auto header_len = static_cast<std::uint32_t>(json.size());

  std::string out;
  out.reserve(8 + json.size() + m.data().size() * 4);
  out.append(kEmbMagic, 4);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((header_len >> (8 * b)) & 0xFF));
  out += json;
  const auto payload = std::as_bytes(m.data());
  out.append(reinterpret_cast<const char*>(payload.data()), payload.size());
  return out;
}

inline EmbeddingMatrix deserialize_embeddings(std::string_view bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kEmbMagic, 4) != 0) {
    throw DataError("embedding file: bad magic (expected EMB1)");
  }
  std::uint32_t header_len = 0;
  for (int b = 3; b >= 0; --b) header_len = (header_len << 8) | static_cast<unsigned char>(bytes[4 + b]);
  if (bytes.size() - 8 < header_len) throw DataError("embedding file: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(8, header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("embedding file: invalid header JSON: ") + e.what());
  }
  std::string model;
  std::size_t dim = 0;
  bool normalized = false;
  std::vector<std::string> ids;
  try {
    model = header.at("model").get<std::string>();
    dim = header.at("dim").get<std::size_t>();
    normalized = header.at("normalized").get<bool>();
    ids = header.at("ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("embedding file: malformed header: ") + e.what());
  }
  if (dim == 0) throw DataError("embedding file: dim must be at least 1");

  const std::string_view payload = bytes.substr(8 + header_len);
  const std::size_t expected = ids.size() * dim * sizeof(float);
  if (payload.size() < expected) {
    throw DataError("embedding file: truncated payload (" + std::to_string(payload.size()) + " bytes, header declares " +
                    std::to_string(ids.size()) + " x " + std::to_string(dim) + " floats = " +
                    std::to_string(expected) + " bytes)");
  }
  if (payload.size() > expected) {
    throw DataError("embedding file: payload size " + std::to_string(payload.size()) +
                    " bytes disagrees with header (" + std::to_string(ids.size()) + " ids x dim " +
                    std::to_string(dim) + ")");
  }
  std::vector<float> data(ids.size() * dim);
  std::memcpy(data.data(), payload.data(), expected);
  return EmbeddingMatrix(std::move(ids), std::move(data), dim, std::move(model), normalized);
}

/// Writes via a temporary sibling and rename, so readers never see a partial file.
inline void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  const std::string bytes = serialize_embeddings(m);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline bool is_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  return in.read(magic, 4) && std::memcmp(magic, kEmbMagic, 4) == 0;
}

inline EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_embeddings(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace kmmd
