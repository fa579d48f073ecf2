#pragma once

// Base text vectors: a signed feature-hashing n-gram encoder, the CVEC
// embedding file format, and a provider that serves either.

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "citerec/errors.hpp"
#include "citerec/util.hpp"

namespace citerec {

// Separator between query and candidate text in pair encodings.
inline constexpr std::string_view kSepToken = "[SEP]";

struct EncoderConfig {
  std::size_t dim = 256;
  std::size_t ngram_min = 1;
  std::size_t ngram_max = 3;
  bool casefold = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 8) throw ValidationError("encoder dim must be >= 8");
    if (ngram_min < 1 || ngram_min > ngram_max) throw ValidationError("invalid n-gram range");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Whitespace tokenisation with surrounding punctuation stripped. "[SEP]" is kept verbatim.
inline std::vector<std::string> tokenize(std::string_view text, bool casefold) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto is_punct = [](unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; };
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view raw = text.substr(i, j - i);
    i = j;
    if (raw.empty()) continue;
    if (raw == kSepToken) {
      tokens.emplace_back(kSepToken);
      continue;
    }
    while (!raw.empty() && is_punct(static_cast<unsigned char>(raw.front()))) raw.remove_prefix(1);
    while (!raw.empty() && is_punct(static_cast<unsigned char>(raw.back()))) raw.remove_suffix(1);
    if (raw.empty()) continue;
    std::string tok(raw);
    if (casefold) {
      for (auto& c : tok) {
        if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(c));
      }
    }
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

// Hashes word n-grams into `dim` buckets with hash-derived signs and returns the
// L2-normalised result. Text with no hashable n-grams maps to the zero vector.
// The separator token never forms a unigram on its own, only n-grams spanning it.
inline std::vector<float> encode_text(const EncoderConfig& config, std::string_view text) {
  const auto tokens = tokenize(text, config.casefold);
  std::vector<double> acc(config.dim, 0.0);
  std::array<char, 8> salt{};
  for (int b = 0; b < 8; ++b) salt[static_cast<std::size_t>(b)] = static_cast<char>(config.seed >> (8 * b));
  const std::uint64_t base = fnv1a(std::string_view(salt.data(), salt.size()));
  bool any = false;
  for (std::size_t n = config.ngram_min; n <= config.ngram_max; ++n) {
    if (tokens.size() < n) break;
    for (std::size_t start = 0; start + n <= tokens.size(); ++start) {
      if (n == 1 && tokens[start] == kSepToken) continue;
      const char order = static_cast<char>(n);
      std::uint64_t h = fnv1a(std::string_view(&order, 1), base);
      for (std::size_t t = start; t < start + n; ++t) {
        h = fnv1a(tokens[t], h);
        h = fnv1a(std::string_view("\x1f", 1), h);
      }
      // Final avalanche so low bits depend on the whole n-gram.
      h ^= h >> 33;
      h *= 0xff51afd7ed558ccdull;
      h ^= h >> 33;
      const double sign = (h >> 63) ? -1.0 : 1.0;
      acc[h % config.dim] += sign;
      any = true;
    }
  }
  std::vector<float> out(config.dim, 0.0f);
  if (!any) return out;
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) return out;
  for (std::size_t i = 0; i < config.dim; ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

inline std::string pair_text(std::string_view query_text, std::string_view candidate_text) {
  std::string s;
  s.reserve(query_text.size() + candidate_text.size() + kSepToken.size() + 2);
  s.append(query_text).append(" ").append(kSepToken).append(" ").append(candidate_text);
  return s;
}

inline std::vector<float> encode_pair(const EncoderConfig& config, std::string_view query_text,
                                      std::string_view candidate_text) {
  return encode_text(config, pair_text(query_text, candidate_text));
}

// Key-addressed rows of f32 vectors with a shared dimension.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw ValidationError("embedding dim must be positive");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  std::span<const std::string> keys() const { return keys_; }
  std::span<const float> data() const { return data_; }

  void add(std::string key, std::span<const float> row) {
    if (row.size() != dim_) {
      throw ValidationError("row for '" + key + "' has " + std::to_string(row.size()) +
                            " entries, expected " + std::to_string(dim_));
    }
    for (float v : row) {
      if (!std::isfinite(v)) throw ValidationError("non-finite entry in row '" + key + "'");
    }
    if (!index_.emplace(key, keys_.size()).second) {
      throw ValidationError("duplicate embedding key '" + key + "'");
    }
    keys_.push_back(std::move(key));
    data_.insert(data_.end(), row.begin(), row.end());
  }

  // Adds the row unless the key is already present.
  void add_if_absent(const std::string& key, std::span<const float> row) {
    if (!contains(key)) add(key, row);
  }

  bool contains(const std::string& key) const { return index_.count(key) != 0; }

  std::optional<std::size_t> find(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
  }

  std::span<const float> row(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw NotFoundError("no embedding for key '" + key + "'");
    return row(it->second);
  }

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    if (a.dim_ != b.dim_ || a.keys_ != b.keys_ || a.data_.size() != b.data_.size()) return false;
    return std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> keys_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::string_view kCvecMagic = "CVEC1\n";

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline void put_u16(std::ostream& out, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

inline bool get_bytes(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

}  // namespace detail

inline void write_embeddings(std::ostream& out, const EmbeddingMatrix& m) {
  out.write(kCvecMagic.data(), static_cast<std::streamsize>(kCvecMagic.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.dim()));
  std::vector<char> buf(m.dim() * 4);
  for (std::size_t r = 0; r < m.size(); ++r) {
    const auto& key = m.keys()[r];
    if (key.size() > 0xffff) throw ValidationError("embedding key longer than 65535 bytes");
    detail::put_u16(out, static_cast<std::uint16_t>(key.size()));
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    auto row = m.row(r);
    for (std::size_t i = 0; i < row.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(row[i]);
      for (int b = 0; b < 4; ++b) buf[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw IoError("write failure while emitting CVEC payload");
}

inline EmbeddingMatrix read_embeddings(std::istream& in) {
  std::array<char, 6> magic{};
  if (!detail::get_bytes(in, magic.data(), magic.size()) ||
      std::string_view(magic.data(), magic.size()) != kCvecMagic) {
    throw FormatError("bad CVEC magic");
  }
  unsigned char dim_bytes[4];
  if (!detail::get_bytes(in, reinterpret_cast<char*>(dim_bytes), 4)) throw FormatError("truncated CVEC header");
  const std::uint32_t dim = static_cast<std::uint32_t>(dim_bytes[0]) | (static_cast<std::uint32_t>(dim_bytes[1]) << 8) |
                            (static_cast<std::uint32_t>(dim_bytes[2]) << 16) |
                            (static_cast<std::uint32_t>(dim_bytes[3]) << 24);
  if (dim == 0) throw FormatError("CVEC dim is zero");
  EmbeddingMatrix m(dim);
  std::vector<unsigned char> buf(static_cast<std::size_t>(dim) * 4);
  std::vector<float> row(dim);
  for (;;) {
    unsigned char len_bytes[2];
    in.read(reinterpret_cast<char*>(len_bytes), 2);
    if (in.gcount() == 0) break;
    if (in.gcount() != 2) throw FormatError("truncated CVEC record header");
    const std::size_t len = static_cast<std::size_t>(len_bytes[0]) | (static_cast<std::size_t>(len_bytes[1]) << 8);
    std::string key(len, '\0');
    if (!detail::get_bytes(in, key.data(), len)) throw FormatError("truncated CVEC key");
    if (!detail::get_bytes(in, reinterpret_cast<char*>(buf.data()), buf.size())) {
      throw FormatError("truncated CVEC row for key '" + key + "'");
    }
    for (std::size_t i = 0; i < dim; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
      row[i] = std::bit_cast<float>(bits);
    }
    m.add(std::move(key), row);
  }
  return m;
}

inline void write_embeddings(const std::string& path, const EmbeddingMatrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_embeddings(out, m);
}

inline EmbeddingMatrix load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return read_embeddings(in);
}

// Source of base vectors: the hashing encoder, or a CVEC table looked up by key.
// Table lookups use the exact text as key; documents are looked up by id first.
class TextEncoder {
 public:
  static TextEncoder hashed(EncoderConfig config) {
    config.validate();
    TextEncoder e;
    e.config_ = config;
    return e;
  }

  static TextEncoder from_table(EmbeddingMatrix table) {
    TextEncoder e;
    e.table_ = std::make_shared<const EmbeddingMatrix>(std::move(table));
    return e;
  }

  // "hash" or "file:<path>".
  static TextEncoder from_spec(std::string_view spec, const EncoderConfig& config) {
    if (spec == "hash") return hashed(config);
    if (spec.starts_with("file:")) return from_table(load_embeddings(std::string(spec.substr(5))));
    throw ValidationError("unknown encoder '" + std::string(spec) + "' (expected hash or file:<path>)");
  }

  bool is_hashed() const { return table_ == nullptr; }
  std::size_t dim() const { return table_ ? table_->dim() : config_.dim; }
  const EncoderConfig& config() const { return config_; }

  std::vector<float> encode(std::string_view text) const {
    if (!table_) return encode_text(config_, text);
    if (auto i = table_->find(std::string(text))) {
      auto r = table_->row(*i);
      return {r.begin(), r.end()};
    }
    if (text.empty()) return std::vector<float>(table_->dim(), 0.0f);
    throw NotFoundError("embedding table has no entry for text '" + std::string(text.substr(0, 60)) + "'");
  }

  std::vector<float> encode_pair(std::string_view query_text, std::string_view candidate_text) const {
    if (!table_ && query_text.empty() && candidate_text.empty()) return std::vector<float>(config_.dim, 0.0f);
    return encode(pair_text(query_text, candidate_text));
  }

  std::vector<float> encode_keyed(const std::string& key, std::string_view text) const {
    if (table_) {
      if (auto i = table_->find(key)) {
        auto r = table_->row(*i);
        return {r.begin(), r.end()};
      }
    }
    return encode(text);
  }

 private:
  TextEncoder() = default;
  EncoderConfig config_;
  std::shared_ptr<const EmbeddingMatrix> table_;
};

}  // namespace citerec
