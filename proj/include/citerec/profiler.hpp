#pragma once

// First-stage retrieval: documents are enriched with the averaged signal of
// the papers citing them and the contexts they are cited in, then queries are
// matched by exact cosine similarity.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "citerec/corpus.hpp"
#include "citerec/embedding.hpp"
#include "citerec/errors.hpp"

namespace citerec {

struct ProfileWeights {
  double alpha = 0.7;  // citation-context share of the profile
  double beta = 0.3;   // citing-paper share of the profile
  double gamma = 0.7;  // context share of the query vector
  double delta = 0.3;  // metadata share of the query vector

  // alpha = beta = 0 turns enrichment off; only accepted when the caller opts in.
  void validate(bool allow_profile_ablation = false) const {
    for (double w : {alpha, beta, gamma, delta}) {
      if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("profile weights must lie in [0, 1]");
    }
    const bool ablated = alpha == 0.0 && beta == 0.0;
    if (!(ablated && allow_profile_ablation) && std::abs(alpha + beta - 1.0) > 1e-9) {
      throw ValidationError("alpha + beta must equal 1");
    }
    if (std::abs(gamma + delta - 1.0) > 1e-9) throw ValidationError("gamma + delta must equal 1");
  }

  bool enrichment_disabled() const { return alpha == 0.0 && beta == 0.0; }

  nlohmann::json to_json() const {
    return {{"alpha", alpha}, {"beta", beta}, {"gamma", gamma}, {"delta", delta}};
  }

  friend bool operator==(const ProfileWeights&, const ProfileWeights&) = default;
};

struct ProfileOptions {
  // Scale each profiled row to unit length after enrichment.
  bool renormalize = false;
  bool allow_profile_ablation = false;
  // Corpus-row mask of documents whose outgoing citations may contribute to
  // profiles; empty means all. Used to keep evaluation papers' citations out.
  std::vector<char> citer_mask;
};

class ProfiledIndex {
 public:
  ProfiledIndex() = default;
  ProfiledIndex(std::size_t dim, std::vector<std::string> doc_ids, std::vector<float> rows,
                ProfileWeights weights)
      : dim_(dim), doc_ids_(std::move(doc_ids)), rows_(std::move(rows)), weights_(weights) {
    if (rows_.size() != dim_ * doc_ids_.size()) throw ValidationError("index rows do not match ids");
    norms_.resize(doc_ids_.size());
    for (std::size_t r = 0; r < doc_ids_.size(); ++r) {
      auto v = row(r);
      for (float x : v) {
        if (!std::isfinite(x)) throw ValidationError("non-finite entry in profiled row '" + doc_ids_[r] + "'");
      }
      norms_[r] = l2_norm(v);
    }
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return doc_ids_.size(); }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const ProfileWeights& weights() const { return weights_; }
  std::span<const float> row(std::size_t r) const { return std::span<const float>(rows_).subspan(r * dim_, dim_); }
  double row_norm(std::size_t r) const { return norms_[r]; }

  EmbeddingMatrix to_matrix() const {
    EmbeddingMatrix m(dim_);
    for (std::size_t r = 0; r < size(); ++r) m.add(doc_ids_[r], row(r));
    return m;
  }

  static ProfiledIndex from_matrix(const EmbeddingMatrix& m, ProfileWeights weights) {
    std::vector<std::string> ids(m.keys().begin(), m.keys().end());
    std::vector<float> rows(m.data().begin(), m.data().end());
    return ProfiledIndex(m.dim(), std::move(ids), std::move(rows), weights);
  }

  static double l2_norm(std::span<const float> v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(s);
  }

  friend bool operator==(const ProfiledIndex& a, const ProfiledIndex& b) {
    return a.dim_ == b.dim_ && a.doc_ids_ == b.doc_ids_ && a.rows_.size() == b.rows_.size() &&
           std::memcmp(a.rows_.data(), b.rows_.data(), a.rows_.size() * sizeof(float)) == 0;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> doc_ids_;
  std::vector<float> rows_;
  std::vector<double> norms_;
  ProfileWeights weights_;
};

// base_vectors are keyed by document id; context_vectors by context text.
inline ProfiledIndex build_profiled_index(const Corpus& corpus, const EmbeddingMatrix& base_vectors,
                                          const EmbeddingMatrix& context_vectors, const ProfileWeights& weights,
                                          const ProfileOptions& options = {}) {
  weights.validate(options.allow_profile_ablation);
  const std::size_t dim = base_vectors.dim();
  if (context_vectors.size() > 0 && context_vectors.dim() != dim) {
    throw ValidationError("context vectors have dim " + std::to_string(context_vectors.dim()) +
                          ", base vectors have dim " + std::to_string(dim));
  }
  if (!options.citer_mask.empty() && options.citer_mask.size() != corpus.size()) {
    throw ValidationError("citer mask does not cover the corpus");
  }

  std::vector<std::string> ids;
  std::vector<float> rows(dim * corpus.size());
  std::vector<double> acc(dim);
  const auto docs = corpus.documents();
  const auto edges = corpus.edges();
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    ids.push_back(docs[r].id);
    const auto base = base_vectors.row(docs[r].id);
    float* out = rows.data() + r * dim;
    std::fill(acc.begin(), acc.end(), 0.0);
    std::size_t count = 0;
    if (!weights.enrichment_disabled()) {
      for (std::size_t e : corpus.inward_edges(r)) {
        const auto& edge = edges[e];
        if (!options.citer_mask.empty() && !options.citer_mask[corpus.position(edge.citing_id)]) continue;
        const auto ctx = context_vectors.row(edge.context);
        const auto citer = base_vectors.row(edge.citing_id);
        for (std::size_t i = 0; i < dim; ++i) {
          acc[i] += weights.alpha * static_cast<double>(ctx[i]) + weights.beta * static_cast<double>(citer[i]);
        }
        ++count;
      }
    }
    if (count == 0) {
      std::copy(base.begin(), base.end(), out);
    } else {
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(static_cast<double>(base[i]) + acc[i] * inv);
    }
    if (options.renormalize) {
      const double n = ProfiledIndex::l2_norm(std::span<const float>(out, dim));
      if (n > 0.0) {
        for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(static_cast<double>(out[i]) / n);
      }
    }
  }
  return ProfiledIndex(dim, std::move(ids), std::move(rows), weights);
}

// Base vectors for every document (key = id) and context vectors for every
// distinct context snippet (key = text).
inline EmbeddingMatrix encode_documents(const Corpus& corpus, const TextEncoder& encoder) {
  EmbeddingMatrix m(encoder.dim());
  for (const auto& d : corpus.documents()) m.add(d.id, encoder.encode_keyed(d.id, d.text()));
  return m;
}

inline EmbeddingMatrix encode_contexts(const Corpus& corpus, const TextEncoder& encoder) {
  EmbeddingMatrix m(encoder.dim());
  for (const auto& e : corpus.edges()) {
    if (!m.contains(e.context)) m.add(e.context, encoder.encode(e.context));
  }
  return m;
}

// Weighted sum of two query-side encodings.
inline std::vector<float> combine_query_vectors(std::span<const float> context_vec, std::span<const float> metadata_vec,
                                                const ProfileWeights& weights) {
  if (context_vec.size() != metadata_vec.size()) throw ValidationError("query vector dimension mismatch");
  std::vector<float> out(context_vec.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(weights.gamma * static_cast<double>(context_vec[i]) +
                                weights.delta * static_cast<double>(metadata_vec[i]));
  }
  return out;
}

inline std::vector<float> compose_query_vector(const Query& query, const TextEncoder& encoder,
                                               const ProfileWeights& weights) {
  const auto ctx = encoder.encode(query.context);
  const auto meta = encoder.encode(query.metadata_text());
  return combine_query_vectors(ctx, meta, weights);
}

// Cosine similarity with the zero-vector convention (score 0).
inline double cosine(std::span<const float> a, std::span<const float> b, double norm_a, double norm_b) {
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return std::clamp(dot / (norm_a * norm_b), -1.0, 1.0);
}

inline double cosine(std::span<const float> a, std::span<const float> b) {
  return cosine(a, b, ProfiledIndex::l2_norm(a), ProfiledIndex::l2_norm(b));
}

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

// Descending score, ascending id on ties.
inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

struct RetrievalList {
  std::string query_id;
  std::vector<ScoredDoc> entries;
  std::size_t k = 0;

  nlohmann::json to_json() const {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& e : entries) cands.push_back({{"id", e.doc_id}, {"score", e.score}});
    return {{"qid", query_id}, {"k", k}, {"candidates", std::move(cands)}};
  }

  static RetrievalList from_json(const nlohmann::json& j) {
    RetrievalList l;
    l.query_id = j.at("qid").get<std::string>();
    for (const auto& c : j.at("candidates")) l.entries.push_back({c.at("id").get<std::string>(), c.at("score").get<double>()});
    l.k = j.contains("k") ? j.at("k").get<std::size_t>() : l.entries.size();
    return l;
  }

  // First `k` entries.
  RetrievalList truncated(std::size_t new_k) const {
    RetrievalList l{query_id, {}, new_k};
    l.entries.assign(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(std::min(new_k, entries.size())));
    return l;
  }

  friend bool operator==(const RetrievalList&, const RetrievalList&) = default;
};

// Exact top-k over the rows selected by `admissible` (corpus-row mask).
inline RetrievalList retrieve(const ProfiledIndex& index, std::span<const float> query_vector,
                              std::span<const char> admissible, std::size_t k, std::string query_id = {}) {
  if (k < 1) throw ValidationError("k must be >= 1");
  if (query_vector.size() != index.dim()) throw ValidationError("query vector dimension mismatch");
  if (admissible.size() != index.size()) throw ValidationError("admissible mask does not cover the index");
  const double qn = ProfiledIndex::l2_norm(query_vector);
  std::vector<ScoredDoc> scored;
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (!admissible[r]) continue;
    scored.push_back({index.doc_ids()[r], cosine(query_vector, index.row(r), qn, index.row_norm(r))});
  }
  if (scored.empty()) throw ValidationError("empty admissible corpus");
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), ranks_before);
  scored.resize(n);
  return {std::move(query_id), std::move(scored), k};
}

// Id-set overload.
inline RetrievalList retrieve(const ProfiledIndex& index, std::span<const float> query_vector,
                              std::span<const std::string> admissible_ids, std::size_t k, std::string query_id = {}) {
  std::vector<char> mask(index.size(), 0);
  std::unordered_map<std::string, std::size_t> rows;
  for (std::size_t r = 0; r < index.size(); ++r) rows.emplace(index.doc_ids()[r], r);
  for (const auto& id : admissible_ids) {
    auto it = rows.find(id);
    if (it == rows.end()) throw NotFoundError("admissible id '" + id + "' is not indexed");
    mask[it->second] = 1;
  }
  return retrieve(index, query_vector, std::span<const char>(mask), k, std::move(query_id));
}

}  // namespace citerec
