#pragma once

// Retrieval scores -> confidence priors for the reranker.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "citerec/errors.hpp"
#include "citerec/profiler.hpp"

namespace citerec {

enum class PriorMode {
  exp_rank,   // lambda^rank
  raw_score,  // retrieval score passed through
  softmax,    // softmax of scores over the candidate list
};

NLOHMANN_JSON_SERIALIZE_ENUM(PriorMode, {{PriorMode::exp_rank, "exp_rank"},
                                         {PriorMode::raw_score, "raw_score"},
                                         {PriorMode::softmax, "softmax"}})

// Score given to an injected candidate the retriever did not return, before the
// raw_score / softmax transforms. It is the lowest attainable cosine.
inline constexpr double kInjectedScore = -1.0;

struct PriorConfig {
  double lambda = 0.95;
  PriorMode mode = PriorMode::exp_rank;
  std::size_t k = 300;

  void validate() const {
    if (!(lambda > 0.0 && lambda < 1.0)) throw ValidationError("lambda must lie in (0, 1)");
    if (k < 1) throw ValidationError("k must be >= 1");
  }

  friend bool operator==(const PriorConfig&, const PriorConfig&) = default;
};

struct RankedDoc {
  std::string doc_id;
  std::size_t rank = 0;
};

struct PriorEntry {
  std::string doc_id;
  std::size_t rank = 0;  // 1-based; k+1 for an injected candidate
  double score = 0.0;    // retrieval score (kInjectedScore when injected)
  double prior = 0.0;
  bool injected = false;
};

struct PriorList {
  std::vector<PriorEntry> entries;
};

inline std::vector<RankedDoc> ranks_from_scores(const RetrievalList& scores) {
  std::vector<RankedDoc> out;
  out.reserve(scores.entries.size());
  for (std::size_t i = 0; i < scores.entries.size(); ++i) out.push_back({scores.entries[i].doc_id, i + 1});
  return out;
}

inline double prior_from_rank(const PriorConfig& config, std::size_t rank) {
  if (rank < 1) throw ValidationError("rank must be >= 1");
  return std::pow(config.lambda, static_cast<double>(rank));
}

// Priors for the first config.k retrieved candidates. When `injected` names a
// document absent from that list it is appended with rank k+1.
inline PriorList priors_for_candidates(const PriorConfig& config, const RetrievalList& scores,
                                       const std::optional<std::string>& injected = std::nullopt) {
  config.validate();
  const std::size_t n = std::min(config.k, scores.entries.size());
  PriorList out;
  out.entries.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    out.entries.push_back({scores.entries[i].doc_id, i + 1, scores.entries[i].score, 0.0, false});
  }
  if (injected) {
    const bool present = std::any_of(out.entries.begin(), out.entries.end(),
                                     [&](const PriorEntry& e) { return e.doc_id == *injected; });
    if (!present) out.entries.push_back({*injected, config.k + 1, kInjectedScore, 0.0, true});
  }

  switch (config.mode) {
    case PriorMode::exp_rank:
      for (auto& e : out.entries) e.prior = prior_from_rank(config, e.rank);
      break;
    case PriorMode::raw_score:
      for (auto& e : out.entries) e.prior = e.score;
      break;
    case PriorMode::softmax: {
      // Normaliser runs over the retrieved list only.
      double top = kInjectedScore;
      for (std::size_t i = 0; i < n; ++i) top = std::max(top, out.entries[i].score);
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) z += std::exp(out.entries[i].score - top);
      for (auto& e : out.entries) e.prior = z > 0.0 ? std::exp(e.score - top) / z : 0.0;
      break;
    }
  }
  return out;
}

}  // namespace citerec
