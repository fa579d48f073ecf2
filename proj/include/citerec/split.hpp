#pragma once

// Train/validation/test query partitioning and the per-query candidate corpus
// under transductive or temporally inductive evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "citerec/corpus.hpp"
#include "citerec/errors.hpp"
#include "citerec/util.hpp"

namespace citerec {

enum class SplitMode { transductive, inductive };
enum class SplitStrategy { by_date, by_random };

NLOHMANN_JSON_SERIALIZE_ENUM(SplitMode, {{SplitMode::transductive, "transductive"},
                                         {SplitMode::inductive, "inductive"}})
NLOHMANN_JSON_SERIALIZE_ENUM(SplitStrategy, {{SplitStrategy::by_date, "by_date"},
                                             {SplitStrategy::by_random, "by_random"}})

struct SplitConfig {
  SplitMode mode = SplitMode::inductive;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  SplitStrategy strategy = SplitStrategy::by_date;
  std::uint64_t seed = 0;
  // Also restrict training queries to documents published before them.
  bool temporal_train = false;

  void validate() const {
    if (!(val_fraction > 0.0 && val_fraction < 1.0) || !(test_fraction > 0.0 && test_fraction < 1.0)) {
      throw ValidationError("split fractions must lie in (0, 1)");
    }
    if (val_fraction + test_fraction >= 1.0) throw ValidationError("val_fraction + test_fraction must be < 1");
  }
};

enum class SplitRole { train, val, test };

class SplitResult {
 public:
  SplitMode mode() const { return config_.mode; }
  const SplitConfig& config() const { return config_; }
  const std::vector<Query>& train() const { return train_; }
  const std::vector<Query>& val() const { return val_; }
  const std::vector<Query>& test() const { return test_; }

  // Inductive: documents predating every retained evaluation query, minus
  // evaluation papers. Transductive: every document. Sorted ascending.
  const std::vector<std::string>& corpus_ids() const { return corpus_ids_; }

  // Every corpus document id, in corpus row order.
  const std::vector<std::string>& document_ids() const { return doc_ids_; }

  std::size_t dropped_val() const { return dropped_val_; }
  std::size_t dropped_test() const { return dropped_test_; }
  std::size_t input_val() const { return val_.size() + dropped_val_; }
  std::size_t input_test() const { return test_.size() + dropped_test_; }

  // Documents excluded from every candidate corpus (the evaluation papers).
  const std::unordered_set<std::string>& excluded_sources() const { return excluded_; }

  std::optional<SplitRole> role_of(const std::string& query_id) const {
    auto it = roles_.find(query_id);
    if (it == roles_.end()) return std::nullopt;
    return it->second;
  }

  // Admissibility of the document at corpus row `row` for `query`.
  bool admits(const Query& query, SplitRole role, std::size_t row) const {
    if (config_.mode == SplitMode::transductive) return true;
    if (excluded_row_[row]) return false;
    const bool temporal = role != SplitRole::train || config_.temporal_train;
    if (!temporal) return true;
    if (query.source_id && doc_ids_[row] == *query.source_id) return false;
    return doc_dates_[row] < query.date;
  }

  // Row mask over the corpus (1 = admissible) for a query of this split.
  std::vector<char> admissible_mask(const Query& query) const {
    const auto role = require_role(query);
    std::vector<char> mask(doc_ids_.size(), 0);
    for (std::size_t r = 0; r < doc_ids_.size(); ++r) mask[r] = admits(query, role, r) ? 1 : 0;
    return mask;
  }

  nlohmann::json manifest() const {
    auto ids = [](const std::vector<Query>& qs) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& q : qs) a.push_back(q.id);
      return a;
    };
    return {{"mode", config_.mode},
            {"strategy", config_.strategy},
            {"val_fraction", config_.val_fraction},
            {"test_fraction", config_.test_fraction},
            {"temporal_train", config_.temporal_train},
            {"train", ids(train_)},
            {"val", ids(val_)},
            {"test", ids(test_)},
            {"counts",
             {{"train", train_.size()},
              {"val", val_.size()},
              {"test", test_.size()},
              {"val_dropped", dropped_val_},
              {"test_dropped", dropped_test_}}},
            {"corpus_size", corpus_ids_.size()},
            {"transductive_corpus_size", doc_ids_.size()}};
  }

 private:
  friend SplitResult build_split(const Corpus&, std::vector<Query>, const SplitConfig&);

  SplitRole require_role(const Query& q) const {
    auto role = role_of(q.id);
    if (!role) throw NotFoundError("query '" + q.id + "' is not part of this split");
    return *role;
  }

  SplitConfig config_;
  std::vector<Query> train_, val_, test_;
  std::vector<std::string> corpus_ids_;
  std::size_t dropped_val_ = 0, dropped_test_ = 0;
  std::unordered_set<std::string> excluded_;
  std::unordered_map<std::string, SplitRole> roles_;
  std::vector<std::string> doc_ids_;
  std::vector<Date> doc_dates_;
  std::vector<char> excluded_row_;
};

// Ids admissible for `query`, ascending.
inline std::vector<std::string> admissible_corpus(const SplitResult& split, const Query& query) {
  const auto mask = split.admissible_mask(query);
  std::vector<std::string> ids;
  const auto& all = split.document_ids();
  for (std::size_t r = 0; r < all.size(); ++r) {
    if (mask[r]) ids.push_back(all[r]);
  }
  return ids;
}

inline SplitResult build_split(const Corpus& corpus, std::vector<Query> queries, const SplitConfig& config) {
  config.validate();
  if (queries.empty()) throw ValidationError("empty query list");
  {
    std::unordered_set<std::string> seen;
    for (const auto& q : queries) {
      if (!seen.insert(q.id).second) throw ValidationError("duplicate query id '" + q.id + "'");
      if (!corpus.contains(q.gold_id)) {
        throw ValidationError("query '" + q.id + "' cites unknown document '" + q.gold_id + "'");
      }
    }
  }

  if (config.strategy == SplitStrategy::by_date) {
    std::stable_sort(queries.begin(), queries.end(), [](const Query& a, const Query& b) {
      if (a.date != b.date) return a.date < b.date;
      return a.id < b.id;
    });
  } else {
    std::sort(queries.begin(), queries.end(), [](const Query& a, const Query& b) { return a.id < b.id; });
    Rng rng(config.seed);
    rng.shuffle(queries);
  }

  const std::size_t n = queries.size();
  auto portion = [n](double f) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * static_cast<double>(n))));
  };
  const std::size_t n_test = std::min(n, portion(config.test_fraction));
  const std::size_t n_val = std::min(n - n_test, portion(config.val_fraction));
  const std::size_t n_train = n - n_test - n_val;

  SplitResult s;
  s.config_ = config;
  for (const auto& d : corpus.documents()) {
    s.doc_ids_.push_back(d.id);
    s.doc_dates_.push_back(d.date);
  }
  s.excluded_row_.assign(corpus.size(), 0);

  std::vector<Query> val(queries.begin() + static_cast<std::ptrdiff_t>(n_train),
                         queries.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  std::vector<Query> test(queries.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), queries.end());
  s.train_.assign(queries.begin(), queries.begin() + static_cast<std::ptrdiff_t>(n_train));

  if (config.mode == SplitMode::inductive) {
    for (const auto* group : {&val, &test}) {
      for (const auto& q : *group) {
        if (q.source_id && corpus.contains(*q.source_id)) {
          s.excluded_.insert(*q.source_id);
          s.excluded_row_[corpus.position(*q.source_id)] = 1;
        }
      }
    }
  }

  auto retain = [&](std::vector<Query>& group, SplitRole role, std::size_t& dropped) {
    std::vector<Query> kept;
    for (auto& q : group) {
      if (s.admits(q, role, corpus.position(q.gold_id))) {
        kept.push_back(std::move(q));
      } else {
        ++dropped;
      }
    }
    group = std::move(kept);
  };
  retain(val, SplitRole::val, s.dropped_val_);
  retain(test, SplitRole::test, s.dropped_test_);
  if (val.empty() && test.empty()) {
    throw ValidationError("every evaluation query was dropped: no gold citation is admissible (" +
                          std::to_string(s.dropped_val_ + s.dropped_test_) + " dropped)");
  }
  s.val_ = std::move(val);
  s.test_ = std::move(test);

  for (const auto& q : s.train_) s.roles_.emplace(q.id, SplitRole::train);
  for (const auto& q : s.val_) s.roles_.emplace(q.id, SplitRole::val);
  for (const auto& q : s.test_) s.roles_.emplace(q.id, SplitRole::test);

  if (config.mode == SplitMode::transductive) {
    s.corpus_ids_ = s.doc_ids_;
  } else {
    std::optional<Date> earliest;
    for (const auto* group : {&s.val_, &s.test_}) {
      for (const auto& q : *group) {
        if (!earliest || q.date < *earliest) earliest = q.date;
      }
    }
    for (std::size_t r = 0; r < s.doc_ids_.size(); ++r) {
      if (!s.excluded_row_[r] && s.doc_dates_[r] < *earliest) s.corpus_ids_.push_back(s.doc_ids_[r]);
    }
  }
  return s;
}

}  // namespace citerec
