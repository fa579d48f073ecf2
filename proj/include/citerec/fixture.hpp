#pragma once

// Synthetic citation corpus with planted structure, used by the tests and the
// demo pipeline.
//
// Every document has a topic, a kind and a few "identity" terms. Identity terms
// never appear in the document's own text, only in contexts that cite it, so
// only a profile built from inward citations can locate the exact document.
// Kinds are announced by kind terms in the abstract. Generic citation contexts
// carry no identity terms; they ask for a kind using separate intent terms, so
// matching an intent to a kind has to be learned from pairs. Seminal papers
// carry cue terms and attract more citations.

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "citerec/corpus.hpp"
#include "citerec/date.hpp"
#include "citerec/util.hpp"

namespace citerec {

struct FixtureConfig {
  std::size_t documents = 2400;
  std::size_t topics = 24;
  std::size_t topic_vocabulary = 60;
  std::size_t shared_vocabulary = 400;
  std::size_t identity_terms = 3;
  std::size_t kinds = 4;
  std::size_t kind_cue_words = 3;     // kind terms in each abstract
  std::size_t seminal_cue_words = 2;  // cue terms in a seminal abstract
  std::size_t min_references = 3;
  std::size_t max_references = 8;
  double same_topic_rate = 0.8;
  double seminal_rate = 0.1;
  double seminal_weight = 4.0;  // citation preference of seminal papers
  double generic_rate = 0.3;    // share of generic citation contexts
  double query_rate = 0.4;      // share of citations that also become queries
  std::size_t context_topic_words = 3;
  std::size_t context_shared_words = 4;
  int first_year = 2000;
  int years = 20;
  std::uint64_t seed = 7;

  nlohmann::json to_json() const {
    return {{"documents", documents},
            {"topics", topics},
            {"topic_vocabulary", topic_vocabulary},
            {"shared_vocabulary", shared_vocabulary},
            {"identity_terms", identity_terms},
            {"kinds", kinds},
            {"kind_cue_words", kind_cue_words},
            {"seminal_cue_words", seminal_cue_words},
            {"min_references", min_references},
            {"max_references", max_references},
            {"same_topic_rate", same_topic_rate},
            {"seminal_rate", seminal_rate},
            {"seminal_weight", seminal_weight},
            {"generic_rate", generic_rate},
            {"query_rate", query_rate},
            {"context_topic_words", context_topic_words},
            {"context_shared_words", context_shared_words},
            {"first_year", first_year},
            {"years", years},
            {"seed", seed}};
  }

  void validate() const {
    if (documents < 2 || topics < 1 || topic_vocabulary < 1 || shared_vocabulary < 1 || kinds < 1) {
      throw ValidationError("fixture needs at least 2 documents and non-empty vocabularies");
    }
    if (min_references > max_references) throw ValidationError("min_references exceeds max_references");
    if (years < 1) throw ValidationError("fixture must span at least one year");
  }
};

struct FixtureData {
  std::vector<Document> documents;
  std::vector<CitationEdge> edges;
  std::vector<Query> queries;
};

namespace detail {

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {}

  std::string make() {
    static constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                              "s", "t", "v", "z", "br", "dr", "kl", "pr", "st", "tr"};
    static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
    for (;;) {
      std::string w;
      const std::size_t syllables = 2 + static_cast<std::size_t>(rng_.below(3));
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[rng_.below(std::size(kOnsets))];
        w += kVowels[rng_.below(std::size(kVowels))];
      }
      if (used_.insert(w).second) return w;
    }
  }

  std::vector<std::string> make(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(make());
    return out;
  }

 private:
  Rng& rng_;
  std::unordered_set<std::string> used_;
};

inline const std::string& pick(const std::vector<std::string>& words, Rng& rng) {
  return words[static_cast<std::size_t>(rng.below(words.size()))];
}

inline std::string sentence(std::vector<std::string> words, Rng& rng) {
  rng.shuffle(words);
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

}  // namespace detail

inline FixtureData generate_fixture(const FixtureConfig& config) {
  config.validate();
  Rng rng(config.seed);
  detail::WordMaker words(rng);
  std::vector<std::vector<std::string>> topic_words;
  for (std::size_t t = 0; t < config.topics; ++t) topic_words.push_back(words.make(config.topic_vocabulary));
  const auto shared = words.make(config.shared_vocabulary);
  const auto seminal_cues = words.make(3);
  std::vector<std::vector<std::string>> kind_terms, intent_terms;
  for (std::size_t k = 0; k < config.kinds; ++k) {
    kind_terms.push_back(words.make(3));
    intent_terms.push_back(words.make(3));
  }

  struct Meta {
    std::size_t topic;
    std::size_t kind;
    bool seminal;
    std::vector<std::string> identity;
    long day;
  };
  const long first_day = Date(config.first_year, 1, 1).days_since_epoch();
  const long span = Date(config.first_year + config.years, 1, 1).days_since_epoch() - first_day;

  std::vector<Meta> meta(config.documents);
  for (auto& m : meta) {
    m.topic = static_cast<std::size_t>(rng.below(config.topics));
    m.kind = static_cast<std::size_t>(rng.below(config.kinds));
    m.seminal = rng.uniform() < config.seminal_rate;
    m.identity = words.make(config.identity_terms);
    m.day = first_day + static_cast<long>(rng.below(static_cast<std::uint64_t>(span)));
  }
  std::stable_sort(meta.begin(), meta.end(), [](const Meta& a, const Meta& b) { return a.day < b.day; });

  FixtureData data;
  const std::size_t width = std::to_string(config.documents).size();
  auto doc_id = [width](std::size_t i) {
    std::string n = std::to_string(i);
    return "P" + std::string(width - std::min(n.size(), width), '0') + n;
  };

  for (std::size_t i = 0; i < meta.size(); ++i) {
    const auto& m = meta[i];
    std::vector<std::string> title;
    for (int w = 0; w < 4; ++w) title.push_back(detail::pick(topic_words[m.topic], rng));
    std::vector<std::string> body;
    for (int w = 0; w < 16; ++w) body.push_back(detail::pick(topic_words[m.topic], rng));
    for (int w = 0; w < 12; ++w) body.push_back(detail::pick(shared, rng));
    for (std::size_t w = 0; w < config.kind_cue_words; ++w) body.push_back(detail::pick(kind_terms[m.kind], rng));
    if (m.seminal) {
      for (std::size_t w = 0; w < config.seminal_cue_words; ++w) body.push_back(detail::pick(seminal_cues, rng));
    }
    data.documents.push_back({doc_id(i), detail::sentence(title, rng), detail::sentence(body, rng), Date::from_days(m.day)});
  }

  // Specific contexts name the target by its identity phrase (identity terms in
  // a fixed order); generic ones ask for the target's kind with an intent term.
  auto make_context = [&](std::size_t target, bool generic) {
    const auto& m = meta[target];
    std::vector<std::string> w;
    for (std::size_t k = 0; k < config.context_topic_words; ++k) w.push_back(detail::pick(topic_words[m.topic], rng));
    for (std::size_t k = 0; k < config.context_shared_words; ++k) w.push_back(detail::pick(shared, rng));
    std::string name;
    if (generic) {
      name = detail::pick(intent_terms[m.kind], rng);
    } else {
      for (const auto& t : m.identity) name += (name.empty() ? "" : " ") + t;
    }
    w.push_back(std::move(name));
    return detail::sentence(std::move(w), rng);
  };

  std::vector<std::vector<std::size_t>> by_topic(config.topics);
  std::size_t query_no = 0;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    const auto& m = meta[i];
    const std::size_t refs = config.min_references +
                             static_cast<std::size_t>(rng.below(config.max_references - config.min_references + 1));
    std::unordered_set<std::size_t> chosen;
    for (std::size_t r = 0; r < refs && i > 0; ++r) {
      const bool generic = rng.uniform() < config.generic_rate;
      std::size_t topic = m.topic;
      if (rng.uniform() >= config.same_topic_rate) topic = static_cast<std::size_t>(rng.below(config.topics));
      const auto& pool = by_topic[topic];
      if (pool.empty()) continue;
      double total = 0.0;
      for (std::size_t c : pool) total += meta[c].seminal ? config.seminal_weight : 1.0;
      double x = rng.uniform() * total;
      std::size_t target = pool.back();
      for (std::size_t c : pool) {
        x -= meta[c].seminal ? config.seminal_weight : 1.0;
        if (x <= 0.0) {
          target = c;
          break;
        }
      }
      if (!chosen.insert(target).second || meta[target].day >= m.day) continue;
      data.edges.push_back({doc_id(i), doc_id(target), make_context(target, generic)});
      if (rng.uniform() < config.query_rate) {
        const auto& src = data.documents[i];
        data.queries.push_back({"Q" + std::to_string(query_no++), make_context(target, generic), src.title,
                                src.abstract, src.date, doc_id(target), src.id});
      }
    }
    by_topic[m.topic].push_back(i);
  }
  return data;
}

inline void write_fixture(const FixtureData& data, const std::string& documents_path, const std::string& edges_path,
                          const std::string& queries_path) {
  auto docs = detail::open_output(documents_path);
  write_documents(docs, data.documents);
  auto edges = detail::open_output(edges_path);
  write_edges(edges, data.edges);
  auto queries = detail::open_output(queries_path);
  write_queries(queries, data.queries);
  if (!docs || !edges || !queries) throw IoError("write failure while emitting fixture files");
}

}  // namespace citerec
