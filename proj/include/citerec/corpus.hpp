#pragma once

// Document corpus, citation graph and query records, with JSON-lines ingestion.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "citerec/date.hpp"
#include "citerec/errors.hpp"
#include "citerec/util.hpp"

namespace citerec {

struct Document {
  std::string id;
  std::string title;
  std::string abstract;
  Date date;

  // Text fed to the document encoder: title and abstract joined by one space.
  std::string text() const { return join_text(title, abstract); }

  friend bool operator==(const Document&, const Document&) = default;
};

struct CitationEdge {
  std::string citing_id;
  std::string cited_id;
  std::string context;

  friend bool operator==(const CitationEdge&, const CitationEdge&) = default;
};

struct Query {
  std::string id;
  std::string context;
  std::string title;
  std::string abstract;
  Date date;
  std::string gold_id;
  // Citing paper of this context, when known. Used to keep the query's own
  // paper (and every other evaluation paper) out of its candidate corpus.
  std::optional<std::string> source_id;

  std::string metadata_text() const { return join_text(title, abstract); }

  friend bool operator==(const Query&, const Query&) = default;
};

// One inward neighbour of a document.
struct CitingRef {
  std::string citing_id;
  std::string context;
  std::size_t edge_index;

  friend bool operator==(const CitingRef&, const CitingRef&) = default;
};

struct IngestReport {
  std::size_t documents = 0;
  std::size_t edges_total = 0;
  std::size_t edges_kept = 0;
  std::size_t dangling_dropped = 0;
  std::size_t self_citations_dropped = 0;
  std::size_t temporal_violations = 0;
  std::size_t empty_abstracts = 0;

  nlohmann::json to_json() const {
    return {{"documents", documents},
            {"edges_total", edges_total},
            {"edges_kept", edges_kept},
            {"dangling_dropped", dangling_dropped},
            {"self_citations_dropped", self_citations_dropped},
            {"temporal_violations", temporal_violations},
            {"empty_abstracts", empty_abstracts}};
  }
};

// Immutable document collection plus citation edges. Documents are held in
// ascending id order; row positions are stable and used as index rows downstream.
class Corpus {
 public:
  Corpus() = default;

  // Throws ValidationError on duplicate ids, self-citations or dangling edges.
  Corpus(std::vector<Document> documents, std::vector<CitationEdge> edges)
      : documents_(std::move(documents)), edges_(std::move(edges)) {
    std::sort(documents_.begin(), documents_.end(),
              [](const Document& a, const Document& b) { return a.id < b.id; });
    position_.reserve(documents_.size());
    for (std::size_t i = 0; i < documents_.size(); ++i) {
      if (documents_[i].id.empty()) throw ValidationError("document with empty id");
      if (!position_.emplace(documents_[i].id, i).second) {
        throw ValidationError("duplicate document id '" + documents_[i].id + "'");
      }
    }
    inward_.resize(documents_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const auto& edge = edges_[e];
      if (edge.citing_id == edge.cited_id) {
        throw ValidationError("self-citation edge on '" + edge.citing_id + "'");
      }
      if (!contains(edge.citing_id) || !contains(edge.cited_id)) {
        throw ValidationError("edge " + edge.citing_id + " -> " + edge.cited_id +
                              " references an unknown document");
      }
      inward_[position_.at(edge.cited_id)].push_back(e);
    }
    for (auto& list : inward_) {
      std::stable_sort(list.begin(), list.end(), [this](std::size_t a, std::size_t b) {
        return edges_[a].citing_id < edges_[b].citing_id;
      });
    }
  }

  std::span<const Document> documents() const { return documents_; }
  std::span<const CitationEdge> edges() const { return edges_; }
  std::size_t size() const { return documents_.size(); }

  bool contains(const std::string& id) const { return position_.count(id) != 0; }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = position_.find(id);
    if (it == position_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t position(const std::string& id) const {
    auto it = position_.find(id);
    if (it == position_.end()) throw NotFoundError("unknown document id '" + id + "'");
    return it->second;
  }

  const Document& document(const std::string& id) const { return documents_[position(id)]; }

  // Edge indices citing the document at `row`, ordered by citing id then file order.
  std::span<const std::size_t> inward_edges(std::size_t row) const { return inward_[row]; }

  std::vector<CitingRef> inward_neighbors(const std::string& id) const {
    std::vector<CitingRef> out;
    for (std::size_t e : inward_[position(id)]) {
      out.push_back({edges_[e].citing_id, edges_[e].context, e});
    }
    return out;
  }

  // Stable content digest over ids, texts, dates and edges.
  std::uint64_t content_hash() const {
    std::uint64_t h = kFnvOffset;
    auto mix = [&h](std::string_view s) {
      h = fnv1a(s, h);
      h = fnv1a(std::string_view("\x1f", 1), h);
    };
    for (const auto& d : documents_) {
      mix(d.id);
      mix(d.title);
      mix(d.abstract);
      mix(d.date.to_string());
    }
    for (const auto& e : edges_) {
      mix(e.citing_id);
      mix(e.cited_id);
      mix(e.context);
    }
    return h;
  }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.documents_ == b.documents_ && a.edges_ == b.edges_;
  }

 private:
  std::vector<Document> documents_;
  std::vector<CitationEdge> edges_;
  std::unordered_map<std::string, std::size_t> position_;
  std::vector<std::vector<std::size_t>> inward_;
};

namespace detail {

inline std::string require_string(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'", line);
  if (!it->is_string()) throw ParseError(std::string("field '") + key + "' is not a string", line);
  return it->get<std::string>();
}

inline Date require_date(const nlohmann::json& obj, const char* key, std::size_t line) {
  const auto raw = require_string(obj, key, line);
  auto date = Date::parse(raw);
  if (!date) throw ParseError("invalid date '" + raw + "' (expected YYYY-MM-DD)", line);
  return *date;
}

// Calls fn(json, line_number) for each non-blank line.
template <typename Fn>
void for_each_json_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), number);
    }
    if (!record.is_object()) throw ParseError("record is not a JSON object", number);
    fn(record, number);
  }
  if (in.bad()) throw IoError("read failure");
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace detail

inline std::vector<Document> read_documents(std::istream& in) {
  std::vector<Document> docs;
  detail::for_each_json_line(in, [&](const nlohmann::json& r, std::size_t line) {
    Document d{detail::require_string(r, "id", line), detail::require_string(r, "title", line),
               detail::require_string(r, "abstract", line), detail::require_date(r, "date", line)};
    if (d.id.empty()) throw ParseError("empty document id", line);
    docs.push_back(std::move(d));
  });
  return docs;
}

inline std::vector<CitationEdge> read_edges(std::istream& in) {
  std::vector<CitationEdge> edges;
  detail::for_each_json_line(in, [&](const nlohmann::json& r, std::size_t line) {
    edges.push_back({detail::require_string(r, "citing", line),
                     detail::require_string(r, "cited", line),
                     detail::require_string(r, "context", line)});
  });
  return edges;
}

inline std::vector<Query> read_queries(std::istream& in) {
  std::vector<Query> queries;
  detail::for_each_json_line(in, [&](const nlohmann::json& r, std::size_t line) {
    Query q{detail::require_string(r, "qid", line),      detail::require_string(r, "context", line),
            detail::require_string(r, "title", line),    detail::require_string(r, "abstract", line),
            detail::require_date(r, "date", line),       detail::require_string(r, "gold", line),
            std::nullopt};
    if (r.contains("source")) q.source_id = detail::require_string(r, "source", line);
    if (q.id.empty()) throw ParseError("empty query id", line);
    if (q.context.empty()) throw ParseError("empty citation context", line);
    if (q.gold_id.empty()) throw ParseError("empty gold id", line);
    queries.push_back(std::move(q));
  });
  return queries;
}

inline std::vector<Query> load_queries(const std::string& path) {
  auto in = detail::open_input(path);
  return read_queries(in);
}

struct IngestResult {
  Corpus corpus;
  IngestReport report;
};

// Validates raw records into a Corpus. Dangling and self-citation edges are
// dropped and counted; duplicate ids are fatal.
inline IngestResult build_corpus(std::vector<Document> documents, std::vector<CitationEdge> edges) {
  IngestReport report;
  report.documents = documents.size();
  report.edges_total = edges.size();
  std::unordered_map<std::string, Date> dates;
  dates.reserve(documents.size());
  for (const auto& d : documents) {
    if (!dates.emplace(d.id, d.date).second) {
      throw ValidationError("duplicate document id '" + d.id + "'");
    }
    if (d.abstract.empty()) ++report.empty_abstracts;
  }
  std::vector<CitationEdge> kept;
  kept.reserve(edges.size());
  for (auto& e : edges) {
    auto citing = dates.find(e.citing_id);
    auto cited = dates.find(e.cited_id);
    if (citing == dates.end() || cited == dates.end()) {
      ++report.dangling_dropped;
      continue;
    }
    if (e.citing_id == e.cited_id) {
      ++report.self_citations_dropped;
      continue;
    }
    if (citing->second < cited->second) ++report.temporal_violations;
    kept.push_back(std::move(e));
  }
  report.edges_kept = kept.size();
  return {Corpus(std::move(documents), std::move(kept)), report};
}

inline IngestResult ingest_corpus(const std::string& documents_path, const std::string& edges_path) {
  auto docs_in = detail::open_input(documents_path);
  auto docs = read_documents(docs_in);
  auto edges_in = detail::open_input(edges_path);
  auto edges = read_edges(edges_in);
  return build_corpus(std::move(docs), std::move(edges));
}

inline void write_documents(std::ostream& out, std::span<const Document> docs) {
  for (const auto& d : docs) {
    nlohmann::json r = {
        {"id", d.id}, {"title", d.title}, {"abstract", d.abstract}, {"date", d.date.to_string()}};
    out << r.dump() << '\n';
  }
}

inline void write_edges(std::ostream& out, std::span<const CitationEdge> edges) {
  for (const auto& e : edges) {
    nlohmann::json r = {{"citing", e.citing_id}, {"cited", e.cited_id}, {"context", e.context}};
    out << r.dump() << '\n';
  }
}

inline void write_queries(std::ostream& out, std::span<const Query> queries) {
  for (const auto& q : queries) {
    nlohmann::json r = {{"qid", q.id},       {"context", q.context},
                        {"title", q.title},  {"abstract", q.abstract},
                        {"date", q.date.to_string()}, {"gold", q.gold_id}};
    if (q.source_id) r["source"] = *q.source_id;
    out << r.dump() << '\n';
  }
}

inline void persist_corpus(const Corpus& corpus, const std::string& documents_path,
                           const std::string& edges_path) {
  auto docs_out = detail::open_output(documents_path);
  write_documents(docs_out, corpus.documents());
  auto edges_out = detail::open_output(edges_path);
  write_edges(edges_out, corpus.edges());
  if (!docs_out || !edges_out) throw IoError("write failure while persisting corpus");
}

}  // namespace citerec
