#pragma once

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "citerec/corpus.hpp"
#include "citerec/date.hpp"
#include "citerec/util.hpp"

namespace citerec::support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("citerec_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Document make_doc(const std::string& id, const Date& date, const std::string& text = "") {
  return {id, id + " title", text.empty() ? id + " abstract" : text, date};
}

// Dated documents D000.. with random edges from newer to older papers and a
// handful of contexts; small vocabulary so texts overlap.
struct RandomCorpus {
  std::vector<Document> documents;
  std::vector<CitationEdge> edges;
};

inline RandomCorpus random_corpus(Rng& rng, std::size_t n_docs, std::size_t n_edges) {
  static const char* kWords[] = {"graph", "neural", "ranking", "citation", "vector", "sparse", "dense",
                                 "model", "query",  "corpus", "profile", "gate",    "prior",  "score"};
  auto words = [&](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += std::string(i ? " " : "") + kWords[rng.below(std::size(kWords))];
    return s;
  };
  RandomCorpus c;
  const long base = Date(2001, 1, 1).days_since_epoch();
  for (std::size_t i = 0; i < n_docs; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "D%03zu", i);
    c.documents.push_back({id, words(3), words(8), Date::from_days(base + static_cast<long>(rng.below(3000)))});
  }
  for (std::size_t e = 0; e < n_edges && n_docs > 1; ++e) {
    const auto a = static_cast<std::size_t>(rng.below(n_docs));
    auto b = static_cast<std::size_t>(rng.below(n_docs));
    if (a == b) b = (b + 1) % n_docs;
    c.edges.push_back({c.documents[a].id, c.documents[b].id, words(5)});
  }
  return c;
}

}  // namespace citerec::support
