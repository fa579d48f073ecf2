#include <gtest/gtest.h>

#include <set>

#include "citerec/embedding.hpp"
#include "citerec/fixture.hpp"
#include "support.hpp"

using namespace citerec;

namespace {

FixtureConfig small() {
  FixtureConfig c;
  c.documents = 300;
  c.topics = 6;
  return c;
}

}  // namespace

TEST(Fixture, DeterministicForASeed) {
  const auto a = generate_fixture(small());
  const auto b = generate_fixture(small());
  EXPECT_EQ(a.documents, b.documents);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_EQ(a.queries, b.queries);
  auto other = small();
  other.seed = 8;
  EXPECT_NE(generate_fixture(other).edges, a.edges);
}

TEST(Fixture, RecordsAreConsistent) {
  const auto f = generate_fixture(small());
  EXPECT_EQ(f.documents.size(), 300u);
  const auto ingest = build_corpus(f.documents, f.edges);
  EXPECT_EQ(ingest.report.edges_kept, f.edges.size());
  EXPECT_EQ(ingest.report.temporal_violations, 0u);
  const auto& corpus = ingest.corpus;
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& e : f.edges) {
    EXPECT_LT(corpus.document(e.cited_id).date, corpus.document(e.citing_id).date);
    EXPECT_TRUE(pairs.emplace(e.citing_id, e.cited_id).second) << "repeated reference";
  }
  ASSERT_FALSE(f.queries.empty());
  for (const auto& q : f.queries) {
    ASSERT_TRUE(q.source_id);
    EXPECT_TRUE(pairs.count({*q.source_id, q.gold_id}));
    EXPECT_EQ(q.date, corpus.document(*q.source_id).date);
    EXPECT_EQ(q.title, corpus.document(*q.source_id).title);
  }
}

TEST(Fixture, IdentityTermsOnlyAppearInCitingContexts) {
  auto cfg = small();
  cfg.generic_rate = 0.0;
  const auto f = generate_fixture(cfg);
  const auto corpus = build_corpus(f.documents, f.edges).corpus;
  // Words of a specific context that are absent from every document text.
  std::set<std::string> doc_words;
  for (const auto& d : f.documents) {
    for (const auto& w : tokenize(d.text(), true)) doc_words.insert(w);
  }
  std::size_t contexts_with_private_words = 0;
  for (const auto& e : f.edges) {
    std::size_t priv = 0;
    for (const auto& w : tokenize(e.context, true)) priv += doc_words.count(w) == 0;
    contexts_with_private_words += priv == cfg.identity_terms;
  }
  EXPECT_EQ(contexts_with_private_words, f.edges.size());
}

TEST(Fixture, WritesLoadableFiles) {
  support::TempDir dir("fixture");
  const auto f = generate_fixture(small());
  write_fixture(f, dir.file("d.jsonl"), dir.file("e.jsonl"), dir.file("q.jsonl"));
  const auto ingest = ingest_corpus(dir.file("d.jsonl"), dir.file("e.jsonl"));
  EXPECT_EQ(ingest.corpus.size(), f.documents.size());
  EXPECT_EQ(load_queries(dir.file("q.jsonl")), f.queries);
}

TEST(Fixture, Validation) {
  auto c = small();
  c.documents = 1;
  EXPECT_THROW(generate_fixture(c), ValidationError);
  c = small();
  c.min_references = 9;
  EXPECT_THROW(generate_fixture(c), ValidationError);
  EXPECT_EQ(small().to_json()["documents"], 300);
}
