#include <gtest/gtest.h>

#include <sstream>

#include "citerec/corpus.hpp"
#include "support.hpp"

using namespace citerec;
using citerec::support::make_doc;

TEST(Date, ParsesStrictIsoDates) {
  auto d = Date::parse("2019-02-28");
  ASSERT_TRUE(d);
  EXPECT_EQ(d->to_string(), "2019-02-28");
  EXPECT_FALSE(Date::parse("2019-02-29"));
  EXPECT_FALSE(Date::parse("2019-2-28"));
  EXPECT_FALSE(Date::parse("2019/02/28"));
  EXPECT_FALSE(Date::parse("20x9-02-28"));
  EXPECT_TRUE(Date::parse("2020-02-29"));
  EXPECT_LT(*Date::parse("2019-12-31"), *Date::parse("2020-01-01"));
}

TEST(Corpus, SortsByIdAndIndexesInwardEdges) {
  const Date d(2020, 1, 1);
  Corpus c({make_doc("b", d), make_doc("a", d), make_doc("c", d)},
           {{"c", "a", "ctx1"}, {"b", "a", "ctx2"}, {"c", "b", "ctx3"}});
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.documents()[0].id, "a");
  EXPECT_EQ(c.position("c"), 2u);
  const auto in = c.inward_neighbors("a");
  ASSERT_EQ(in.size(), 2u);
  EXPECT_EQ(in[0].citing_id, "b");  // ordered by citing id
  EXPECT_EQ(in[1].citing_id, "c");
  EXPECT_TRUE(c.inward_neighbors("c").empty());
  EXPECT_THROW(c.position("zz"), NotFoundError);
}

TEST(Corpus, KeepsEveryOccurrenceOfARepeatedEdge) {
  const Date d(2020, 1, 1);
  Corpus c({make_doc("a", d), make_doc("b", d)}, {{"b", "a", "first"}, {"b", "a", "second"}});
  const auto in = c.inward_neighbors("a");
  ASSERT_EQ(in.size(), 2u);
  EXPECT_EQ(in[0].context, "first");
  EXPECT_EQ(in[1].context, "second");
}

TEST(Corpus, RejectsInvalidConstruction) {
  const Date d(2020, 1, 1);
  EXPECT_THROW(Corpus({make_doc("a", d), make_doc("a", d)}, {}), ValidationError);
  EXPECT_THROW(Corpus({make_doc("a", d)}, {{"a", "a", "x"}}), ValidationError);
  EXPECT_THROW(Corpus({make_doc("a", d)}, {{"a", "b", "x"}}), ValidationError);
}

TEST(Ingest, DropsDanglingAndSelfEdgesAndCountsThem) {
  const Date early(2010, 1, 1), late(2012, 1, 1);
  std::vector<Document> docs = {make_doc("old", early), make_doc("new", late), {"bare", "t", "", early}};
  std::vector<CitationEdge> edges = {{"new", "old", "fine"},
                                     {"new", "ghost", "dangling"},
                                     {"old", "old", "self"},
                                     {"old", "new", "backwards in time"}};
  const auto r = build_corpus(docs, edges);
  EXPECT_EQ(r.report.documents, 3u);
  EXPECT_EQ(r.report.edges_total, 4u);
  EXPECT_EQ(r.report.edges_kept, 2u);
  EXPECT_EQ(r.report.dangling_dropped, 1u);
  EXPECT_EQ(r.report.self_citations_dropped, 1u);
  EXPECT_EQ(r.report.temporal_violations, 1u);
  EXPECT_EQ(r.report.empty_abstracts, 1u);
  EXPECT_EQ(r.corpus.edges().size(), 2u);
  EXPECT_THROW(build_corpus({make_doc("x", early), make_doc("x", late)}, {}), ValidationError);
}

TEST(Ingest, ReadsJsonLinesAndReportsLineNumbers) {
  std::istringstream good(
      "{\"id\":\"p1\",\"title\":\"T\",\"abstract\":\"A\",\"date\":\"2001-05-06\"}\n"
      "\n"
      "{\"id\":\"p2\",\"title\":\"U\",\"abstract\":\"B\",\"date\":\"2002-05-06\"}\n");
  const auto docs = read_documents(good);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[1].date, Date(2002, 5, 6));

  std::istringstream bad_date("{\"id\":\"p1\",\"title\":\"T\",\"abstract\":\"A\",\"date\":\"2001-13-01\"}\n");
  EXPECT_THROW(read_documents(bad_date), ParseError);

  std::istringstream missing("{\"id\":\"p1\",\"title\":\"T\",\"abstract\":\"A\",\"date\":\"2001-01-01\"}\n"
                             "{\"id\":\"p2\",\"title\":\"T\"}\n");
  try {
    read_documents(missing);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }

  std::istringstream garbage("{not json\n");
  EXPECT_THROW(read_documents(garbage), ParseError);
}

TEST(Ingest, QueriesRequireNonEmptyContextAndGold) {
  std::istringstream ok(
      "{\"qid\":\"q\",\"context\":\"c\",\"title\":\"t\",\"abstract\":\"a\",\"date\":\"2001-01-01\",\"gold\":\"g\","
      "\"source\":\"s\"}\n");
  const auto qs = read_queries(ok);
  ASSERT_EQ(qs.size(), 1u);
  EXPECT_EQ(qs[0].source_id, "s");
  std::istringstream empty_ctx(
      "{\"qid\":\"q\",\"context\":\"\",\"title\":\"t\",\"abstract\":\"a\",\"date\":\"2001-01-01\",\"gold\":\"g\"}\n");
  EXPECT_THROW(read_queries(empty_ctx), ParseError);
}

TEST(Ingest, PersistedCorpusRoundTrips) {
  support::TempDir dir("corpus");
  Rng rng(3);
  auto rc = support::random_corpus(rng, 40, 120);
  const auto first = build_corpus(rc.documents, rc.edges);
  persist_corpus(first.corpus, dir.file("d.jsonl"), dir.file("e.jsonl"));
  const auto second = ingest_corpus(dir.file("d.jsonl"), dir.file("e.jsonl"));
  EXPECT_TRUE(first.corpus == second.corpus);
  EXPECT_EQ(first.corpus.content_hash(), second.corpus.content_hash());
  EXPECT_THROW(ingest_corpus(dir.file("missing.jsonl"), dir.file("e.jsonl")), IoError);
}
