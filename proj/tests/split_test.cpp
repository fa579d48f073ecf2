#include <gtest/gtest.h>

#include <set>

#include "citerec/split.hpp"
#include "support.hpp"

using namespace citerec;
using citerec::support::make_doc;

namespace {

// Five documents a..e published in consecutive years; queries cite them.
Corpus small_corpus() {
  std::vector<Document> docs;
  const char* ids[] = {"a", "b", "c", "d", "e"};
  for (int i = 0; i < 5; ++i) docs.push_back(make_doc(ids[i], Date(2000 + i, 6, 1)));
  return Corpus(docs, {{"b", "a", "x"}, {"c", "a", "y"}, {"e", "d", "z"}});
}

Query query(const std::string& id, Date date, const std::string& gold, std::optional<std::string> source) {
  return {id, "context " + id, "t", "a", date, gold, std::move(source)};
}

}  // namespace

TEST(Split, DateOrderedPartitionSizes) {
  const auto c = small_corpus();
  std::vector<Query> qs;
  for (int i = 0; i < 10; ++i) qs.push_back(query("q" + std::to_string(i), Date(2010, 1, 1 + i), "a", std::nullopt));
  SplitConfig cfg;
  cfg.val_fraction = 0.2;
  cfg.test_fraction = 0.2;
  const auto s = build_split(c, qs, cfg);
  EXPECT_EQ(s.train().size(), 6u);
  EXPECT_EQ(s.val().size(), 2u);
  EXPECT_EQ(s.test().size(), 2u);
  // Latest queries are evaluated.
  EXPECT_EQ(s.test().back().id, "q9");
  EXPECT_EQ(s.val().front().id, "q6");
  EXPECT_EQ(*s.role_of("q0"), SplitRole::train);
  EXPECT_FALSE(s.role_of("nope"));
}

TEST(Split, EveryPortionGetsAtLeastOneQuery) {
  const auto c = small_corpus();
  std::vector<Query> qs = {query("q0", Date(2010, 1, 1), "a", std::nullopt),
                           query("q1", Date(2010, 1, 2), "a", std::nullopt),
                           query("q2", Date(2010, 1, 3), "a", std::nullopt)};
  const auto s = build_split(c, qs, SplitConfig{});
  EXPECT_EQ(s.train().size(), 1u);
  EXPECT_EQ(s.val().size(), 1u);
  EXPECT_EQ(s.test().size(), 1u);
}

TEST(Split, RandomStrategyIsSeededAndInputOrderFree) {
  const auto c = small_corpus();
  std::vector<Query> qs;
  for (int i = 0; i < 30; ++i) qs.push_back(query("q" + std::to_string(i), Date(2010, 1, 1), "a", std::nullopt));
  SplitConfig cfg;
  cfg.strategy = SplitStrategy::by_random;
  cfg.seed = 5;
  const auto s1 = build_split(c, qs, cfg);
  std::reverse(qs.begin(), qs.end());
  const auto s2 = build_split(c, qs, cfg);
  EXPECT_EQ(s1.manifest(), s2.manifest());
  cfg.seed = 6;
  EXPECT_NE(build_split(c, qs, cfg).manifest()["test"], s1.manifest()["test"]);
}

TEST(Split, InductiveCandidatesPredateQueryAndExcludeEvaluationSources) {
  const auto c = small_corpus();
  // Eval queries are the last two by date; their sources are "c" and "e".
  std::vector<Query> qs = {query("t0", Date(2001, 1, 1), "a", "b"), query("t1", Date(2001, 2, 1), "a", "b"),
                           query("t2", Date(2001, 3, 1), "a", "b"), query("v", Date(2002, 12, 1), "a", "c"),
                           query("t", Date(2004, 12, 1), "d", "e")};
  SplitConfig cfg;
  cfg.val_fraction = 0.2;
  cfg.test_fraction = 0.2;
  const auto s = build_split(c, qs, cfg);
  ASSERT_EQ(s.val().size(), 1u);
  ASSERT_EQ(s.test().size(), 1u);
  EXPECT_EQ(s.excluded_sources(), (std::unordered_set<std::string>{"c", "e"}));
  // test query at 2004-12: a, b, d are older; c and e are evaluation papers.
  EXPECT_EQ(admissible_corpus(s, s.test()[0]), (std::vector<std::string>{"a", "b", "d"}));
  // val query at 2002-12: only a (2000) and b (2001) predate it.
  EXPECT_EQ(admissible_corpus(s, s.val()[0]), (std::vector<std::string>{"a", "b"}));
  // Training queries see everything except evaluation papers.
  EXPECT_EQ(admissible_corpus(s, s.train()[0]), (std::vector<std::string>{"a", "b", "d"}));
  // Shared inductive corpus: non-evaluation documents older than the earliest eval query.
  EXPECT_EQ(s.corpus_ids(), (std::vector<std::string>{"a", "b"}));
}

TEST(Split, TemporalTrainingFilterIsOptIn) {
  const auto c = small_corpus();
  std::vector<Query> qs = {query("t0", Date(2001, 1, 1), "a", "b"), query("t1", Date(2001, 2, 1), "a", std::nullopt),
                           query("t2", Date(2001, 3, 1), "a", std::nullopt), query("v", Date(2005, 1, 1), "a", "c"),
                           query("t", Date(2005, 2, 1), "d", "e")};
  SplitConfig cfg;
  cfg.val_fraction = 0.2;
  cfg.test_fraction = 0.2;
  cfg.temporal_train = true;
  const auto s = build_split(c, qs, cfg);
  // t0 (2001-01) may only see "a".
  EXPECT_EQ(admissible_corpus(s, s.train()[0]), (std::vector<std::string>{"a"}));
}

TEST(Split, DropsEvaluationQueriesWhoseGoldIsInadmissible) {
  const auto c = small_corpus();
  std::vector<Query> qs = {query("t0", Date(2001, 1, 1), "a", std::nullopt),
                           query("t1", Date(2001, 1, 2), "a", std::nullopt),
                           query("t2", Date(2001, 1, 3), "a", std::nullopt),
                           query("v", Date(2003, 1, 1), "e", std::nullopt),  // gold newer than query
                           query("t", Date(2006, 1, 1), "d", std::nullopt)};
  SplitConfig cfg;
  cfg.val_fraction = 0.2;
  cfg.test_fraction = 0.2;
  const auto s = build_split(c, qs, cfg);
  EXPECT_EQ(s.val().size(), 0u);
  EXPECT_EQ(s.dropped_val(), 1u);
  EXPECT_EQ(s.input_val(), 1u);
  EXPECT_EQ(s.test().size(), 1u);
  EXPECT_EQ(s.manifest()["counts"]["val_dropped"], 1);
}

TEST(Split, TransductiveAdmitsEverything) {
  const auto c = small_corpus();
  std::vector<Query> qs = {query("t0", Date(2000, 1, 1), "a", "b"), query("v", Date(2000, 1, 2), "e", "c"),
                           query("t", Date(2000, 1, 3), "e", "d")};
  SplitConfig cfg;
  cfg.mode = SplitMode::transductive;
  const auto s = build_split(c, qs, cfg);
  EXPECT_EQ(admissible_corpus(s, s.test()[0]).size(), 5u);
  EXPECT_EQ(s.corpus_ids().size(), 5u);
}

TEST(Split, RejectsBadInput) {
  const auto c = small_corpus();
  SplitConfig cfg;
  EXPECT_THROW(build_split(c, {}, cfg), ValidationError);
  std::vector<Query> dup = {query("q", Date(2001, 1, 1), "a", std::nullopt),
                            query("q", Date(2001, 1, 1), "a", std::nullopt)};
  EXPECT_THROW(build_split(c, dup, cfg), ValidationError);
  EXPECT_THROW(build_split(c, {query("q", Date(2001, 1, 1), "zz", std::nullopt)}, cfg), ValidationError);
  cfg.val_fraction = 0.6;
  cfg.test_fraction = 0.5;
  EXPECT_THROW(cfg.validate(), ValidationError);
  // Every evaluation gold newer than its query.
  std::vector<Query> late = {query("t0", Date(2000, 1, 1), "a", std::nullopt),
                             query("v", Date(2000, 1, 2), "e", std::nullopt),
                             query("t", Date(2000, 1, 3), "e", std::nullopt)};
  EXPECT_THROW(build_split(c, late, SplitConfig{}), ValidationError);
}

TEST(Split, MatchesBruteForceDateFilterOnRandomCorpora) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto rc = support::random_corpus(rng, 60, 100);
    const auto corpus = build_corpus(rc.documents, rc.edges).corpus;
    std::vector<Query> qs;
    for (int i = 0; i < 40; ++i) {
      const auto& src = corpus.documents()[rng.below(corpus.size())];
      const auto& gold = corpus.documents()[rng.below(corpus.size())];
      qs.push_back({"q" + std::to_string(i), "c", "t", "a", src.date, gold.id, src.id});
    }
    SplitConfig cfg;
    cfg.val_fraction = 0.25;
    cfg.test_fraction = 0.25;
    cfg.strategy = seed % 2 ? SplitStrategy::by_random : SplitStrategy::by_date;
    cfg.seed = seed;
    SplitResult s;
    try {
      s = build_split(corpus, qs, cfg);
    } catch (const ValidationError&) {
      continue;
    }
    // Sources of every evaluation-portion query, including dropped ones.
    std::set<std::string> train_ids, eval_sources;
    for (const auto& q : s.train()) train_ids.insert(q.id);
    for (const auto& q : qs) {
      if (!train_ids.count(q.id)) eval_sources.insert(*q.source_id);
    }
    for (const auto* g : {&s.val(), &s.test()}) {
      for (const auto& q : *g) {
        std::vector<std::string> expect;
        for (const auto& d : corpus.documents()) {
          if (d.date < q.date && !eval_sources.count(d.id) && d.id != *q.source_id) expect.push_back(d.id);
        }
        EXPECT_EQ(admissible_corpus(s, q), expect) << "seed " << seed << " query " << q.id;
        EXPECT_TRUE(std::count(expect.begin(), expect.end(), q.gold_id));
      }
    }
  }
}
