#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "citerec/davinci.hpp"
#include "support.hpp"

using namespace citerec;
using citerec::support::make_doc;

namespace {

DavinciConfig tiny_config(Ablation a = Ablation::full) {
  DavinciConfig c;
  c.d_enc2 = 6;
  c.d_h = 3;
  c.depth = 2;
  c.negatives = 3;
  c.ablation = a;
  c.seed = 21;
  return c;
}

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

}  // namespace

TEST(Triplet, HingeCases) {
  EXPECT_DOUBLE_EQ(triplet_loss(0.9, 0.1, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(triplet_loss(0.5, 0.5, 0.1), 0.1);
  EXPECT_NEAR(triplet_loss(0.2, 0.6, 0.1), 0.5, 1e-15);
  EXPECT_NEAR(triplet_loss(0.6, 0.5, 0.1), 0.0, 1e-15);  // at the margin
}

TEST(Davinci, HandSetOneDimensionalModel) {
  DavinciConfig c;
  c.d_enc2 = 1;
  c.d_h = 1;
  c.depth = 1;
  DavinciModel<double> m(c);
  m.text_tower().layers()[0].weight = {1.0};
  m.score_tower().layers()[0].weight = {2.0};
  m.output_head().layers()[0].weight = {1.0, 1.0};
  // zero gate parameters -> g = (0.5, 0.5)
  // h = [2, 1], fused = [1, 0.5], S = sigmoid(1.5)
  const double s = m.score(std::vector<double>{2.0}, 0.5);
  EXPECT_NEAR(s, 1.0 / (1.0 + std::exp(-1.5)), 1e-15);
  m.gate_network().layers()[0].bias = {100.0, -100.0};
  // gate passes text and blocks the prior: S = sigmoid(2)
  EXPECT_NEAR(m.score(std::vector<double>{2.0}, 0.5), 1.0 / (1.0 + std::exp(-2.0)), 1e-12);
}

TEST(Davinci, ShapesPerAblation) {
  const DavinciModel<float> full(tiny_config());
  EXPECT_EQ(full.fused_dim(), 6u);
  EXPECT_EQ(full.gate_network().in_dim(), 7u);
  EXPECT_EQ(full.gate_network().out_dim(), 6u);
  const DavinciModel<float> a1(tiny_config(Ablation::semantics_only));
  EXPECT_EQ(a1.fused_dim(), 3u);
  EXPECT_EQ(a1.gate_network().in_dim(), 6u);
  EXPECT_EQ(a1.gate_network().out_dim(), 3u);
  const DavinciModel<float> a4(tiny_config(Ablation::scalar_gate));
  EXPECT_EQ(a4.gate_network().out_dim(), 1u);
  EXPECT_EQ(tiny_config(Ablation::raw_prior).effective_prior().mode, PriorMode::raw_score);
  EXPECT_EQ(tiny_config(Ablation::softmax_prior).effective_prior().mode, PriorMode::softmax);
}

TEST(Davinci, ZeroModelScoresOneHalfAndKeepsIdOrder) {
  const DavinciModel<float> m(tiny_config());
  RerankInput in{"q", "b", {}};
  for (const char* id : {"c", "a", "b"}) in.candidates.push_back({id, std::vector<float>(6, 0.3f), 0.9});
  const auto ranked = rerank(m, in);
  ASSERT_EQ(ranked.size(), 3u);
  for (const auto& r : ranked) EXPECT_EQ(r.score, 0.5);
  EXPECT_EQ(ranked[0].doc_id, "a");
  EXPECT_EQ(ranked[2].doc_id, "c");
}

TEST(Davinci, GradientsMatchCentralDifferencesForEveryVariant) {
  for (auto variant : {Ablation::full, Ablation::semantics_only, Ablation::raw_prior, Ablation::softmax_prior,
                       Ablation::scalar_gate}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto cfg = tiny_config(variant);
      cfg.seed = seed;
      auto model = DavinciModel<double>::initialized(cfg);
      Rng rng(seed + 100);
      auto params = model.parameters();
      for (auto& p : params) {
        for (auto& x : p) x += rng.uniform(-0.1, 0.1);
      }
      const auto e = random_vec(rng, cfg.d_enc2);
      const double prior = rng.uniform(0, 1);
      typename DavinciModel<double>::Tape tape;
      model.score(e, prior, &tape);
      auto grads = model.zero_gradients();
      model.backward(tape, 1.0, grads);
      auto gspans = grads.spans();
      const double eps = 1e-6;
      for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) {
          const double keep = params[t][i];
          params[t][i] = keep + eps;
          const double up = model.score(e, prior);
          params[t][i] = keep - eps;
          const double down = model.score(e, prior);
          params[t][i] = keep;
          EXPECT_NEAR(gspans[t][i], (up - down) / (2 * eps), 1e-7) << ablation_label(variant) << " seed " << seed;
        }
      }
    }
  }
}

TEST(Davinci, GroupLossAveragesOverNegatives) {
  DavinciConfig c;
  c.d_enc2 = 1;
  c.d_h = 1;
  c.depth = 1;
  c.margin = 0.1;
  DavinciModel<double> m(c);
  m.text_tower().layers()[0].weight = {1.0};
  m.output_head().layers()[0].weight = {2.0, 0.0};
  m.gate_network().layers()[0].bias = {50.0, 50.0};
  auto s = [&](double e) { return m.score(std::vector<double>{e}, 0.0); };
  std::vector<TrainingTriplet> group = {{"q", {"p", {1.0f}, 0.0}, {"n1", {-1.0f}, 0.0}},
                                        {"q", {"p", {1.0f}, 0.0}, {"n2", {0.98f}, 0.0}}};
  const double expect = 0.5 * (triplet_loss(s(1.0), s(-1.0), 0.1) + triplet_loss(s(1.0), s(0.98f), 0.1));
  EXPECT_NEAR(group_loss<double>(m, group, nullptr), expect, 1e-12);
  EXPECT_GT(expect, 0.0);
}

TEST(Davinci, RerankIsInvariantToCandidateOrder) {
  auto model = DavinciModel<float>::initialized(tiny_config());
  Rng rng(8);
  RerankInput in{"q", "d3", {}};
  for (int i = 0; i < 12; ++i) {
    std::vector<float> e(6);
    for (auto& x : e) x = static_cast<float>(rng.uniform(-1, 1));
    in.candidates.push_back({"d" + std::to_string(i), e, std::pow(0.95, i + 1)});
  }
  const auto first = rerank(model, in);
  for (int trial = 0; trial < 5; ++trial) {
    rng.shuffle(in.candidates);
    EXPECT_EQ(rerank(model, in), first);
  }
}

TEST(Davinci, ConfigJsonRoundTripAndValidation) {
  auto c = tiny_config(Ablation::scalar_gate);
  c.optimizer.rule = nn::UpdateRule::sgd_momentum;
  c.prior.mode = PriorMode::softmax;
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<DavinciConfig>(), c);
  c.margin = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c.margin = 0.1;
  c.negatives = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_EQ(parse_ablation("A3"), Ablation::softmax_prior);
  EXPECT_EQ(parse_ablation("scalar_gate"), Ablation::scalar_gate);
  EXPECT_EQ(parse_ablation("full"), Ablation::full);
  EXPECT_THROW(parse_ablation("A9"), ValidationError);
}

TEST(Davinci, CheckpointRoundTrip) {
  support::TempDir dir("ckpt");
  const auto model = DavinciModel<float>::initialized(tiny_config(Ablation::raw_prior));
  save_model(model, dir.file("m"), {{"note", "x"}});
  const auto back = load_model(dir.file("m"));
  EXPECT_TRUE(back == model);
  EXPECT_EQ(read_json_file(dir.file("m.json"))["note"], "x");
  EXPECT_THROW(load_model(dir.file("absent")), IoError);
}

namespace {

struct ToyData {
  Corpus corpus;
  std::vector<Query> queries;
  std::map<std::string, RetrievalList> lists;
};

// Each query context names its gold's topic word; documents carry one topic word each.
ToyData toy_data(std::size_t n_queries) {
  const Date d(2010, 1, 1);
  const std::vector<std::string> words = {"alpha", "bravo", "charlie", "delta", "echo", "foxtrot"};
  std::vector<Document> docs;
  for (std::size_t i = 0; i < words.size(); ++i) docs.push_back({"d" + std::to_string(i), words[i], words[i] + " text", d});
  ToyData t{Corpus(docs, {}), {}, {}};
  Rng rng(2);
  for (std::size_t q = 0; q < n_queries; ++q) {
    const std::size_t gold = rng.below(words.size());
    const std::string id = "q" + std::to_string(q);
    t.queries.push_back({id, "cite " + words[gold], "t", "a", Date(2011, 1, 1), "d" + std::to_string(gold), std::nullopt});
    RetrievalList l{id, {}, words.size()};
    std::vector<std::size_t> order(words.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i) l.entries.push_back({"d" + std::to_string(order[i]), 1.0 - 0.1 * i});
    t.lists.emplace(id, l);
  }
  return t;
}

}  // namespace

TEST(Davinci, TrainingSetSamplesDistinctNegativesAndInjectsGold) {
  auto t = toy_data(10);
  EncoderConfig ec;
  ec.dim = 16;
  const auto enc = TextEncoder::hashed(ec);
  auto cfg = tiny_config();
  cfg.d_enc2 = 16;
  cfg.negatives = 3;
  cfg.prior.k = 2;  // most golds fall outside the first two and are injected
  std::map<std::string, RetrievalList> truncated;
  for (auto& [id, l] : t.lists) truncated.emplace(id, l.truncated(2));
  const auto set = build_training_set(t.queries, truncated, t.corpus, enc, cfg);
  EXPECT_EQ(set.positives, 10u);
  std::map<std::string, std::vector<std::string>> negs;
  for (const auto& tr : set.triplets) {
    const auto& q = *std::find_if(t.queries.begin(), t.queries.end(), [&](const Query& x) { return x.id == tr.query_id; });
    EXPECT_EQ(tr.positive.doc_id, q.gold_id);
    EXPECT_NE(tr.negative.doc_id, q.gold_id);
    negs[tr.query_id].push_back(tr.negative.doc_id);
    const bool gold_retrieved = truncated.at(q.id).entries[0].doc_id == q.gold_id ||
                                truncated.at(q.id).entries[1].doc_id == q.gold_id;
    if (!gold_retrieved) {
      EXPECT_EQ(tr.positive.prior, std::pow(0.95, 3));
    }
  }
  for (auto& [id, n] : negs) {
    std::sort(n.begin(), n.end());
    EXPECT_EQ(std::unique(n.begin(), n.end()), n.end());
    EXPECT_LE(n.size(), 3u);
  }
  // Same seed, same set.
  const auto again = build_training_set(t.queries, truncated, t.corpus, enc, cfg);
  ASSERT_EQ(again.triplets.size(), set.triplets.size());
  for (std::size_t i = 0; i < set.triplets.size(); ++i) {
    EXPECT_EQ(again.triplets[i].negative.doc_id, set.triplets[i].negative.doc_id);
  }
  t.lists.erase("q0");
  EXPECT_THROW(build_training_set(t.queries, t.lists, t.corpus, enc, cfg), NotFoundError);
}

TEST(Davinci, TrainingReducesLossAndIsDeterministic) {
  const auto t = toy_data(60);
  EncoderConfig ec;
  ec.dim = 32;
  const auto enc = TextEncoder::hashed(ec);
  DavinciConfig cfg;
  cfg.d_enc2 = 32;
  cfg.d_h = 8;
  cfg.negatives = 4;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.optimizer.step_size = 0.01;
  cfg.prior.k = 6;
  cfg.seed = 3;
  const auto set = build_training_set(t.queries, t.lists, t.corpus, enc, cfg);
  const auto initial = DavinciModel<float>::initialized(cfg);
  const double before = evaluate_loss(initial, set.triplets);
  const auto r1 = train(initial, set.triplets);
  const auto r2 = train(initial, set.triplets);
  ASSERT_EQ(r1.loss_curve.size(), 30u);
  EXPECT_LT(r1.loss_curve.back(), 0.25 * before);
  EXPECT_EQ(r1.loss_curve, r2.loss_curve);
  EXPECT_TRUE(r1.model == r2.model);
  EXPECT_EQ(r1.best_epoch, 30u);
  EXPECT_THROW(train(initial, std::vector<TrainingTriplet>{}), ValidationError);
}

TEST(Davinci, ValidationKeepsTheBestEpoch) {
  const auto t = toy_data(40);
  EncoderConfig ec;
  ec.dim = 32;
  const auto enc = TextEncoder::hashed(ec);
  DavinciConfig cfg;
  cfg.d_enc2 = 32;
  cfg.d_h = 8;
  cfg.epochs = 8;
  cfg.optimizer.step_size = 0.01;
  cfg.prior.k = 6;
  const auto set = build_training_set(t.queries, t.lists, t.corpus, enc, cfg);
  std::vector<RerankInput> val;
  for (const auto& q : t.queries) {
    const auto& l = t.lists.at(q.id);
    val.push_back(rerank_input(q, l, priors_for_candidates(cfg.prior, l), t.corpus, enc));
  }
  std::size_t calls = 0;
  const auto r = train(DavinciModel<float>::initialized(cfg), set.triplets, &val,
                       [&](std::size_t, double, double) { ++calls; });
  EXPECT_EQ(calls, 8u);
  ASSERT_EQ(r.val_mrr.size(), 8u);
  const auto best = std::max_element(r.val_mrr.begin(), r.val_mrr.end());
  EXPECT_EQ(r.best_epoch, static_cast<std::size_t>(best - r.val_mrr.begin()) + 1);
  EXPECT_DOUBLE_EQ(mean_reciprocal_rank(r.model, val), *best);
}

TEST(Davinci, RerankInputRequiresAlignedPriors) {
  const auto t = toy_data(1);
  EncoderConfig ec;
  ec.dim = 16;
  const auto enc = TextEncoder::hashed(ec);
  const auto& q = t.queries[0];
  const auto& l = t.lists.at(q.id);
  auto priors = priors_for_candidates(PriorConfig{}, l);
  EXPECT_EQ(rerank_input(q, l, priors, t.corpus, enc).candidates.size(), l.entries.size());
  std::swap(priors.entries[0], priors.entries[1]);
  EXPECT_THROW(rerank_input(q, l, priors, t.corpus, enc), ValidationError);
  priors.entries.pop_back();
  EXPECT_THROW(rerank_input(q, l, priors, t.corpus, enc), ValidationError);
}
