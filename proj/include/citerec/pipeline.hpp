#pragma once

// End-to-end driver: ingest -> split -> profile -> retrieve -> train -> rerank
// -> evaluate, with every intermediate artifact written to a work directory.
// Artifacts carry a manifest holding the hash of the configuration slice that
// produced them; consumers refuse artifacts whose hash differs from their own.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "citerec/corpus.hpp"
#include "citerec/davinci.hpp"
#include "citerec/embedding.hpp"
#include "citerec/metrics.hpp"
#include "citerec/prior.hpp"
#include "citerec/profiler.hpp"
#include "citerec/split.hpp"
#include "citerec/sweep.hpp"
#include "citerec/util.hpp"

namespace citerec {

struct PipelinePaths {
  std::string documents;
  std::string edges;
  std::string queries;
  std::string workdir = "work";
};

struct PipelineConfig {
  PipelinePaths paths;
  std::uint64_t seed = 0;
  SplitConfig split;
  std::string encoder_source = "hash";  // "hash" or "file:<path>"
  EncoderConfig encoder;
  ProfileWeights profile;
  bool renormalize_profiles = false;
  DavinciConfig davinci;
  std::vector<std::size_t> ks = {5, 10, 20};
  std::vector<std::size_t> retrieval_ks = {10, 50, 300};

  void validate() const {
    split.validate();
    encoder.validate();
    profile.validate(true);
    davinci.validate();
    if (ks.empty() || retrieval_ks.empty()) throw ValidationError("metric cutoffs must not be empty");
  }

  nlohmann::json to_json() const {
    nlohmann::json dv = davinci;
    dv.erase("d_enc2");
    dv.erase("seed");
    return {{"paths",
             {{"documents", paths.documents},
              {"edges", paths.edges},
              {"queries", paths.queries},
              {"workdir", paths.workdir}}},
            {"seed", seed},
            {"split",
             {{"mode", split.mode},
              {"val_fraction", split.val_fraction},
              {"test_fraction", split.test_fraction},
              {"strategy", split.strategy},
              {"temporal_train", split.temporal_train}}},
            {"encoder",
             {{"source", encoder_source},
              {"dim", encoder.dim},
              {"ngram_min", encoder.ngram_min},
              {"ngram_max", encoder.ngram_max},
              {"casefold", encoder.casefold},
              {"seed", encoder.seed}}},
            {"profile",
             {{"alpha", profile.alpha},
              {"beta", profile.beta},
              {"gamma", profile.gamma},
              {"delta", profile.delta},
              {"renormalize", renormalize_profiles}}},
            {"davinci", dv},
            {"eval", {{"ks", ks}, {"retrieval_ks", retrieval_ks}}}};
  }

  static PipelineConfig from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
      if (j.contains("paths")) {
        const auto& p = j.at("paths");
        c.paths.documents = p.value("documents", c.paths.documents);
        c.paths.edges = p.value("edges", c.paths.edges);
        c.paths.queries = p.value("queries", c.paths.queries);
        c.paths.workdir = p.value("workdir", c.paths.workdir);
      }
      c.seed = j.value("seed", c.seed);
      if (j.contains("split")) {
        const auto& s = j.at("split");
        c.split.mode = enum_field(s, "mode", c.split.mode);
        c.split.val_fraction = s.value("val_fraction", c.split.val_fraction);
        c.split.test_fraction = s.value("test_fraction", c.split.test_fraction);
        c.split.strategy = enum_field(s, "strategy", c.split.strategy);
        c.split.temporal_train = s.value("temporal_train", c.split.temporal_train);
      }
      if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        c.encoder_source = e.value("source", c.encoder_source);
        c.encoder.dim = e.value("dim", c.encoder.dim);
        c.encoder.ngram_min = e.value("ngram_min", c.encoder.ngram_min);
        c.encoder.ngram_max = e.value("ngram_max", c.encoder.ngram_max);
        c.encoder.casefold = e.value("casefold", c.encoder.casefold);
        c.encoder.seed = e.value("seed", c.encoder.seed);
      }
      if (j.contains("profile")) {
        const auto& p = j.at("profile");
        c.profile.alpha = p.value("alpha", c.profile.alpha);
        c.profile.beta = p.value("beta", c.profile.beta);
        c.profile.gamma = p.value("gamma", c.profile.gamma);
        c.profile.delta = p.value("delta", c.profile.delta);
        c.renormalize_profiles = p.value("renormalize", c.renormalize_profiles);
      }
      if (j.contains("davinci")) c.davinci = j.at("davinci").get<DavinciConfig>();
      if (j.contains("eval")) {
        const auto& e = j.at("eval");
        c.ks = e.value("ks", c.ks);
        c.retrieval_ks = e.value("retrieval_ks", c.retrieval_ks);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("invalid pipeline config: ") + e.what());
    }
    c.sync();
    return c;
  }

  // Propagates the single seed and the encoder dimension into nested configs.
  void sync() {
    split.seed = seed;
    davinci.seed = seed;
    davinci.d_enc2 = encoder.dim;
  }

  // Sets a dotted path (e.g. "davinci.margin") from text; the text is read as
  // JSON when possible, otherwise as a string.
  void set(const std::string& dotted, const std::string& value) {
    auto j = to_json();
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      parsed = value;
    }
    std::string pointer = "/";
    for (char ch : dotted) pointer += ch == '.' ? '/' : ch;
    const nlohmann::json::json_pointer ptr(pointer);
    if (!j.contains(ptr)) throw ValidationError("unknown config field '" + dotted + "'");
    j[ptr] = parsed;
    auto updated = from_json(j);
    if (dotted == "davinci.d_enc2" || dotted == "davinci.seed") updated = *this;
    *this = updated;
  }
};

inline PipelineConfig load_pipeline_config(const std::string& path) {
  return PipelineConfig::from_json(read_json_file(path));
}

inline std::string hash_json(const nlohmann::json& j) { return to_hex(fnv1a(j.dump())); }

// Evaluation query roles in file names.
inline const char* role_name(SplitRole r) {
  switch (r) {
    case SplitRole::train: return "train";
    case SplitRole::val: return "val";
    case SplitRole::test: return "test";
  }
  return "train";
}

using RetrievalSet = std::map<std::string, RetrievalList>;

struct PipelineReport {
  EvalReport retrieval;
  EvalReport rerank;
  nlohmann::json training;  // loss curve, validation curve, best epoch
  std::string config_hash;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"config_hash", config_hash},
            {"seed", seed},
            {"retrieval", retrieval.to_json()},
            {"rerank", rerank.to_json()},
            {"training", training}};
  }
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config) : config_(std::move(config)) {
    config_.sync();
    config_.validate();
  }

  const PipelineConfig& config() const { return config_; }
  std::string path(const std::string& name) const {
    return (std::filesystem::path(config_.paths.workdir) / name).string();
  }

  // Stage hashes chain: each covers its own config slice and its upstream.
  std::string data_hash() {
    std::ostringstream qs;
    write_queries(qs, queries());
    return to_hex(fnv1a(qs.str(), corpus().content_hash()));
  }
  std::string split_hash() {
    return hash_json({{"data", data_hash()}, {"split", config_.to_json()["split"]}, {"seed", config_.seed}});
  }
  std::string index_hash() {
    const auto j = config_.to_json();
    return hash_json({{"split", split_hash()}, {"encoder", j["encoder"]}, {"profile", j["profile"]}});
  }
  std::string retrieval_hash() { return hash_json({{"index", index_hash()}, {"k", config_.davinci.prior.k}}); }
  std::string model_hash() {
    return hash_json({{"retrieval", retrieval_hash()}, {"davinci", nlohmann::json(config_.davinci)}});
  }
  std::string report_hash() {
    return hash_json({{"model", model_hash()}, {"eval", config_.to_json()["eval"]}});
  }

  void ensure_workdir() const {
    std::error_code ec;
    std::filesystem::create_directories(config_.paths.workdir, ec);
    if (ec) throw IoError("cannot create work directory '" + config_.paths.workdir + "': " + ec.message());
  }

  // ---- ingestion -------------------------------------------------------

  const IngestResult& ingest() {
    if (!ingest_) {
      if (config_.paths.documents.empty() || config_.paths.edges.empty()) {
        throw ValidationError("documents and edges paths are required");
      }
      ingest_ = ingest_corpus(config_.paths.documents, config_.paths.edges);
    }
    return *ingest_;
  }
  const Corpus& corpus() { return ingest().corpus; }

  const std::vector<Query>& queries() {
    if (!queries_) {
      if (config_.paths.queries.empty()) throw ValidationError("queries path is required");
      queries_ = load_queries(config_.paths.queries);
    }
    return *queries_;
  }

  void write_ingest_report() {
    ensure_workdir();
    write_json(path("ingest_report.json"), ingest().report.to_json());
  }

  // ---- split ------------------------------------------------------------

  const SplitResult& split() {
    if (!split_) split_ = build_split(corpus(), queries(), config_.split);
    return *split_;
  }

  void write_split_manifest() {
    ensure_workdir();
    auto m = split().manifest();
    m["stage_hash"] = split_hash();
    m["seed"] = config_.seed;
    write_json(path("split.json"), m);
  }

  // ---- encoder and index ----------------------------------------------

  const TextEncoder& encoder() {
    if (!encoder_) encoder_ = TextEncoder::from_spec(config_.encoder_source, config_.encoder);
    if (encoder_->dim() != config_.davinci.d_enc2) {
      throw ValidationError("encoder dimension " + std::to_string(encoder_->dim()) +
                            " does not match the configured dimension " + std::to_string(config_.davinci.d_enc2));
    }
    return *encoder_;
  }

  const EmbeddingMatrix& base_vectors() {
    if (!base_) base_ = encode_documents(corpus(), encoder());
    return *base_;
  }
  const EmbeddingMatrix& context_vectors() {
    if (!contexts_) contexts_ = encode_contexts(corpus(), encoder());
    return *contexts_;
  }

  ProfileOptions profile_options() {
    ProfileOptions opts;
    opts.renormalize = config_.renormalize_profiles;
    opts.allow_profile_ablation = true;
    if (split().mode() == SplitMode::inductive) {
      // only papers of the inductive corpus contribute their citations
      opts.citer_mask.assign(corpus().size(), 0);
      for (const auto& id : split().corpus_ids()) opts.citer_mask[corpus().position(id)] = 1;
    }
    return opts;
  }

  const ProfiledIndex& index() {
    if (!index_) {
      index_ = build_profiled_index(corpus(), base_vectors(), context_vectors(), config_.profile, profile_options());
    }
    return *index_;
  }

  void write_index() {
    ensure_workdir();
    write_embeddings(path("index.cvec"), index().to_matrix());
    write_json(path("index.json"), {{"stage_hash", index_hash()},
                                    {"seed", config_.seed},
                                    {"weights_used", config_.profile.to_json()},
                                    {"renormalized", config_.renormalize_profiles},
                                    {"corpus_hash", to_hex(corpus().content_hash())},
                                    {"documents", index().size()},
                                    {"dim", index().dim()}});
  }

  ProfiledIndex load_index() {
    check_manifest("index.json", index_hash());
    return ProfiledIndex::from_matrix(load_embeddings(path("index.cvec")), config_.profile);
  }

  // ---- retrieval ------------------------------------------------------

  RetrievalList retrieve_query(const ProfiledIndex& idx, const Query& q, std::size_t k) {
    const auto vq = compose_query_vector(q, encoder(), config_.profile);
    const auto mask = split().admissible_mask(q);
    return retrieve(idx, vq, std::span<const char>(mask), k, q.id);
  }

  const std::vector<Query>& queries_of(SplitRole role) {
    switch (role) {
      case SplitRole::train: return split().train();
      case SplitRole::val: return split().val();
      case SplitRole::test: return split().test();
    }
    return split().train();
  }

  RetrievalSet retrieve_role(const ProfiledIndex& idx, SplitRole role, std::size_t k) {
    RetrievalSet out;
    for (const auto& q : queries_of(role)) out.emplace(q.id, retrieve_query(idx, q, k));
    return out;
  }

  void write_retrievals(SplitRole role, const RetrievalSet& lists) {
    ensure_workdir();
    auto out = detail::open_output(path(std::string("retrieval_") + role_name(role) + ".jsonl"));
    for (const auto& q : queries_of(role)) out << lists.at(q.id).to_json().dump() << '\n';
    write_json(path("retrieval.json"), {{"stage_hash", retrieval_hash()},
                                        {"seed", config_.seed},
                                        {"k", config_.davinci.prior.k},
                                        {"format", "one JSON object per query: qid, k, candidates[{id, score}]"}});
  }

  RetrievalSet load_retrievals(SplitRole role) {
    check_manifest("retrieval.json", retrieval_hash());
    RetrievalSet out;
    auto in = detail::open_input(path(std::string("retrieval_") + role_name(role) + ".jsonl"));
    detail::for_each_json_line(in, [&](const nlohmann::json& r, std::size_t line) {
      try {
        auto l = RetrievalList::from_json(r);
        out.emplace(l.query_id, std::move(l));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad retrieval record: ") + e.what(), line);
      }
    });
    return out;
  }

  // Retrieves and persists the lists of every role.
  void run_retrieval_stage(const ProfiledIndex& idx) {
    for (auto role : {SplitRole::train, SplitRole::val, SplitRole::test}) {
      write_retrievals(role, retrieve_role(idx, role, config_.davinci.prior.k));
    }
  }

  // ---- reranker -------------------------------------------------------

  std::vector<RerankInput> rerank_inputs(SplitRole role, const RetrievalSet& lists, const DavinciConfig& dc) {
    std::vector<RerankInput> inputs;
    const auto prior_cfg = dc.effective_prior();
    for (const auto& q : queries_of(role)) {
      const auto list = lists.at(q.id).truncated(prior_cfg.k);
      const auto priors = priors_for_candidates(prior_cfg, list);
      inputs.push_back(rerank_input(q, list, priors, corpus(), encoder()));
    }
    return inputs;
  }

  TrainResult<float> train_model(const RetrievalSet& train_lists, const RetrievalSet& val_lists,
                                 const DavinciConfig& dc, bool verbose = false) {
    RetrievalSet truncated;
    for (const auto& [qid, l] : train_lists) truncated.emplace(qid, l.truncated(dc.prior.k));
    const auto set = build_training_set(split().train(), truncated, corpus(), encoder(), dc);
    if (set.triplets.empty()) throw ValidationError("no training triplets could be built");
    const auto val = rerank_inputs(SplitRole::val, val_lists, dc);
    auto model = DavinciModel<float>::initialized(dc);
    std::function<void(std::size_t, double, double)> log;
    if (verbose) {
      log = [](std::size_t epoch, double loss, double mrr) {
        std::fprintf(stderr, "epoch %3zu  loss %.6f  val_mrr %.4f\n", epoch, loss, mrr);
      };
    }
    return train(std::move(model), set.triplets, val.empty() ? nullptr : &val, log);
  }

  void write_model(const TrainResult<float>& result, const std::string& prefix = "model") {
    ensure_workdir();
    save_model(result.model, path(prefix),
               {{"stage_hash", model_hash()}, {"best_epoch", result.best_epoch}, {"epochs_run", result.loss_curve.size()}});
    write_json(path(prefix + "_train_log.json"),
               {{"loss", result.loss_curve}, {"val_mrr", result.val_mrr}, {"best_epoch", result.best_epoch}});
  }

  DavinciModel<float> load_trained_model(const std::string& prefix = "model") {
    check_manifest(prefix + ".json", model_hash());
    return load_model(path(prefix));
  }

  // Reranked test lists keyed by query id.
  std::map<std::string, std::vector<ScoredDoc>> rerank_role(const DavinciModel<float>& model, SplitRole role,
                                                            const RetrievalSet& lists) {
    std::map<std::string, std::vector<ScoredDoc>> out;
    for (const auto& in : rerank_inputs(role, lists, model.config())) out.emplace(in.query_id, rerank(model, in));
    return out;
  }

  void write_reranked(SplitRole role, const std::map<std::string, std::vector<ScoredDoc>>& ranked) {
    ensure_workdir();
    auto out = detail::open_output(path(std::string("reranked_") + role_name(role) + ".jsonl"));
    for (const auto& [qid, docs] : ranked) {
      nlohmann::json cands = nlohmann::json::array();
      for (const auto& d : docs) cands.push_back({{"id", d.doc_id}, {"score", d.score}});
      out << nlohmann::json{{"qid", qid}, {"candidates", cands}}.dump() << '\n';
    }
  }

  // ---- evaluation -----------------------------------------------------

  std::map<std::string, std::string> golds(SplitRole role) {
    std::map<std::string, std::string> g;
    for (const auto& q : queries_of(role)) g[q.id] = q.gold_id;
    return g;
  }

  EvalReport evaluate_lists(SplitRole role, const RetrievalSet& lists, const std::vector<std::size_t>& ks) {
    std::map<std::string, std::vector<std::string>> rankings;
    for (const auto& q : queries_of(role)) {
      auto& ids = rankings[q.id];
      for (const auto& e : lists.at(q.id).entries) ids.push_back(e.doc_id);
    }
    return evaluate(rankings, golds(role), ks);
  }

  EvalReport evaluate_ranked(SplitRole role, const std::map<std::string, std::vector<ScoredDoc>>& ranked,
                             const std::vector<std::size_t>& ks) {
    std::map<std::string, std::vector<std::string>> rankings;
    for (const auto& [qid, docs] : ranked) {
      auto& ids = rankings[qid];
      for (const auto& d : docs) ids.push_back(d.doc_id);
    }
    return evaluate(rankings, golds(role), ks);
  }

  // Full chain with persisted intermediates. Retrieval lists are re-read from
  // disk before reranking so the file is the only hand-off between stages.
  PipelineReport run(bool verbose = false) {
    ensure_workdir();
    write_ingest_report();
    write_split_manifest();
    write_index();
    run_retrieval_stage(index());
    const auto train_lists = load_retrievals(SplitRole::train);
    const auto val_lists = load_retrievals(SplitRole::val);
    const auto test_lists = load_retrievals(SplitRole::test);
    auto trained = train_model(train_lists, val_lists, config_.davinci, verbose);
    write_model(trained);
    const auto ranked = rerank_role(trained.model, SplitRole::test, test_lists);
    write_reranked(SplitRole::test, ranked);

    PipelineReport report;
    report.config_hash = report_hash();
    report.seed = config_.seed;
    report.retrieval = evaluate_lists(SplitRole::test, test_lists, config_.retrieval_ks);
    report.rerank = evaluate_ranked(SplitRole::test, ranked, config_.ks);
    report.training = {{"loss", trained.loss_curve}, {"val_mrr", trained.val_mrr}, {"best_epoch", trained.best_epoch}};
    write_json(path("report.json"), report.to_json());
    std::ofstream txt(path("report.txt"), std::ios::trunc);
    txt << report.retrieval.to_table("retrieval") << report.rerank.to_table("rerank");
    return report;
  }

  static void write_json(const std::string& file, const nlohmann::json& j) {
    auto out = detail::open_output(file);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failure on '" + file + "'");
  }

 private:
  void check_manifest(const std::string& name, const std::string& expected) {
    const auto m = read_json_file(path(name));
    const auto found = m.value("stage_hash", std::string());
    if (found != expected) {
      throw ValidationError("artifact '" + name + "' was produced under config hash " + found +
                            " but the current config hashes to " + expected + "; rebuild the upstream stage");
    }
  }

  PipelineConfig config_;
  std::optional<IngestResult> ingest_;
  std::optional<std::vector<Query>> queries_;
  std::optional<SplitResult> split_;
  std::optional<TextEncoder> encoder_;
  std::optional<EmbeddingMatrix> base_, contexts_;
  std::optional<ProfiledIndex> index_;
};

inline PipelineReport run_pipeline(const PipelineConfig& config, bool verbose = false) {
  Pipeline p(config);
  return p.run(verbose);
}

struct SweepKRow {
  std::size_t k = 0;
  EvalReport rerank;
};

// Reranking quality as a function of the candidate list size. With
// `reuse_model`, one model trained at the configured k scores truncated lists;
// otherwise a model is trained per k.
inline std::vector<SweepKRow> sweep_k(const PipelineConfig& config, const std::vector<std::size_t>& k_values,
                                      bool reuse_model) {
  if (k_values.empty()) throw ValidationError("empty k list");
  for (std::size_t k : k_values) {
    if (k < 1) throw ValidationError("k values must be >= 1");
  }
  PipelineConfig wide = config;
  for (std::size_t k : k_values) wide.davinci.prior.k = std::max(wide.davinci.prior.k, k);
  Pipeline p(wide);
  const auto& idx = p.index();
  const std::size_t depth = wide.davinci.prior.k;
  const auto train_lists = p.retrieve_role(idx, SplitRole::train, depth);
  const auto val_lists = p.retrieve_role(idx, SplitRole::val, depth);
  const auto test_lists = p.retrieve_role(idx, SplitRole::test, depth);

  std::vector<SweepKRow> rows;
  std::optional<DavinciModel<float>> shared;
  if (reuse_model) shared = p.train_model(train_lists, val_lists, config.davinci).model;
  for (std::size_t k : k_values) {
    DavinciConfig dc = config.davinci;
    dc.prior.k = k;
    dc.seed = config.seed;
    dc.d_enc2 = config.encoder.dim;
    DavinciModel<float> model = shared ? *shared : p.train_model(train_lists, val_lists, dc).model;
    std::map<std::string, std::vector<ScoredDoc>> ranked;
    for (const auto& in : p.rerank_inputs(SplitRole::test, test_lists, dc)) ranked.emplace(in.query_id, rerank(model, in));
    rows.push_back({k, p.evaluate_ranked(SplitRole::test, ranked, config.ks)});
  }
  return rows;
}

inline std::string sweep_k_csv(const std::vector<SweepKRow>& rows) {
  std::string out = "k,mrr";
  if (rows.empty()) return out + "\n";
  for (const auto& [k, _] : rows.front().rerank.recall_at) out += ",recall@" + std::to_string(k);
  for (const auto& [k, _] : rows.front().rerank.ndcg_at) out += ",ndcg@" + std::to_string(k);
  out += "\n";
  char buf[64];
  for (const auto& r : rows) {
    out += std::to_string(r.k);
    std::snprintf(buf, sizeof buf, ",%.6f", r.rerank.mrr);
    out += buf;
    for (const auto& [_, v] : r.rerank.recall_at) {
      std::snprintf(buf, sizeof buf, ",%.6f", v);
      out += buf;
    }
    for (const auto& [_, v] : r.rerank.ndcg_at) {
      std::snprintf(buf, sizeof buf, ",%.6f", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace citerec
