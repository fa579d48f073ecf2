// Command-line front end for the retrieval and reranking pipeline.
//
// Exit codes: 0 success, 2 invalid input or configuration, 3 runtime failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "citerec/citerec.hpp"

namespace {

using namespace citerec;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string documents, edges, queries, workdir;
  std::string encoder;
  std::string prior_mode;
  double lambda = 0.0;
  std::size_t k = 0;
  long long seed = -1;
  std::string split_mode;
  bool verbose = false;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config_path, "JSON pipeline configuration");
  app->add_option("--set", o.overrides, "override a config field, e.g. davinci.margin=0.2")->take_all();
  app->add_option("--documents", o.documents, "documents JSONL");
  app->add_option("--edges", o.edges, "citation edges JSONL");
  app->add_option("--queries", o.queries, "queries JSONL");
  app->add_option("--workdir", o.workdir, "directory for artifacts");
  app->add_option("--encoder", o.encoder, "hash | file:<path>");
  app->add_option("--prior-mode", o.prior_mode, "exp_rank | raw_score | softmax");
  app->add_option("--lambda", o.lambda, "prior decay");
  app->add_option("--k", o.k, "candidate list size");
  app->add_option("--seed", o.seed, "global seed");
  app->add_option("--split-mode", o.split_mode, "inductive | transductive");
  app->add_flag("-v,--verbose", o.verbose, "log training progress");
}

PipelineConfig resolve_config(const CommonOptions& o) {
  PipelineConfig c = o.config_path.empty() ? PipelineConfig{} : load_pipeline_config(o.config_path);
  if (const char* env = std::getenv("CITEREC_WORKDIR"); env && *env) c.paths.workdir = env;
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.documents.empty()) c.paths.documents = o.documents;
  if (!o.edges.empty()) c.paths.edges = o.edges;
  if (!o.queries.empty()) c.paths.queries = o.queries;
  if (!o.workdir.empty()) c.paths.workdir = o.workdir;
  if (!o.encoder.empty()) c.encoder_source = o.encoder;
  if (!o.prior_mode.empty()) c.davinci.prior.mode = parse_enum<PriorMode>(nlohmann::json(o.prior_mode), "prior mode");
  if (o.lambda != 0.0) c.davinci.prior.lambda = o.lambda;
  if (o.k != 0) c.davinci.prior.k = o.k;
  if (o.seed >= 0) c.seed = static_cast<std::uint64_t>(o.seed);
  if (o.split_mode == "inductive") c.split.mode = SplitMode::inductive;
  else if (o.split_mode == "transductive") c.split.mode = SplitMode::transductive;
  else if (!o.split_mode.empty()) throw ValidationError("unknown split mode '" + o.split_mode + "'");
  // A file encoder fixes the dimension.
  if (c.encoder_source.rfind("file:", 0) == 0) {
    c.encoder.dim = load_embeddings(c.encoder_source.substr(5)).dim();
  }
  c.sync();
  c.validate();
  return c;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ValidationError("expected a comma-separated list of positive integers, got '" + text + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// Rankings file: one JSON object per line with "qid" and ordered "candidates".
std::map<std::string, std::vector<std::string>> read_rankings(const std::string& path) {
  std::map<std::string, std::vector<std::string>> rankings;
  auto in = detail::open_input(path);
  detail::for_each_json_line(in, [&](const nlohmann::json& j, std::size_t line) {
    try {
      const auto list = RetrievalList::from_json(j);
      auto& ids = rankings[list.query_id];
      for (const auto& e : list.entries) ids.push_back(e.doc_id);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad ranking record: ") + e.what(), line);
    }
  });
  return rankings;
}

SplitRole parse_role(const std::string& s) {
  if (s == "train") return SplitRole::train;
  if (s == "val") return SplitRole::val;
  if (s == "test") return SplitRole::test;
  throw ValidationError("unknown split role '" + s + "'");
}

int run(int argc, char** argv) {
  CLI::App app{"citerec: citation recommendation with profile-enriched retrieval and a gated reranker"};
  app.require_subcommand(1);
  CommonOptions common;

  // fixture gen
  auto* fixture = app.add_subcommand("fixture", "synthetic corpus");
  fixture->require_subcommand(1);
  auto* fixture_gen = fixture->add_subcommand("gen", "write a synthetic corpus");
  std::string out_dir = "fixture";
  FixtureConfig fixture_cfg;
  fixture_gen->add_option("--out-dir", out_dir, "output directory");
  fixture_gen->add_option("--documents", fixture_cfg.documents, "number of documents");
  fixture_gen->add_option("--seed", fixture_cfg.seed, "generator seed");
  fixture_gen->add_option("--generic-rate", fixture_cfg.generic_rate, "share of generic citation contexts");
  fixture_gen->add_option("--seminal-weight", fixture_cfg.seminal_weight, "citation preference of seminal papers");

  auto* ingest = app.add_subcommand("ingest", "validate a corpus and report ingestion counts");
  add_common(ingest, common);

  auto* split = app.add_subcommand("split", "build the query split and write its manifest");
  add_common(split, common);

  auto* profile = app.add_subcommand("profile", "first-stage retrieval");
  profile->require_subcommand(1);
  auto* profile_build = profile->add_subcommand("build", "build and persist the profiled index");
  add_common(profile_build, common);
  auto* profile_retrieve = profile->add_subcommand("retrieve", "retrieve candidates for every query");
  add_common(profile_retrieve, common);
  auto* profile_sweep = profile->add_subcommand("sweep", "grid over profile and query weights");
  add_common(profile_sweep, common);
  std::string grid_spec = "0:1:0.1";
  std::string sweep_metric = "recall@10";
  std::string sweep_role = "val";
  profile_sweep->add_option("--grid", grid_spec, "lo:hi:step for alpha and gamma");
  profile_sweep->add_option("--metric", sweep_metric, "mrr | recall@10 | ndcg@10");
  profile_sweep->add_option("--role", sweep_role, "query set to evaluate: val | test");

  auto* davinci = app.add_subcommand("davinci", "second-stage reranker");
  davinci->require_subcommand(1);
  auto* davinci_train = davinci->add_subcommand("train", "train on persisted retrieval lists");
  add_common(davinci_train, common);
  auto* davinci_rerank = davinci->add_subcommand("rerank", "rerank persisted test lists with the trained model");
  add_common(davinci_rerank, common);
  auto* davinci_ablate = davinci->add_subcommand("ablate", "train and evaluate an ablated variant");
  add_common(davinci_ablate, common);
  std::string variant;
  davinci_ablate->add_option("--variant", variant, "A1 | A2 | A3 | A4")->required();

  auto* eval = app.add_subcommand("eval", "score a rankings file against query golds");
  std::string run_path, eval_queries, ks_text = "5,10,20";
  bool detail_rows = false;
  eval->add_option("--run", run_path, "rankings JSONL (qid, candidates)")->required();
  eval->add_option("--queries", eval_queries, "queries JSONL")->required();
  eval->add_option("--ks", ks_text, "cutoffs, comma separated");
  eval->add_flag("--per-query", detail_rows, "include per-query ranks");

  auto* pipeline = app.add_subcommand("pipeline", "run every stage end to end");
  add_common(pipeline, common);

  auto* sweep_k_cmd = app.add_subcommand("sweep-k", "reranking quality against candidate list size");
  add_common(sweep_k_cmd, common);
  std::string k_values = "10,50,100,300";
  bool reuse_model = false;
  sweep_k_cmd->add_option("--values", k_values, "k values, comma separated");
  sweep_k_cmd->add_flag("--reuse-model", reuse_model, "train once and score truncated lists");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (fixture_gen->parsed()) {
    const auto data = generate_fixture(fixture_cfg);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());
    const auto dir = std::filesystem::path(out_dir);
    write_fixture(data, (dir / "documents.jsonl").string(), (dir / "edges.jsonl").string(),
                  (dir / "queries.jsonl").string());
    print_json({{"documents", data.documents.size()},
                {"edges", data.edges.size()},
                {"queries", data.queries.size()},
                {"config", fixture_cfg.to_json()}});
    return 0;
  }

  if (eval->parsed()) {
    const auto rankings = read_rankings(run_path);
    std::map<std::string, std::string> golds;
    for (const auto& q : load_queries(eval_queries)) {
      if (rankings.count(q.id)) golds[q.id] = q.gold_id;
    }
    const auto report = evaluate(rankings, golds, parse_list(ks_text));
    print_json(report.to_json(detail_rows));
    std::cerr << report.to_table();
    return 0;
  }

  Pipeline p(resolve_config(common));

  if (ingest->parsed()) {
    p.write_ingest_report();
    print_json(p.ingest().report.to_json());
  } else if (split->parsed()) {
    p.write_split_manifest();
    const auto m = p.split().manifest();
    print_json(m.at("counts"));
  } else if (profile_build->parsed()) {
    p.write_index();
    print_json(read_json_file(p.path("index.json")));
  } else if (profile_retrieve->parsed()) {
    const auto idx = p.load_index();
    p.run_retrieval_stage(idx);
    const auto test = p.load_retrievals(SplitRole::test);
    const auto report = p.evaluate_lists(SplitRole::test, test, p.config().retrieval_ks);
    print_json(report.to_json());
    std::cerr << report.to_table("retrieval");
  } else if (profile_sweep->parsed()) {
    SweepInputs in;
    in.corpus = &p.corpus();
    in.base_vectors = &p.base_vectors();
    in.context_vectors = &p.context_vectors();
    in.split = &p.split();
    in.queries = &p.queries_of(parse_role(sweep_role));
    in.encoder = &p.encoder();
    in.options = p.profile_options();
    in.depth = p.config().davinci.prior.k;
    const auto result = sweep_profile_weights(in, parse_profile_grid(grid_spec), parse_sweep_metric(sweep_metric));
    std::cout << result.to_csv();
    const auto& best = result.points[result.best];
    std::fprintf(stderr, "best: alpha=%.4f beta=%.4f gamma=%.4f delta=%.4f value=%.6f\n", best.weights.alpha,
                 best.weights.beta, best.weights.gamma, best.weights.delta, best.value);
  } else if (davinci_train->parsed()) {
    const auto result = p.train_model(p.load_retrievals(SplitRole::train), p.load_retrievals(SplitRole::val),
                                      p.config().davinci, common.verbose);
    p.write_model(result);
    print_json({{"best_epoch", result.best_epoch}, {"loss", result.loss_curve}, {"val_mrr", result.val_mrr}});
  } else if (davinci_rerank->parsed()) {
    const auto model = p.load_trained_model();
    const auto lists = p.load_retrievals(SplitRole::test);
    const auto ranked = p.rerank_role(model, SplitRole::test, lists);
    p.write_reranked(SplitRole::test, ranked);
    const auto report = p.evaluate_ranked(SplitRole::test, ranked, p.config().ks);
    print_json(report.to_json());
    std::cerr << report.to_table("rerank");
  } else if (davinci_ablate->parsed()) {
    DavinciConfig dc = p.config().davinci;
    dc.ablation = parse_ablation(variant);
    const auto train_lists = p.load_retrievals(SplitRole::train);
    const auto val_lists = p.load_retrievals(SplitRole::val);
    const auto test_lists = p.load_retrievals(SplitRole::test);
    const auto result = p.train_model(train_lists, val_lists, dc, common.verbose);
    const auto label = ablation_label(dc.ablation);
    save_model(result.model, p.path("model_" + label), {{"best_epoch", result.best_epoch}});
    const auto ranked = p.rerank_role(result.model, SplitRole::test, test_lists);
    const auto report = p.evaluate_ranked(SplitRole::test, ranked, p.config().ks);
    Pipeline::write_json(p.path("report_" + label + ".json"), report.to_json());
    print_json(report.to_json());
    std::cerr << report.to_table(label);
  } else if (pipeline->parsed()) {
    const auto report = p.run(common.verbose);
    print_json(report.to_json());
    std::cerr << report.retrieval.to_table("retrieval") << report.rerank.to_table("rerank");
  } else if (sweep_k_cmd->parsed()) {
    std::cout << sweep_k_csv(sweep_k(p.config(), parse_list(k_values), reuse_model));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const citerec::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const citerec::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const citerec::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const citerec::NotFoundError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: invalid JSON value: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
