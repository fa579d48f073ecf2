// Generates a small synthetic corpus, builds the profiled index, retrieves
// candidates for a few test queries and reranks them with a briefly trained
// model.

#include <cstdio>

#include "citerec/citerec.hpp"

int main() {
  using namespace citerec;

  FixtureConfig fixture;
  fixture.documents = 600;
  const auto data = generate_fixture(fixture);
  write_fixture(data, "quickstart_documents.jsonl", "quickstart_edges.jsonl", "quickstart_queries.jsonl");

  PipelineConfig config;
  config.paths = {"quickstart_documents.jsonl", "quickstart_edges.jsonl", "quickstart_queries.jsonl", "quickstart_work"};
  config.encoder.dim = 128;
  config.davinci.d_h = 16;
  config.davinci.prior.k = 50;
  config.davinci.epochs = 5;
  config.sync();

  Pipeline pipeline(config);
  const auto& index = pipeline.index();
  const auto& query = pipeline.split().test().front();
  const auto list = pipeline.retrieve_query(index, query, 5);
  std::printf("query %s (gold %s)\n  context: %s\n", query.id.c_str(), query.gold_id.c_str(), query.context.c_str());
  for (const auto& e : list.entries) std::printf("  %s  %.4f\n", e.doc_id.c_str(), e.score);

  const auto report = pipeline.run();
  std::printf("%s%s", report.retrieval.to_table("retrieval").c_str(), report.rerank.to_table("rerank").c_str());
  return 0;
}
