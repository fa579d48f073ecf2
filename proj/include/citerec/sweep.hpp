#pragma once

// Grid evaluation of the profile weights over a query set.

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "citerec/corpus.hpp"
#include "citerec/embedding.hpp"
#include "citerec/metrics.hpp"
#include "citerec/profiler.hpp"
#include "citerec/split.hpp"

namespace citerec {

enum class SweepMetric { mrr, recall_at_10, ndcg_at_10 };

inline SweepMetric parse_sweep_metric(const std::string& name) {
  if (name == "mrr" || name == "MRR") return SweepMetric::mrr;
  if (name == "recall@10" || name == "Recall@10" || name == "recall_at_10") return SweepMetric::recall_at_10;
  if (name == "ndcg@10" || name == "NDCG@10" || name == "ndcg_at_10") return SweepMetric::ndcg_at_10;
  throw ValidationError("unknown sweep metric '" + name + "'");
}

inline double metric_value(const EvalReport& r, SweepMetric m) {
  switch (m) {
    case SweepMetric::recall_at_10: return r.recall_at.at(10);
    case SweepMetric::ndcg_at_10: return r.ndcg_at.at(10);
    case SweepMetric::mrr: break;
  }
  return r.mrr;
}

// alpha (beta = 1 - alpha) x gamma (delta = 1 - gamma) on [lo, hi] with `step`.
inline std::vector<ProfileWeights> profile_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || lo < 0.0 || hi > 1.0 || lo > hi) throw ValidationError("invalid sweep grid");
  std::vector<double> values;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) values.push_back(std::min(hi, lo + static_cast<double>(i) * step));
  std::vector<ProfileWeights> grid;
  for (double a : values) {
    for (double g : values) grid.push_back({a, 1.0 - a, g, 1.0 - g});
  }
  return grid;
}

// Parses "lo:hi:step".
inline std::vector<ProfileWeights> parse_profile_grid(const std::string& spec) {
  double lo = 0, hi = 0, step = 0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3) {
    throw ValidationError("grid must look like lo:hi:step, got '" + spec + "'");
  }
  return profile_grid(lo, hi, step);
}

struct SweepPoint {
  ProfileWeights weights;
  double value = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::size_t best = 0;

  std::string to_csv() const {
    std::string out = "alpha,beta,gamma,delta,value\n";
    char buf[160];
    for (const auto& p : points) {
      std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f,%.4f,%.10f\n", p.weights.alpha, p.weights.beta, p.weights.gamma,
                    p.weights.delta, p.value);
      out += buf;
    }
    return out;
  }
};

struct SweepInputs {
  const Corpus* corpus = nullptr;
  const EmbeddingMatrix* base_vectors = nullptr;
  const EmbeddingMatrix* context_vectors = nullptr;
  const SplitResult* split = nullptr;
  const std::vector<Query>* queries = nullptr;  // members of `split`
  const TextEncoder* encoder = nullptr;
  ProfileOptions options;
  std::size_t depth = 300;
};

inline SweepResult sweep_profile_weights(const SweepInputs& in, const std::vector<ProfileWeights>& grid,
                                         SweepMetric metric) {
  if (grid.empty()) throw ValidationError("empty sweep grid");
  for (const auto& w : grid) w.validate(in.options.allow_profile_ablation);
  // Query-side encodings and masks do not depend on the weights.
  std::vector<std::vector<float>> ctx, meta;
  std::vector<std::vector<char>> masks;
  std::map<std::string, std::string> golds;
  for (const auto& q : *in.queries) {
    ctx.push_back(in.encoder->encode(q.context));
    meta.push_back(in.encoder->encode(q.metadata_text()));
    masks.push_back(in.split->admissible_mask(q));
    golds[q.id] = q.gold_id;
  }
  SweepResult result;
  std::map<std::pair<double, double>, ProfiledIndex> indices;
  for (const auto& w : grid) {
    auto key = std::make_pair(w.alpha, w.beta);
    auto it = indices.find(key);
    if (it == indices.end()) {
      it = indices.emplace(key, build_profiled_index(*in.corpus, *in.base_vectors, *in.context_vectors, w, in.options))
               .first;
    }
    std::map<std::string, std::vector<std::string>> rankings;
    for (std::size_t i = 0; i < in.queries->size(); ++i) {
      const auto vq = combine_query_vectors(ctx[i], meta[i], w);
      const auto list = retrieve(it->second, vq, std::span<const char>(masks[i]), in.depth);
      auto& ids = rankings[(*in.queries)[i].id];
      for (const auto& e : list.entries) ids.push_back(e.doc_id);
    }
    const auto report = evaluate(rankings, golds, {10});
    result.points.push_back({w, metric_value(report, metric)});
    if (result.points.back().value > result.points[result.best].value) result.best = result.points.size() - 1;
  }
  return result;
}

}  // namespace citerec
