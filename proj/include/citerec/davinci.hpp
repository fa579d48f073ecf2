#pragma once

// Second-stage reranker. A text tower projects the pair embedding, a score
// tower projects the retrieval prior, a sigmoid gate conditioned on the raw
// inputs masks the concatenated projections per dimension, and an output head
// maps the fused vector to a relevance score in (0, 1). Trained with a margin
// triplet loss over sampled negatives from the retrieved candidates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "citerec/corpus.hpp"
#include "citerec/embedding.hpp"
#include "citerec/errors.hpp"
#include "citerec/nn.hpp"
#include "citerec/prior.hpp"
#include "citerec/profiler.hpp"
#include "citerec/util.hpp"

namespace citerec {

enum class Ablation {
  full,
  semantics_only,  // A1: no prior anywhere
  raw_prior,       // A2: raw retrieval scores as the prior
  softmax_prior,   // A3: softmax-normalised scores as the prior
  scalar_gate,     // A4: one gate value broadcast over all features
};

NLOHMANN_JSON_SERIALIZE_ENUM(Ablation, {{Ablation::full, "full"},
                                        {Ablation::semantics_only, "semantics_only"},
                                        {Ablation::raw_prior, "raw_prior"},
                                        {Ablation::softmax_prior, "softmax_prior"},
                                        {Ablation::scalar_gate, "scalar_gate"}})

// Accepts "A1".."A4", "full", or the enum names.
inline Ablation parse_ablation(const std::string& name) {
  if (name == "A1") return Ablation::semantics_only;
  if (name == "A2") return Ablation::raw_prior;
  if (name == "A3") return Ablation::softmax_prior;
  if (name == "A4") return Ablation::scalar_gate;
  return parse_enum<Ablation>(nlohmann::json(name), "ablation");
}

inline std::string ablation_label(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::semantics_only: return "A1";
    case Ablation::raw_prior: return "A2";
    case Ablation::softmax_prior: return "A3";
    case Ablation::scalar_gate: return "A4";
  }
  return "full";
}

struct DavinciConfig {
  std::size_t d_enc2 = 256;
  std::size_t d_h = 256;
  std::size_t depth = 2;  // layers per tower
  double margin = 0.1;
  std::size_t negatives = 4;
  PriorConfig prior;
  Ablation ablation = Ablation::full;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  nn::OptimizerSettings optimizer;
  std::uint64_t seed = 0;

  void validate() const {
    if (d_enc2 < 1 || d_h < 1) throw ValidationError("d_enc2 and d_h must be >= 1");
    if (depth < 1) throw ValidationError("tower depth must be >= 1");
    if (!(margin > 0.0 && margin < 1.0)) throw ValidationError("margin must lie in (0, 1)");
    if (negatives < 1) throw ValidationError("negatives must be >= 1");
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    prior.validate();
    optimizer.validate();
  }

  // Prior transform actually fed to the model under the configured ablation.
  PriorConfig effective_prior() const {
    PriorConfig p = prior;
    if (ablation == Ablation::raw_prior) p.mode = PriorMode::raw_score;
    if (ablation == Ablation::softmax_prior) p.mode = PriorMode::softmax;
    return p;
  }

  bool uses_prior() const { return ablation != Ablation::semantics_only; }

  friend bool operator==(const DavinciConfig&, const DavinciConfig&) = default;
};

inline void to_json(nlohmann::json& j, const DavinciConfig& c) {
  j = {{"d_enc2", c.d_enc2},
       {"d_h", c.d_h},
       {"depth", c.depth},
       {"margin", c.margin},
       {"negatives", c.negatives},
       {"prior", {{"lambda", c.prior.lambda}, {"mode", c.prior.mode}, {"k", c.prior.k}}},
       {"ablation", c.ablation},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"optimizer",
        {{"rule", c.optimizer.rule},
         {"step_size", c.optimizer.step_size},
         {"momentum", c.optimizer.momentum},
         {"beta1", c.optimizer.beta1},
         {"beta2", c.optimizer.beta2},
         {"epsilon", c.optimizer.epsilon}}},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, DavinciConfig& c) {
  c.d_enc2 = j.value("d_enc2", c.d_enc2);
  c.d_h = j.value("d_h", c.d_h);
  c.depth = j.value("depth", c.depth);
  c.margin = j.value("margin", c.margin);
  c.negatives = j.value("negatives", c.negatives);
  if (j.contains("prior")) {
    const auto& p = j.at("prior");
    c.prior.lambda = p.value("lambda", c.prior.lambda);
    c.prior.mode = enum_field(p, "mode", c.prior.mode);
    c.prior.k = p.value("k", c.prior.k);
  }
  c.ablation = enum_field(j, "ablation", c.ablation);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    c.optimizer.rule = enum_field(o, "rule", c.optimizer.rule);
    c.optimizer.step_size = o.value("step_size", c.optimizer.step_size);
    c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
  }
  c.seed = j.value("seed", c.seed);
}

inline double triplet_loss(double s_pos, double s_neg, double margin) {
  return std::max(0.0, s_neg - s_pos + margin);
}

template <typename T>
class DavinciModel {
 public:
  struct Tape {
    typename nn::Mlp<T>::Tape text, score, gate, out;
    std::vector<T> h_concat;
    std::vector<T> gate_values;  // g, already broadcast for the scalar variant
    T output = T(0);
  };

  struct Gradients {
    nn::MlpGradients text, score, gate, out;

    void zero() {
      text.zero();
      score.zero();
      gate.zero();
      out.zero();
    }

    std::vector<std::span<double>> spans() {
      std::vector<std::span<double>> s;
      text.collect(s);
      score.collect(s);
      gate.collect(s);
      out.collect(s);
      return s;
    }
  };

  DavinciModel() = default;

  // Zero-parameter model with the configured shapes.
  explicit DavinciModel(DavinciConfig config) : config_(std::move(config)) {
    config_.validate();
    build([](const std::vector<std::size_t>& w, nn::Activation a) { return nn::Mlp<T>(w, a); });
  }

  static DavinciModel initialized(DavinciConfig config) {
    DavinciModel m;
    m.config_ = std::move(config);
    m.config_.validate();
    Rng rng = Rng(m.config_.seed).fork("davinci-init");
    m.build([&rng](const std::vector<std::size_t>& w, nn::Activation a) { return nn::Mlp<T>::he_uniform(w, a, rng); });
    return m;
  }

  const DavinciConfig& config() const { return config_; }
  nn::Mlp<T>& text_tower() { return text_; }
  nn::Mlp<T>& score_tower() { return score_; }
  nn::Mlp<T>& gate_network() { return gate_; }
  nn::Mlp<T>& output_head() { return out_; }
  const nn::Mlp<T>& gate_network() const { return gate_; }

  std::size_t fused_dim() const { return config_.uses_prior() ? 2 * config_.d_h : config_.d_h; }

  T score(std::span<const T> e_cls, double prior, Tape* tape = nullptr) const {
    if (e_cls.size() != config_.d_enc2) {
      throw ValidationError("pair embedding has " + std::to_string(e_cls.size()) + " entries, expected " +
                            std::to_string(config_.d_enc2));
    }
    Tape local;
    Tape& t = tape ? *tape : local;
    const bool with_prior = config_.uses_prior();
    std::vector<T> h = text_.forward(e_cls, &t.text);
    std::vector<T> gate_in(e_cls.begin(), e_cls.end());
    if (with_prior) {
      const T p[1] = {static_cast<T>(prior)};
      const auto h_score = score_.forward(std::span<const T>(p, 1), &t.score);
      h.insert(h.end(), h_score.begin(), h_score.end());
      gate_in.push_back(static_cast<T>(prior));
    }
    auto g = gate_.forward(gate_in, &t.gate);
    if (config_.ablation == Ablation::scalar_gate) g.assign(h.size(), g.front());
    std::vector<T> fused(h.size());
    for (std::size_t j = 0; j < h.size(); ++j) fused[j] = g[j] * h[j];
    const auto s = out_.forward(fused, &t.out);
    t.h_concat = std::move(h);
    t.gate_values = std::move(g);
    t.output = s.front();
    return s.front();
  }

  // Accumulates d(loss)/d(parameters) given d(loss)/d(score).
  void backward(const Tape& t, double d_score, Gradients& grads) const {
    const double up[1] = {d_score};
    const auto d_fused = out_.backward(t.out, std::span<const double>(up, 1), grads.out);
    const std::size_t n = t.h_concat.size();
    std::vector<double> d_h(n), d_g(n);
    for (std::size_t j = 0; j < n; ++j) {
      d_h[j] = d_fused[j] * static_cast<double>(t.gate_values[j]);
      d_g[j] = d_fused[j] * static_cast<double>(t.h_concat[j]);
    }
    if (config_.ablation == Ablation::scalar_gate) {
      double total = 0.0;
      for (double v : d_g) total += v;
      const double one[1] = {total};
      gate_.backward(t.gate, std::span<const double>(one, 1), grads.gate);
    } else {
      gate_.backward(t.gate, d_g, grads.gate);
    }
    const std::size_t d_h_dim = config_.d_h;
    text_.backward(t.text, std::span<const double>(d_h).subspan(0, d_h_dim), grads.text);
    if (config_.uses_prior()) {
      score_.backward(t.score, std::span<const double>(d_h).subspan(d_h_dim, d_h_dim), grads.score);
    }
  }

  Gradients zero_gradients() const {
    return {text_.zero_gradients(), score_.zero_gradients(), gate_.zero_gradients(), out_.zero_gradients()};
  }

  std::vector<std::span<T>> parameters() {
    std::vector<std::span<T>> p;
    text_.collect(p);
    score_.collect(p);
    gate_.collect(p);
    out_.collect(p);
    return p;
  }

  std::size_t parameter_count() const {
    return text_.parameter_count() + score_.parameter_count() + gate_.parameter_count() + out_.parameter_count();
  }

  std::vector<T> flatten() const {
    std::vector<T> flat;
    flat.reserve(parameter_count());
    for (const auto* m : {&text_, &score_, &gate_, &out_}) m->flatten_into(flat);
    return flat;
  }

  void assign(std::span<const T> flat) {
    if (flat.size() != parameter_count()) throw FormatError("parameter payload size does not match the model");
    std::size_t pos = 0;
    for (auto* m : {&text_, &score_, &gate_, &out_}) pos += m->assign_from(flat.subspan(pos));
  }

  template <typename U>
  DavinciModel<U> cast() const {
    DavinciModel<U> m(config_);
    const auto flat = flatten();
    std::vector<U> converted(flat.begin(), flat.end());
    m.assign(converted);
    return m;
  }

  friend bool operator==(const DavinciModel&, const DavinciModel&) = default;

 private:
  template <typename Make>
  void build(Make make) {
    const auto& c = config_;
    auto tower = [&](std::size_t in, std::size_t out) {
      std::vector<std::size_t> w{in};
      for (std::size_t l = 1; l < c.depth; ++l) w.push_back(c.d_h);
      w.push_back(out);
      return w;
    };
    const bool with_prior = c.uses_prior();
    const std::size_t fused = with_prior ? 2 * c.d_h : c.d_h;
    const std::size_t gate_in = with_prior ? c.d_enc2 + 1 : c.d_enc2;
    const std::size_t gate_out = c.ablation == Ablation::scalar_gate ? 1 : fused;
    text_ = make(tower(c.d_enc2, c.d_h), nn::Activation::identity);
    if (with_prior) score_ = make(tower(1, c.d_h), nn::Activation::identity);
    gate_ = make(tower(gate_in, gate_out), nn::Activation::sigmoid);
    out_ = make(tower(fused, 1), nn::Activation::sigmoid);
  }

  DavinciConfig config_;
  nn::Mlp<T> text_, score_, gate_, out_;
};

// Pair embedding and prior of one candidate.
struct PairFeatures {
  std::string doc_id;
  std::vector<float> e_cls;
  double prior = 0.0;
};

struct TrainingTriplet {
  std::string query_id;
  PairFeatures positive;
  PairFeatures negative;
};

struct TrainingSet {
  std::vector<TrainingTriplet> triplets;  // triplets of one query are contiguous
  std::size_t positives = 0;
  std::size_t skipped_queries = 0;
};

// Query side of the pair text: context, separator, then title and abstract.
inline std::string query_side_text(const Query& q) { return pair_text(q.context, q.metadata_text()); }

inline std::vector<float> pair_embedding(const TextEncoder& encoder, const Query& q, const Document& candidate) {
  return encoder.encode_pair(query_side_text(q), candidate.text());
}

inline TrainingSet build_training_set(const std::vector<Query>& queries,
                                      const std::map<std::string, RetrievalList>& retrievals, const Corpus& corpus,
                                      const TextEncoder& encoder, const DavinciConfig& config) {
  config.validate();
  const PriorConfig prior_cfg = config.effective_prior();
  TrainingSet set;
  for (const auto& q : queries) {
    auto it = retrievals.find(q.id);
    if (it == retrievals.end()) throw NotFoundError("no retrieval list for training query '" + q.id + "'");
    const auto priors = priors_for_candidates(prior_cfg, it->second, q.gold_id);
    std::vector<const PriorEntry*> pool;
    const PriorEntry* gold = nullptr;
    for (const auto& e : priors.entries) {
      if (e.doc_id == q.gold_id) {
        gold = &e;
      } else {
        pool.push_back(&e);
      }
    }
    if (pool.empty()) {
      ++set.skipped_queries;
      continue;
    }
    Rng rng(fnv1a(q.id, config.seed ^ 0x9e3779b97f4a7c15ull));
    const std::size_t take = std::min(config.negatives, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    PairFeatures pos{gold->doc_id, pair_embedding(encoder, q, corpus.document(gold->doc_id)), gold->prior};
    for (std::size_t i = 0; i < take; ++i) {
      PairFeatures neg{pool[i]->doc_id, pair_embedding(encoder, q, corpus.document(pool[i]->doc_id)), pool[i]->prior};
      set.triplets.push_back({q.id, pos, std::move(neg)});
    }
    ++set.positives;
  }
  return set;
}

// Candidates of one evaluation query, ready for scoring.
struct RerankInput {
  std::string query_id;
  std::string gold_id;
  std::vector<PairFeatures> candidates;
};

// Builds the reranker input for a retrieved list. Priors must list the same
// documents in the same order as the retrieval entries.
inline RerankInput rerank_input(const Query& query, const RetrievalList& retrieval, const PriorList& priors,
                                const Corpus& corpus, const TextEncoder& encoder) {
  if (priors.entries.size() != retrieval.entries.size()) throw ValidationError("priors and candidates are misaligned");
  RerankInput in{query.id, query.gold_id, {}};
  in.candidates.reserve(retrieval.entries.size());
  for (std::size_t i = 0; i < retrieval.entries.size(); ++i) {
    if (priors.entries[i].doc_id != retrieval.entries[i].doc_id) {
      throw ValidationError("priors and candidates are misaligned at position " + std::to_string(i));
    }
    const auto& id = retrieval.entries[i].doc_id;
    in.candidates.push_back({id, pair_embedding(encoder, query, corpus.document(id)), priors.entries[i].prior});
  }
  return in;
}

template <typename T>
std::vector<ScoredDoc> rerank(const DavinciModel<T>& model, const RerankInput& input) {
  std::vector<ScoredDoc> out;
  out.reserve(input.candidates.size());
  std::vector<T> e;
  for (const auto& c : input.candidates) {
    e.assign(c.e_cls.begin(), c.e_cls.end());
    out.push_back({c.doc_id, static_cast<double>(model.score(e, c.prior))});
  }
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

template <typename T>
std::vector<ScoredDoc> rerank(const DavinciModel<T>& model, const Query& query, const RetrievalList& retrieval,
                              const PriorList& priors, const Corpus& corpus, const TextEncoder& encoder) {
  return rerank(model, rerank_input(query, retrieval, priors, corpus, encoder));
}

template <typename T>
double mean_reciprocal_rank(const DavinciModel<T>& model, const std::vector<RerankInput>& inputs) {
  if (inputs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& in : inputs) {
    const auto ranked = rerank(model, in);
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (ranked[i].doc_id == in.gold_id) {
        total += 1.0 / static_cast<double>(i + 1);
        break;
      }
    }
  }
  return total / static_cast<double>(inputs.size());
}

// Mean over positives of the averaged triplet loss of their negatives, together
// with its parameter gradient when `grads` is given.
template <typename T>
double group_loss(const DavinciModel<T>& model, std::span<const TrainingTriplet> group,
                  typename DavinciModel<T>::Gradients* grads) {
  using Tape = typename DavinciModel<T>::Tape;
  const double m = model.config().margin;
  const double inv_n = 1.0 / static_cast<double>(group.size());
  std::vector<T> e(group.front().positive.e_cls.begin(), group.front().positive.e_cls.end());
  Tape pos_tape;
  const double s_pos = static_cast<double>(model.score(e, group.front().positive.prior, &pos_tape));
  double loss = 0.0;
  double d_pos = 0.0;
  Tape neg_tape;
  for (const auto& t : group) {
    e.assign(t.negative.e_cls.begin(), t.negative.e_cls.end());
    const double s_neg = static_cast<double>(model.score(e, t.negative.prior, grads ? &neg_tape : nullptr));
    const double l = triplet_loss(s_pos, s_neg, m);
    loss += l * inv_n;
    // hinge subgradient is 0 at the kink
    if (grads && s_neg - s_pos + m > 0.0) {
      model.backward(neg_tape, inv_n, *grads);
      d_pos -= inv_n;
    }
  }
  if (grads && d_pos != 0.0) model.backward(pos_tape, d_pos, *grads);
  return loss;
}

// Splits a triplet stream into runs sharing a query.
inline std::vector<std::span<const TrainingTriplet>> group_triplets(const std::vector<TrainingTriplet>& triplets) {
  std::vector<std::span<const TrainingTriplet>> groups;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= triplets.size(); ++i) {
    if (i == triplets.size() || triplets[i].query_id != triplets[start].query_id) {
      groups.emplace_back(triplets.data() + start, i - start);
      start = i;
    }
  }
  return groups;
}

template <typename T>
struct TrainResult {
  DavinciModel<T> model;             // best checkpoint (last epoch without validation)
  std::vector<double> loss_curve;    // mean training loss per epoch
  std::vector<double> val_mrr;       // validation MRR per epoch, when validating
  std::size_t best_epoch = 0;        // 1-based
};

template <typename T>
TrainResult<T> train(DavinciModel<T> model, const std::vector<TrainingTriplet>& triplets,
                     const std::vector<RerankInput>* validation = nullptr,
                     const std::function<void(std::size_t, double, double)>& on_epoch = {}) {
  if (triplets.empty()) throw ValidationError("empty training set");
  const auto& config = model.config();
  auto groups = group_triplets(triplets);
  nn::Optimizer optimizer(config.optimizer);
  Rng rng = Rng(config.seed).fork("davinci-epochs");
  auto grads = model.zero_gradients();

  TrainResult<T> result;
  result.model = model;
  double best_mrr = -1.0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(groups);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < groups.size(); start += config.batch_size) {
      const std::size_t end = std::min(groups.size(), start + config.batch_size);
      grads.zero();
      for (std::size_t g = start; g < end; ++g) epoch_loss += group_loss(model, groups[g], &grads);
      const double scale = 1.0 / static_cast<double>(end - start);
      auto grad_spans = grads.spans();
      for (auto& s : grad_spans) {
        for (double& v : s) v *= scale;
      }
      auto params = model.parameters();
      optimizer.apply<T>(params, grad_spans);
    }
    epoch_loss /= static_cast<double>(groups.size());
    if (!std::isfinite(epoch_loss)) {
      throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch));
    }
    result.loss_curve.push_back(epoch_loss);
    double mrr = 0.0;
    if (validation) {
      mrr = mean_reciprocal_rank(model, *validation);
      result.val_mrr.push_back(mrr);
      if (mrr > best_mrr) {
        best_mrr = mrr;
        result.model = model;
        result.best_epoch = epoch;
      }
    } else {
      result.model = model;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(epoch, epoch_loss, mrr);
  }
  return result;
}

// Mean group loss over the whole set without updating anything.
template <typename T>
double evaluate_loss(const DavinciModel<T>& model, const std::vector<TrainingTriplet>& triplets) {
  const auto groups = group_triplets(triplets);
  double total = 0.0;
  for (const auto& g : groups) total += group_loss<T>(model, g, nullptr);
  return groups.empty() ? 0.0 : total / static_cast<double>(groups.size());
}

// Checkpoint: <prefix>.json manifest plus <prefix>.cvec holding one row of
// flattened parameters under the key "parameters".
template <typename T>
void save_model(const DavinciModel<T>& model, const std::string& prefix, const nlohmann::json& extra = {}) {
  const auto flat = model.flatten();
  std::vector<float> payload(flat.begin(), flat.end());
  EmbeddingMatrix m(std::max<std::size_t>(1, payload.size()));
  m.add("parameters", payload);
  write_embeddings(prefix + ".cvec", m);
  nlohmann::json manifest = {{"format", "davinci-checkpoint-1"},
                             {"config", model.config()},
                             {"ablation", model.config().ablation},
                             {"seed", model.config().seed},
                             {"parameter_count", payload.size()},
                             {"activation", {{"hidden", nn::Activation::relu}, {"gate", nn::Activation::sigmoid},
                                             {"output", nn::Activation::sigmoid}}}};
  for (auto it = extra.begin(); extra.is_object() && it != extra.end(); ++it) manifest[it.key()] = it.value();
  std::ofstream out(prefix + ".json", std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint manifest '" + prefix + ".json'");
  out << manifest.dump(2) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed JSON in '" + path + "': " + e.what());
  }
}

inline DavinciModel<float> load_model(const std::string& prefix) {
  const auto manifest = read_json_file(prefix + ".json");
  const auto config = manifest.at("config").get<DavinciConfig>();
  DavinciModel<float> model(config);
  const auto m = load_embeddings(prefix + ".cvec");
  const auto row = m.row("parameters");
  const std::size_t count = manifest.at("parameter_count").get<std::size_t>();
  if (count > row.size()) throw FormatError("checkpoint payload is shorter than its manifest states");
  model.assign(row.subspan(0, count));
  return model;
}

}  // namespace citerec
