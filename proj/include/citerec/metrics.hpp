#pragma once

// Ranking metrics for single-gold queries: MRR, Recall@K, NDCG@K.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "citerec/errors.hpp"

namespace citerec {

struct QueryRank {
  std::string query_id;
  std::optional<std::size_t> rank;  // 1-based position of the gold; nullopt when absent
};

struct EvalReport {
  double mrr = 0.0;
  std::map<std::size_t, double> recall_at;
  std::map<std::size_t, double> ndcg_at;
  std::size_t n_queries = 0;
  std::vector<QueryRank> per_query;

  nlohmann::json to_json(bool with_detail = false) const {
    nlohmann::json recall = nlohmann::json::object();
    nlohmann::json ndcg = nlohmann::json::object();
    for (const auto& [k, v] : recall_at) recall[std::to_string(k)] = v;
    for (const auto& [k, v] : ndcg_at) ndcg[std::to_string(k)] = v;
    nlohmann::json j = {{"mrr", mrr}, {"recall_at", recall}, {"ndcg_at", ndcg}, {"n_queries", n_queries}};
    if (with_detail) {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& q : per_query) {
        rows.push_back({{"qid", q.query_id}, {"rank", q.rank ? nlohmann::json(*q.rank) : nlohmann::json(nullptr)}});
      }
      j["per_query"] = std::move(rows);
    }
    return j;
  }

  // Percent-formatted one-line table: header row and value row.
  std::string to_table(const std::string& label = "") const {
    std::string head = label.empty() ? "" : pad(label, 12);
    std::string vals = label.empty() ? "" : pad("", 12);
    auto cell = [&](const std::string& name, double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
      head += pad(name, 9);
      vals += pad(buf, 9);
    };
    cell("MRR", mrr);
    for (const auto& [k, v] : recall_at) cell("R@" + std::to_string(k), v);
    for (const auto& [k, v] : ndcg_at) cell("N@" + std::to_string(k), v);
    return head + "\n" + vals + "\n";
  }

 private:
  static std::string pad(std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  }
};

inline double ndcg_gain(std::size_t rank) { return 1.0 / std::log2(1.0 + static_cast<double>(rank)); }

// Queries are aggregated in id order, so results do not depend on input order.
inline EvalReport evaluate(const std::map<std::string, std::vector<std::string>>& rankings,
                           const std::map<std::string, std::string>& golds, const std::vector<std::size_t>& ks) {
  for (std::size_t k : ks) {
    if (k < 1) throw ValidationError("metric cutoffs must be >= 1");
  }
  std::string missing;
  for (const auto& [qid, _] : rankings) {
    if (!golds.count(qid)) missing += " " + qid;
  }
  for (const auto& [qid, _] : golds) {
    if (!rankings.count(qid)) missing += " " + qid;
  }
  if (!missing.empty()) throw ValidationError("queries lacking a gold or a ranking:" + missing);

  EvalReport report;
  report.n_queries = golds.size();
  for (std::size_t k : ks) {
    report.recall_at[k] = 0.0;
    report.ndcg_at[k] = 0.0;
  }
  for (const auto& [qid, gold] : golds) {
    const auto& ranking = rankings.at(qid);
    QueryRank qr{qid, std::nullopt};
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      if (ranking[i] == gold) {
        qr.rank = i + 1;
        break;
      }
    }
    if (qr.rank) {
      report.mrr += 1.0 / static_cast<double>(*qr.rank);
      for (std::size_t k : ks) {
        if (*qr.rank <= k) {
          report.recall_at[k] += 1.0;
          report.ndcg_at[k] += ndcg_gain(*qr.rank);
        }
      }
    }
    report.per_query.push_back(std::move(qr));
  }
  if (report.n_queries > 0) {
    const double n = static_cast<double>(report.n_queries);
    report.mrr /= n;
    for (auto& [_, v] : report.recall_at) v /= n;
    for (auto& [_, v] : report.ndcg_at) v /= n;
  }
  return report;
}

}  // namespace citerec
