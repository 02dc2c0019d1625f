#include "seqgeo/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "seqgeo/error.hpp"
#include "seqgeo/log.hpp"

namespace seqgeo::eval {
namespace {

std::size_t clamp_k(std::size_t k, std::size_t n) {
  if (k < 1) throw DomainError("K must be >= 1");
  if (k > n) {
    log::warn("K=" + std::to_string(k) + " exceeds gallery size " + std::to_string(n) + ", clamped");
    return n;
  }
  return k;
}

}  // namespace

RetrievalIndex RetrievalIndex::build(std::vector<std::string> ids, const Matrix& features) {
  if (ids.size() != features.rows()) {
    throw DomainError("build_index: " + std::to_string(ids.size()) + " ids for " +
                      std::to_string(features.rows()) + " feature rows");
  }
  if (ids.empty()) throw DomainError("build_index: empty gallery");
  if (features.cols() == 0) throw DomainError("build_index: zero-dimensional features");
  RetrievalIndex index;
  index.features_ = features;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!index.lookup_.emplace(ids[i], i).second) throw DomainError("build_index: duplicate id " + ids[i]);
    try {
      const std::vector<double> unit = train::l2_normalize(features.row(i));
      std::copy(unit.begin(), unit.end(), index.features_.row(i).begin());
    } catch (const DomainError&) {
      throw DomainError("build_index: zero or non-finite vector for id " + ids[i]);
    }
  }
  index.ids_ = std::move(ids);
  return index;
}

std::size_t RetrievalIndex::position(const std::string& id) const {
  const auto it = lookup_.find(id);
  if (it == lookup_.end()) throw DomainError("true id not in gallery: " + id);
  return it->second;
}

std::vector<double> RetrievalIndex::normalized_query(std::span<const double> query) const {
  if (query.size() != dim()) {
    throw DomainError("query has dim " + std::to_string(query.size()) + ", gallery has " + std::to_string(dim()));
  }
  return train::l2_normalize(query);
}

// Squared distance ranks the same as Euclidean distance and avoids sqrt ties
// that the squares would not have.
std::vector<double> RetrievalIndex::squared_distances(std::span<const double> q) const {
  std::vector<double> out(size());
  for (std::size_t j = 0; j < size(); ++j) {
    const auto g = features_.row(j);
    double acc = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) {
      const double diff = q[d] - g[d];
      acc += diff * diff;
    }
    out[j] = acc;
  }
  return out;
}

std::vector<std::size_t> RetrievalIndex::query_topk(std::span<const double> query, std::size_t k) const {
  k = clamp_k(k, size());
  const std::vector<double> dist = squared_distances(normalized_query(query));
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), 0);
  const auto closer = [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), closer);
  order.resize(k);
  return order;
}

std::vector<std::string> RetrievalIndex::query_topk_ids(std::span<const double> query, std::size_t k) const {
  std::vector<std::string> out;
  for (std::size_t j : query_topk(query, k)) out.push_back(ids_[j]);
  return out;
}

std::size_t RetrievalIndex::rank_of(std::span<const double> query, std::size_t target) const {
  if (target >= size()) throw DomainError("rank_of: row " + std::to_string(target) + " out of range");
  const std::vector<double> dist = squared_distances(normalized_query(query));
  std::size_t rank = 1;
  for (std::size_t j = 0; j < size(); ++j) {
    if (dist[j] < dist[target] || (dist[j] == dist[target] && j < target)) ++rank;
  }
  return rank;
}

std::size_t k_for_one_percent(std::size_t gallery_size) { return std::max<std::size_t>(1, gallery_size / 100); }

double RecallReport::at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return recalls[i];
  }
  throw DomainError("report has no R@" + std::to_string(k));
}

nlohmann::json RecallReport::to_json() const {
  nlohmann::json j = {{"Ks", ks},
                      {"recalls", recalls},
                      {"n_queries", n_queries},
                      {"gallery_size", gallery_size},
                      {"drop_first", drop_first},
                      {"per_query_rank", per_query_rank}};
  if (k_1pct) {
    j["k_1pct"] = k_1pct;
    j["recall_1pct"] = recall_1pct;
  } else {
    j["k_1pct"] = nullptr;
  }
  return j;
}

std::string RecallReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "K,recall\n";
  for (std::size_t i = 0; i < ks.size(); ++i) out << ks[i] << ',' << recalls[i] << '\n';
  if (k_1pct) out << "1%(" << k_1pct << ")," << recall_1pct << '\n';
  return out.str();
}

std::string RecallReport::to_table() const {
  auto cell = [&](std::size_t k) -> std::string {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (ks[i] == k) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.2f", 100.0 * recalls[i]);
        return buf;
      }
    }
    return "-";
  };
  std::string one_pct = "-";
  if (k_1pct) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * recall_1pct);
    one_pct = buf;
  }
  char line[160];
  std::string out;
  std::snprintf(line, sizeof line, "%-14s %8s %8s %8s %8s\n", "Method", "R@1", "R@5", "R@10", "R@1%");
  out += line;
  const std::string name = drop_first ? method + " -" + std::to_string(drop_first) : method;
  std::snprintf(line, sizeof line, "%-14s %8s %8s %8s %8s\n", name.c_str(), cell(1).c_str(), cell(5).c_str(),
                cell(10).c_str(), one_pct.c_str());
  out += line;
  std::snprintf(line, sizeof line, "(%zu queries, gallery %zu, K for 1%% = %zu)\n", n_queries, gallery_size,
                k_1pct ? k_1pct : k_for_one_percent(gallery_size));
  out += line;
  return out;
}

RecallReport recall_report(const RetrievalIndex& index, std::span<const Query> queries,
                           std::span<const std::size_t> ks, bool include_1pct) {
  RecallReport report;
  report.n_queries = queries.size();
  report.gallery_size = index.size();
  std::vector<std::size_t> clamped;
  for (std::size_t k : ks) {
    report.ks.push_back(k);
    clamped.push_back(clamp_k(k, index.size()));
  }
  if (include_1pct) report.k_1pct = k_for_one_percent(index.size());

  std::vector<std::size_t> targets;
  targets.reserve(queries.size());
  for (const Query& q : queries) targets.push_back(index.position(q.true_id));

  report.per_query_rank.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    report.per_query_rank.push_back(index.rank_of(queries[i].feature, targets[i]));
  }
  const double n = static_cast<double>(queries.size());
  auto fraction_within = [&](std::size_t k) {
    if (queries.empty()) return 0.0;
    const auto hits = std::count_if(report.per_query_rank.begin(), report.per_query_rank.end(),
                                    [k](std::size_t r) { return r <= k; });
    return static_cast<double>(hits) / n;
  };
  for (std::size_t k : clamped) report.recalls.push_back(fraction_within(k));
  if (include_1pct) report.recall_1pct = fraction_within(report.k_1pct);
  return report;
}

RetrievalIndex aerial_index(const PairedDataset& data, const train::ModelParams& params) {
  Matrix gallery(data.size(), params.aerial.cols());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::vector<double> a = train::aerial_descriptor(data.aerial.row(i), params);
    std::copy(a.begin(), a.end(), gallery.row(i).begin());
  }
  return RetrievalIndex::build(data.ids, gallery);
}

std::vector<Query> ground_queries(const PairedDataset& data, const train::ModelParams& params,
                                  const tfam::TfamConfig& cfg, std::size_t drop_first) {
  const tfam::DropoutMask mask = tfam::DropoutMask::drop_first(cfg.seq_len, drop_first);
  std::vector<Query> queries;
  queries.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    queries.push_back({train::ground_descriptor(data.ground[i], mask, params, cfg), data.ids[i]});
  }
  return queries;
}

RecallReport evaluate(const PairedDataset& data, const train::ModelParams& params, const tfam::TfamConfig& cfg,
                      std::span<const std::size_t> ks, bool include_1pct, std::size_t drop_first) {
  data.validate();
  if (drop_first >= cfg.seq_len) {
    throw DomainError("drop_first=" + std::to_string(drop_first) + " must be smaller than T=" +
                      std::to_string(cfg.seq_len));
  }
  if (data.seq_len != cfg.seq_len || data.dim != cfg.dim) {
    throw DomainError("dataset shape (T=" + std::to_string(data.seq_len) + ", D=" + std::to_string(data.dim) +
                      ") does not match model (T=" + std::to_string(cfg.seq_len) + ", D=" +
                      std::to_string(cfg.dim) + ")");
  }
  const RetrievalIndex index = aerial_index(data, params);
  const std::vector<Query> queries = ground_queries(data, params, cfg, drop_first);
  RecallReport report = recall_report(index, queries, ks, include_1pct);
  report.drop_first = drop_first;
  return report;
}

std::vector<RecallReport> eval_variable_length(const PairedDataset& data, const train::ModelParams& params,
                                               const tfam::TfamConfig& cfg, std::span<const std::size_t> ks,
                                               std::span<const std::size_t> drop_counts) {
  for (std::size_t n : drop_counts) {
    if (n >= cfg.seq_len) {
      throw DomainError("drop count " + std::to_string(n) + " must be smaller than T=" + std::to_string(cfg.seq_len));
    }
  }
  std::vector<RecallReport> out;
  for (std::size_t n : drop_counts) out.push_back(evaluate(data, params, cfg, ks, true, n));
  return out;
}

RecallReport evaluate_mean_pool(const PairedDataset& data, std::span<const std::size_t> ks, bool include_1pct,
                                std::size_t drop_first) {
  data.validate();
  if (drop_first >= data.seq_len) throw DomainError("drop_first must be smaller than seq_len");
  const RetrievalIndex index = RetrievalIndex::build(data.ids, data.aerial);
  std::vector<Query> queries;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<double> mean(data.dim, 0.0);
    for (std::size_t t = drop_first; t < data.seq_len; ++t) {
      for (std::size_t d = 0; d < data.dim; ++d) mean[d] += data.ground[i](t, d);
    }
    queries.push_back({std::move(mean), data.ids[i]});
  }
  RecallReport report = recall_report(index, queries, ks, include_1pct);
  report.drop_first = drop_first;
  report.method = "Mean pool";
  return report;
}

}  // namespace seqgeo::eval
