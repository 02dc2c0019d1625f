#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "seqgeo/dataset.hpp"
#include "seqgeo/tensor.hpp"
#include "seqgeo/training.hpp"

namespace seqgeo::eval {

// Gallery of unit-norm features. Row order is insertion order and breaks ties.
class RetrievalIndex {
 public:
  // Throws DomainError on duplicate ids, mismatched dims or a zero vector.
  static RetrievalIndex build(std::vector<std::string> ids, const Matrix& features);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return features_.cols(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Matrix& features() const { return features_; }
  // Row of `id`, or throws DomainError naming it.
  std::size_t position(const std::string& id) const;

  // Gallery rows ordered by ascending Euclidean distance to the normalized
  // query, first k only. k > size() is clamped with a warning.
  std::vector<std::size_t> query_topk(std::span<const double> query, std::size_t k) const;
  std::vector<std::string> query_topk_ids(std::span<const double> query, std::size_t k) const;
  // 1-based position of gallery row `target` in the full ranking of `query`.
  std::size_t rank_of(std::span<const double> query, std::size_t target) const;

 private:
  std::vector<double> squared_distances(std::span<const double> unit_query) const;
  std::vector<double> normalized_query(std::span<const double> query) const;

  std::vector<std::string> ids_;
  std::map<std::string, std::size_t> lookup_;
  Matrix features_;
};

// max(1, floor(0.01 * gallery_size)).
std::size_t k_for_one_percent(std::size_t gallery_size);

struct RecallReport {
  std::vector<std::size_t> ks;
  std::vector<double> recalls;  // aligned with ks
  std::size_t k_1pct = 0;       // 0 when the 1% column was not requested
  double recall_1pct = 0.0;
  std::size_t n_queries = 0;
  std::size_t gallery_size = 0;
  std::size_t drop_first = 0;
  std::string method = "TFAM";  // row label in to_table()
  std::vector<std::size_t> per_query_rank;

  // Recall at a K listed in ks; throws DomainError otherwise.
  double at(std::size_t k) const;
  nlohmann::json to_json() const;
  // Header "K,recall" then one row per K; the 1% column appears as "1%(<k>)".
  std::string to_csv() const;
  // Fixed-width R@1 / R@5 / R@10 / R@1% table (percentages).
  std::string to_table() const;
};

struct Query {
  std::vector<double> feature;
  std::string true_id;
};

// Ks must be >= 1; Ks larger than the gallery are clamped (with a warning).
RecallReport recall_report(const RetrievalIndex& index, std::span<const Query> queries,
                           std::span<const std::size_t> ks, bool include_1pct);

// Gallery from the aerial branch applied to every pair's aerial feature.
RetrievalIndex aerial_index(const PairedDataset& data, const train::ModelParams& params);

// Ground descriptors with the first `drop_first` frames masked out.
std::vector<Query> ground_queries(const PairedDataset& data, const train::ModelParams& params,
                                  const tfam::TfamConfig& cfg, std::size_t drop_first);

RecallReport evaluate(const PairedDataset& data, const train::ModelParams& params, const tfam::TfamConfig& cfg,
                      std::span<const std::size_t> ks, bool include_1pct, std::size_t drop_first = 0);

// One report per drop count; each count must be smaller than seq_len.
std::vector<RecallReport> eval_variable_length(const PairedDataset& data, const train::ModelParams& params,
                                               const tfam::TfamConfig& cfg, std::span<const std::size_t> ks,
                                               std::span<const std::size_t> drop_counts);

// Untrained baseline: mean of the kept frames against raw aerial features.
RecallReport evaluate_mean_pool(const PairedDataset& data, std::span<const std::size_t> ks, bool include_1pct,
                                std::size_t drop_first = 0);

}  // namespace seqgeo::eval
