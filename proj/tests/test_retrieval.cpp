#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "seqgeo/error.hpp"
#include "seqgeo/io.hpp"
#include "seqgeo/retrieval.hpp"
#include "seqgeo/synthetic.hpp"
#include "temp_dir.hpp"
#include "test_util.hpp"

namespace seqgeo::eval {
namespace {

std::vector<std::string> numbered_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("g" + std::to_string(i));
  return ids;
}

// Full stable sort over squared distances to the unit query.
std::vector<std::size_t> oracle_ranking(const Matrix& unit_gallery, std::span<const double> query) {
  const std::vector<double> q = train::l2_normalize(query);
  std::vector<double> dist(unit_gallery.rows());
  for (std::size_t j = 0; j < unit_gallery.rows(); ++j) {
    double acc = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) {
      const double diff = q[d] - unit_gallery(j, d);
      acc += diff * diff;
    }
    dist[j] = acc;
  }
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  return order;
}

TEST(Index, OrthonormalRows) {
  const RetrievalIndex index = RetrievalIndex::build({"a", "b", "c"}, Matrix::identity(3));
  EXPECT_EQ(index.size(), 3u);
  EXPECT_EQ(index.features(), Matrix::identity(3));
}

TEST(Index, RowsAreUnit) {
  Rng rng(1);
  const RetrievalIndex index = RetrievalIndex::build(numbered_ids(200), testing::random_matrix(200, 24, rng, 5.0));
  for (std::size_t j = 0; j < index.size(); ++j) {
    double sq = 0.0;
    for (double v : index.features().row(j)) sq += v * v;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-9);
  }
}

TEST(Index, Errors) {
  EXPECT_THROW(RetrievalIndex::build({"a", "a"}, Matrix::identity(2)), DomainError);
  EXPECT_THROW(RetrievalIndex::build({"a", "b"}, Matrix{{1.0, 0.0}, {0.0, 0.0}}), DomainError);
  EXPECT_THROW(RetrievalIndex::build({"a"}, Matrix::identity(2)), DomainError);
  const RetrievalIndex index = RetrievalIndex::build({"a", "b"}, Matrix::identity(2));
  EXPECT_THROW(index.query_topk(std::vector<double>{1.0, 0.0, 0.0}, 1), DomainError);
  EXPECT_THROW(index.query_topk(std::vector<double>{1.0, 0.0}, 0), DomainError);
}

TEST(Index, SurvivesEmbeddingFileRoundTrip) {
  testing::TempDir dir;
  const PairedDataset data = synth::generate_synthetic(30, 7, 16, 0.3, 2);
  io::write_embeddings(dir / "a.sgeo", io::EmbeddingFile::from_matrix(data.aerial, data.ids));
  const io::EmbeddingFile back = io::read_embeddings(dir / "a.sgeo");
  const RetrievalIndex a = RetrievalIndex::build(data.ids, data.aerial);
  const RetrievalIndex b = RetrievalIndex::build(back.ids, back.to_matrix());
  EXPECT_EQ(a.features(), b.features());
  EXPECT_EQ(a.ids(), b.ids());
}

TEST(Query, ExactMatchRanksFirst) {
  const RetrievalIndex index = RetrievalIndex::build(numbered_ids(5), Matrix::identity(5));
  for (std::size_t j = 0; j < 5; ++j) {
    std::vector<double> q(5, 0.0);
    q[j] = 2.0;
    EXPECT_EQ(index.query_topk(q, 1), std::vector<std::size_t>{j});
    EXPECT_EQ(index.query_topk_ids(q, 1), std::vector<std::string>{"g" + std::to_string(j)});
  }
}

TEST(Query, TiesFollowInsertionOrder) {
  const Matrix gallery{{0.0, 1.0}, {1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {0.0, 1.0}};
  const RetrievalIndex index = RetrievalIndex::build(numbered_ids(5), gallery);
  EXPECT_EQ(index.query_topk(std::vector<double>{0.0, 3.0}, 5), (std::vector<std::size_t>{0, 2, 4, 1, 3}));
  EXPECT_EQ(index.rank_of(std::vector<double>{0.0, 3.0}, 4), 3u);
  // Equidistant from both directions.
  EXPECT_EQ(index.query_topk(std::vector<double>{1.0, 1.0}, 5), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Query, OversizedKIsClamped) {
  const RetrievalIndex index = RetrievalIndex::build(numbered_ids(3), Matrix::identity(3));
  EXPECT_EQ(index.query_topk(std::vector<double>{1.0, 0.0, 0.0}, 10).size(), 3u);
}

TEST(Query, MatchesBruteForceOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(60), d = 1 + rng.below(8);
    Matrix gallery = testing::random_matrix(n, d, rng);
    // Duplicate a few rows to force exact ties.
    for (std::size_t j = 1; j < n; j += 7) std::copy(gallery.row(0).begin(), gallery.row(0).end(), gallery.row(j).begin());
    const RetrievalIndex index = RetrievalIndex::build(numbered_ids(n), gallery);
    const Matrix q = rng.below(4) == 0 ? Matrix::row_vector(gallery.row(0)) : testing::random_matrix(1, d, rng);
    const auto oracle = oracle_ranking(index.features(), q.row(0));
    const std::size_t k = 1 + rng.below(n);
    EXPECT_EQ(index.query_topk(q.row(0), k), std::vector<std::size_t>(oracle.begin(), oracle.begin() + k));
    const std::size_t target = rng.below(n);
    const auto pos = std::find(oracle.begin(), oracle.end(), target) - oracle.begin();
    EXPECT_EQ(index.rank_of(q.row(0), target), static_cast<std::size_t>(pos) + 1);
  }
}

TEST(Recall, OnePercentK) {
  EXPECT_EQ(k_for_one_percent(7772), 77u);
  EXPECT_EQ(k_for_one_percent(31091), 310u);
  EXPECT_EQ(k_for_one_percent(128), 1u);
  EXPECT_EQ(k_for_one_percent(50), 1u);
  EXPECT_EQ(k_for_one_percent(200), 2u);
}

TEST(Recall, PerfectQueries) {
  Rng rng(4);
  const Matrix gallery = testing::random_matrix(40, 8, rng);
  const RetrievalIndex index = RetrievalIndex::build(numbered_ids(40), gallery);
  std::vector<Query> queries;
  for (std::size_t i = 0; i < 40; ++i) {
    queries.push_back({{gallery.row(i).begin(), gallery.row(i).end()}, "g" + std::to_string(i)});
  }
  const std::size_t ks[] = {1, 5, 10};
  const RecallReport r = recall_report(index, queries, ks, true);
  EXPECT_EQ(r.at(1), 1.0);
  EXPECT_EQ(r.k_1pct, 1u);
  EXPECT_EQ(r.recall_1pct, 1.0);
  EXPECT_EQ(r.n_queries, 40u);
}

TEST(Recall, MonotoneAndFullAtGallerySize) {
  Rng rng(5);
  const RetrievalIndex index = RetrievalIndex::build(numbered_ids(50), testing::random_matrix(50, 6, rng));
  std::vector<Query> queries;
  for (int i = 0; i < 30; ++i) {
    const Matrix q = testing::random_matrix(1, 6, rng);
    queries.push_back({{q.data().begin(), q.data().end()}, "g" + std::to_string(rng.below(50))});
  }
  std::vector<std::size_t> ks(50);
  std::iota(ks.begin(), ks.end(), 1);
  const RecallReport r = recall_report(index, queries, ks, false);
  for (std::size_t i = 1; i < r.recalls.size(); ++i) EXPECT_GE(r.recalls[i], r.recalls[i - 1]);
  EXPECT_EQ(r.at(50), 1.0);
  EXPECT_EQ(r.k_1pct, 0u);
}

TEST(Recall, ChanceLevel) {
  Rng rng(6);
  const std::size_t n = 1000, trials = 10000;
  const RetrievalIndex index = RetrievalIndex::build(numbered_ids(n), testing::random_matrix(n, 16, rng));
  std::vector<Query> queries;
  for (std::size_t i = 0; i < trials; ++i) {
    const Matrix q = testing::random_matrix(1, 16, rng);
    queries.push_back({{q.data().begin(), q.data().end()}, "g" + std::to_string(rng.below(n))});
  }
  const std::size_t ks[] = {1};
  const double hits = recall_report(index, queries, ks, false).at(1) * trials;
  // Binomial(10000, 0.001): mean 10, sd 3.16; accept about +-4 sd.
  EXPECT_GE(hits, 1.0);
  EXPECT_LE(hits, 23.0);
}

TEST(Recall, MissingTrueIdNamed) {
  const RetrievalIndex index = RetrievalIndex::build({"a", "b"}, Matrix::identity(2));
  const std::vector<Query> queries{{{1.0, 0.0}, "nowhere-17"}};
  const std::size_t ks[] = {1};
  try {
    recall_report(index, queries, ks, false);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("nowhere-17"), std::string::npos);
  }
}

TEST(Recall, OutputFormats) {
  const RetrievalIndex index = RetrievalIndex::build(numbered_ids(3), Matrix::identity(3));
  const std::vector<Query> queries{{{1.0, 0.0, 0.0}, "g0"}, {{1.0, 0.1, 0.0}, "g1"}};
  const std::size_t ks[] = {1, 5};
  const RecallReport r = recall_report(index, queries, ks, true);
  const auto j = r.to_json();
  EXPECT_EQ(j["Ks"], nlohmann::json({1, 5}));
  EXPECT_EQ(j["recalls"], nlohmann::json({0.5, 1.0}));
  EXPECT_EQ(j["k_1pct"], 1);
  EXPECT_EQ(j["n_queries"], 2);
  EXPECT_EQ(r.to_csv(), "K,recall\n1,0.5\n5,1\n1%(1),0.5\n");
  const std::string table = r.to_table();
  EXPECT_NE(table.find("R@1%"), std::string::npos);
  EXPECT_NE(table.find("50.00"), std::string::npos);
}

TEST(Evaluate, DropFirstProtocol) {
  tfam::TfamConfig cfg;
  cfg.dim = 16;
  cfg.n_heads = 4;
  cfg.n_layers = 1;
  const PairedDataset data = synth::generate_synthetic(20, 7, 16, 0.3, 8);
  const train::ModelParams params = train::init_model(cfg, 2);
  const std::size_t ks[] = {1, 5, 10};
  const RecallReport plain = evaluate(data, params, cfg, ks, true);
  const RecallReport zero = evaluate(data, params, cfg, ks, true, 0);
  EXPECT_EQ(plain.to_json(), zero.to_json());
  const std::size_t drops[] = {0, 6};
  const auto per_drop = eval_variable_length(data, params, cfg, ks, drops);
  ASSERT_EQ(per_drop.size(), 2u);
  EXPECT_EQ(per_drop[0].to_json(), plain.to_json());
  EXPECT_EQ(per_drop[1].drop_first, 6u);
  EXPECT_THROW(evaluate(data, params, cfg, ks, true, 7), DomainError);
  const std::size_t bad[] = {7};
  EXPECT_THROW(eval_variable_length(data, params, cfg, ks, bad), DomainError);
}

}  // namespace
}  // namespace seqgeo::eval
