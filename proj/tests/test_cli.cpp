#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cli_app.hpp"
#include "json.hpp"
#include "seqgeo/io.hpp"
#include "temp_dir.hpp"
#include "test_util.hpp"

namespace seqgeo::cli {
namespace {

using nlohmann::json;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  testing::TempDir dir_;
};

TEST_F(Cli, HelpListsEveryFlag) {
  const Result r = run_cli({"eval", "--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* flag : {"--data", "--checkpoint", "--out", "--csv", "--ks", "--drop-first", "--masking", "--table"}) {
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
  }
}

TEST_F(Cli, UnknownFlagIsUsageError) {
  const Result r = run_cli({"segment", "--tracks", "x", "--out", "y", "--delat", "5"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(run_cli({}).code, kExitUsage);
}

TEST_F(Cli, SegmentStraightTrack) {
  io::write_tracks(path("track.jsonl"), testing::straight_track(20, 8.0));
  const Result r = run_cli({"segment", "--tracks", path("track.jsonl"), "--out", path("seqs.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto records = io::read_sequences(path("seqs.jsonl"));
  ASSERT_FALSE(records.empty());
  EXPECT_EQ(records[0].frames.size(), 7u);
  const json audit = json::parse(io::read_file(path("seqs.jsonl.audit.json")));
  EXPECT_EQ(audit["count"], records.size());
  EXPECT_LT(audit["segments"][0]["max_distance_to_head_m"].get<double>(), 50.0);
  const json manifest = json::parse(io::read_file(path("seqs.jsonl.run.json")));
  EXPECT_EQ(manifest["inputs"][path("track.jsonl")], io::sha256_file(path("track.jsonl")));
  EXPECT_TRUE(manifest.contains("git_describe"));
  EXPECT_TRUE(manifest.contains("started_at"));
  EXPECT_TRUE(manifest.contains("finished_at"));
}

TEST_F(Cli, SegmentEmptyAndMissingInput) {
  io::write_file(path("empty.jsonl"), "");
  EXPECT_EQ(run_cli({"segment", "--tracks", path("empty.jsonl"), "--out", path("e.jsonl")}).code, 0);
  EXPECT_EQ(io::read_file(path("e.jsonl")), "");
  EXPECT_EQ(run_cli({"segment", "--tracks", path("missing.jsonl"), "--out", path("e.jsonl")}).code, kExitUsage);
  io::write_file(path("bad.jsonl"), "{\"id\":\"a\",\"lat\":95,\"lon\":0,\"heading\":0}\n");
  const Result r = run_cli({"segment", "--tracks", path("bad.jsonl"), "--out", path("e.jsonl")});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find(":1:"), std::string::npos) << r.err;
}

TEST_F(Cli, TilesCenteredFitAndSeedReproducible) {
  io::write_tracks(path("track.jsonl"), testing::straight_track(40, 8.0));
  ASSERT_EQ(run_cli({"segment", "--tracks", path("track.jsonl"), "--out", path("s.jsonl")}).code, 0);
  const Result centered = run_cli({"tiles", "--sequences", path("s.jsonl"), "--max-shift", "0", "--out", path("t0.jsonl")});
  ASSERT_EQ(centered.code, 0) << centered.err;
  EXPECT_EQ(centered.err.find("warning"), std::string::npos) << centered.err;
  ASSERT_EQ(run_cli({"tiles", "--sequences", path("s.jsonl"), "--seed", "9", "--out", path("a.jsonl")}).code, 0);
  ASSERT_EQ(run_cli({"tiles", "--sequences", path("s.jsonl"), "--seed", "9", "--out", path("b.jsonl")}).code, 0);
  EXPECT_EQ(io::read_file(path("a.jsonl")), io::read_file(path("b.jsonl")));
}

TEST_F(Cli, TilesWarnPerOutsideFrame) {
  io::write_tracks(path("track.jsonl"), testing::straight_track(10, 8.0));
  ASSERT_EQ(run_cli({"segment", "--tracks", path("track.jsonl"), "--out", path("s.jsonl")}).code, 0);
  const Result r = run_cli({"tiles", "--sequences", path("s.jsonl"), "--zoom", "22", "--out", path("t.jsonl")});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning: frame"), std::string::npos);
}

TEST_F(Cli, TilesOutsideMercatorBand) {
  const std::vector<geo::GeoFrame> polar = testing::straight_track(10, 8.0, 86.0, 10.0);
  io::write_tracks(path("polar.jsonl"), polar);
  ASSERT_EQ(run_cli({"segment", "--tracks", path("polar.jsonl"), "--out", path("s.jsonl")}).code, 0);
  const Result r = run_cli({"tiles", "--sequences", path("s.jsonl"), "--zoom", "25", "--out", path("t.jsonl")});
  EXPECT_EQ(r.code, kExitDomain);
  EXPECT_NE(r.err.find("outside Mercator band"), std::string::npos);
}

class CliPipeline : public Cli {
 protected:
  void SetUp() override {
    ASSERT_EQ(run_cli({"synth", "--pairs", "48", "--test-pairs", "16", "--dim", "16", "--seed", "3", "--out",
                       path("ds")}).code,
              0);
    io::write_file(path("cfg.json"), R"({"n_heads": 4, "n_layers": 1, "lr_start": 1e-3, "lr_end": 1e-4,
                                          "batch_size": 16, "epochs": 4, "decay_start_epoch": 2, "seed": 5})");
  }
  Result train(const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"train", "--data", path("ds/train"), "--config", path("cfg.json"), "--out", path(out)};
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
  }
};

TEST_F(CliPipeline, TrainWritesCheckpointMetricsAndManifest) {
  const Result r = train("run", {"--checkpoint-every", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(path("run/model.ckpt")));
  EXPECT_TRUE(std::filesystem::exists(path("run/epoch-0001.ckpt")));
  std::istringstream metrics(io::read_file(path("run/metrics.jsonl")));
  std::string line;
  int n = 0;
  while (std::getline(metrics, line)) {
    const json j = json::parse(line);
    for (const char* key : {"epoch", "mean_loss", "lr", "wall_ms"}) EXPECT_TRUE(j.contains(key)) << key;
    ++n;
  }
  EXPECT_EQ(n, 4);
  const json manifest = json::parse(io::read_file(path("run.run.json")));
  EXPECT_EQ(manifest["config"]["n_heads"], 4);
  EXPECT_EQ(manifest["seed"], 5);
}

TEST_F(CliPipeline, FlagsOverrideConfig) {
  ASSERT_EQ(train("run", {"--epochs", "2", "--n-heads", "2"}).code, 0);
  const json manifest = json::parse(io::read_file(path("run.run.json")));
  EXPECT_EQ(manifest["config"]["epochs"], 2);
  EXPECT_EQ(manifest["config"]["n_heads"], 2);
  EXPECT_EQ(manifest["config"]["n_layers"], 1);
}

TEST_F(CliPipeline, ConfigErrorsListEveryKey) {
  io::write_file(path("bad.json"), R"({"n_heads": 5, "gamma": -1, "colour": "red"})");
  const Result r = run_cli({"train", "--data", path("ds/train"), "--config", path("bad.json"), "--out", path("x")});
  EXPECT_EQ(r.code, kExitDomain);
  for (const char* key : {"colour", "gamma", "divisible"}) EXPECT_NE(r.err.find(key), std::string::npos) << key;
}

TEST_F(CliPipeline, EvalDropFirstProtocol) {
  ASSERT_EQ(train("run").code, 0);
  const std::vector<std::string> base{"eval", "--data", path("ds/test"), "--checkpoint", path("run/model.ckpt")};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
  };
  const Result plain = with({});
  const Result zero = with({"--drop-first", "0"});
  ASSERT_EQ(plain.code, 0) << plain.err;
  EXPECT_EQ(plain.out, zero.out);
  const json report = json::parse(plain.out);
  for (const char* key : {"Ks", "recalls", "k_1pct", "n_queries"}) EXPECT_TRUE(report.contains(key)) << key;
  EXPECT_EQ(with({"--drop-first", "7"}).code, kExitDomain);
  EXPECT_EQ(with({"--masking", "sideways"}).code, kExitDomain);
  EXPECT_EQ(with({"--masking", "paper_literal", "--drop-first", "3"}).code, 0);

  const Result table = with({"--table", "--out", path("rep.json"), "--csv", path("rep.csv")});
  ASSERT_EQ(table.code, 0);
  EXPECT_NE(table.out.find("R@1%"), std::string::npos);
  EXPECT_EQ(json::parse(io::read_file(path("rep.json"))), report);
  EXPECT_EQ(io::read_file(path("rep.csv")).rfind("K,recall\n", 0), 0u);
  EXPECT_TRUE(std::filesystem::exists(path("rep.json.run.json")));
}

TEST_F(CliPipeline, RetrieveRanksIds) {
  ASSERT_EQ(train("run").code, 0);
  const Result r = run_cli({"retrieve", "--checkpoint", path("run/model.ckpt"), "--gallery", path("ds/test"),
                            "--query-id", "pair-000040", "-k", "5", "--mask", "0000011"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["results"].size(), 5u);
  EXPECT_EQ(j["mask"], "0000011");
  EXPECT_EQ(j["results"][0]["rank"], 1);
  EXPECT_EQ(run_cli({"retrieve", "--checkpoint", path("run/model.ckpt"), "--gallery", path("ds/test"),
                     "--query-id", "nobody"}).code,
            kExitDomain);
}

TEST_F(CliPipeline, SeededRunsReproduce) {
  ASSERT_EQ(train("a").code, 0);
  ASSERT_EQ(train("b").code, 0);
  EXPECT_EQ(io::read_file(path("a/model.ckpt")), io::read_file(path("b/model.ckpt")));
}

}  // namespace
}  // namespace seqgeo::cli
