#include "cli_app.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "seqgeo/checkpoint.hpp"
#include "seqgeo/error.hpp"
#include "seqgeo/geo.hpp"
#include "seqgeo/io.hpp"
#include "seqgeo/log.hpp"
#include "seqgeo/retrieval.hpp"
#include "seqgeo/synthetic.hpp"

#ifndef SEQGEO_GIT_DESCRIBE
#define SEQGEO_GIT_DESCRIBE "unknown"
#endif

namespace seqgeo::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path sidecar(const fs::path& out, const std::string& suffix) {
  std::string s = out.string();
  while (s.size() > 1 && s.back() == '/') s.pop_back();
  return s + suffix;
}

// Provenance record written next to every output: <out>.run.json.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : command_(std::move(command)), started_(utc_now()) {}

  void input(const fs::path& path) {
    if (fs::is_directory(path)) {
      for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file()) files_.push_back(entry.path());
      }
    } else {
      files_.push_back(path);
    }
  }
  void set(const std::string& key, json value) { extra_[key] = std::move(value); }

  void write(const fs::path& out) const {
    json inputs = json::object();
    std::vector<fs::path> sorted = files_;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& f : sorted) inputs[f.string()] = io::sha256_file(f);
    json j = {{"command", command_},   {"git_describe", SEQGEO_GIT_DESCRIBE}, {"inputs", inputs},
              {"started_at", started_}, {"finished_at", utc_now()}};
    j.update(extra_);
    io::write_file(sidecar(out, ".run.json"), j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string started_;
  std::vector<fs::path> files_;
  json extra_ = json::object();
};

json read_json_file(const fs::path& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": malformed JSON: " + e.what());
  }
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long k = std::stoll(item, &used);
      if (used != item.size() || k < 1) throw std::invalid_argument(item);
      ks.push_back(static_cast<std::size_t>(k));
    } catch (const std::logic_error&) {
      throw DomainError("--ks: '" + item + "' is not a positive integer");
    }
  }
  if (ks.empty()) throw DomainError("--ks: empty list");
  return ks;
}

// ---- segment ------------------------------------------------------------------

struct SegmentArgs {
  std::string tracks, out;
  double delta = 50.0;
  std::size_t min_len = 7;
};

void cmd_segment(const SegmentArgs& a, std::ostream& out) {
  RunManifest manifest("segment");
  manifest.input(a.tracks);
  const auto track = io::read_tracks(a.tracks);
  const auto records = geo::segment_track(track, a.delta, a.min_len);
  io::write_sequences(a.out, records);

  json segments = json::array();
  double total = 0.0;
  for (const auto& r : records) {
    segments.push_back({{"seq_id", r.seq_id},
                        {"length", r.frames.size()},
                        {"max_distance_to_head_m", geo::max_distance_to_head(r.frames)}});
    total += static_cast<double>(r.frames.size());
  }
  const json audit = {{"n_frames", track.size()},
                      {"count", records.size()},
                      {"mean_length", records.empty() ? 0.0 : total / static_cast<double>(records.size())},
                      {"segments", segments}};
  io::write_file(sidecar(a.out, ".audit.json"), audit.dump(2) + "\n");
  manifest.set("config", {{"delta", a.delta}, {"min_len", a.min_len}});
  manifest.write(a.out);
  out << records.size() << " segments from " << track.size() << " frames -> " << a.out << "\n";
}

// ---- tiles --------------------------------------------------------------------

struct TilesArgs {
  std::string sequences, out;
  int zoom = 20;
  int pixels = 640;
  double max_shift = 5.0;
  std::uint64_t seed = 0;
};

void cmd_tiles(const TilesArgs& a, std::ostream& out, std::ostream& err) {
  if (a.pixels <= 0) throw DomainError("--pixels must be positive");
  if (a.max_shift < 0.0) throw DomainError("--max-shift must be >= 0");
  RunManifest manifest("tiles");
  manifest.input(a.sequences);
  auto records = io::read_sequences(a.sequences);
  Rng rng(a.seed);
  std::size_t outside = 0;
  for (auto& r : records) {
    r.tile = geo::make_tile(r.frames, a.zoom, a.pixels, a.max_shift, rng);
    for (const auto& f : r.frames) {
      const geo::PixelPosition p = geo::frame_in_tile(f, *r.tile);
      if (!p.inside) {
        ++outside;
        err << "warning: frame " << f.id << " of " << r.seq_id << " falls outside its tile (pixel " << p.x << ", "
            << p.y << ")\n";
      }
    }
  }
  io::write_sequences(a.out, records);
  manifest.set("config", {{"zoom", a.zoom}, {"pixels", a.pixels}, {"max_shift", a.max_shift}});
  manifest.set("seed", a.seed);
  manifest.set("frames_outside_tile", outside);
  manifest.write(a.out);
  out << records.size() << " tiles, " << outside << " frames outside -> " << a.out << "\n";
}

// ---- synth --------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t pairs = 640;
  std::size_t test_pairs = 0;
  std::size_t seq_len = 7;
  std::size_t dim = 32;
  double noise = 0.3;
  double rotation = std::numbers::pi;
  std::uint64_t seed = 0;
};

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.test_pairs >= a.pairs) throw DomainError("--test-pairs must be smaller than --pairs");
  RunManifest manifest("synth");
  synth::SynthOptions opts;
  opts.max_rotation_angle = a.rotation;
  const PairedDataset data = synth::generate_synthetic(a.pairs, a.seq_len, a.dim, a.noise, a.seed, opts);
  if (a.test_pairs == 0) {
    io::write_dataset(a.out, data);
  } else {
    const std::size_t n_train = a.pairs - a.test_pairs;
    io::write_dataset(fs::path(a.out) / "train", data.slice(0, n_train));
    io::write_dataset(fs::path(a.out) / "test", data.slice(n_train, a.test_pairs));
  }
  manifest.set("config", {{"pairs", a.pairs},
                          {"test_pairs", a.test_pairs},
                          {"seq_len", a.seq_len},
                          {"dim", a.dim},
                          {"noise_sigma", a.noise},
                          {"max_rotation_angle", a.rotation}});
  manifest.set("seed", a.seed);
  manifest.write(a.out);
  out << a.pairs << " synthetic pairs -> " << a.out << "\n";
}

// ---- train --------------------------------------------------------------------

struct TrainArgs {
  std::string data, config, out;
  json overrides = json::object();
  std::size_t checkpoint_every = 0;
};

io::RunConfig resolve_config(const std::string& config_path, const json& overrides, const PairedDataset& data) {
  json flat = config_path.empty() ? json::object() : read_json_file(config_path);
  if (!flat.is_object()) throw DomainError(config_path + ": run config must be a flat JSON object");
  flat.update(overrides);
  if (!flat.contains("dim")) flat["dim"] = data.dim;
  if (!flat.contains("seq_len")) flat["seq_len"] = data.seq_len;
  return io::apply_run_config(flat);
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
  RunManifest manifest("train");
  manifest.input(a.data);
  if (!a.config.empty()) manifest.input(a.config);
  const PairedDataset data = io::read_dataset(a.data);
  const io::RunConfig cfg = resolve_config(a.config, a.overrides, data);
  const fs::path dir(a.out);
  fs::create_directories(dir);

  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoError("cannot open '" + (dir / "metrics.jsonl").string() + "' for writing");
  train::TrainHooks hooks;
  std::size_t steps_so_far = 0;
  hooks.on_epoch = [&](const train::EpochLog& e, const train::ModelParams& params) {
    steps_so_far = e.steps;
    metrics << json{{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"lr", e.lr}, {"wall_ms", e.wall_ms},
                    {"steps", e.steps}}.dump()
            << "\n";
    metrics.flush();
    log::info("epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.mean_loss));
    if (a.checkpoint_every && (e.epoch + 1) % a.checkpoint_every == 0) {
      io::Checkpoint ck{cfg.model, cfg.train, e.steps, params};
      char name[32];
      std::snprintf(name, sizeof name, "epoch-%04zu.ckpt", e.epoch);
      io::save_checkpoint(dir / name, ck);
    }
  };
  const train::TrainResult result = train::train(data, cfg.model, cfg.train, hooks);
  io::save_checkpoint(dir / "model.ckpt", {cfg.model, cfg.train, result.steps, result.params});

  manifest.set("config", io::to_json(cfg));
  manifest.set("seed", cfg.train.seed);
  manifest.set("steps", result.steps);
  manifest.write(dir);
  out << "trained " << result.steps << " steps, final mean loss "
      << (result.log.empty() ? 0.0 : result.log.back().mean_loss) << " -> " << (dir / "model.ckpt").string() << "\n";
}

// ---- eval ---------------------------------------------------------------------

struct EvalArgs {
  std::string data, checkpoint, out, csv, masking, ks = "1,5,10";
  std::size_t drop_first = 0;
  bool table = false;
  bool mean_pool = false;
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  RunManifest manifest("eval");
  manifest.input(a.data);
  const PairedDataset data = io::read_dataset(a.data);
  const std::vector<std::size_t> ks = parse_ks(a.ks);
  eval::RecallReport report;
  json model_json = nullptr;
  if (a.mean_pool) {
    report = eval::evaluate_mean_pool(data, ks, true, a.drop_first);
  } else {
    if (a.checkpoint.empty()) throw DomainError("eval needs --checkpoint (or --mean-pool)");
    manifest.input(a.checkpoint);
    io::Checkpoint ck = io::load_checkpoint(a.checkpoint);
    if (!a.masking.empty()) ck.model.masking = tfam::masking_mode_from_string(a.masking);
    report = eval::evaluate(data, ck.params, ck.model, ks, true, a.drop_first);
    model_json = io::to_json(ck.model);
  }
  const std::string text = report.to_json().dump(2) + "\n";
  if (a.out.empty()) {
    if (!a.table) out << text;
  } else {
    io::write_file(a.out, text);
  }
  if (!a.csv.empty()) io::write_file(a.csv, report.to_csv());
  if (a.table) out << report.to_table();
  if (!a.out.empty()) {
    manifest.set("config", {{"model", model_json}, {"ks", ks}, {"drop_first", a.drop_first},
                            {"mean_pool", a.mean_pool}});
    manifest.write(a.out);
  }
}

// ---- retrieve -----------------------------------------------------------------

struct RetrieveArgs {
  std::string checkpoint, gallery, query, query_id, mask;
  std::size_t k = 10;
};

void cmd_retrieve(const RetrieveArgs& a, std::ostream& out) {
  const io::Checkpoint ck = io::load_checkpoint(a.checkpoint);
  const PairedDataset data = io::read_dataset(a.gallery);
  Matrix frames;
  if (!a.query.empty() == !a.query_id.empty()) throw DomainError("give exactly one of --query or --query-id");
  if (!a.query.empty()) {
    frames = io::read_embeddings(a.query).to_matrix();
  } else {
    const auto it = std::find(data.ids.begin(), data.ids.end(), a.query_id);
    if (it == data.ids.end()) throw DomainError("query id not in dataset: " + a.query_id);
    frames = data.ground[static_cast<std::size_t>(it - data.ids.begin())];
  }
  const tfam::DropoutMask mask =
      a.mask.empty() ? tfam::DropoutMask::full(ck.model.seq_len) : tfam::DropoutMask::parse(a.mask);
  const eval::RetrievalIndex index = eval::aerial_index(data, ck.params);
  const std::vector<double> q = train::ground_descriptor(frames, mask, ck.params, ck.model);
  const std::vector<std::size_t> rows = index.query_topk(q, a.k);
  json ranked = json::array();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto g = index.features().row(rows[r]);
    double sq = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) sq += (q[d] - g[d]) * (q[d] - g[d]);
    ranked.push_back({{"rank", r + 1}, {"id", index.ids()[rows[r]]}, {"distance", std::sqrt(sq)}});
  }
  out << json{{"mask", mask.str()}, {"results", ranked}}.dump(2) << "\n";
}

template <class T>
void override_if_set(json& overrides, CLI::Option* opt, const char* key, const T& value) {
  if (opt->count() > 0) overrides[key] = value;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"seqgeo: cross-view image-sequence geo-localization", "seqgeo"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  SegmentArgs seg;
  auto* segment = app.add_subcommand("segment", "Split GPS tracks into sequences that fit one aerial tile");
  segment->add_option("--tracks", seg.tracks, "Input track (JSON lines of frames)")->required();
  segment->add_option("--delta", seg.delta, "Largest distance from a segment's first frame, meters")
      ->capture_default_str();
  segment->add_option("--min-len", seg.min_len, "Shortest segment kept")->capture_default_str();
  segment->add_option("--out", seg.out, "Output sequences (JSON lines); audit goes to <out>.audit.json")
      ->required();

  TilesArgs til;
  auto* tiles = app.add_subcommand("tiles", "Attach an aerial tile to every sequence");
  tiles->add_option("--sequences", til.sequences, "Input sequences (JSON lines)")->required();
  tiles->add_option("--zoom", til.zoom, "Web-Mercator zoom level")->capture_default_str();
  tiles->add_option("--pixels", til.pixels, "Tile width and height in pixels")->capture_default_str();
  tiles->add_option("--max-shift", til.max_shift, "Radius of the random center shift, meters")->capture_default_str();
  tiles->add_option("--seed", til.seed, "Seed for the shifts")->capture_default_str();
  tiles->add_option("--out", til.out, "Output sequences with tiles")->required();

  SynthArgs syn;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic paired dataset");
  synth_cmd->add_option("--pairs", syn.pairs, "Number of pairs")->capture_default_str();
  synth_cmd->add_option("--test-pairs", syn.test_pairs, "Hold out the last N pairs into <out>/test (0: no split)")
      ->capture_default_str();
  synth_cmd->add_option("--seq-len", syn.seq_len, "Frames per sequence")->capture_default_str();
  synth_cmd->add_option("--dim", syn.dim, "Feature width")->capture_default_str();
  synth_cmd->add_option("--noise", syn.noise, "Noise norm per frame")->capture_default_str();
  synth_cmd->add_option("--rotation-angle", syn.rotation, "Largest Givens angle of the per-frame rotations")
      ->capture_default_str();
  synth_cmd->add_option("--seed", syn.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--out", syn.out, "Output dataset directory")->required();

  TrainArgs trn;
  std::size_t t_seed = 0, t_epochs = 0, t_steps = 0, t_batch = 0, t_j = 0, t_heads = 0, t_layers = 0, t_decay = 0;
  double t_lr = 0, t_lr_end = 0, t_gamma = 0;
  std::string t_masking;
  auto* train_cmd = app.add_subcommand("train", "Train the sequence aggregator and aerial embedder");
  train_cmd->add_option("--data", trn.data, "Training dataset directory")->required();
  train_cmd->add_option("--config", trn.config, "Flat JSON run config; flags below override it");
  train_cmd->add_option("--out", trn.out, "Output directory (model.ckpt, metrics.jsonl)")->required();
  train_cmd->add_option("--checkpoint-every", trn.checkpoint_every, "Also save epoch-NNNN.ckpt every N epochs");
  auto* o_seed = train_cmd->add_option("--seed", t_seed, "Seed");
  auto* o_epochs = train_cmd->add_option("--epochs", t_epochs, "Epochs");
  auto* o_steps = train_cmd->add_option("--max-steps", t_steps, "Optimizer step cap (0: none)");
  auto* o_batch = train_cmd->add_option("--batch-size", t_batch, "Pairs per batch");
  auto* o_j = train_cmd->add_option("--max-dropped", t_j, "J, most frames dropped per sequence");
  auto* o_heads = train_cmd->add_option("--n-heads", t_heads, "Attention heads");
  auto* o_layers = train_cmd->add_option("--n-layers", t_layers, "Stacked attention layers");
  auto* o_decay = train_cmd->add_option("--decay-start-epoch", t_decay, "First epoch of the linear lr decay");
  auto* o_lr = train_cmd->add_option("--lr-start", t_lr, "Initial learning rate");
  auto* o_lr_end = train_cmd->add_option("--lr-end", t_lr_end, "Final learning rate");
  auto* o_gamma = train_cmd->add_option("--gamma", t_gamma, "Triplet loss scale");
  auto* o_mask = train_cmd->add_option("--masking", t_masking, "strict or paper_literal");

  EvalArgs evl;
  auto* eval_cmd = app.add_subcommand("eval", "Recall@K of ground sequences against the aerial gallery");
  eval_cmd->add_option("--data", evl.data, "Dataset directory (queries and gallery)")->required();
  eval_cmd->add_option("--checkpoint", evl.checkpoint, "Trained model");
  eval_cmd->add_option("--out", evl.out, "Report JSON path (default: stdout)");
  eval_cmd->add_option("--csv", evl.csv, "Also write K,recall CSV here");
  eval_cmd->add_option("--ks", evl.ks, "Comma-separated K values")->capture_default_str();
  eval_cmd->add_option("--drop-first", evl.drop_first, "Mask out the first N frames of every query")
      ->capture_default_str();
  eval_cmd->add_option("--masking", evl.masking, "Override the checkpoint's masking: strict or paper_literal");
  eval_cmd->add_flag("--table", evl.table, "Print a human-readable table");
  eval_cmd->add_flag("--mean-pool", evl.mean_pool, "Evaluate the untrained mean-pool baseline instead");

  RetrieveArgs ret;
  auto* retrieve = app.add_subcommand("retrieve", "Rank gallery tiles for one query sequence");
  retrieve->add_option("--checkpoint", ret.checkpoint, "Trained model")->required();
  retrieve->add_option("--gallery", ret.gallery, "Dataset directory whose aerial features form the gallery")
      ->required();
  retrieve->add_option("--query", ret.query, "Query sequence as an embedding file (T rows)");
  retrieve->add_option("--query-id", ret.query_id, "Use this dataset pair's ground sequence as the query");
  retrieve->add_option("--mask", ret.mask, "Keep-mask such as 0000001 (default: all frames)");
  retrieve->add_option("-k,--top", ret.k, "Number of results")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*segment) cmd_segment(seg, out);
    if (*tiles) cmd_tiles(til, out, err);
    if (*synth_cmd) cmd_synth(syn, out);
    if (*train_cmd) {
      override_if_set(trn.overrides, o_seed, "seed", t_seed);
      override_if_set(trn.overrides, o_epochs, "epochs", t_epochs);
      override_if_set(trn.overrides, o_steps, "max_steps", t_steps);
      override_if_set(trn.overrides, o_batch, "batch_size", t_batch);
      override_if_set(trn.overrides, o_j, "max_dropped", t_j);
      override_if_set(trn.overrides, o_heads, "n_heads", t_heads);
      override_if_set(trn.overrides, o_layers, "n_layers", t_layers);
      override_if_set(trn.overrides, o_decay, "decay_start_epoch", t_decay);
      override_if_set(trn.overrides, o_lr, "lr_start", t_lr);
      override_if_set(trn.overrides, o_lr_end, "lr_end", t_lr_end);
      override_if_set(trn.overrides, o_gamma, "gamma", t_gamma);
      override_if_set(trn.overrides, o_mask, "masking_mode", t_masking);
      cmd_train(trn, out);
    }
    if (*eval_cmd) cmd_eval(evl, out);
    if (*retrieve) cmd_retrieve(ret, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace seqgeo::cli
