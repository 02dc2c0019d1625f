#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "seqgeo/training.hpp"

namespace seqgeo::io {

// Model and training settings read from a flat JSON run-config file. Keys
// are the snake_case field names of TfamConfig and TrainConfig.
struct RunConfig {
  tfam::TfamConfig model;
  train::TrainConfig train;
};

nlohmann::json to_json(const tfam::TfamConfig& cfg);
nlohmann::json to_json(const train::TrainConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);

// Applies the keys of `flat` on top of `base`. Every unknown key, wrong type
// and failed invariant is collected and reported in one DomainError.
RunConfig apply_run_config(const nlohmann::json& flat, RunConfig base = {});
tfam::TfamConfig tfam_config_from_json(const nlohmann::json& j);
train::TrainConfig train_config_from_json(const nlohmann::json& j);

inline constexpr char kCheckpointMagic[4] = {'S', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "SGCK", u32 version, u32 header length, JSON header, then every
// weight as little-endian f32 in ModelParams::for_each order. The header
// lists the tensor shapes so a reader can validate the blob.
struct Checkpoint {
  tfam::TfamConfig model;
  train::TrainConfig train;
  std::uint64_t step = 0;
  train::ModelParams params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace seqgeo::io
