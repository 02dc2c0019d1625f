#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "seqgeo/dataset.hpp"
#include "seqgeo/geo.hpp"

namespace seqgeo::io {

namespace fs = std::filesystem;

// ---- Tracks and sequences (JSON-lines) --------------------------------------

// One GeoFrame per line: {"id", "lat", "lon", "heading", optional "image"}.
// Blank lines are skipped. Errors carry "<source>:<line>:". Duplicate ids and
// tracks that cross the antimeridian are rejected.
std::vector<geo::GeoFrame> parse_tracks(std::istream& in, const std::string& source = "<stream>");
std::vector<geo::GeoFrame> read_tracks(const fs::path& path);
void write_tracks(const fs::path& path, const std::vector<geo::GeoFrame>& frames);

nlohmann::json to_json(const geo::GeoFrame& frame);
nlohmann::json to_json(const geo::AerialTile& tile);
nlohmann::json to_json(const geo::SequenceRecord& record);

// One SequenceRecord per line: {"seq_id", "frame_ids", "frames", "tile"}; tile
// is null until tiles are attached.
std::vector<geo::SequenceRecord> parse_sequences(std::istream& in, const std::string& source = "<stream>");
std::vector<geo::SequenceRecord> read_sequences(const fs::path& path);
void write_sequences(const fs::path& path, const std::vector<geo::SequenceRecord>& records);

// ---- Embedding files --------------------------------------------------------

inline constexpr char kEmbeddingMagic[4] = {'S', 'G', 'E', 'O'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::size_t kEmbeddingHeaderBytes = 17;

// Binary layout (little-endian): "SGEO", u32 version, u32 n_rows, u32 dim,
// u8 dtype, then n_rows * dim f32 values row-major. The companion manifest
// (<path>.json) holds {"ids": [...]} index-aligned with the rows, plus any
// extra keys the producer adds.
struct EmbeddingFile {
  std::uint32_t n_rows = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;
  std::vector<std::string> ids;
  nlohmann::json extra = nlohmann::json::object();

  void validate() const;
  Matrix to_matrix() const;
  static EmbeddingFile from_matrix(const Matrix& m, std::vector<std::string> ids);
};

fs::path manifest_path(const fs::path& embedding_path);
void write_embeddings(const fs::path& path, const EmbeddingFile& file);
EmbeddingFile read_embeddings(const fs::path& path);

// ---- Paired datasets --------------------------------------------------------

// A dataset directory holds ground.sgeo (seq_len consecutive rows per pair,
// manifest ids "<pair id>/<frame index>", plus "seq_len" and "sequence_ids")
// and aerial.sgeo (one row per pair, manifest ids = pair ids).
void write_dataset(const fs::path& dir, const PairedDataset& data);
PairedDataset read_dataset(const fs::path& dir);

// ---- Misc -------------------------------------------------------------------

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, const std::string& contents);
// Hex SHA-256 of the file bytes.
std::string sha256_file(const fs::path& path);

}  // namespace seqgeo::io
