#include "seqgeo/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "seqgeo/error.hpp"
#include "le_bytes.hpp"

namespace seqgeo::io {
namespace {

using nlohmann::json;

[[noreturn]] void fail_at(const std::string& source, std::size_t line, const std::string& msg) {
  throw IoError(source + ":" + std::to_string(line) + ": " + msg);
}

double require_number(const json& obj, const char* key, const std::string& source, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) fail_at(source, line, std::string("missing field '") + key + "'");
  if (!it->is_number()) fail_at(source, line, std::string("field '") + key + "' must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) fail_at(source, line, std::string("field '") + key + "' must be finite");
  return v;
}

std::string require_string(const json& obj, const char* key, const std::string& source, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) fail_at(source, line, std::string("missing field '") + key + "'");
  if (!it->is_string()) fail_at(source, line, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& source,
                         std::size_t line) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) fail_at(source, line, "unknown field '" + key + "'");
  }
}

geo::GeoFrame frame_from_json(const json& obj, const std::string& source, std::size_t line) {
  if (!obj.is_object()) fail_at(source, line, "expected a JSON object");
  reject_unknown_keys(obj, {"id", "lat", "lon", "heading", "image"}, source, line);
  geo::GeoFrame f;
  f.id = require_string(obj, "id", source, line);
  f.lat = require_number(obj, "lat", source, line);
  f.lon = require_number(obj, "lon", source, line);
  f.heading = require_number(obj, "heading", source, line);
  if (f.lat < -90.0 || f.lat > 90.0) fail_at(source, line, "lat " + std::to_string(f.lat) + " outside [-90, 90]");
  if (f.lon < -180.0 || f.lon > 180.0) {
    fail_at(source, line, "lon " + std::to_string(f.lon) + " outside [-180, 180]");
  }
  if (f.heading < 0.0 || f.heading >= 360.0) {
    fail_at(source, line, "heading " + std::to_string(f.heading) + " outside [0, 360)");
  }
  if (const auto it = obj.find("image"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) fail_at(source, line, "field 'image' must be a string");
    f.image_path = it->get<std::string>();
  }
  return f;
}

json parse_line(const std::string& text, const std::string& source, std::size_t line) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail_at(source, line, std::string("malformed JSON: ") + e.what());
  }
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

// ---- Tracks and sequences ---------------------------------------------------

std::vector<geo::GeoFrame> parse_tracks(std::istream& in, const std::string& source) {
  std::vector<geo::GeoFrame> frames;
  std::unordered_set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    geo::GeoFrame f = frame_from_json(parse_line(text, source, line), source, line);
    if (!ids.insert(f.id).second) fail_at(source, line, "duplicate frame id '" + f.id + "'");
    if (!frames.empty() && std::abs(f.lon - frames.back().lon) > 180.0) {
      fail_at(source, line, "track crosses the antimeridian (unsupported)");
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<geo::GeoFrame> read_tracks(const fs::path& path) {
  auto in = open_in(path);
  return parse_tracks(in, path.string());
}

json to_json(const geo::GeoFrame& frame) {
  json j = {{"id", frame.id}, {"lat", frame.lat}, {"lon", frame.lon}, {"heading", frame.heading}};
  if (frame.image_path) j["image"] = *frame.image_path;
  return j;
}

json to_json(const geo::AerialTile& tile) {
  return {{"center_lat", tile.center_lat},     {"center_lon", tile.center_lon},
          {"zoom", tile.zoom},                 {"pixels", tile.pixels},
          {"shift_east_m", tile.shift_east_m}, {"shift_north_m", tile.shift_north_m}};
}

json to_json(const geo::SequenceRecord& record) {
  json ids = json::array();
  json frames = json::array();
  for (const auto& f : record.frames) {
    ids.push_back(f.id);
    frames.push_back(to_json(f));
  }
  return {{"seq_id", record.seq_id},
          {"frame_ids", std::move(ids)},
          {"frames", std::move(frames)},
          {"tile", record.tile ? to_json(*record.tile) : json(nullptr)}};
}

void write_tracks(const fs::path& path, const std::vector<geo::GeoFrame>& frames) {
  auto out = open_out(path);
  for (const auto& f : frames) out << to_json(f).dump() << '\n';
  if (!out) throw IoError("write failed: '" + path.string() + "'");
}

std::vector<geo::SequenceRecord> parse_sequences(std::istream& in, const std::string& source) {
  std::vector<geo::SequenceRecord> records;
  std::unordered_set<std::string> seq_ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    const json obj = parse_line(text, source, line);
    if (!obj.is_object()) fail_at(source, line, "expected a JSON object");
    reject_unknown_keys(obj, {"seq_id", "frame_ids", "frames", "tile"}, source, line);
    geo::SequenceRecord rec;
    rec.seq_id = require_string(obj, "seq_id", source, line);
    if (!seq_ids.insert(rec.seq_id).second) fail_at(source, line, "duplicate seq_id '" + rec.seq_id + "'");
    const auto frames = obj.find("frames");
    if (frames == obj.end() || !frames->is_array()) fail_at(source, line, "field 'frames' must be an array");
    std::unordered_set<std::string> frame_ids;
    for (const auto& f : *frames) {
      rec.frames.push_back(frame_from_json(f, source, line));
      if (!frame_ids.insert(rec.frames.back().id).second) {
        fail_at(source, line, "duplicate frame id '" + rec.frames.back().id + "' in sequence");
      }
    }
    if (const auto ids = obj.find("frame_ids"); ids != obj.end()) {
      bool consistent = ids->is_array() && ids->size() == rec.frames.size();
      for (std::size_t i = 0; consistent && i < rec.frames.size(); ++i) {
        consistent = (*ids)[i].is_string() && (*ids)[i].get<std::string>() == rec.frames[i].id;
      }
      if (!consistent) fail_at(source, line, "'frame_ids' disagrees with 'frames'");
    }
    if (const auto tile = obj.find("tile"); tile != obj.end() && !tile->is_null()) {
      if (!tile->is_object()) fail_at(source, line, "field 'tile' must be an object or null");
      reject_unknown_keys(*tile, {"center_lat", "center_lon", "zoom", "pixels", "shift_east_m", "shift_north_m"},
                          source, line);
      geo::AerialTile t;
      t.center_lat = require_number(*tile, "center_lat", source, line);
      t.center_lon = require_number(*tile, "center_lon", source, line);
      const double zoom = require_number(*tile, "zoom", source, line);
      const double pixels = require_number(*tile, "pixels", source, line);
      if (zoom < 0 || zoom != std::floor(zoom)) fail_at(source, line, "tile zoom must be a non-negative integer");
      if (pixels <= 0 || pixels != std::floor(pixels)) fail_at(source, line, "tile pixels must be a positive integer");
      t.zoom = static_cast<int>(zoom);
      t.pixels = static_cast<int>(pixels);
      t.shift_east_m = require_number(*tile, "shift_east_m", source, line);
      t.shift_north_m = require_number(*tile, "shift_north_m", source, line);
      rec.tile = t;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<geo::SequenceRecord> read_sequences(const fs::path& path) {
  auto in = open_in(path);
  return parse_sequences(in, path.string());
}

void write_sequences(const fs::path& path, const std::vector<geo::SequenceRecord>& records) {
  auto out = open_out(path);
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw IoError("write failed: '" + path.string() + "'");
}

// ---- Embedding files --------------------------------------------------------

void EmbeddingFile::validate() const {
  if (values.size() != static_cast<std::size_t>(n_rows) * dim) {
    throw IoError("payload length mismatch: " + std::to_string(values.size()) + " values for " +
                  std::to_string(n_rows) + "x" + std::to_string(dim));
  }
  if (ids.size() != n_rows) {
    throw IoError("manifest has " + std::to_string(ids.size()) + " ids for " + std::to_string(n_rows) + " rows");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw IoError("manifest id '" + id + "' is not unique");
  }
}

Matrix EmbeddingFile::to_matrix() const {
  Matrix m(n_rows, dim);
  for (std::size_t i = 0; i < values.size(); ++i) m.data()[i] = values[i];
  return m;
}

EmbeddingFile EmbeddingFile::from_matrix(const Matrix& m, std::vector<std::string> ids) {
  EmbeddingFile f;
  f.n_rows = static_cast<std::uint32_t>(m.rows());
  f.dim = static_cast<std::uint32_t>(m.cols());
  f.values.reserve(m.size());
  for (double v : m.data()) f.values.push_back(static_cast<float>(v));
  f.ids = std::move(ids);
  return f;
}

fs::path manifest_path(const fs::path& embedding_path) {
  fs::path p = embedding_path;
  p += ".json";
  return p;
}

void write_embeddings(const fs::path& path, const EmbeddingFile& file) {
  file.validate();
  std::string buf;
  buf.reserve(kEmbeddingHeaderBytes + file.values.size() * 4);
  buf.append(kEmbeddingMagic, 4);
  put_u32(buf, kEmbeddingVersion);
  put_u32(buf, file.n_rows);
  put_u32(buf, file.dim);
  buf.push_back(static_cast<char>(kDtypeF32));
  for (float v : file.values) put_u32(buf, std::bit_cast<std::uint32_t>(v));
  write_file(path, buf);

  json manifest = file.extra.is_object() ? file.extra : json::object();
  manifest["ids"] = file.ids;
  write_file(manifest_path(path), manifest.dump(2) + "\n");
}

EmbeddingFile read_embeddings(const fs::path& path) {
  const std::string buf = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < kEmbeddingHeaderBytes) throw IoError(path.string() + ": truncated header");
  if (std::memcmp(buf.data(), kEmbeddingMagic, 4) != 0) throw IoError(path.string() + ": bad magic");
  const std::uint32_t version = get_u32(p + 4);
  if (version != kEmbeddingVersion) {
    throw IoError(path.string() + ": version mismatch (file " + std::to_string(version) + ", expected " +
                  std::to_string(kEmbeddingVersion) + ")");
  }
  EmbeddingFile f;
  f.n_rows = get_u32(p + 8);
  f.dim = get_u32(p + 12);
  if (p[16] != kDtypeF32) throw IoError(path.string() + ": unsupported dtype " + std::to_string(p[16]));
  const std::size_t count = static_cast<std::size_t>(f.n_rows) * f.dim;
  if (buf.size() - kEmbeddingHeaderBytes != count * 4) {
    throw IoError(path.string() + ": payload length mismatch (" + std::to_string(buf.size() - kEmbeddingHeaderBytes) +
                  " bytes, expected " + std::to_string(count * 4) + ")");
  }
  f.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    f.values[i] = std::bit_cast<float>(get_u32(p + kEmbeddingHeaderBytes + 4 * i));
  }

  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path(path)));
  } catch (const json::parse_error& e) {
    throw IoError(manifest_path(path).string() + ": malformed manifest: " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("ids") || !manifest["ids"].is_array()) {
    throw IoError(manifest_path(path).string() + ": manifest needs an 'ids' array");
  }
  for (const auto& id : manifest["ids"]) {
    if (!id.is_string()) throw IoError(manifest_path(path).string() + ": ids must be strings");
    f.ids.push_back(id.get<std::string>());
  }
  manifest.erase("ids");
  f.extra = std::move(manifest);
  try {
    f.validate();
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return f;
}

// ---- Paired datasets --------------------------------------------------------

void write_dataset(const fs::path& dir, const PairedDataset& data) {
  data.validate();
  Matrix ground(data.size() * data.seq_len, data.dim);
  std::vector<std::string> frame_ids;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t t = 0; t < data.seq_len; ++t) {
      const auto src = data.ground[i].row(t);
      std::copy(src.begin(), src.end(), ground.row(i * data.seq_len + t).begin());
      frame_ids.push_back(data.ids[i] + "/" + std::to_string(t));
    }
  }
  EmbeddingFile g = EmbeddingFile::from_matrix(ground, std::move(frame_ids));
  g.extra = {{"seq_len", data.seq_len}, {"sequence_ids", data.ids}};
  write_embeddings(dir / "ground.sgeo", g);
  write_embeddings(dir / "aerial.sgeo", EmbeddingFile::from_matrix(data.aerial, data.ids));
}

PairedDataset read_dataset(const fs::path& dir) {
  const EmbeddingFile g = read_embeddings(dir / "ground.sgeo");
  const EmbeddingFile a = read_embeddings(dir / "aerial.sgeo");
  const auto where = (dir / "ground.sgeo.json").string();
  if (!g.extra.contains("seq_len") || !g.extra["seq_len"].is_number_unsigned()) {
    throw IoError(where + ": missing 'seq_len'");
  }
  if (!g.extra.contains("sequence_ids") || !g.extra["sequence_ids"].is_array()) {
    throw IoError(where + ": missing 'sequence_ids'");
  }
  PairedDataset data;
  data.seq_len = g.extra["seq_len"].get<std::size_t>();
  data.dim = g.dim;
  data.ids = g.extra["sequence_ids"].get<std::vector<std::string>>();
  if (data.seq_len == 0 || g.n_rows != data.ids.size() * data.seq_len) {
    throw IoError(where + ": " + std::to_string(g.n_rows) + " rows do not form " + std::to_string(data.ids.size()) +
                  " sequences of length " + std::to_string(data.seq_len));
  }
  if (a.ids != data.ids) throw IoError((dir / "aerial.sgeo.json").string() + ": ids do not match sequence_ids");
  if (a.dim != g.dim) throw IoError(dir.string() + ": ground and aerial dims differ");
  const Matrix rows = g.to_matrix();
  for (std::size_t i = 0; i < data.ids.size(); ++i) {
    Matrix seq(data.seq_len, data.dim);
    for (std::size_t t = 0; t < data.seq_len; ++t) {
      const auto src = rows.row(i * data.seq_len + t);
      std::copy(src.begin(), src.end(), seq.row(t).begin());
    }
    data.ground.push_back(std::move(seq));
  }
  data.aerial = a.to_matrix();
  data.validate();
  return data;
}

// ---- Misc -------------------------------------------------------------------

std::string read_file(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& contents) {
  auto out = open_out(path, std::ios::binary);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed: '" + path.string() + "'");
}

std::string sha256_file(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 failed for '" + path.string() + "'");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

}  // namespace seqgeo::io
