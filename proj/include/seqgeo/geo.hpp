#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqgeo/rng.hpp"

namespace seqgeo::geo {

inline constexpr double kEarthRadiusM = 6371008.8;
inline constexpr double kMercatorMaxLat = 85.05113;
inline constexpr double kMercatorEquatorRes = 156543.03392;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

// One ground capture point.
struct GeoFrame {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
  double heading = 0.0;  // compass degrees, [0, 360)
  std::optional<std::string> image_path;

  LatLon position() const { return {lat, lon}; }
  bool operator==(const GeoFrame&) const = default;
};

// An aerial image footprint. center_lat/center_lon is the image center after
// the random shift; shift_east_m/shift_north_m records the applied offset
// from the sequence mean.
struct AerialTile {
  double center_lat = 0.0;
  double center_lon = 0.0;
  int zoom = 20;
  int pixels = 640;
  double shift_east_m = 0.0;
  double shift_north_m = 0.0;

  bool operator==(const AerialTile&) const = default;
};

struct SequenceRecord {
  std::string seq_id;
  std::vector<GeoFrame> frames;
  std::optional<AerialTile> tile;

  bool operator==(const SequenceRecord&) const = default;
};

// Inclusive index range into a track.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // inclusive
  std::size_t size() const { return end - begin + 1; }
  bool operator==(const Span&) const = default;
};

struct ShiftMeters {
  double east = 0.0;
  double north = 0.0;
};

struct PixelPosition {
  double x = 0.0;  // column, grows eastward
  double y = 0.0;  // row, grows southward
  bool inside = false;
};

// Great-circle distance on the mean-radius sphere.
double haversine_distance(LatLon a, LatLon b);

// Every candidate segment the greedy scan visits, including those shorter
// than min_len. Exposed for auditing the restart rule.
std::vector<Span> candidate_spans(std::span<const GeoFrame> track, double delta_m);

// Greedy segmentation: extend from the head while the distance to the head
// stays below delta_m, restart at the midpoint of the emitted run, drop runs
// shorter than min_len. Segment ids are "<first frame id>+<length>".
std::vector<SequenceRecord> segment_track(std::span<const GeoFrame> track, double delta_m = 50.0,
                                          std::size_t min_len = 7);

// Arithmetic mean of latitudes and longitudes. Throws DomainError on an empty list.
LatLon tile_center(std::span<const GeoFrame> frames);

// Shift vector uniform on the disk of radius max_shift_m.
ShiftMeters apply_random_shift(double max_shift_m, Rng& rng);

// Moves a position by a metric offset using the local tangent-plane approximation.
LatLon offset_position(LatLon origin, ShiftMeters shift);

// Web-Mercator meters per pixel. Throws DomainError outside the Mercator band.
double ground_resolution(int zoom, double lat);

// Builds the tile for a sequence: mean center, then a random shift.
AerialTile make_tile(std::span<const GeoFrame> frames, int zoom, int pixels, double max_shift_m,
                     Rng& rng);

// Local equirectangular projection into tile pixel coordinates.
PixelPosition frame_in_tile(const GeoFrame& frame, const AerialTile& tile);

// Largest distance from frames[0] to any frame in the list.
double max_distance_to_head(std::span<const GeoFrame> frames);

}  // namespace seqgeo::geo
