#include "seqgeo/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "seqgeo/error.hpp"

namespace seqgeo::geo {
namespace {

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

// Local east/north offset of `p` from `origin` in meters.
ShiftMeters local_offset(LatLon origin, LatLon p) {
  return {kEarthRadiusM * deg2rad(p.lon - origin.lon) * std::cos(deg2rad(origin.lat)),
          kEarthRadiusM * deg2rad(p.lat - origin.lat)};
}

}  // namespace

double haversine_distance(LatLon a, LatLon b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlambda = deg2rad(b.lon - a.lon);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  // cos(phi1)*cos(phi2) is commutative, so the result is symmetric bit-for-bit.
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

std::vector<Span> candidate_spans(std::span<const GeoFrame> track, double delta_m) {
  if (!(delta_m > 0.0)) throw DomainError("segment_track: delta must be positive");
  std::vector<Span> spans;
  const std::size_t n = track.size();
  std::size_t head = 0;
  while (head < n) {
    std::size_t t = head + 1;
    while (t < n && haversine_distance(track[head].position(), track[t].position()) < delta_m) ++t;
    const std::size_t last = t - 1;
    spans.push_back({head, last});
    if (t == n) break;
    // Runs of one or two frames have their midpoint at the head itself.
    head = std::max((head + last) / 2, head + 1);
  }
  return spans;
}

std::vector<SequenceRecord> segment_track(std::span<const GeoFrame> track, double delta_m,
                                          std::size_t min_len) {
  if (min_len < 1) throw DomainError("segment_track: min_len must be at least 1");
  std::vector<SequenceRecord> out;
  for (const Span& span : candidate_spans(track, delta_m)) {
    if (span.size() < min_len) continue;
    SequenceRecord rec;
    rec.frames.assign(track.begin() + static_cast<std::ptrdiff_t>(span.begin),
                      track.begin() + static_cast<std::ptrdiff_t>(span.end) + 1);
    rec.seq_id = rec.frames.front().id + "+" + std::to_string(span.size());
    out.push_back(std::move(rec));
  }
  return out;
}

LatLon tile_center(std::span<const GeoFrame> frames) {
  if (frames.empty()) throw DomainError("empty sequence");
  double lat = 0.0;
  double lon = 0.0;
  for (const auto& f : frames) {
    lat += f.lat;
    lon += f.lon;
  }
  const auto n = static_cast<double>(frames.size());
  return {lat / n, lon / n};
}

ShiftMeters apply_random_shift(double max_shift_m, Rng& rng) {
  if (max_shift_m < 0.0) throw DomainError("apply_random_shift: max_shift must be >= 0");
  const double radius = max_shift_m * std::sqrt(rng.uniform());
  const double angle = 2.0 * std::numbers::pi * rng.uniform();
  if (max_shift_m == 0.0) return {};
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

LatLon offset_position(LatLon origin, ShiftMeters shift) {
  return {origin.lat + rad2deg(shift.north / kEarthRadiusM),
          origin.lon + rad2deg(shift.east / (kEarthRadiusM * std::cos(deg2rad(origin.lat))))};
}

double ground_resolution(int zoom, double lat) {
  if (zoom < 0) throw DomainError("ground_resolution: zoom must be >= 0");
  if (std::abs(lat) >= kMercatorMaxLat) {
    throw DomainError("outside Mercator band: latitude " + std::to_string(lat));
  }
  return kMercatorEquatorRes * std::cos(deg2rad(lat)) / std::ldexp(1.0, zoom);
}

AerialTile make_tile(std::span<const GeoFrame> frames, int zoom, int pixels, double max_shift_m,
                     Rng& rng) {
  if (pixels <= 0) throw DomainError("make_tile: pixels must be positive");
  const LatLon mean = tile_center(frames);
  // Validates zoom and latitude before any randomness is consumed.
  ground_resolution(zoom, mean.lat);
  const ShiftMeters shift = apply_random_shift(max_shift_m, rng);
  const LatLon center = offset_position(mean, shift);
  return {center.lat, center.lon, zoom, pixels, shift.east, shift.north};
}

PixelPosition frame_in_tile(const GeoFrame& frame, const AerialTile& tile) {
  const double res = ground_resolution(tile.zoom, tile.center_lat);
  const ShiftMeters d = local_offset({tile.center_lat, tile.center_lon}, frame.position());
  const double half = tile.pixels / 2.0;
  PixelPosition p{half + d.east / res, half - d.north / res, false};
  const double size = tile.pixels;
  p.inside = p.x >= 0.0 && p.x < size && p.y >= 0.0 && p.y < size;
  return p;
}

double max_distance_to_head(std::span<const GeoFrame> frames) {
  double worst = 0.0;
  for (const auto& f : frames) {
    worst = std::max(worst, haversine_distance(frames.front().position(), f.position()));
  }
  return worst;
}

}  // namespace seqgeo::geo
