#include "povmap/geoindex.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "povmap/error.hpp"

namespace povmap {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double mercator_lat(double y_frac) {
  return std::atan(std::sinh(std::numbers::pi * (1.0 - 2.0 * y_frac))) / kDeg;
}

double tiles_per_side(int z) { return std::ldexp(1.0, z); }

// Projects onto the azimuthal-equidistant plane centred at `c`.
void azimuthal(const GeoPoint& c, const GeoPoint& p, double& x, double& y) {
  const double dist = geo_distance_m(c, p);
  if (dist == 0.0) {
    x = y = 0.0;
    return;
  }
  const double az = bearing_rad(c, p);
  x = dist * std::sin(az);
  y = dist * std::cos(az);
}

bool on_segment(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
  const double cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
  const double scale = std::abs(b.lon - a.lon) + std::abs(b.lat - a.lat);
  if (std::abs(cross) > 1e-12 * (scale + 1e-300)) return false;
  return p.lon >= std::min(a.lon, b.lon) && p.lon <= std::max(a.lon, b.lon) &&
         p.lat >= std::min(a.lat, b.lat) && p.lat <= std::max(a.lat, b.lat);
}

}  // namespace

GeoPoint::GeoPoint(double lon_deg, double lat_deg) : lon(lon_deg), lat(lat_deg) {
  if (!std::isfinite(lon) || !std::isfinite(lat) || lon < -180.0 || lon > 180.0 ||
      lat <= -kMaxMercatorLat || lat >= kMaxMercatorLat) {
    throw DomainError("GeoPoint out of range: lon=" + std::to_string(lon_deg) +
                      " lat=" + std::to_string(lat_deg));
  }
}

TileRef::TileRef(int zoom, std::int64_t col, std::int64_t row) : z(zoom), x(col), y(row) {
  if (z < 0 || z > 30) throw DomainError("tile zoom out of range: " + std::to_string(z));
  const std::int64_t n = std::int64_t{1} << z;
  if (x < 0 || x >= n || y < 0 || y >= n) {
    throw DomainError("tile index out of range: " + id());
  }
}

std::string TileRef::id() const {
  return std::to_string(z) + "/" + std::to_string(x) + "/" + std::to_string(y);
}

Polygon::Polygon(std::vector<GeoPoint> ring) : ring_(std::move(ring)) {
  if (!ring_.empty() && !(ring_.front() == ring_.back())) ring_.push_back(ring_.front());
  std::vector<GeoPoint> distinct;
  for (const auto& v : vertices()) {
    bool seen = false;
    for (const auto& d : distinct) seen = seen || d == v;
    if (!seen) distinct.push_back(v);
    if (distinct.size() >= 3) break;
  }
  if (distinct.size() < 3) throw DomainError("polygon needs at least 3 distinct vertices");
}

GeoPoint Polygon::vertex_mean() const {
  double lon = 0.0, lat = 0.0;
  const auto verts = vertices();
  for (const auto& v : verts) {
    lon += v.lon;
    lat += v.lat;
  }
  const double n = static_cast<double>(verts.size());
  return {lon / n, lat / n};
}

LonLatBox Polygon::bounds() const {
  LonLatBox b{ring_.front().lon, ring_.front().lat, ring_.front().lon, ring_.front().lat};
  for (const auto& v : ring_) {
    b.lon_min = std::min(b.lon_min, v.lon);
    b.lon_max = std::max(b.lon_max, v.lon);
    b.lat_min = std::min(b.lat_min, v.lat);
    b.lat_max = std::max(b.lat_max, v.lat);
  }
  return b;
}

GeoPoint tile_center(const TileRef& t) {
  const TileRef checked(t.z, t.x, t.y);
  const double n = tiles_per_side(checked.z);
  const double lon = (static_cast<double>(checked.x) + 0.5) / n * 360.0 - 180.0;
  const double lat = mercator_lat((static_cast<double>(checked.y) + 0.5) / n);
  return {lon, lat};
}

LonLatBox tile_bounds(const TileRef& t) {
  const TileRef checked(t.z, t.x, t.y);
  const double n = tiles_per_side(checked.z);
  const double x = static_cast<double>(checked.x), y = static_cast<double>(checked.y);
  return {x / n * 360.0 - 180.0, mercator_lat((y + 1.0) / n), (x + 1.0) / n * 360.0 - 180.0,
          mercator_lat(y / n)};
}

TileRef tile_containing(const GeoPoint& p, int z) {
  const double n = tiles_per_side(z);
  const double lat = p.lat * kDeg;
  const double xf = (p.lon + 180.0) / 360.0 * n;
  const double yf = (1.0 - std::asinh(std::tan(lat)) / std::numbers::pi) / 2.0 * n;
  const auto clamp = [n](double v) {
    return static_cast<std::int64_t>(std::clamp(std::floor(v), 0.0, n - 1.0));
  };
  return {z, clamp(xf), clamp(yf)};
}

double geo_distance_m(const GeoPoint& a, const GeoPoint& b) {
  const double dlat = (b.lat - a.lat) * kDeg;
  const double dlon = (b.lon - a.lon) * kDeg;
  const double s1 = std::sin(dlat / 2.0), s2 = std::sin(dlon / 2.0);
  const double h = s1 * s1 + std::cos(a.lat * kDeg) * std::cos(b.lat * kDeg) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

double bearing_rad(const GeoPoint& a, const GeoPoint& b) {
  const double la = a.lat * kDeg, lb = b.lat * kDeg, dlon = (b.lon - a.lon) * kDeg;
  return std::atan2(std::sin(dlon) * std::cos(lb),
                    std::cos(la) * std::sin(lb) - std::sin(la) * std::cos(lb) * std::cos(dlon));
}

GeoPoint destination(const GeoPoint& origin, double bearing, double distance_m) {
  const double delta = distance_m / kEarthRadiusM;
  const double la = origin.lat * kDeg, lo = origin.lon * kDeg;
  const double lat = std::asin(std::sin(la) * std::cos(delta) +
                               std::cos(la) * std::sin(delta) * std::cos(bearing));
  const double lon = lo + std::atan2(std::sin(bearing) * std::sin(delta) * std::cos(la),
                                     std::cos(delta) - std::sin(la) * std::sin(lat));
  return {lon / kDeg, lat / kDeg};
}

double ground_size_m(int z, double lat_deg) {
  return kEquatorCircumferenceM / tiles_per_side(z) * std::cos(lat_deg * kDeg);
}

double tile_ground_size_m(const TileRef& t) { return ground_size_m(t.z, tile_center(t).lat); }

bool point_in_polygon(const GeoPoint& p, const Polygon& poly) {
  const auto& r = poly.ring();
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    if (on_segment(p, r[i], r[i + 1])) return true;
  }
  bool inside = false;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    const GeoPoint& a = r[i];
    const GeoPoint& b = r[i + 1];
    if ((a.lat > p.lat) != (b.lat > p.lat)) {
      const double x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
      if (p.lon < x) inside = !inside;
    }
  }
  return inside;
}

double polygon_area_m2(const Polygon& poly) {
  const auto verts = poly.vertices();
  if (verts.size() < 3) throw DomainError("degenerate polygon");
  const GeoPoint c = poly.vertex_mean();
  double twice = 0.0;
  double x0, y0, x1, y1;
  azimuthal(c, verts.back(), x0, y0);
  for (const auto& v : verts) {
    azimuthal(c, v, x1, y1);
    twice += x0 * y1 - x1 * y0;
    x0 = x1;
    y0 = y1;
  }
  return std::abs(twice) / 2.0;
}

std::optional<std::size_t> first_containing(const GeoPoint& p, std::span<const Polygon> polys) {
  for (std::size_t i = 0; i < polys.size(); ++i) {
    if (point_in_polygon(p, polys[i])) return i;
  }
  return std::nullopt;
}

}  // namespace povmap
