#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace povmap {

inline constexpr double kEarthRadiusM = 6371008.8;
inline constexpr double kEquatorCircumferenceM = 40075016.686;
inline constexpr double kMaxMercatorLat = 85.0511287798066;
inline constexpr int kDefaultZoom = 18;

// Web-mercator validity band, lon in [-180, 180], lat strictly inside +-85.0511.
struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;

  GeoPoint() = default;
  GeoPoint(double lon_deg, double lat_deg);

  bool operator==(const GeoPoint&) const = default;
};

// Slippy-map tile; 0 <= x, y < 2^z.
struct TileRef {
  int z = kDefaultZoom;
  std::int64_t x = 0;
  std::int64_t y = 0;

  TileRef() = default;
  TileRef(int zoom, std::int64_t col, std::int64_t row);

  std::string id() const;  // "z/x/y"
  bool operator==(const TileRef&) const = default;
};

struct LonLatBox {
  double lon_min = 0.0, lat_min = 0.0, lon_max = 0.0, lat_max = 0.0;

  bool contains(const GeoPoint& p) const {
    return p.lon >= lon_min && p.lon <= lon_max && p.lat >= lat_min && p.lat <= lat_max;
  }
  double width() const { return lon_max - lon_min; }
  double height() const { return lat_max - lat_min; }
  bool operator==(const LonLatBox&) const = default;
};

// Exterior ring only. Stored closed: front() == back().
class Polygon {
 public:
  Polygon() = default;
  explicit Polygon(std::vector<GeoPoint> ring);

  const std::vector<GeoPoint>& ring() const { return ring_; }
  // Vertices without the closing duplicate.
  std::span<const GeoPoint> vertices() const {
    return {ring_.data(), ring_.empty() ? 0 : ring_.size() - 1};
  }
  GeoPoint vertex_mean() const;
  LonLatBox bounds() const;

  bool operator==(const Polygon&) const = default;

 private:
  std::vector<GeoPoint> ring_;
};

GeoPoint tile_center(const TileRef& t);
LonLatBox tile_bounds(const TileRef& t);
TileRef tile_containing(const GeoPoint& p, int z = kDefaultZoom);

double geo_distance_m(const GeoPoint& a, const GeoPoint& b);
// Initial bearing from a to b, radians clockwise from north.
double bearing_rad(const GeoPoint& a, const GeoPoint& b);
// Point reached from `origin` after `distance_m` along `bearing`.
GeoPoint destination(const GeoPoint& origin, double bearing, double distance_m);

double ground_size_m(int z, double lat_deg);
double tile_ground_size_m(const TileRef& t);

bool point_in_polygon(const GeoPoint& p, const Polygon& poly);
double polygon_area_m2(const Polygon& poly);

// First polygon (in the given order) that contains p.
std::optional<std::size_t> first_containing(const GeoPoint& p, std::span<const Polygon> polys);

}  // namespace povmap
