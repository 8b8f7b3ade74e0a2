#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "povmap/geoindex.hpp"

namespace povmap {

inline constexpr int kTilePx = 256;
inline constexpr int kTileChannels = 3;
inline constexpr std::size_t kTileValues = std::size_t{kTilePx} * kTilePx * kTileChannels;

enum class PoiCategory : int { kHospital = 0, kSchool = 1, kTownhall = 2, kBank = 3 };
inline constexpr std::size_t kNumPoiCategories = 4;
inline constexpr std::array<PoiCategory, kNumPoiCategories> kPoiCategories = {
    PoiCategory::kHospital, PoiCategory::kSchool, PoiCategory::kTownhall, PoiCategory::kBank};

std::string_view to_string(PoiCategory c);
PoiCategory parse_poi_category(std::string_view s);

// 256x256x3 tile. Pixels are 8-bit levels; the real value of a level is level/255,
// which is exactly the set of values a PNG tile can carry.
struct ImageTile {
  std::string tile_id;
  TileRef tile;
  std::vector<std::uint8_t> levels;  // HWC row-major, kTileValues entries
  std::optional<std::int64_t> district_id;

  double pixel(std::size_t i) const { return levels[i] / 255.0; }
  template <typename T>
  void pixels_into(std::span<T> out) const {
    for (std::size_t i = 0; i < levels.size(); ++i) out[i] = static_cast<T>(levels[i]) / T(255);
  }
  template <typename T>
  std::vector<T> pixels() const {
    std::vector<T> out(levels.size());
    pixels_into<T>(out);
    return out;
  }

  bool operator==(const ImageTile&) const = default;
};

struct PoiRecord {
  PoiCategory category = PoiCategory::kHospital;
  GeoPoint location;
  bool operator==(const PoiRecord&) const = default;
};

// Row 0 is the northern edge (lat_max); cells are uniform in degrees.
struct NightlightRaster {
  LonLatBox bounds;
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  double cell_width() const { return bounds.width() / cols; }
  double cell_height() const { return bounds.height() / rows; }
  bool operator==(const NightlightRaster&) const = default;
};

struct DistrictRecord {
  std::int64_t district_id = 0;
  std::string name;
  Polygon boundary;
  std::int64_t population = 0;
  double poverty_rate = 0.0;
  bool operator==(const DistrictRecord&) const = default;
};

struct CityBundle {
  std::vector<ImageTile> tiles;
  std::vector<PoiRecord> pois;
  std::vector<Polygon> buildings;
  NightlightRaster nightlight;
  std::vector<DistrictRecord> districts;

  const DistrictRecord* find_district(std::int64_t id) const;
  bool operator==(const CityBundle&) const = default;
};

// round(population * rate), halves away from zero.
std::int64_t poverty_headcount(const DistrictRecord& d);

// Type invariants plus tile -> district referential integrity. Throws ValidationError.
void validate_bundle(const CityBundle& b);

// Lowest district_id whose boundary contains the tile centre, if any.
std::optional<std::int64_t> assign_district(const TileRef& t, std::span<const DistrictRecord> districts);

CityBundle load_bundle(const std::filesystem::path& root);
void write_bundle(const CityBundle& b, const std::filesystem::path& root);

// WKT helpers for the districts table (exterior ring only).
std::string polygon_to_wkt(const Polygon& p);
Polygon polygon_from_wkt(std::string_view wkt);

}  // namespace povmap
