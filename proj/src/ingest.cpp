#include "povmap/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/png_io.hpp"

namespace povmap {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::array<std::string_view, kNumPoiCategories> kCategoryNames = {"hospital", "school",
                                                                         "townhall", "bank"};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.filename().string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

json ring_to_json(const Polygon& p) {
  json ring = json::array();
  for (const auto& v : p.ring()) ring.push_back({v.lon, v.lat});
  return ring;
}

Polygon ring_from_json(const json& coords, const std::string& what) {
  if (!coords.is_array() || coords.empty()) throw ValidationError(what + ": missing coordinates");
  std::vector<GeoPoint> ring;
  for (const auto& c : coords.at(0)) {
    ring.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
  }
  return Polygon(std::move(ring));
}

void expect_header(const std::vector<csv::Row>& rows, const csv::Row& header, const fs::path& path) {
  if (rows.empty() || rows.front() != header) {
    throw ValidationError(path.filename().string() + ": expected header " + csv::join(header));
  }
}

}  // namespace

std::string_view to_string(PoiCategory c) { return kCategoryNames[static_cast<std::size_t>(c)]; }

PoiCategory parse_poi_category(std::string_view s) {
  for (std::size_t i = 0; i < kNumPoiCategories; ++i) {
    if (kCategoryNames[i] == s) return kPoiCategories[i];
  }
  throw ValidationError("unknown POI category '" + std::string(s) + "'");
}

const DistrictRecord* CityBundle::find_district(std::int64_t id) const {
  for (const auto& d : districts) {
    if (d.district_id == id) return &d;
  }
  return nullptr;
}

std::int64_t poverty_headcount(const DistrictRecord& d) {
  return static_cast<std::int64_t>(std::llround(static_cast<double>(d.population) * d.poverty_rate));
}

void validate_bundle(const CityBundle& b) {
  std::set<std::int64_t> ids;
  for (const auto& d : b.districts) {
    const std::string where = "district " + std::to_string(d.district_id);
    if (!ids.insert(d.district_id).second) throw ValidationError(where + ": duplicate district_id");
    if (d.population < 0) throw ValidationError(where + ": population < 0");
    if (!(d.poverty_rate >= 0.0 && d.poverty_rate <= 1.0)) {
      throw ValidationError(where + ": poverty_rate outside [0,1]");
    }
  }
  std::set<std::string> tile_ids;
  for (const auto& t : b.tiles) {
    const std::string where = "tile " + t.tile_id;
    if (!tile_ids.insert(t.tile_id).second) throw ValidationError(where + ": duplicate tile_id");
    if (t.levels.size() != kTileValues) throw ValidationError(where + ": pixels must be 256x256x3");
    if (t.district_id && !ids.contains(*t.district_id)) {
      throw ValidationError(where + ": district_id " + std::to_string(*t.district_id) + " not in districts");
    }
  }
  const auto& nl = b.nightlight;
  if (nl.rows < 0 || nl.cols < 0 ||
      static_cast<std::size_t>(nl.rows) * static_cast<std::size_t>(nl.cols) != nl.values.size()) {
    throw ValidationError("nightlight: rows*cols does not match value count");
  }
  for (std::size_t i = 0; i < nl.values.size(); ++i) {
    if (!std::isfinite(nl.values[i]) || nl.values[i] < 0.0) {
      throw ValidationError("nightlight: value " + std::to_string(i) + " negative or non-finite");
    }
  }
}

std::optional<std::int64_t> assign_district(const TileRef& t, std::span<const DistrictRecord> districts) {
  const GeoPoint c = tile_center(t);
  std::optional<std::int64_t> best;
  for (const auto& d : districts) {
    if ((!best || d.district_id < *best) && point_in_polygon(c, d.boundary)) best = d.district_id;
  }
  return best;
}

std::string polygon_to_wkt(const Polygon& p) {
  std::string out = "POLYGON ((";
  bool first = true;
  for (const auto& v : p.ring()) {
    if (!first) out += ", ";
    first = false;
    out += csv::format_double(v.lon) + " " + csv::format_double(v.lat);
  }
  return out + "))";
}

Polygon polygon_from_wkt(std::string_view wkt) {
  const auto open = wkt.find("((");
  const auto close = wkt.find("))");
  if (wkt.substr(0, 7) != "POLYGON" || open == std::string_view::npos || close == std::string_view::npos ||
      close < open) {
    throw ValidationError("unsupported WKT (expected POLYGON ((...))): " + std::string(wkt.substr(0, 40)));
  }
  std::vector<GeoPoint> ring;
  std::string_view body = wkt.substr(open + 2, close - open - 2);
  while (!body.empty()) {
    const auto comma = body.find(',');
    std::string_view pair = body.substr(0, comma);
    while (!pair.empty() && pair.front() == ' ') pair.remove_prefix(1);
    while (!pair.empty() && pair.back() == ' ') pair.remove_suffix(1);
    const auto space = pair.find(' ');
    if (space == std::string_view::npos) throw ValidationError("malformed WKT vertex");
    ring.emplace_back(csv::parse_double(pair.substr(0, space), "wkt lon"),
                      csv::parse_double(pair.substr(space + 1), "wkt lat"));
    if (comma == std::string_view::npos) break;
    body.remove_prefix(comma + 1);
  }
  return Polygon(std::move(ring));
}

CityBundle load_bundle(const fs::path& root) {
  for (const char* name : {"manifest.csv", "pois.geojson", "buildings.geojson", "nightlight.csv", "districts.csv"}) {
    if (!fs::exists(root / name)) throw IoError("missing bundle file: " + (root / name).string());
  }
  if (!fs::is_directory(root / "tiles")) throw IoError("missing tiles/ directory in " + root.string());

  CityBundle b;

  const auto drows = csv::read_file(root / "districts.csv");
  expect_header(drows, {"district_id", "name", "population", "poverty_rate", "boundary_wkt"}, "districts.csv");
  for (std::size_t i = 1; i < drows.size(); ++i) {
    const auto& r = drows[i];
    const std::string where = "districts.csv row " + std::to_string(i);
    if (r.size() != 5) throw ValidationError(where + ": expected 5 fields");
    DistrictRecord d;
    d.district_id = csv::parse_int(r[0], where + " district_id");
    d.name = r[1];
    d.population = csv::parse_int(r[2], where + " population");
    d.poverty_rate = csv::parse_double(r[3], where + " poverty_rate");
    try {
      d.boundary = polygon_from_wkt(r[4]);
    } catch (const DomainError& e) {
      throw ValidationError(where + " boundary_wkt: " + e.what());
    }
    b.districts.push_back(std::move(d));
  }

  const auto nrows = csv::read_file(root / "nightlight.csv");
  expect_header(nrows, {"lon_min", "lat_min", "lon_max", "lat_max", "rows", "cols"}, "nightlight.csv");
  if (nrows.size() < 2 || nrows[1].size() != 6) throw ValidationError("nightlight.csv: missing geometry row");
  auto& nl = b.nightlight;
  nl.bounds = {csv::parse_double(nrows[1][0], "lon_min"), csv::parse_double(nrows[1][1], "lat_min"),
               csv::parse_double(nrows[1][2], "lon_max"), csv::parse_double(nrows[1][3], "lat_max")};
  nl.rows = static_cast<int>(csv::parse_int(nrows[1][4], "rows"));
  nl.cols = static_cast<int>(csv::parse_int(nrows[1][5], "cols"));
  if (nrows.size() != static_cast<std::size_t>(nl.rows) + 2) {
    throw ValidationError("nightlight.csv: expected " + std::to_string(nl.rows) + " value rows");
  }
  for (int r = 0; r < nl.rows; ++r) {
    const auto& row = nrows[r + 2];
    if (row.size() != static_cast<std::size_t>(nl.cols)) {
      throw ValidationError("nightlight.csv: row " + std::to_string(r) + " has wrong column count");
    }
    for (const auto& v : row) nl.values.push_back(csv::parse_double(v, "nightlight value"));
  }

  const json pois = read_json(root / "pois.geojson");
  for (const auto& f : pois.at("features")) {
    const auto& c = f.at("geometry").at("coordinates");
    b.pois.push_back({parse_poi_category(f.at("properties").at("category").get<std::string>()),
                      GeoPoint(c.at(0).get<double>(), c.at(1).get<double>())});
  }
  const json buildings = read_json(root / "buildings.geojson");
  std::size_t bi = 0;
  for (const auto& f : buildings.at("features")) {
    const std::string where = "building " + std::to_string(bi++);
    if (f.at("geometry").at("type") != "Polygon") throw ValidationError(where + ": geometry must be Polygon");
    try {
      b.buildings.push_back(ring_from_json(f.at("geometry").at("coordinates"), where));
    } catch (const DomainError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }

  const auto mrows = csv::read_file(root / "manifest.csv");
  expect_header(mrows, {"tile_id", "z", "x", "y", "district_id", "path"}, "manifest.csv");
  std::vector<fs::path> paths;
  std::vector<std::string> missing;
  for (std::size_t i = 1; i < mrows.size(); ++i) {
    const auto& r = mrows[i];
    const std::string where = "manifest.csv row " + std::to_string(i);
    if (r.size() != 6) throw ValidationError(where + ": expected 6 fields");
    ImageTile t;
    t.tile_id = r[0];
    try {
      t.tile = TileRef(static_cast<int>(csv::parse_int(r[1], where + " z")), csv::parse_int(r[2], where + " x"),
                       csv::parse_int(r[3], where + " y"));
    } catch (const DomainError& e) {
      throw ValidationError("tile " + t.tile_id + ": " + e.what());
    }
    if (!r[4].empty()) t.district_id = csv::parse_int(r[4], where + " district_id");
    paths.push_back(root / r[5]);
    if (!fs::exists(paths.back())) missing.push_back(t.tile_id);
    b.tiles.push_back(std::move(t));
  }
  if (!missing.empty()) {
    std::string msg = "manifest references missing PNG for tile_id:";
    for (const auto& id : missing) msg += " " + id;
    throw ValidationError(msg);
  }

  std::vector<std::exception_ptr> errors(b.tiles.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < b.tiles.size(); ++i) {
    try {
      Rgb8Image img = read_png_rgb(paths[i]);
      if (img.width != kTilePx || img.height != kTilePx) {
        throw ValidationError("tile " + b.tiles[i].tile_id + ": image must be 256x256");
      }
      b.tiles[i].levels = std::move(img.data);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  validate_bundle(b);
  return b;
}

void write_bundle(const CityBundle& b, const fs::path& root) {
  validate_bundle(b);
  std::error_code ec;
  fs::create_directories(root / "tiles", ec);
  if (ec) throw IoError("cannot create " + (root / "tiles").string() + ": " + ec.message());

  std::vector<csv::Row> manifest{{"tile_id", "z", "x", "y", "district_id", "path"}};
  for (const auto& t : b.tiles) {
    std::string file = t.tile_id;
    std::replace(file.begin(), file.end(), '/', '_');
    const std::string rel = "tiles/" + file + ".png";
    manifest.push_back({t.tile_id, std::to_string(t.tile.z), std::to_string(t.tile.x), std::to_string(t.tile.y),
                        t.district_id ? std::to_string(*t.district_id) : "", rel});
  }
  csv::write_file(root / "manifest.csv", manifest);

  std::vector<std::exception_ptr> errors(b.tiles.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < b.tiles.size(); ++i) {
    try {
      write_png_rgb(root / manifest[i + 1][5], kTilePx, kTilePx, b.tiles[i].levels);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  json pois = {{"type", "FeatureCollection"}, {"features", json::array()}};
  for (const auto& p : b.pois) {
    pois["features"].push_back({{"type", "Feature"},
                                {"properties", {{"category", std::string(to_string(p.category))}}},
                                {"geometry", {{"type", "Point"}, {"coordinates", {p.location.lon, p.location.lat}}}}});
  }
  write_json(root / "pois.geojson", pois);

  json buildings = {{"type", "FeatureCollection"}, {"features", json::array()}};
  for (const auto& poly : b.buildings) {
    buildings["features"].push_back(
        {{"type", "Feature"},
         {"properties", json::object()},
         {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({ring_to_json(poly)})}}}});
  }
  write_json(root / "buildings.geojson", buildings);

  const auto& nl = b.nightlight;
  std::vector<csv::Row> nrows{{"lon_min", "lat_min", "lon_max", "lat_max", "rows", "cols"},
                              {csv::format_double(nl.bounds.lon_min), csv::format_double(nl.bounds.lat_min),
                               csv::format_double(nl.bounds.lon_max), csv::format_double(nl.bounds.lat_max),
                               std::to_string(nl.rows), std::to_string(nl.cols)}};
  for (int r = 0; r < nl.rows; ++r) {
    csv::Row row;
    for (int c = 0; c < nl.cols; ++c) row.push_back(csv::format_double(nl.at(r, c)));
    nrows.push_back(std::move(row));
  }
  csv::write_file(root / "nightlight.csv", nrows);

  std::vector<csv::Row> drows{{"district_id", "name", "population", "poverty_rate", "boundary_wkt"}};
  for (const auto& d : b.districts) {
    drows.push_back({std::to_string(d.district_id), d.name, std::to_string(d.population),
                     csv::format_double(d.poverty_rate), polygon_to_wkt(d.boundary)});
  }
  csv::write_file(root / "districts.csv", drows);
}

}  // namespace povmap
