#include "povmap/traitsets.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include "povmap/csv.hpp"
#include "povmap/error.hpp"

namespace povmap {
namespace {

bool centroid_in_tile(const GeoPoint& c, const LonLatBox& box) {
  return c.lon >= box.lon_min && c.lon < box.lon_max && c.lat > box.lat_min && c.lat <= box.lat_max;
}

double mean_area_in_tile(const LonLatBox& box, std::span<const GeoPoint> centroids, std::span<const double> areas) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    if (centroid_in_tile(centroids[i], box)) {
      sum += areas[i];
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace

Eigen::VectorXd AccessSample::gravity(const PoiEmbeddingTable& table) const {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(table.dim());
  for (std::size_t j = 0; j < kNumPoiCategories; ++j) p += inv_km[j] * table.rows.row(j).transpose();
  return p;
}

DistanceVector distance_vector(const ImageTile& t, std::span<const PoiRecord> pois) {
  const GeoPoint centre = tile_center(t.tile);
  DistanceVector d;
  d.fill(std::numeric_limits<double>::infinity());
  for (const auto& poi : pois) {
    auto& slot = d[static_cast<std::size_t>(poi.category)];
    slot = std::min(slot, geo_distance_m(centre, poi.location));
  }
  for (std::size_t j = 0; j < kNumPoiCategories; ++j) {
    if (!std::isfinite(d[j])) {
      throw DatasetError("no POI of category '" + std::string(to_string(kPoiCategories[j])) + "' in bundle");
    }
    d[j] = std::max(d[j], kDistanceFloorM);
  }
  return d;
}

Eigen::VectorXd gravity_embedding(const DistanceVector& d, const PoiEmbeddingTable& table) {
  if (table.rows.rows() != static_cast<Eigen::Index>(kNumPoiCategories)) {
    throw DomainError("POI table must have one row per category");
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(table.dim());
  for (std::size_t j = 0; j < kNumPoiCategories; ++j) p += table.rows.row(j).transpose() / (d[j] / 1000.0);
  return p;
}

MultiLabel radius_multilabel(const DistanceVector& d, double radius_m) {
  if (!(radius_m > 0.0)) throw DomainError("radius must be positive");
  MultiLabel y;
  for (std::size_t j = 0; j < kNumPoiCategories; ++j) y[j] = d[j] < radius_m ? 1 : 0;
  return y;
}

double floor_area(const ImageTile& t, std::span<const Polygon> buildings) {
  const LonLatBox box = tile_bounds(t.tile);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& b : buildings) {
    if (centroid_in_tile(b.vertex_mean(), box)) {
      sum += polygon_area_m2(b);
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double nightlight_intensity(const ImageTile& t, const NightlightRaster& raster) {
  const LonLatBox box = tile_bounds(t.tile);
  const LonLatBox& rb = raster.bounds;
  const double cw = raster.cell_width(), ch = raster.cell_height();
  if (raster.rows == 0 || raster.cols == 0) throw DatasetError("tile " + t.tile_id + ": empty nightlight raster");
  const int c0 = std::max(0, static_cast<int>(std::floor((box.lon_min - rb.lon_min) / cw)));
  const int c1 = std::min(raster.cols - 1, static_cast<int>(std::floor((box.lon_max - rb.lon_min) / cw)));
  const int r0 = std::max(0, static_cast<int>(std::floor((rb.lat_max - box.lat_max) / ch)));
  const int r1 = std::min(raster.rows - 1, static_cast<int>(std::floor((rb.lat_max - box.lat_min) / ch)));
  double weighted = 0.0, total = 0.0;
  for (int r = r0; r <= r1; ++r) {
    const double top = rb.lat_max - r * ch, bottom = rb.lat_max - (r + 1) * ch;
    const double oh = std::min(top, box.lat_max) - std::max(bottom, box.lat_min);
    if (oh <= 0.0) continue;
    for (int c = c0; c <= c1; ++c) {
      const double left = rb.lon_min + c * cw, right = rb.lon_min + (c + 1) * cw;
      const double ow = std::min(right, box.lon_max) - std::max(left, box.lon_min);
      if (ow <= 0.0) continue;
      weighted += raster.at(r, c) * ow * oh;
      total += ow * oh;
    }
  }
  if (total <= 0.0) throw DatasetError("tile " + t.tile_id + " does not overlap the nightlight raster");
  return weighted / total;
}

AccessSample make_access_sample(const ImageTile& t, std::span<const PoiRecord> pois, double radius_m) {
  AccessSample s;
  s.tile_id = t.tile_id;
  s.distance_m = distance_vector(t, pois);
  for (std::size_t j = 0; j < kNumPoiCategories; ++j) s.inv_km[j] = 1000.0 / s.distance_m[j];
  s.multilabel = radius_multilabel(s.distance_m, radius_m);
  return s;
}

TraitSets build_all(const CityBundle& bundle, double radius_m) {
  validate_bundle(bundle);
  const std::size_t n = bundle.tiles.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return bundle.tiles[a].tile_id < bundle.tiles[b].tile_id; });

  std::vector<GeoPoint> centroids(bundle.buildings.size());
  std::vector<double> areas(bundle.buildings.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < bundle.buildings.size(); ++i) {
    centroids[i] = bundle.buildings[i].vertex_mean();
    areas[i] = polygon_area_m2(bundle.buildings[i]);
  }

  TraitSets out;
  out.access.resize(n);
  out.morph.resize(n);
  out.econ.resize(n);
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::size_t k = 0; k < n; ++k) {
    try {
      const ImageTile& t = bundle.tiles[order[k]];
      out.access[k] = make_access_sample(t, bundle.pois, radius_m);
      const double fa = mean_area_in_tile(tile_bounds(t.tile), centroids, areas);
      out.morph[k] = {t.tile_id, fa, std::log1p(fa)};
      const double ni = nightlight_intensity(t, bundle.nightlight);
      out.econ[k] = {t.tile_id, ni, std::log1p(ni)};
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

void write_trait_csvs(const TraitSets& sets, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<csv::Row> access{{"tile_id", "d_hospital", "d_school", "d_townhall", "d_bank", "w_hospital", "w_school",
                                "w_townhall", "w_bank", "y_hospital", "y_school", "y_townhall", "y_bank"}};
  for (const auto& s : sets.access) {
    csv::Row r{s.tile_id};
    for (double d : s.distance_m) r.push_back(csv::format_double(d));
    for (double w : s.inv_km) r.push_back(csv::format_double(w));
    for (int y : s.multilabel) r.push_back(std::to_string(y));
    access.push_back(std::move(r));
  }
  csv::write_file(dir / "access_samples.csv", access);
  std::vector<csv::Row> morph{{"tile_id", "floor_area", "log_fa"}};
  for (const auto& s : sets.morph) {
    morph.push_back({s.tile_id, csv::format_double(s.floor_area), csv::format_double(s.log_fa)});
  }
  csv::write_file(dir / "morph_samples.csv", morph);
  std::vector<csv::Row> econ{{"tile_id", "intensity", "log_ni"}};
  for (const auto& s : sets.econ) {
    econ.push_back({s.tile_id, csv::format_double(s.intensity), csv::format_double(s.log_ni)});
  }
  csv::write_file(dir / "econ_samples.csv", econ);
}

}  // namespace povmap
