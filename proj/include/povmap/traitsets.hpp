#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "povmap/ingest.hpp"

namespace povmap {

// Distances are clamped below at this floor before inversion.
inline constexpr double kDistanceFloorM = 1.0;
inline constexpr double kDefaultRadiusM = 2000.0;

// Metres, ordered (hospital, school, townhall, bank).
using DistanceVector = std::array<double, kNumPoiCategories>;
using MultiLabel = std::array<int, kNumPoiCategories>;

// Learnable p_j, one row per category.
struct PoiEmbeddingTable {
  Eigen::MatrixXd rows;  // kNumPoiCategories x dim
  int dim() const { return static_cast<int>(rows.cols()); }
};

struct AccessSample {
  std::string tile_id;
  DistanceVector distance_m{};
  std::array<double, kNumPoiCategories> inv_km{};  // gravity coefficients 1/d (d in km)
  MultiLabel multilabel{};

  // p = sum_j p_j / d_j for a given table.
  Eigen::VectorXd gravity(const PoiEmbeddingTable& table) const;
};

struct MorphSample {
  std::string tile_id;
  double floor_area = 0.0;
  double log_fa = 0.0;  // ln(1 + FA)
};

struct EconSample {
  std::string tile_id;
  double intensity = 0.0;
  double log_ni = 0.0;  // ln(1 + NI)
};

struct TraitSets {
  std::vector<AccessSample> access;
  std::vector<MorphSample> morph;
  std::vector<EconSample> econ;
};

DistanceVector distance_vector(const ImageTile& t, std::span<const PoiRecord> pois);
Eigen::VectorXd gravity_embedding(const DistanceVector& d, const PoiEmbeddingTable& table);
MultiLabel radius_multilabel(const DistanceVector& d, double radius_m);

// Mean footprint area of buildings whose vertex-mean centroid lies in the tile; 0 if none.
double floor_area(const ImageTile& t, std::span<const Polygon> buildings);
// Area-weighted mean of raster cells overlapping the tile footprint.
double nightlight_intensity(const ImageTile& t, const NightlightRaster& raster);

AccessSample make_access_sample(const ImageTile& t, std::span<const PoiRecord> pois, double radius_m);

// One sample per tile in each list, sorted by tile_id. Parallel over tiles.
TraitSets build_all(const CityBundle& bundle, double radius_m = kDefaultRadiusM);

void write_trait_csvs(const TraitSets& sets, const std::filesystem::path& dir);


}  // namespace povmap
