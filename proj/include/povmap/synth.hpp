#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "povmap/ingest.hpp"

namespace povmap {

struct SynthParams {
  std::uint64_t seed = 7;
  int n_districts = 20;
  int tiles_per_district = 100;
  double confound_fraction = 0.2;
};

// Per-district latent poverty and the three noisy views of it that drive
// building morphology, POI placement and nightlight respectively.
struct SynthDistrictTruth {
  std::int64_t district_id = 0;
  double poverty = 0.0;
  double morph_level = 0.0;
  double access_level = 0.0;
  double econ_level = 0.0;
};

struct SynthTileTruth {
  std::string tile_id;
  std::int64_t district_id = 0;
  bool industrial = false;
  int n_buildings = 0;
  double floor_area = 0.0;  // mean footprint area, m^2 (0 without buildings)
  double radiance = 0.0;    // planted nightlight value of the tile's cell
};

struct SynthCity {
  CityBundle bundle;
  std::vector<SynthDistrictTruth> districts;
  std::vector<SynthTileTruth> tiles;  // same order as bundle.tiles
};

// Standard deviation of the per-district jitter applied to each trait view.
inline constexpr double kTraitJitter = 0.15;
inline constexpr std::int64_t kSynthPopulation = 10000;

SynthCity synth_city(const SynthParams& p);

// ledger.csv: tile_id,district_id,industrial,n_buildings,floor_area,radiance
// latent.csv: district_id,poverty,morph_level,access_level,econ_level
void write_ledger(const SynthCity& city, const std::filesystem::path& root);

}  // namespace povmap
