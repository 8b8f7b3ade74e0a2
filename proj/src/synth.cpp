#include "povmap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/rng.hpp"

namespace povmap {
namespace {

// Just north of the equator, where lat-uniform raster rows line up with
// mercator tile rows to ~1e-6 of a tile height.
constexpr double kOriginLon = 30.0;
constexpr double kOriginLat = 0.005;

constexpr double kNoiseHalfWidth = 0.05 * 1.7320508075688772;  // uniform noise, sigma 0.05

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

int poisson(Rng& rng, double lambda) {
  const double limit = std::exp(-lambda);
  int k = 0;
  double prod = rng.uniform();
  while (prod > limit) {
    ++k;
    prod *= rng.uniform();
  }
  return k;
}

struct Canvas {
  std::vector<double> v = std::vector<double>(kTileValues, 0.0);

  void fill(double r, double g, double b) {
    for (std::size_t i = 0; i < v.size(); i += 3) {
      v[i] = r;
      v[i + 1] = g;
      v[i + 2] = b;
    }
  }
  void rect(double x0, double y0, double x1, double y1, double r, double g, double b, int stripe = 0) {
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int ix1 = std::min(kTilePx, static_cast<int>(std::ceil(x1)));
    const int iy1 = std::min(kTilePx, static_cast<int>(std::ceil(y1)));
    for (int y = iy0; y < iy1; ++y) {
      const double shade = (stripe > 0 && (y - iy0) % stripe == 0) ? 0.78 : 1.0;
      for (int x = ix0; x < ix1; ++x) {
        const std::size_t i = (static_cast<std::size_t>(y) * kTilePx + x) * 3;
        v[i] = r * shade;
        v[i + 1] = g * shade;
        v[i + 2] = b * shade;
      }
    }
  }
  std::vector<std::uint8_t> quantize(Rng& rng) const {
    std::vector<std::uint8_t> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double noisy = clamp01(v[i] + rng.uniform(-kNoiseHalfWidth, kNoiseHalfWidth));
      out[i] = static_cast<std::uint8_t>(std::lround(noisy * 255.0));
    }
    return out;
  }
};

struct Layout {
  TileRef origin;
  int block_w = 0, block_h = 0;      // tiles per district block
  int grid_cols = 0, grid_rows = 0;  // district blocks
};

double meters_per_deg_lat() { return kEarthRadiusM * std::numbers::pi / 180.0; }
double meters_per_deg_lon(double lat) { return meters_per_deg_lat() * std::cos(lat * std::numbers::pi / 180.0); }

double nearest_distance(const GeoPoint& p, const std::vector<PoiRecord>& pois, PoiCategory c) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& poi : pois) {
    if (poi.category == c) best = std::min(best, geo_distance_m(p, poi.location));
  }
  return best;
}

}  // namespace

SynthCity synth_city(const SynthParams& p) {
  if (p.n_districts < 2) throw DomainError("synth_city: n_districts must be >= 2");
  if (p.tiles_per_district < 4) throw DomainError("synth_city: tiles_per_district must be >= 4");
  if (!(p.confound_fraction >= 0.0 && p.confound_fraction < 1.0)) {
    throw DomainError("synth_city: confound_fraction must be in [0,1)");
  }

  Rng rng(derive_seed(p.seed, "synth"));
  SynthCity city;
  CityBundle& b = city.bundle;

  Layout lay;
  lay.origin = tile_containing(GeoPoint(kOriginLon, kOriginLat));
  lay.block_w = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p.tiles_per_district))));
  lay.block_h = (p.tiles_per_district + lay.block_w - 1) / lay.block_w;
  lay.grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p.n_districts))));
  lay.grid_rows = (p.n_districts + lay.grid_cols - 1) / lay.grid_cols;
  const int total_cols = lay.grid_cols * lay.block_w;
  const int total_rows = lay.grid_rows * lay.block_h;
  // origin is the south-west tile; row 0 is the northern edge.
  const auto tile_at = [&](int col, int row) {
    return TileRef(kDefaultZoom, lay.origin.x + col, lay.origin.y - total_rows + 1 + row);
  };

  // Districts and their latent levels.
  for (int d = 0; d < p.n_districts; ++d) {
    const int gc = d % lay.grid_cols, gr = d / lay.grid_cols;
    const LonLatBox nw = tile_bounds(tile_at(gc * lay.block_w, gr * lay.block_h));
    const LonLatBox se = tile_bounds(tile_at((gc + 1) * lay.block_w - 1, (gr + 1) * lay.block_h - 1));
    DistrictRecord rec;
    rec.district_id = d + 1;
    rec.name = "district-" + std::to_string(d + 1);
    rec.boundary = Polygon({{nw.lon_min, nw.lat_max}, {se.lon_max, nw.lat_max}, {se.lon_max, se.lat_min},
                            {nw.lon_min, se.lat_min}});
    SynthDistrictTruth truth;
    truth.district_id = rec.district_id;
    truth.poverty = rng.uniform();
    truth.morph_level = clamp01(truth.poverty + kTraitJitter * rng.normal());
    truth.access_level = clamp01(truth.poverty + kTraitJitter * rng.normal());
    truth.econ_level = clamp01(truth.poverty + kTraitJitter * rng.normal());
    rec.population = kSynthPopulation;
    rec.poverty_rate = truth.poverty;
    b.districts.push_back(std::move(rec));
    city.districts.push_back(truth);
  }

  // POIs: density falls with the access level.
  for (std::size_t d = 0; d < b.districts.size(); ++d) {
    const LonLatBox box = b.districts[d].boundary.bounds();
    const double served = 1.0 - city.districts[d].access_level;
    for (PoiCategory c : kPoiCategories) {
      const int n = poisson(rng, 0.15 + 3.0 * served * served);
      for (int k = 0; k < n; ++k) {
        b.pois.push_back({c, GeoPoint(rng.uniform(box.lon_min, box.lon_max), rng.uniform(box.lat_min, box.lat_max))});
      }
    }
  }
  for (PoiCategory c : kPoiCategories) {
    const bool present = std::any_of(b.pois.begin(), b.pois.end(), [c](const PoiRecord& r) { return r.category == c; });
    if (!present) {
      const auto d = rng.below(b.districts.size());
      b.pois.push_back({c, b.districts[d].boundary.vertex_mean()});
    }
  }

  // Tile slots, then the industrial subset.
  struct Slot {
    TileRef tile;
    std::size_t district;
  };
  std::vector<Slot> slots;
  for (int d = 0; d < p.n_districts; ++d) {
    const int gc = d % lay.grid_cols, gr = d / lay.grid_cols;
    for (int k = 0; k < p.tiles_per_district; ++k) {
      slots.push_back({tile_at(gc * lay.block_w + k % lay.block_w, gr * lay.block_h + k / lay.block_w),
                       static_cast<std::size_t>(d)});
    }
  }
  // Industrial tiles are spread unevenly over districts (weights uniform on
  // [0, 2)) independently of poverty. The total is ceil(c * N).
  std::vector<bool> industrial(slots.size(), false);
  {
    const auto nd = static_cast<std::size_t>(p.n_districts);
    const auto cap = static_cast<std::size_t>(p.tiles_per_district);
    const auto total = static_cast<std::size_t>(std::ceil(p.confound_fraction * static_cast<double>(slots.size()) - 1e-9));
    std::vector<double> w(nd);
    for (auto& x : w) x = rng.uniform(0.0, 2.0);
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    std::vector<std::size_t> count(nd, 0);
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t placed = 0;
    for (std::size_t d = 0; d < nd; ++d) {
      const double ideal = wsum > 0.0 ? static_cast<double>(total) * w[d] / wsum : 0.0;
      count[d] = std::min(cap, static_cast<std::size_t>(std::floor(ideal)));
      placed += count[d];
      rem.emplace_back(ideal - std::floor(ideal), d);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    // Largest remainders first, then any district with room left.
    for (std::size_t pass = 0; pass < 2 && placed < total; ++pass) {
      for (const auto& [r, d] : rem) {
        if (placed >= total) break;
        while (count[d] < cap && placed < total) {
          ++count[d];
          ++placed;
          if (pass == 0) break;
        }
      }
    }
    for (std::size_t d = 0; d < nd; ++d) {
      std::vector<std::size_t> members;
      for (std::size_t s = 0; s < slots.size(); ++s) {
        if (slots[s].district == d) members.push_back(s);
      }
      rng.shuffle(members.begin(), members.end());
      for (std::size_t k = 0; k < count[d]; ++k) industrial[members[k]] = true;
    }
  }

  // Raster: one cell per tile of the block grid, background radiance elsewhere.
  auto& nl = b.nightlight;
  {
    const LonLatBox nw = tile_bounds(tile_at(0, 0));
    const LonLatBox se = tile_bounds(tile_at(total_cols - 1, total_rows - 1));
    nl.bounds = {nw.lon_min, se.lat_min, se.lon_max, nw.lat_max};
    nl.rows = total_rows;
    nl.cols = total_cols;
    nl.values.assign(static_cast<std::size_t>(total_rows) * total_cols, 0.0);
    for (auto& v : nl.values) v = 0.5 + 0.5 * rng.uniform();
  }

  const std::uint64_t tile_seed = derive_seed(p.seed, "synth.tiles");
  for (std::size_t s = 0; s < slots.size(); ++s) {
    Rng trng(derive_seed(tile_seed, static_cast<std::uint64_t>(s)));
    const Slot& slot = slots[s];
    const SynthDistrictTruth& truth = city.districts[slot.district];
    const LonLatBox box = tile_bounds(slot.tile);
    const GeoPoint centre = tile_center(slot.tile);

    SynthTileTruth tt;
    tt.tile_id = slot.tile.id();
    tt.district_id = truth.district_id;
    tt.industrial = industrial[s];

    Canvas canvas;
    const double ground = 0.12 + 0.22 * (1.0 - truth.econ_level) + 0.02 * trng.normal();
    canvas.fill(0.8 * ground + 0.05, ground + 0.05, 0.6 * ground + 0.05);

    double dist_sum = 0.0;
    for (PoiCategory c : kPoiCategories) dist_sum += nearest_distance(centre, b.pois, c);
    const double spacing = std::clamp(28.0 + dist_sum / kNumPoiCategories / 12.0, 28.0, 240.0);
    const double off_x = trng.uniform(0.0, spacing), off_y = trng.uniform(0.0, spacing);
    for (double x = off_x; x < kTilePx; x += spacing) canvas.rect(x, 0, x + 5, kTilePx, 0.50, 0.50, 0.52);
    for (double y = off_y; y < kTilePx; y += spacing) canvas.rect(0, y, kTilePx, y + 5, 0.50, 0.50, 0.52);

    const double px_per_deg_lon = kTilePx / box.width();
    const double px_per_deg_lat = kTilePx / box.height();
    if (tt.industrial) {
      const int slabs = 1 + static_cast<int>(trng.below(2));
      for (int k = 0; k < slabs; ++k) {
        const double w = trng.uniform(50.0, 90.0), h = trng.uniform(50.0, 90.0);
        const double x0 = trng.uniform(0.0, kTilePx - w), y0 = trng.uniform(0.0, kTilePx - h);
        canvas.rect(x0, y0, x0 + w, y0 + h, 0.80, 0.86, 0.95, 8);
      }
      tt.radiance = 60.0 + 30.0 * trng.uniform();
    } else {
      const double mean_area = 300.0 * std::exp(-1.8 * truth.morph_level);
      const int n = std::clamp(static_cast<int>(std::lround(6.0 + 14.0 * truth.morph_level + 2.0 * trng.normal())), 3, 24);
      const double m_lon = meters_per_deg_lon(centre.lat), m_lat = meters_per_deg_lat();
      double area_sum = 0.0;
      for (int k = 0; k < n; ++k) {
        const double area = std::min(mean_area * std::exp(0.35 * trng.normal()), 900.0);
        const double aspect = trng.uniform(0.6, 1.6);
        const double w_deg = std::sqrt(area * aspect) / m_lon;
        const double h_deg = std::sqrt(area / aspect) / m_lat;
        const double margin_lon = 0.02 * box.width(), margin_lat = 0.02 * box.height();
        const double lon0 = trng.uniform(box.lon_min + margin_lon, box.lon_max - margin_lon - w_deg);
        const double lat0 = trng.uniform(box.lat_min + margin_lat, box.lat_max - margin_lat - h_deg);
        Polygon poly({{lon0, lat0}, {lon0 + w_deg, lat0}, {lon0 + w_deg, lat0 + h_deg}, {lon0, lat0 + h_deg}});
        const double a = polygon_area_m2(poly);
        area_sum += a;
        const double intensity = std::min(0.95, 0.15 + 0.8 * a / 400.0);
        canvas.rect((lon0 - box.lon_min) * px_per_deg_lon, (box.lat_max - lat0 - h_deg) * px_per_deg_lat,
                    (lon0 + w_deg - box.lon_min) * px_per_deg_lon, (box.lat_max - lat0) * px_per_deg_lat,
                    intensity, 0.55 * intensity + 0.1, 0.35 * intensity + 0.1);
        b.buildings.push_back(std::move(poly));
      }
      tt.n_buildings = n;
      tt.floor_area = area_sum / n;
      const double lit = 1.0 - truth.econ_level;
      tt.radiance = 1.0 + 40.0 * lit * lit * std::exp(0.2 * trng.normal());
    }

    const auto col = static_cast<std::size_t>(slot.tile.x - lay.origin.x);
    const auto row = static_cast<std::size_t>(slot.tile.y - (lay.origin.y - total_rows + 1));
    nl.values[row * static_cast<std::size_t>(total_cols) + col] = tt.radiance;

    ImageTile tile;
    tile.tile_id = tt.tile_id;
    tile.tile = slot.tile;
    tile.levels = canvas.quantize(trng);
    tile.district_id = truth.district_id;
    b.tiles.push_back(std::move(tile));
    city.tiles.push_back(std::move(tt));
  }

  // Deterministic tile_id order.
  std::vector<std::size_t> idx(b.tiles.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) { return b.tiles[a].tile_id < b.tiles[c].tile_id; });
  std::vector<ImageTile> tiles;
  std::vector<SynthTileTruth> truths;
  for (auto i : idx) {
    tiles.push_back(std::move(b.tiles[i]));
    truths.push_back(std::move(city.tiles[i]));
  }
  b.tiles = std::move(tiles);
  city.tiles = std::move(truths);

  validate_bundle(b);
  return city;
}

void write_ledger(const SynthCity& city, const std::filesystem::path& root) {
  std::vector<csv::Row> rows{{"tile_id", "district_id", "industrial", "n_buildings", "floor_area", "radiance"}};
  for (const auto& t : city.tiles) {
    rows.push_back({t.tile_id, std::to_string(t.district_id), t.industrial ? "1" : "0", std::to_string(t.n_buildings),
                    csv::format_double(t.floor_area), csv::format_double(t.radiance)});
  }
  csv::write_file(root / "ledger.csv", rows);
  std::vector<csv::Row> drows{{"district_id", "poverty", "morph_level", "access_level", "econ_level"}};
  for (const auto& d : city.districts) {
    drows.push_back({std::to_string(d.district_id), csv::format_double(d.poverty), csv::format_double(d.morph_level),
                     csv::format_double(d.access_level), csv::format_double(d.econ_level)});
  }
  csv::write_file(root / "latent.csv", drows);
}

}  // namespace povmap
