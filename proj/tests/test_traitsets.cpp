#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "povmap/error.hpp"
#include "povmap/synth.hpp"
#include "povmap/traitsets.hpp"
#include "support.hpp"

using namespace povmap;
using testutil::uniform;

namespace {

ImageTile tile_at(const TileRef& t) {
  ImageTile img;
  img.tile = t;
  img.tile_id = t.id();
  img.levels.assign(kTileValues, 0);
  return img;
}

std::vector<PoiRecord> one_of_each(const GeoPoint& p) {
  std::vector<PoiRecord> pois;
  for (auto c : kPoiCategories) pois.push_back({c, p});
  return pois;
}

PoiEmbeddingTable random_table(int dim) {
  PoiEmbeddingTable t;
  t.rows.resize(kNumPoiCategories, dim);
  for (Eigen::Index i = 0; i < t.rows.size(); ++i) t.rows.data()[i] = testutil::normal();
  return t;
}

Polygon rect_m(const GeoPoint& c, double w, double h) {
  const double dlat = h / 2 / (kEarthRadiusM * std::numbers::pi / 180.0);
  const double dlon = w / 2 / (kEarthRadiusM * std::numbers::pi / 180.0 * std::cos(c.lat * std::numbers::pi / 180.0));
  return Polygon({{c.lon - dlon, c.lat - dlat}, {c.lon + dlon, c.lat - dlat}, {c.lon + dlon, c.lat + dlat},
                  {c.lon - dlon, c.lat + dlat}});
}

const TileRef kTile(18, 152000, 131000);

}  // namespace

TEST_CASE("distance_vector examples") {
  const ImageTile t = tile_at(kTile);
  const GeoPoint c = tile_center(kTile);
  auto d = distance_vector(t, one_of_each(c));
  for (double v : d) CHECK(v == kDistanceFloorM);

  auto pois = one_of_each(destination(c, 0.0, 5000.0));
  pois[0].location = destination(c, std::numbers::pi / 2, 1500.0);
  pois.push_back({PoiCategory::kSchool, destination(c, 1.0, 800.0)});
  pois.push_back({PoiCategory::kSchool, destination(c, 2.0, 3000.0)});
  d = distance_vector(t, pois);
  CHECK(std::abs(d[0] - 1500.0) <= 1.0);
  CHECK(std::abs(d[1] - 800.0) <= 1.0);
  CHECK(std::abs(d[2] - 5000.0) <= 1.0);
}

TEST_CASE("distance_vector names a missing category") {
  const ImageTile t = tile_at(kTile);
  auto pois = one_of_each(tile_center(kTile));
  pois.erase(pois.begin() + 2);
  try {
    distance_vector(t, pois);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("townhall") != std::string::npos);
  }
}

TEST_CASE("gravity_embedding examples") {
  PoiEmbeddingTable t;
  t.rows = Eigen::MatrixXd::Zero(kNumPoiCategories, 3);
  t.rows(0, 0) = 1.0;
  DistanceVector d{2000.0, 1000.0, 1000.0, 1000.0};
  const auto p = gravity_embedding(d, t);
  CHECK(p(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p(1) == 0.0);

  const auto r = random_table(5);
  const DistanceVector eq{700.0, 700.0, 700.0, 700.0};
  const Eigen::VectorXd sum = r.rows.colwise().sum().transpose();
  const auto pe = gravity_embedding(eq, r);
  for (int k = 0; k < 5; ++k) CHECK(pe(k) == doctest::Approx(sum(k) / 0.7).epsilon(1e-12));
}

TEST_CASE("gravity_embedding matches a dot-product oracle and AccessSample::gravity") {
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = testutil::uniform_int(1, 20);
    const auto table = random_table(dim);
    DistanceVector d;
    for (auto& v : d) v = uniform(1.0, 20000.0);
    const auto p = gravity_embedding(d, table);
    for (int k = 0; k < dim; ++k) {
      double oracle = 0.0;
      for (std::size_t j = 0; j < kNumPoiCategories; ++j) oracle += table.rows(j, k) * (1000.0 / d[j]);
      CHECK(std::abs(p(k) - oracle) <= 1e-12 * std::max(1.0, std::abs(oracle)));
    }
    AccessSample s;
    s.distance_m = d;
    for (std::size_t j = 0; j < kNumPoiCategories; ++j) s.inv_km[j] = 1000.0 / d[j];
    CHECK((s.gravity(table) - p).norm() <= 1e-12 * std::max(1.0, p.norm()));
  }
}

TEST_CASE("gravity coefficient grows when a distance shrinks") {
  for (int trial = 0; trial < 100; ++trial) {
    PoiEmbeddingTable t;
    t.rows = Eigen::MatrixXd::Identity(kNumPoiCategories, kNumPoiCategories);
    DistanceVector d;
    for (auto& v : d) v = uniform(2.0, 10000.0);
    const auto j = static_cast<std::size_t>(testutil::uniform_int(0, 3));
    DistanceVector closer = d;
    closer[j] *= uniform(0.1, 0.99);
    const auto a = gravity_embedding(d, t), b = gravity_embedding(closer, t);
    CHECK(b(static_cast<Eigen::Index>(j)) > a(static_cast<Eigen::Index>(j)));
    for (std::size_t k = 0; k < kNumPoiCategories; ++k) {
      if (k != j) CHECK(b(static_cast<Eigen::Index>(k)) == a(static_cast<Eigen::Index>(k)));
    }
  }
}

TEST_CASE("radius_multilabel examples and monotonicity") {
  CHECK(radius_multilabel({1500, 2500, 1999.9, 2000.0}, 2000.0) == MultiLabel{1, 0, 1, 0});
  CHECK(radius_multilabel({1500, 2500, 1999.9, 2000.0}, 1e12) == MultiLabel{1, 1, 1, 1});
  CHECK(radius_multilabel({1500, 2500, 1999.9, 2000.0}, 1.0) == MultiLabel{0, 0, 0, 0});
  CHECK_THROWS_AS(radius_multilabel({1, 1, 1, 1}, 0.0), DomainError);
  for (int trial = 0; trial < 500; ++trial) {
    DistanceVector d;
    for (auto& v : d) v = uniform(1.0, 5000.0);
    const double g1 = uniform(1.0, 5000.0), g2 = g1 + uniform(0.0, 3000.0);
    const auto a = radius_multilabel(d, g1), b = radius_multilabel(d, g2);
    for (std::size_t j = 0; j < kNumPoiCategories; ++j) CHECK(a[j] <= b[j]);
  }
}

TEST_CASE("floor_area examples") {
  const ImageTile t = tile_at(kTile);
  const GeoPoint c = tile_center(kTile);
  CHECK(floor_area(t, {}) == 0.0);
  std::vector<Polygon> b{rect_m(destination(c, 0.3, 20.0), 5.0, 10.0), rect_m(destination(c, 2.0, 30.0), 10.0, 15.0)};
  const double a0 = polygon_area_m2(b[0]), a1 = polygon_area_m2(b[1]);
  CHECK(std::abs(a0 - 50.0) < 0.01);
  CHECK(std::abs(a1 - 150.0) < 0.01);
  CHECK(floor_area(t, b) == doctest::Approx((a0 + a1) / 2).epsilon(1e-14));
  // A building whose centroid sits in the next tile does not count.
  b.push_back(rect_m(tile_center(TileRef(18, kTile.x + 1, kTile.y)), 40.0, 40.0));
  CHECK(floor_area(t, b) == doctest::Approx((a0 + a1) / 2).epsilon(1e-14));
}

TEST_CASE("nightlight_intensity examples") {
  const ImageTile t = tile_at(kTile);
  const LonLatBox b = tile_bounds(kTile);
  NightlightRaster one;
  one.bounds = {b.lon_min - 0.01, b.lat_min - 0.01, b.lon_max + 0.01, b.lat_max + 0.01};
  one.rows = one.cols = 1;
  one.values = {7.25};
  CHECK(nightlight_intensity(t, one) == 7.25);

  NightlightRaster two;
  two.bounds = {b.lon_min - b.width() / 2, b.lat_min, b.lon_max + b.width() / 2, b.lat_max};
  two.rows = 1;
  two.cols = 2;
  two.values = {2.0, 4.0};
  CHECK(nightlight_intensity(t, two) == doctest::Approx(3.0).epsilon(1e-12));

  NightlightRaster away = one;
  away.bounds = {b.lon_max + 1.0, b.lat_min, b.lon_max + 2.0, b.lat_max};
  CHECK_THROWS_AS(nightlight_intensity(t, away), DatasetError);
}

TEST_CASE("nightlight_intensity matches a Monte Carlo point oracle") {
  const ImageTile t = tile_at(kTile);
  const LonLatBox b = tile_bounds(kTile);
  for (int trial = 0; trial < 20; ++trial) {
    NightlightRaster r;
    r.rows = testutil::uniform_int(1, 9);
    r.cols = testutil::uniform_int(1, 9);
    const double pad_w = b.width() * uniform(0.0, 2.0), pad_h = b.height() * uniform(0.0, 2.0);
    r.bounds = {b.lon_min - pad_w * uniform(0.0, 1.0), b.lat_min - pad_h * uniform(0.0, 1.0), 0, 0};
    r.bounds.lon_max = b.lon_max + pad_w;
    r.bounds.lat_max = b.lat_max + pad_h;
    r.values = testutil::random_vector(static_cast<std::size_t>(r.rows * r.cols), 0.0, 100.0);
    double sum = 0.0;
    const int samples = 100000;
    for (int s = 0; s < samples; ++s) {
      const double lon = uniform(b.lon_min, b.lon_max), lat = uniform(b.lat_min, b.lat_max);
      const int c = std::min(r.cols - 1, static_cast<int>((lon - r.bounds.lon_min) / r.cell_width()));
      const int row = std::min(r.rows - 1, static_cast<int>((r.bounds.lat_max - lat) / r.cell_height()));
      sum += r.at(row, c);
    }
    const double oracle = sum / samples;
    CHECK(nightlight_intensity(t, r) == doctest::Approx(oracle).epsilon(0.01));
  }
}

TEST_CASE("build_all on a small synthetic city matches the generator ledger") {
  const SynthCity c = synth_city({7, 5, 10, 0.0});
  const TraitSets s = build_all(c.bundle);
  REQUIRE(s.access.size() == 50);
  REQUIRE(s.morph.size() == 50);
  REQUIRE(s.econ.size() == 50);
  CHECK(std::is_sorted(s.morph.begin(), s.morph.end(), [](auto& a, auto& b) { return a.tile_id < b.tile_id; }));
  for (std::size_t k = 0; k < 50; ++k) {
    const auto it = std::find_if(c.tiles.begin(), c.tiles.end(), [&](auto& t) { return t.tile_id == s.morph[k].tile_id; });
    REQUIRE(it != c.tiles.end());
    CHECK(s.morph[k].floor_area == doctest::Approx(it->floor_area).epsilon(1e-9));
    CHECK(s.morph[k].log_fa == doctest::Approx(std::log1p(it->floor_area)).epsilon(1e-9));
    CHECK(s.econ[k].intensity == doctest::Approx(it->radiance).epsilon(1e-4));
    CHECK(s.access[k].tile_id == s.morph[k].tile_id);
    CHECK(s.econ[k].tile_id == s.morph[k].tile_id);
    for (std::size_t j = 0; j < kNumPoiCategories; ++j) {
      CHECK(s.access[k].multilabel[j] == (s.access[k].distance_m[j] < kDefaultRadiusM ? 1 : 0));
      CHECK(s.access[k].distance_m[j] >= kDistanceFloorM);
    }
  }
}

TEST_CASE("build_all is independent of tile order") {
  const SynthCity c = synth_city({5, 3, 8, 0.2});
  CityBundle shuffled = c.bundle;
  std::reverse(shuffled.tiles.begin(), shuffled.tiles.end());
  std::swap(shuffled.tiles[1], shuffled.tiles[5]);
  const TraitSets a = build_all(c.bundle), b = build_all(shuffled);
  REQUIRE(a.access.size() == b.access.size());
  for (std::size_t i = 0; i < a.access.size(); ++i) {
    CHECK(a.access[i].tile_id == b.access[i].tile_id);
    CHECK(a.access[i].distance_m == b.access[i].distance_m);
    CHECK(a.access[i].multilabel == b.access[i].multilabel);
    CHECK(a.morph[i].log_fa == b.morph[i].log_fa);
    CHECK(a.econ[i].log_ni == b.econ[i].log_ni);
  }
}

TEST_CASE("build_all rejects duplicate tile ids") {
  SynthCity c = synth_city({5, 3, 8, 0.2});
  c.bundle.tiles.push_back(c.bundle.tiles[0]);
  CHECK_THROWS_AS(build_all(c.bundle), ValidationError);
}
