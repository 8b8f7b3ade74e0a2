#include "povmap/serial/reference.hpp"

#include <algorithm>
#include <cmath>

#include "povmap/rng.hpp"

namespace povmap::serial {

FeatureMatrix encode_tiles(const ImageEncoder<float>& encoder, std::span<const ImageTile> tiles) {
  FeatureMatrix out(static_cast<Eigen::Index>(tiles.size()), encoder.config().embed_dim);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const std::vector<float> px = tiles[i].pixels<float>();
    out.row(static_cast<Eigen::Index>(i)) = encoder.encode(px).cast<double>().transpose();
  }
  return out;
}

TraitSets build_all(const CityBundle& bundle, double radius_m) {
  validate_bundle(bundle);
  std::vector<const ImageTile*> tiles;
  for (const auto& t : bundle.tiles) tiles.push_back(&t);
  std::sort(tiles.begin(), tiles.end(), [](const ImageTile* a, const ImageTile* b) { return a->tile_id < b->tile_id; });
  TraitSets out;
  for (const ImageTile* t : tiles) {
    out.access.push_back(make_access_sample(*t, bundle.pois, radius_m));
    const double fa = floor_area(*t, bundle.buildings);
    out.morph.push_back({t->tile_id, fa, std::log1p(fa)});
    const double ni = nightlight_intensity(*t, bundle.nightlight);
    out.econ.push_back({t->tile_id, ni, std::log1p(ni)});
  }
  return out;
}

AdjustedDataset adjust_dataset(std::span<const ImageTile> tiles, const ImageEncoder<float>& morph_encoder, double q) {
  AdjustedDataset out;
  out.q = q;
  for (const auto& t : tiles) {
    AttentionMap a;
    morph_encoder.encode(t.pixels<float>(), &a);
    out.partitions.push_back(partition_patches(a, q));
    out.attention.push_back(std::move(a));
  }
  return out;
}

RandomForest fit_forest(const FeatureMatrix& x, std::span<const double> y, std::uint64_t seed,
                        const ForestParams& params) {
  RandomForest f;
  for (int t = 0; t < params.n_trees; ++t) {
    const std::uint64_t ts = derive_seed(seed, static_cast<std::uint64_t>(t));
    const auto rows = bootstrap_rows(static_cast<std::size_t>(x.rows()), ts, params.bootstrap);
    RegressionTree tree;
    tree.fit(x, y, rows, params, derive_seed(ts, "splits"));
    f.add_tree(std::move(tree));
  }
  return f;
}

}  // namespace povmap::serial
