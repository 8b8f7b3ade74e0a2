#pragma once

// Single-threaded counterparts of the OpenMP kernels. They follow the plain
// per-item definitions and are kept to check (and benchmark) the parallel code.

#include <span>

#include "povmap/backdoor.hpp"
#include "povmap/district.hpp"
#include "povmap/forest.hpp"
#include "povmap/traitsets.hpp"

namespace povmap::serial {

FeatureMatrix encode_tiles(const ImageEncoder<float>& encoder, std::span<const ImageTile> tiles);
TraitSets build_all(const CityBundle& bundle, double radius_m = kDefaultRadiusM);
AdjustedDataset adjust_dataset(std::span<const ImageTile> tiles, const ImageEncoder<float>& morph_encoder, double q);
RandomForest fit_forest(const FeatureMatrix& x, std::span<const double> y, std::uint64_t seed,
                        const ForestParams& params = {});

}  // namespace povmap::serial
