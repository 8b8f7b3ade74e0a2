#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "povmap/backdoor.hpp"
#include "povmap/encoder.hpp"
#include "povmap/forest.hpp"
#include "povmap/ingest.hpp"

namespace povmap {

struct DistrictFeature {
  std::int64_t district_id = 0;
  Eigen::VectorXd r;  // [mean morph | mean access | mean econ]
  std::size_t n_tiles = 0;
};

// Column-wise means of each block's rows, concatenated in argument order.
// All blocks must have the same (non-zero) number of rows.
DistrictFeature pool_district(std::int64_t district_id, const FeatureMatrix& morph, const FeatureMatrix& access,
                              const FeatureMatrix& econ);

// Embeddings of every tile, one row per tile in input order. When `adjusted`
// is given, tile i is encoded after its backdoor adjustment.
FeatureMatrix encode_tiles(const ImageEncoder<float>& encoder, std::span<const ImageTile> tiles,
                           const AdjustedDataset* adjusted = nullptr);

struct SplitRepetition {
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> test;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<SplitRepetition> reps;
};

inline constexpr int kDefaultRepetitions = 50;
inline constexpr double kTestFraction = 0.2;

// Each repetition shuffles the ids with its own sub-stream and holds out the
// first round(0.2 N) (at least 1). Both halves are returned sorted.
SplitPlan make_splits(std::span<const std::int64_t> district_ids, std::uint64_t seed,
                      int repetitions = kDefaultRepetitions);

}  // namespace povmap
