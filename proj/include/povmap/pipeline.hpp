#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "povmap/district.hpp"
#include "povmap/ingest.hpp"
#include "povmap/training.hpp"
#include "povmap/traitsets.hpp"

namespace povmap {

// Trained encoders for one city. `proxy` is the economic encoder trained
// without adjustment (q = 0), needed by the nobackdoor and proxy variants.
struct ModelSet {
  std::optional<Checkpoint> access, morph, econ, proxy;
};

// Tile embeddings, rows aligned with the bundle's tile order. Blocks whose
// checkpoint is missing stay empty.
struct CityEmbeddings {
  std::vector<std::string> tile_ids;
  FeatureMatrix morph, access, econ, proxy;
};

// Economic tiles are encoded after the same adjustment used in training,
// driven by the morphological encoder's attention.
CityEmbeddings embed_city(const CityBundle& bundle, const ModelSet& models);

// District-level blocks, rows aligned with `district_ids` (ascending).
struct CityFeatures {
  std::vector<std::int64_t> district_ids;
  std::vector<double> targets;  // poverty headcounts
  std::vector<std::size_t> n_tiles;
  FeatureMatrix morph, access, econ, proxy;
  std::vector<std::string> warnings;
};

// Districts without tiles are skipped with a warning.
CityFeatures pool_city(const CityBundle& bundle, const CityEmbeddings& emb);

struct TrainPlan {
  TrainConfig config;
  bool with_proxy = true;
  std::function<void(const std::string&)> log;  // progress lines, may be empty
};

// Trains morph, access, econ (and the q = 0 proxy) on one bundle.
ModelSet train_city(const CityBundle& bundle, const TraitSets& sets, const TrainPlan& plan);

}  // namespace povmap
