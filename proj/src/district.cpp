#include "povmap/district.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <set>

#include "povmap/error.hpp"
#include "povmap/rng.hpp"

namespace povmap {

DistrictFeature pool_district(std::int64_t district_id, const FeatureMatrix& morph, const FeatureMatrix& access,
                              const FeatureMatrix& econ) {
  const Eigen::Index n = morph.rows();
  if (n == 0) throw DomainError("pool_district: district " + std::to_string(district_id) + " has no tiles");
  if (access.rows() != n || econ.rows() != n) throw DomainError("pool_district: blocks disagree on tile count");
  DistrictFeature f;
  f.district_id = district_id;
  f.n_tiles = static_cast<std::size_t>(n);
  f.r.resize(morph.cols() + access.cols() + econ.cols());
  Eigen::Index off = 0;
  for (const FeatureMatrix* m : {&morph, &access, &econ}) {
    for (Eigen::Index c = 0; c < m->cols(); ++c) {
      double s = 0.0;
      for (Eigen::Index r = 0; r < n; ++r) s += (*m)(r, c);
      f.r(off + c) = s / static_cast<double>(n);
    }
    off += m->cols();
  }
  if (!f.r.allFinite()) throw NumericError("pool_district: non-finite feature");
  return f;
}

FeatureMatrix encode_tiles(const ImageEncoder<float>& encoder, std::span<const ImageTile> tiles,
                           const AdjustedDataset* adjusted) {
  if (adjusted != nullptr && !adjusted->partitions.empty() && adjusted->partitions.size() != tiles.size()) {
    throw DomainError("encode_tiles: adjusted dataset does not match the tile list");
  }
  const int d = encoder.config().embed_dim;
  FeatureMatrix out(static_cast<Eigen::Index>(tiles.size()), d);
  std::vector<std::exception_ptr> errors(tiles.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    try {
      std::vector<float> px;
      if (adjusted != nullptr && !adjusted->partitions.empty()) {
        px = adjusted->image(tiles[i], i);
      } else {
        px = tiles[i].pixels<float>();
      }
      out.row(static_cast<Eigen::Index>(i)) = encoder.encode(px).cast<double>().transpose();
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

SplitPlan make_splits(std::span<const std::int64_t> district_ids, std::uint64_t seed, int repetitions) {
  std::vector<std::int64_t> ids(district_ids.begin(), district_ids.end());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw DomainError("make_splits: duplicate district ids");
  if (ids.size() < 5) throw DomainError("make_splits: need at least 5 districts, got " + std::to_string(ids.size()));
  if (repetitions < 1) throw DomainError("make_splits: repetitions must be positive");
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(kTestFraction * static_cast<double>(ids.size()))));
  SplitPlan plan;
  plan.seed = seed;
  for (int r = 0; r < repetitions; ++r) {
    std::vector<std::int64_t> order = ids;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    rng.shuffle(order.begin(), order.end());
    SplitRepetition rep;
    rep.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    rep.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(rep.test.begin(), rep.test.end());
    std::sort(rep.train.begin(), rep.train.end());
    plan.reps.push_back(std::move(rep));
  }
  return plan;
}

}  // namespace povmap
