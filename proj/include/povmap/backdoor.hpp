#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "povmap/encoder.hpp"
#include "povmap/ingest.hpp"

namespace povmap {

inline constexpr double kDefaultQuantile = 0.30;

struct PatchPartition {
  int grid = 0;
  std::vector<std::uint8_t> causal;  // row-major over the patch grid, 1 = causal

  std::size_t non_causal_count() const;
  bool operator==(const PatchPartition&) const = default;
};

// Number of patches marked non-causal for quantile q over n patches: ceil(q n).
std::size_t non_causal_quota(double q, std::size_t n);

// The ceil(q * g^2) lowest-scoring patches become non-causal; ties go to the
// lower patch index first.
PatchPartition partition_patches(const AttentionMap& attention, double q);
// Fixed-threshold mode: patch i is non-causal iff score_i < tau.
PatchPartition partition_by_threshold(const AttentionMap& attention, double tau);

// Causal patches are copied; each non-causal patch becomes the pixel-wise mean
// of its causal 8-neighbours, or of every causal patch when it has none.
// Sums run over neighbours in row-major order (then patches in index order for
// the fallback), accumulated in double and divided once.
template <typename T>
std::vector<T> adjust_image(std::span<const T> pixels, int image_px, const PatchPartition& partition);

// Adjusted inputs for economic training: one partition per tile, derived once
// from a frozen morphological encoder. Images are materialised on demand.
struct AdjustedDataset {
  double q = 0.0;
  std::vector<PatchPartition> partitions;      // aligned with the tile list
  std::vector<AttentionMap> attention;         // morphological attention per tile

  std::vector<float> image(const ImageTile& tile, std::size_t index) const;
};

AdjustedDataset adjust_dataset(std::span<const ImageTile> tiles, const ImageEncoder<float>& morph_encoder, double q);

}  // namespace povmap
