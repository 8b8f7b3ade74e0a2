#include "povmap/backdoor.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "povmap/error.hpp"

namespace povmap {

std::size_t PatchPartition::non_causal_count() const {
  return static_cast<std::size_t>(std::count(causal.begin(), causal.end(), std::uint8_t{0}));
}

std::size_t non_causal_quota(double q, std::size_t n) {
  if (!(q >= 0.0 && q < 1.0)) throw DomainError("backdoor quantile must be in [0, 1)");
  // The epsilon keeps exact products such as 0.3 * 10 from rounding up.
  return std::min(n, static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9)));
}

PatchPartition partition_patches(const AttentionMap& attention, double q) {
  const std::size_t n = attention.scores.size();
  if (n != static_cast<std::size_t>(attention.grid) * attention.grid) {
    throw DomainError("attention map size does not match its grid");
  }
  const std::size_t quota = non_causal_quota(q, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return attention.scores[a] < attention.scores[b]; });
  PatchPartition part{attention.grid, std::vector<std::uint8_t>(n, 1)};
  for (std::size_t i = 0; i < quota; ++i) part.causal[order[i]] = 0;
  return part;
}

PatchPartition partition_by_threshold(const AttentionMap& attention, double tau) {
  PatchPartition part{attention.grid, std::vector<std::uint8_t>(attention.scores.size(), 1)};
  for (std::size_t i = 0; i < attention.scores.size(); ++i) {
    if (attention.scores[i] < tau) part.causal[i] = 0;
  }
  return part;
}

template <typename T>
std::vector<T> adjust_image(std::span<const T> pixels, int image_px, const PatchPartition& part) {
  const int g = part.grid;
  if (g <= 0 || image_px % g != 0 || pixels.size() != static_cast<std::size_t>(image_px) * image_px * 3 ||
      part.causal.size() != static_cast<std::size_t>(g) * g) {
    throw DomainError("adjust_image: partition does not match image");
  }
  const int p = image_px / g;
  const std::size_t patch_values = static_cast<std::size_t>(p) * p * 3;
  std::vector<T> out(pixels.begin(), pixels.end());

  std::vector<int> all_causal;
  for (int i = 0; i < g * g; ++i) {
    if (part.causal[i]) all_causal.push_back(i);
  }
  if (all_causal.empty()) return out;

  std::vector<double> acc(patch_values);
  const auto accumulate = [&](int patch) {
    const int pr = patch / g, pc = patch % g;
    std::size_t k = 0;
    for (int y = 0; y < p; ++y) {
      const std::size_t base = (static_cast<std::size_t>(pr * p + y) * image_px + static_cast<std::size_t>(pc * p)) * 3;
      for (std::size_t c = 0; c < static_cast<std::size_t>(p) * 3; ++c) acc[k++] += static_cast<double>(pixels[base + c]);
    }
  };

  for (int patch = 0; patch < g * g; ++patch) {
    if (part.causal[patch]) continue;
    std::fill(acc.begin(), acc.end(), 0.0);
    const int pr = patch / g, pc = patch % g;
    int count = 0;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int r = pr + dr, c = pc + dc;
        if ((dr == 0 && dc == 0) || r < 0 || r >= g || c < 0 || c >= g || !part.causal[r * g + c]) continue;
        accumulate(r * g + c);
        ++count;
      }
    }
    if (count == 0) {
      for (int c : all_causal) accumulate(c);
      count = static_cast<int>(all_causal.size());
    }
    std::size_t k = 0;
    for (int y = 0; y < p; ++y) {
      const std::size_t base = (static_cast<std::size_t>(pr * p + y) * image_px + static_cast<std::size_t>(pc * p)) * 3;
      for (std::size_t c = 0; c < static_cast<std::size_t>(p) * 3; ++c) {
        out[base + c] = static_cast<T>(acc[k++] / static_cast<double>(count));
      }
    }
  }
  return out;
}

template std::vector<float> adjust_image<float>(std::span<const float>, int, const PatchPartition&);
template std::vector<double> adjust_image<double>(std::span<const double>, int, const PatchPartition&);

std::vector<float> AdjustedDataset::image(const ImageTile& tile, std::size_t index) const {
  const std::vector<float> px = tile.pixels<float>();
  if (q == 0.0) return px;
  return adjust_image<float>(px, kTilePx, partitions.at(index));
}

AdjustedDataset adjust_dataset(std::span<const ImageTile> tiles, const ImageEncoder<float>& morph_encoder, double q) {
  non_causal_quota(q, 1);
  if (morph_encoder.config().image_px != kTilePx) throw DomainError("adjust_dataset: encoder expects other image size");
  AdjustedDataset out;
  out.q = q;
  out.partitions.resize(tiles.size());
  out.attention.resize(tiles.size());
  std::vector<std::exception_ptr> errors(tiles.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    try {
      const std::vector<float> px = tiles[i].pixels<float>();
      morph_encoder.encode(px, &out.attention[i]);
      out.partitions[i] = partition_patches(out.attention[i], q);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace povmap
