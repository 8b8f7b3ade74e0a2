#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "povmap/params.hpp"

namespace povmap {

// Tiny pre-norm patch transformer with a summary token. Stands in for a
// full-size ViT at desk scale; all three trait encoders share this shape.
struct EncoderConfig {
  int image_px = 256;
  int patch_px = 32;
  int embed_dim = 64;
  int layers = 2;
  int heads = 4;
  int mlp_ratio = 2;
  std::uint64_t seed = 0;

  void validate() const;
  int grid() const { return image_px / patch_px; }
  int num_patches() const { return grid() * grid(); }
  int tokens() const { return num_patches() + 1; }
  int patch_dim() const { return patch_px * patch_px * 3; }
  int head_dim() const { return embed_dim / heads; }
  int mlp_dim() const { return embed_dim * mlp_ratio; }
  std::size_t image_values() const { return static_cast<std::size_t>(image_px) * image_px * 3; }
  bool operator==(const EncoderConfig&) const = default;
};

// Summary-token attention over patches from the last layer, averaged over
// heads and renormalised over the patches so the scores sum to one.
struct AttentionMap {
  int grid = 0;
  std::vector<double> scores;  // row-major over the patch grid
};

inline constexpr double kLayerNormEps = 1e-5;

// Copies patch (pr, pc) of an HWC image into `out` in (y, x, channel) order.
template <typename T>
void extract_patch(std::span<const T> image, int image_px, int patch_px, int pr, int pc, T* out);

template <typename T>
class ImageEncoder {
 public:
  struct Layer {
    int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  struct Ids {
    int patch_w, patch_b, summary, pos;
    std::vector<Layer> layers;
    int lnf_g, lnf_b, out_w, out_b;
  };

  struct LayerTrace {
    RowMat<T> x_in, a_hat, a, q, k, v, o, x_mid, b_hat, b, z, r;
    Vec<T> rstd1, rstd2;
    std::vector<RowMat<T>> probs;  // per head, tokens x tokens
  };
  struct Trace {
    RowMat<T> patches;  // num_patches x patch_dim
    std::vector<LayerTrace> layers;
    Vec<T> final_in, final_hat, final_out;
    T final_rstd{};
  };

  // Zero-initialised parameters in the declared layout.
  explicit ImageEncoder(const EncoderConfig& cfg);
  // Seeded scaled-uniform initialisation (bound 1/sqrt(fan_in) for weight
  // matrices, 0.02 for summary/positional entries, unit LayerNorm gains).
  static ImageEncoder init(const EncoderConfig& cfg);

  const EncoderConfig& config() const { return cfg_; }
  const Ids& ids() const { return ids_; }
  ParamPack<T>& params() { return params_; }
  const ParamPack<T>& params() const { return params_; }

  Vec<T> encode(std::span<const T> image, AttentionMap* attention = nullptr) const;
  Vec<T> forward(std::span<const T> image, Trace& trace) const;
  // Accumulates dL/dparams into `grad` given dL/d(embedding).
  void backward(const Trace& trace, const Vec<T>& d_embedding, ParamPack<T>& grad) const;

  AttentionMap attention_from(const Trace& trace) const;

  // Largest |w| the initialiser may produce in block `id`.
  double init_bound(int id) const;

 private:
  EncoderConfig cfg_;
  ParamPack<T> params_;
  Ids ids_;
};

// 2-layer perceptron gravity vector -> image embedding space.
template <typename T>
class PoiEncoder {
 public:
  struct Trace {
    Vec<T> input, z, h;
  };

  PoiEncoder(int input_dim, int hidden_dim, int output_dim);
  static PoiEncoder init(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int output_dim() const { return output_dim_; }
  ParamPack<T>& params() { return params_; }
  const ParamPack<T>& params() const { return params_; }
  int w1() const { return w1_; }
  int b1() const { return b1_; }
  int w2() const { return w2_; }
  int b2() const { return b2_; }

  Vec<T> encode(const Vec<T>& gravity) const;
  Vec<T> forward(const Vec<T>& gravity, Trace& trace) const;
  // Accumulates parameter gradients; returns dL/d(gravity).
  Vec<T> backward(const Trace& trace, const Vec<T>& d_out, ParamPack<T>& grad) const;

 private:
  int input_dim_, hidden_dim_, output_dim_;
  ParamPack<T> params_;
  int w1_, b1_, w2_, b2_;
};

// Linear projection head W (rows x embed_dim), no bias.
template <typename T>
Vec<T> project(const Eigen::Ref<const RowMat<T>>& w, const Vec<T>& embedding);

}  // namespace povmap
