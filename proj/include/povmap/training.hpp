#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "povmap/backdoor.hpp"
#include "povmap/encoder.hpp"
#include "povmap/ingest.hpp"
#include "povmap/params.hpp"
#include "povmap/traitsets.hpp"

namespace povmap {

enum class ModuleTag : std::uint32_t { kAccess = 0, kMorph = 1, kEcon = 2 };
std::string_view to_string(ModuleTag tag);
ModuleTag parse_module_tag(std::string_view s);

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 7;
  double lambda1 = 0.1;
  double quantile = kDefaultQuantile;
  double radius_m = kDefaultRadiusM;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  int poi_embed_dim = 16;
  int poi_hidden_dim = 64;
  // Access-module variants for component analysis.
  std::array<bool, kNumPoiCategories> active_categories{true, true, true, true};
  bool use_contrastive = true;
  EncoderConfig encoder;

  void validate() const;
  std::uint64_t hash() const;
  std::string describe() const;  // key=value lines
};

// Encoder, projection head and (for access) the POI tower, in one precision.
template <typename T>
struct TraitModel {
  ModuleTag tag = ModuleTag::kMorph;
  ImageEncoder<T> image;
  ParamPack<T> head;                   // "head.w": 4 x D for access, 1 x D otherwise
  std::optional<PoiEncoder<T>> poi;    // access only
  ParamPack<T> access_extra;           // "poi.table" (4 x poi_dim), "log_tau" (1 x 1); access only

  TraitModel(ModuleTag t, const EncoderConfig& enc, int poi_dim = 16, int poi_hidden = 64);
  static TraitModel init(ModuleTag t, const EncoderConfig& enc, std::uint64_t seed, int poi_dim = 16,
                         int poi_hidden = 64);

  TraitModel zeros_like() const;
  // Every parameter pack in checkpoint order.
  std::vector<ParamPack<T>*> packs();
  std::vector<const ParamPack<T>*> packs() const;

  Eigen::Map<const RowMat<T>> head_w() const { return head.mat(0); }
  PoiEmbeddingTable table() const;
  double log_tau() const { return static_cast<double>(access_extra.flat()[access_extra.blocks()[1].offset]); }

  template <typename U>
  TraitModel<U> cast() const;
};

struct Checkpoint {
  ModuleTag tag = ModuleTag::kMorph;
  TraitModel<float> model;
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
  double quantile = 0.0;  // econ: backdoor quantile used when training
};

struct LogEntry {
  std::uint64_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  double seconds = 0.0;
  bool skipped = false;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LogEntry> log;
  std::vector<std::string> warnings;
};

void write_train_log(const TrainResult& r, const std::filesystem::path& path, const std::string& mode_note = "");

// Fills `out` with the pixels of sample `index` in [0,1].
template <typename T>
using ImageSource = std::function<void(std::size_t, std::vector<T>&)>;

// One optimisation step's loss and gradient on a batch. Returns the batch loss;
// `grad` must be a zeros_like() of the model and receives the accumulated gradient.
struct StepOutput {
  double loss = 0.0;
  bool degenerate = false;
};

template <typename T>
StepOutput access_loss_and_grad(const TraitModel<T>& model, const ImageSource<T>& images,
                                   std::span<const AccessSample> samples, std::span<const std::size_t> batch,
                                   const TrainConfig& cfg, TraitModel<T>& grad);

template <typename T>
StepOutput pearson_loss_and_grad(const TraitModel<T>& model, const ImageSource<T>& images,
                                    std::span<const double> targets, std::span<const std::size_t> batch,
                                    TraitModel<T>& grad);

// Decoupled-weight-decay Adam over a model's parameter packs.
template <typename T>
class AdamW {
 public:
  explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}
  void step(TraitModel<T>& model, const TraitModel<T>& grad);
  std::uint64_t steps() const { return t_; }

 private:
  TrainConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

struct TrainOptions {
  const Checkpoint* resume = nullptr;  // continue from this state; config hash must match
  std::function<void(const Checkpoint&, int epoch)> on_epoch_end;
};

TrainResult train_access(std::span<const ImageTile> tiles, std::span<const AccessSample> samples,
                         const TrainConfig& cfg, const TrainOptions& opts = {});
TrainResult train_morph(std::span<const ImageTile> tiles, std::span<const MorphSample> samples,
                        const TrainConfig& cfg, const TrainOptions& opts = {});
// Applies the backdoor adjustment once with the frozen morphological encoder,
// then trains on the adjusted images. cfg.quantile == 0 is the nightlight proxy.
TrainResult train_econ(std::span<const ImageTile> tiles, std::span<const EconSample> samples,
                       const Checkpoint* morph, const TrainConfig& cfg, const TrainOptions& opts = {});

// Seeds for the three encoders are independent named sub-streams of cfg.seed.
std::uint64_t module_seed(std::uint64_t seed, ModuleTag tag);

}  // namespace povmap
