#include "povmap/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "povmap/error.hpp"
#include "povmap/losses.hpp"
#include "povmap/rng.hpp"

namespace povmap {

std::string_view to_string(ModuleTag tag) {
  switch (tag) {
    case ModuleTag::kAccess: return "access";
    case ModuleTag::kMorph: return "morph";
    case ModuleTag::kEcon: return "econ";
  }
  throw DomainError("unknown module tag");
}

ModuleTag parse_module_tag(std::string_view s) {
  if (s == "access") return ModuleTag::kAccess;
  if (s == "morph") return ModuleTag::kMorph;
  if (s == "econ") return ModuleTag::kEcon;
  throw DomainError(fmt::format("unknown module '{}' (expected access, morph or econ)", s));
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lambda1 >= 0.0)) throw ConfigError("lambda1 must be >= 0");
  if (!(quantile >= 0.0 && quantile < 1.0)) throw ConfigError("q must lie in [0, 1)");
  if (!(radius_m > 0.0)) throw ConfigError("gamma must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (poi_embed_dim < 1 || poi_hidden_dim < 1) throw ConfigError("POI dims must be positive");
  if (std::none_of(active_categories.begin(), active_categories.end(), [](bool b) { return b; })) {
    throw ConfigError("at least one POI category must stay active");
  }
  try {
    encoder.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

std::string TrainConfig::describe() const {
  std::string cats;
  for (std::size_t j = 0; j < kNumPoiCategories; ++j) {
    if (!active_categories[j]) continue;
    if (!cats.empty()) cats += ',';
    cats += to_string(kPoiCategories[j]);
  }
  return fmt::format(
      "learning_rate={}\nbatch_size={}\nepochs={}\nseed={}\nlambda1={}\nq={}\ngamma={}\nbeta1={}\nbeta2={}\n"
      "weight_decay={}\nadam_eps={}\npoi_embed_dim={}\npoi_hidden_dim={}\npoi_categories={}\ncontrastive={}\n"
      "patch_px={}\nembed_dim={}\nlayers={}\nheads={}\nmlp_ratio={}\n",
      learning_rate, batch_size, epochs, seed, lambda1, quantile, radius_m, beta1, beta2, weight_decay, adam_eps,
      poi_embed_dim, poi_hidden_dim, cats, use_contrastive ? 1 : 0, encoder.patch_px, encoder.embed_dim,
      encoder.layers, encoder.heads, encoder.mlp_ratio);
}

std::uint64_t TrainConfig::hash() const { return fnv1a(describe()); }

std::uint64_t module_seed(std::uint64_t seed, ModuleTag tag) {
  return derive_seed(seed, fmt::format("init.{}", to_string(tag)));
}

namespace {

template <typename T, typename M>
void fill_uniform(M&& m, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<T>(rng.uniform(-bound, bound));
  }
}

}  // namespace

template <typename T>
TraitModel<T>::TraitModel(ModuleTag t, const EncoderConfig& enc, int poi_dim, int poi_hidden)
    : tag(t), image(enc) {
  const int rows = t == ModuleTag::kAccess ? static_cast<int>(kNumPoiCategories) : 1;
  head.add("head.w", rows, enc.embed_dim, true);
  if (t == ModuleTag::kAccess) {
    poi.emplace(poi_dim, poi_hidden, enc.embed_dim);
    access_extra.add("poi.table", static_cast<Eigen::Index>(kNumPoiCategories), poi_dim, false);
    access_extra.add("log_tau", 1, 1, false);
  }
}

template <typename T>
TraitModel<T> TraitModel<T>::init(ModuleTag t, const EncoderConfig& enc, std::uint64_t seed, int poi_dim,
                                  int poi_hidden) {
  EncoderConfig cfg = enc;
  cfg.seed = seed;
  TraitModel m(t, cfg, poi_dim, poi_hidden);
  m.image = ImageEncoder<T>::init(cfg);
  Rng rng(derive_seed(seed, "head"));
  fill_uniform<T>(m.head.mat(0), rng, 1.0 / std::sqrt(static_cast<double>(enc.embed_dim)));
  if (t == ModuleTag::kAccess) {
    m.poi = PoiEncoder<T>::init(poi_dim, poi_hidden, enc.embed_dim, derive_seed(seed, "poi"));
    Rng trng(derive_seed(seed, "table"));
    fill_uniform<T>(m.access_extra.mat(0), trng, 1.0 / std::sqrt(static_cast<double>(poi_dim)));
    m.access_extra.mat(1)(0, 0) = static_cast<T>(std::log(kInitTemperature));
  }
  return m;
}

template <typename T>
TraitModel<T> TraitModel<T>::zeros_like() const {
  TraitModel out = *this;
  for (ParamPack<T>* p : out.packs()) p->set_zero();
  return out;
}

template <typename T>
std::vector<ParamPack<T>*> TraitModel<T>::packs() {
  std::vector<ParamPack<T>*> out{&image.params(), &head};
  if (poi) {
    out.push_back(&poi->params());
    out.push_back(&access_extra);
  }
  return out;
}

template <typename T>
std::vector<const ParamPack<T>*> TraitModel<T>::packs() const {
  std::vector<const ParamPack<T>*> out{&image.params(), &head};
  if (poi) {
    out.push_back(&poi->params());
    out.push_back(&access_extra);
  }
  return out;
}

template <typename T>
PoiEmbeddingTable TraitModel<T>::table() const {
  if (!poi) throw StateError("only the accessibility model carries a POI table");
  return {access_extra.mat(0).template cast<double>()};
}

template <typename T>
template <typename U>
TraitModel<U> TraitModel<T>::cast() const {
  const int pd = poi ? poi->input_dim() : 16;
  const int ph = poi ? poi->hidden_dim() : 64;
  TraitModel<U> out(tag, image.config(), pd, ph);
  auto src = packs();
  auto dst = out.packs();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
  return out;
}

void write_train_log(const TrainResult& r, const std::filesystem::path& path, const std::string& mode_note) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  if (!mode_note.empty()) out << "# " << mode_note << '\n';
  out << "step,epoch,loss,wall_s,skipped\n";
  for (const LogEntry& e : r.log) {
    out << fmt::format("{},{},{},{:.3f},{}\n", e.step, e.epoch, e.loss, e.seconds, e.skipped ? 1 : 0);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

RowMat<double> active_columns(const RowMat<double>& m, const std::array<bool, kNumPoiCategories>& active) {
  std::vector<Eigen::Index> cols;
  for (std::size_t j = 0; j < kNumPoiCategories; ++j) {
    if (active[j]) cols.push_back(static_cast<Eigen::Index>(j));
  }
  RowMat<double> out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(cols[c]);
  return out;
}

// Per-sample gradients are written to their own slot and summed afterwards in
// batch order, so the result does not depend on thread scheduling.
template <typename T>
void reduce_into(std::vector<TraitModel<T>>& slots, std::size_t count, TraitModel<T>& grad) {
  auto dst = grad.packs();
  for (std::size_t s = 0; s < count; ++s) {
    auto src = slots[s].packs();
    for (std::size_t p = 0; p < dst.size(); ++p) *dst[p] += *src[p];
  }
}

template <typename T>
std::vector<TraitModel<T>> grad_slots(const TraitModel<T>& model, std::size_t count) {
  return std::vector<TraitModel<T>>(count, model.zeros_like());
}

}  // namespace

template <typename T>
StepOutput access_loss_and_grad(const TraitModel<T>& model, const ImageSource<T>& images,
                                std::span<const AccessSample> samples, std::span<const std::size_t> batch,
                                const TrainConfig& cfg, TraitModel<T>& grad) {
  if (!model.poi) throw StateError("access step needs the POI tower");
  const auto b = static_cast<Eigen::Index>(batch.size());
  if (b == 0) throw DomainError("empty batch");
  const int d = model.image.config().embed_dim;
  const int pd = model.poi->input_dim();
  const auto table = model.access_extra.mat(0);
  const auto head = model.head.mat(0);

  std::vector<typename ImageEncoder<T>::Trace> traces(batch.size());
  std::vector<typename PoiEncoder<T>::Trace> poi_traces(batch.size());
  RowMat<double> emb(b, d), poi_emb(b, d), logits(b, static_cast<Eigen::Index>(kNumPoiCategories));
  RowMat<double> labels(b, static_cast<Eigen::Index>(kNumPoiCategories));
  std::vector<std::exception_ptr> errors(batch.size());

#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index i = 0; i < b; ++i) {
    try {
      const AccessSample& s = samples[batch[i]];
      std::vector<T> px;
      images(batch[i], px);
      const Vec<T> e = model.image.forward(px, traces[i]);
      emb.row(i) = e.template cast<double>().transpose();
      logits.row(i) = (head * e).template cast<double>().transpose();
      Vec<T> g = Vec<T>::Zero(pd);
      for (std::size_t j = 0; j < kNumPoiCategories; ++j) {
        if (cfg.active_categories[j]) g += static_cast<T>(s.inv_km[j]) * table.row(static_cast<Eigen::Index>(j)).transpose();
      }
      poi_emb.row(i) = model.poi->forward(g, poi_traces[i]).template cast<double>().transpose();
      for (std::size_t j = 0; j < kNumPoiCategories; ++j) labels(i, static_cast<Eigen::Index>(j)) = s.multilabel[j];
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RowMat<double> d_emb = RowMat<double>::Zero(b, d);
  RowMat<double> d_poi = RowMat<double>::Zero(b, d);
  double contrastive = 0.0, d_log_tau = 0.0;
  if (cfg.use_contrastive) {
    const ContrastiveResult c = contrastive_loss(emb, poi_emb, model.log_tau());
    contrastive = c.loss;
    d_emb = c.d_image;
    d_poi = c.d_poi;
    d_log_tau = c.d_log_tau;
  }
  const PreconditionResult pre =
      precondition_loss(active_columns(logits, cfg.active_categories), active_columns(labels, cfg.active_categories));
  RowMat<double> d_logits = RowMat<double>::Zero(b, static_cast<Eigen::Index>(kNumPoiCategories));
  for (std::size_t j = 0, c = 0; j < kNumPoiCategories; ++j) {
    if (cfg.active_categories[j]) d_logits.col(static_cast<Eigen::Index>(j)) = cfg.lambda1 * pre.d_logits.col(static_cast<Eigen::Index>(c++));
  }
  const CombinedAccessLoss total = combined_access_loss(contrastive, pre.loss, cfg.lambda1);

  auto slots = grad_slots(model, batch.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index i = 0; i < b; ++i) {
    TraitModel<T>& g = slots[static_cast<std::size_t>(i)];
    const Vec<T> dl = d_logits.row(i).transpose().template cast<T>();
    const Vec<T> e = emb.row(i).transpose().template cast<T>();
    g.head.mat(0).noalias() += dl * e.transpose();
    const Vec<T> de = d_emb.row(i).transpose().template cast<T>() + head.transpose() * dl;
    model.image.backward(traces[i], de, g.image.params());
    if (cfg.use_contrastive) {
      const Vec<T> dp = d_poi.row(i).transpose().template cast<T>();
      const Vec<T> dg = model.poi->backward(poi_traces[i], dp, g.poi->params());
      const AccessSample& s = samples[batch[i]];
      auto dtable = g.access_extra.mat(0);
      for (std::size_t j = 0; j < kNumPoiCategories; ++j) {
        if (cfg.active_categories[j]) dtable.row(static_cast<Eigen::Index>(j)) += static_cast<T>(s.inv_km[j]) * dg.transpose();
      }
    }
  }
  reduce_into(slots, batch.size(), grad);
  grad.access_extra.mat(1)(0, 0) += static_cast<T>(d_log_tau);
  return {total.value, false};
}

template <typename T>
StepOutput pearson_loss_and_grad(const TraitModel<T>& model, const ImageSource<T>& images,
                                 std::span<const double> targets, std::span<const std::size_t> batch,
                                 TraitModel<T>& grad) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  const int d = model.image.config().embed_dim;
  const auto w = model.head.mat(0);
  std::vector<typename ImageEncoder<T>::Trace> traces(batch.size());
  RowMat<double> emb(b, d);
  std::vector<double> pred(batch.size()), tgt(batch.size());
  std::vector<std::exception_ptr> errors(batch.size());

#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index i = 0; i < b; ++i) {
    try {
      std::vector<T> px;
      images(batch[i], px);
      const Vec<T> e = model.image.forward(px, traces[i]);
      emb.row(i) = e.template cast<double>().transpose();
      pred[i] = static_cast<double>((w * e)(0));
      tgt[i] = targets[batch[i]];
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const PearsonResult pr = pearson_loss(pred, tgt);
  if (pr.degenerate) return {0.0, true};

  auto slots = grad_slots(model, batch.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index i = 0; i < b; ++i) {
    TraitModel<T>& g = slots[static_cast<std::size_t>(i)];
    const T dp = static_cast<T>(pr.d_pred(i));
    g.head.mat(0).noalias() += dp * emb.row(i).template cast<T>();
    const Vec<T> de = dp * w.row(0).transpose();
    model.image.backward(traces[i], de, g.image.params());
  }
  reduce_into(slots, batch.size(), grad);
  return {pr.loss, false};
}

template <typename T>
void AdamW<T>::step(TraitModel<T>& model, const TraitModel<T>& grad) {
  auto params = model.packs();
  auto grads = grad.packs();
  if (m_.empty()) {
    for (ParamPack<T>* p : params) {
      m_.emplace_back(p->size(), T(0));
      v_.emplace_back(p->size(), T(0));
    }
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = cfg_.learning_rate;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p]->flat();
    auto g = grads[p]->flat();
    auto& m = m_[p];
    auto& v = v_[p];
    for (const auto& blk : params[p]->blocks()) {
      const double decay = blk.decay ? cfg_.weight_decay : 0.0;
      const std::size_t end = blk.offset + static_cast<std::size_t>(blk.rows * blk.cols);
      for (std::size_t i = blk.offset; i < end; ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
        const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double wi = static_cast<double>(w[i]);
        const double upd = (mi / c1) / (std::sqrt(vi / c2) + cfg_.adam_eps) + decay * wi;
        w[i] = static_cast<T>(wi - lr * upd);
      }
    }
  }
  if (model.poi) {
    T& lt = model.access_extra.mat(1)(0, 0);
    lt = static_cast<T>(clamp_log_temperature(static_cast<double>(lt)));
  }
}

namespace {

using Clock = std::chrono::steady_clock;

// tile_id -> position in the tile list.
std::vector<std::size_t> align_tiles(std::span<const ImageTile> tiles, const std::vector<std::string>& ids) {
  std::unordered_map<std::string_view, std::size_t> pos;
  for (std::size_t i = 0; i < tiles.size(); ++i) pos.emplace(tiles[i].tile_id, i);
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = pos.find(id);
    if (it == pos.end()) throw ValidationError("sample " + id + " has no matching tile");
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, std::uint64_t seed, ModuleTag tag,
                                                    int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(derive_seed(seed, fmt::format("shuffle.{}", to_string(tag))), static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size)) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + static_cast<std::size_t>(batch_size))));
  }
  return out;
}

using StepFn = std::function<StepOutput(const TraitModel<float>&, std::span<const std::size_t>, TraitModel<float>&)>;

TrainResult run_loop(ModuleTag tag, std::size_t n, const TrainConfig& cfg, const TrainOptions& opts,
                     const StepFn& step_fn, bool pearson, double quantile) {
  cfg.validate();
  if (n == 0) throw DomainError(fmt::format("{} training needs a non-empty dataset", to_string(tag)));
  const std::uint64_t hash = cfg.hash();
  TraitModel<float> model = TraitModel<float>::init(tag, cfg.encoder, module_seed(cfg.seed, tag), cfg.poi_embed_dim,
                                                    cfg.poi_hidden_dim);
  std::uint64_t step = 0;
  if (opts.resume) {
    if (opts.resume->tag != tag) throw ConfigError("resume checkpoint is for a different module");
    if (opts.resume->config_hash != hash) throw ConfigError("resume checkpoint was trained with a different config");
    model = opts.resume->model;
    step = opts.resume->step;
  }

  TrainResult res{Checkpoint{tag, model, step, hash, quantile}, {}, {}};
  AdamW<float> opt(cfg);
  TraitModel<float> grad = model.zeros_like();
  const auto t0 = Clock::now();
  std::uint64_t skipped = 0;
  std::uint64_t seen = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = epoch_batches(n, cfg.batch_size, cfg.seed, tag, epoch);
    for (const auto& batch : batches) {
      // Resuming replays the batch schedule and skips what was already done.
      if (seen++ < step) continue;
      LogEntry entry{step + 1, epoch, 0.0, 0.0, false};
      if (pearson && batch.size() < 2) {
        entry.skipped = true;
      } else {
        for (ParamPack<float>* p : grad.packs()) p->set_zero();
        const StepOutput out = step_fn(model, batch, grad);
        if (out.degenerate) {
          entry.skipped = true;
          ++skipped;
        } else {
          if (!std::isfinite(out.loss)) {
            throw NumericError(fmt::format("{} training: non-finite loss at step {} (epoch {})", to_string(tag),
                                           step + 1, epoch));
          }
          for (const ParamPack<float>* p : grad.packs()) {
            if (!p->all_finite()) {
              throw NumericError(fmt::format("{} training: non-finite gradient at step {} (epoch {})",
                                             to_string(tag), step + 1, epoch));
            }
          }
          opt.step(model, grad);
          entry.loss = out.loss;
        }
      }
      ++step;
      entry.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      res.log.push_back(entry);
    }
    if (opts.on_epoch_end) opts.on_epoch_end(Checkpoint{tag, model, step, hash, quantile}, epoch);
  }
  if (skipped > 0) {
    res.warnings.push_back(fmt::format("{} training: {} degenerate batch(es) skipped (constant predictions or targets)",
                                       to_string(tag), skipped));
  }
  res.checkpoint = Checkpoint{tag, std::move(model), step, hash, quantile};
  return res;
}

template <typename Sample>
std::vector<std::string> ids_of(std::span<const Sample> samples) {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.tile_id);
  return ids;
}

}  // namespace

TrainResult train_access(std::span<const ImageTile> tiles, std::span<const AccessSample> samples,
                         const TrainConfig& cfg, const TrainOptions& opts) {
  const auto pos = align_tiles(tiles, ids_of(samples));
  ImageSource<float> images = [&](std::size_t i, std::vector<float>& out) {
    out.resize(tiles[pos[i]].levels.size());
    tiles[pos[i]].pixels_into<float>(out);
  };
  StepFn fn = [&](const TraitModel<float>& m, std::span<const std::size_t> batch, TraitModel<float>& g) {
    return access_loss_and_grad<float>(m, images, samples, batch, cfg, g);
  };
  return run_loop(ModuleTag::kAccess, samples.size(), cfg, opts, fn, false, 0.0);
}

TrainResult train_morph(std::span<const ImageTile> tiles, std::span<const MorphSample> samples,
                        const TrainConfig& cfg, const TrainOptions& opts) {
  const auto pos = align_tiles(tiles, ids_of(samples));
  std::vector<double> targets;
  for (const auto& s : samples) targets.push_back(s.log_fa);
  ImageSource<float> images = [&](std::size_t i, std::vector<float>& out) {
    out.resize(tiles[pos[i]].levels.size());
    tiles[pos[i]].pixels_into<float>(out);
  };
  StepFn fn = [&](const TraitModel<float>& m, std::span<const std::size_t> batch, TraitModel<float>& g) {
    return pearson_loss_and_grad<float>(m, images, targets, batch, g);
  };
  return run_loop(ModuleTag::kMorph, samples.size(), cfg, opts, fn, true, 0.0);
}

TrainResult train_econ(std::span<const ImageTile> tiles, std::span<const EconSample> samples,
                       const Checkpoint* morph, const TrainConfig& cfg, const TrainOptions& opts) {
  if (morph == nullptr) throw ConfigError("economic training needs a morphological checkpoint");
  if (morph->tag != ModuleTag::kMorph) throw ConfigError("checkpoint passed as morphological is tagged " +
                                                         std::string(to_string(morph->tag)));
  cfg.validate();
  const auto pos = align_tiles(tiles, ids_of(samples));
  std::vector<ImageTile> ordered;
  ordered.reserve(pos.size());
  std::vector<double> targets;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    targets.push_back(samples[i].log_ni);
  }
  // Partitions are computed over the sample-ordered tiles.
  std::vector<std::size_t> identity(pos.size());
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  AdjustedDataset adjusted;
  if (cfg.quantile > 0.0) {
    for (std::size_t p : pos) ordered.push_back(tiles[p]);
    adjusted = adjust_dataset(ordered, morph->model.image, cfg.quantile);
  }
  ImageSource<float> images = [&](std::size_t i, std::vector<float>& out) {
    const ImageTile& t = tiles[pos[i]];
    if (adjusted.partitions.empty()) {
      out.resize(t.levels.size());
      t.pixels_into<float>(out);
    } else {
      out = adjusted.image(t, i);
    }
  };
  StepFn fn = [&](const TraitModel<float>& m, std::span<const std::size_t> batch, TraitModel<float>& g) {
    return pearson_loss_and_grad<float>(m, images, targets, batch, g);
  };
  return run_loop(ModuleTag::kEcon, samples.size(), cfg, opts, fn, true, cfg.quantile);
}

template struct TraitModel<float>;
template struct TraitModel<double>;
template TraitModel<double> TraitModel<float>::cast<double>() const;
template TraitModel<float> TraitModel<double>::cast<float>() const;
template TraitModel<float> TraitModel<float>::cast<float>() const;
template TraitModel<double> TraitModel<double>::cast<double>() const;
template class AdamW<float>;
template class AdamW<double>;
template StepOutput access_loss_and_grad<float>(const TraitModel<float>&, const ImageSource<float>&,
                                                std::span<const AccessSample>, std::span<const std::size_t>,
                                                const TrainConfig&, TraitModel<float>&);
template StepOutput access_loss_and_grad<double>(const TraitModel<double>&, const ImageSource<double>&,
                                                 std::span<const AccessSample>, std::span<const std::size_t>,
                                                 const TrainConfig&, TraitModel<double>&);
template StepOutput pearson_loss_and_grad<float>(const TraitModel<float>&, const ImageSource<float>&,
                                                 std::span<const double>, std::span<const std::size_t>,
                                                 TraitModel<float>&);
template StepOutput pearson_loss_and_grad<double>(const TraitModel<double>&, const ImageSource<double>&,
                                                  std::span<const double>, std::span<const std::size_t>,
                                                  TraitModel<double>&);

}  // namespace povmap
