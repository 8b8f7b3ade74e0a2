#include "povmap/encoder.hpp"

#include <cmath>
#include <string>

#include "povmap/rng.hpp"

namespace povmap {
namespace {

template <typename T>
void layer_norm(const RowMat<T>& x, const Eigen::Map<const Vec<T>>& g, const Eigen::Map<const Vec<T>>& b,
                RowMat<T>& x_hat, Vec<T>& rstd, RowMat<T>& y) {
  const Eigen::Index n = x.rows();
  x_hat.resize(n, x.cols());
  y.resize(n, x.cols());
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mu = x.row(i).mean();
    const T var = (x.row(i).array() - mu).square().mean();
    rstd(i) = T(1) / std::sqrt(var + T(kLayerNormEps));
    x_hat.row(i) = (x.row(i).array() - mu) * rstd(i);
    y.row(i) = x_hat.row(i).cwiseProduct(g.transpose()) + b.transpose();
  }
}

template <typename T>
RowMat<T> layer_norm_backward(const RowMat<T>& dy, const RowMat<T>& x_hat, const Vec<T>& rstd,
                              const Eigen::Map<const Vec<T>>& g, Eigen::Map<Vec<T>> dg, Eigen::Map<Vec<T>> db) {
  const Eigen::Index n = dy.rows();
  RowMat<T> dx(n, dy.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    dg += dy.row(i).cwiseProduct(x_hat.row(i)).transpose();
    db += dy.row(i).transpose();
    const auto dxh = dy.row(i).cwiseProduct(g.transpose()).eval();
    const T m1 = dxh.mean();
    const T m2 = dxh.cwiseProduct(x_hat.row(i)).mean();
    dx.row(i) = rstd(i) * (dxh.array() - m1 - x_hat.row(i).array() * m2).matrix();
  }
  return dx;
}

// Row-by-row accumulation keeps the summation order fixed; Eigen's partial
// reductions can change order with the alignment of the operand.
template <typename T, typename M>
void add_column_sums(const M& m, Eigen::Map<Vec<T>> out) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) out += m.row(i).transpose();
}

template <typename T>
void add_row_bias(RowMat<T>& m, const Eigen::Map<const Vec<T>>& b) {
  m.rowwise() += b.transpose();
}

template <typename T>
void check_finite(const RowMat<T>& m, int layer, const char* where) {
  if (!m.allFinite()) {
    throw NumericError("non-finite activation in encoder layer " + std::to_string(layer) + " (" + where + ")");
  }
}

template <typename T>
void fill_uniform(Eigen::Map<RowMat<T>> m, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace

void EncoderConfig::validate() const {
  if (image_px <= 0 || patch_px <= 0 || image_px % patch_px != 0) {
    throw DomainError("encoder: image size must be a multiple of patch_px");
  }
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) {
    throw DomainError("encoder: embed_dim must be a multiple of heads");
  }
  if (layers < 1 || mlp_ratio < 1) throw DomainError("encoder: layers and mlp_ratio must be >= 1");
}

template <typename T>
void extract_patch(std::span<const T> image, int image_px, int patch_px, int pr, int pc, T* out) {
  const std::size_t row_stride = static_cast<std::size_t>(image_px) * 3;
  for (int y = 0; y < patch_px; ++y) {
    const T* src = image.data() + static_cast<std::size_t>(pr * patch_px + y) * row_stride +
                   static_cast<std::size_t>(pc * patch_px) * 3;
    std::copy(src, src + static_cast<std::size_t>(patch_px) * 3, out + static_cast<std::size_t>(y) * patch_px * 3);
  }
}

template <typename T>
ImageEncoder<T>::ImageEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const Eigen::Index d = cfg_.embed_dim, m = cfg_.mlp_dim();
  ids_.patch_w = params_.add("patch.w", d, cfg_.patch_dim(), true);
  ids_.patch_b = params_.add("patch.b", d, 1, false);
  ids_.summary = params_.add("summary", d, 1, false);
  ids_.pos = params_.add("pos", cfg_.tokens(), d, false);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer L;
    L.ln1_g = params_.add(p + "ln1.g", d, 1, false);
    L.ln1_b = params_.add(p + "ln1.b", d, 1, false);
    L.wq = params_.add(p + "attn.wq", d, d, true);
    L.bq = params_.add(p + "attn.bq", d, 1, false);
    L.wk = params_.add(p + "attn.wk", d, d, true);
    L.bk = params_.add(p + "attn.bk", d, 1, false);
    L.wv = params_.add(p + "attn.wv", d, d, true);
    L.bv = params_.add(p + "attn.bv", d, 1, false);
    L.wo = params_.add(p + "attn.wo", d, d, true);
    L.bo = params_.add(p + "attn.bo", d, 1, false);
    L.ln2_g = params_.add(p + "ln2.g", d, 1, false);
    L.ln2_b = params_.add(p + "ln2.b", d, 1, false);
    L.w1 = params_.add(p + "mlp.w1", m, d, true);
    L.b1 = params_.add(p + "mlp.b1", m, 1, false);
    L.w2 = params_.add(p + "mlp.w2", d, m, true);
    L.b2 = params_.add(p + "mlp.b2", d, 1, false);
    ids_.layers.push_back(L);
  }
  ids_.lnf_g = params_.add("lnf.g", d, 1, false);
  ids_.lnf_b = params_.add("lnf.b", d, 1, false);
  ids_.out_w = params_.add("out.w", d, d, true);
  ids_.out_b = params_.add("out.b", d, 1, false);
}

namespace {

bool is_gain(const std::string& name) {
  return name.ends_with("ln1.g") || name.ends_with("ln2.g") || name == "lnf.g";
}

}  // namespace

template <typename T>
double ImageEncoder<T>::init_bound(int id) const {
  const auto& b = params_.blocks()[id];
  if (is_gain(b.name)) return 1.0;
  if (b.name == "summary" || b.name == "pos") return 0.02;
  if (b.rows > 1 && b.cols > 1) return 1.0 / std::sqrt(static_cast<double>(b.cols));
  return 0.0;
}

template <typename T>
ImageEncoder<T> ImageEncoder<T>::init(const EncoderConfig& cfg) {
  ImageEncoder enc(cfg);
  Rng rng(derive_seed(cfg.seed, "encoder.init"));
  const auto& blocks = enc.params_.blocks();
  for (int id = 0; id < static_cast<int>(blocks.size()); ++id) {
    auto m = enc.params_.mat(id);
    if (is_gain(blocks[id].name)) {
      m.setConstant(T(1));
    } else if (const double bound = enc.init_bound(id); bound > 0.0) {
      fill_uniform<T>(m, rng, bound);
    }
  }
  return enc;
}

template <typename T>
Vec<T> ImageEncoder<T>::encode(std::span<const T> image, AttentionMap* attention) const {
  Trace trace;
  Vec<T> e = forward(image, trace);
  if (attention) *attention = attention_from(trace);
  return e;
}

template <typename T>
Vec<T> ImageEncoder<T>::forward(std::span<const T> image, Trace& tr) const {
  if (image.size() != cfg_.image_values()) throw DomainError("encoder: image has wrong number of values");
  const int g = cfg_.grid(), np = cfg_.num_patches(), n = cfg_.tokens();
  const int d = cfg_.embed_dim, dh = cfg_.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto& P = params_;

  tr.patches.resize(np, cfg_.patch_dim());
  for (int pr = 0; pr < g; ++pr) {
    for (int pc = 0; pc < g; ++pc) extract_patch<T>(image, cfg_.image_px, cfg_.patch_px, pr, pc, tr.patches.row(pr * g + pc).data());
  }

  RowMat<T> x(n, d);
  x.row(0) = P.vec(ids_.summary).transpose();
  x.bottomRows(np).noalias() = tr.patches * P.mat(ids_.patch_w).transpose();
  x.bottomRows(np).rowwise() += P.vec(ids_.patch_b).transpose();
  x += P.mat(ids_.pos);
  check_finite(x, 0, "patch embedding");

  tr.layers.resize(cfg_.layers);
  for (int l = 0; l < cfg_.layers; ++l) {
    const Layer& L = ids_.layers[l];
    LayerTrace& t = tr.layers[l];
    t.x_in = x;
    layer_norm<T>(t.x_in, P.vec(L.ln1_g), P.vec(L.ln1_b), t.a_hat, t.rstd1, t.a);
    t.q.noalias() = t.a * P.mat(L.wq).transpose();
    add_row_bias<T>(t.q, P.vec(L.bq));
    t.k.noalias() = t.a * P.mat(L.wk).transpose();
    add_row_bias<T>(t.k, P.vec(L.bk));
    t.v.noalias() = t.a * P.mat(L.wv).transpose();
    add_row_bias<T>(t.v, P.vec(L.bv));
    t.o.resize(n, d);
    t.probs.resize(cfg_.heads);
    for (int h = 0; h < cfg_.heads; ++h) {
      RowMat<T>& p = t.probs[h];
      p.noalias() = (t.q.middleCols(h * dh, dh) * t.k.middleCols(h * dh, dh).transpose()) * scale;
      for (int i = 0; i < n; ++i) {
        const T mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
      }
      t.o.middleCols(h * dh, dh).noalias() = p * t.v.middleCols(h * dh, dh);
    }
    t.x_mid = t.x_in;
    t.x_mid.noalias() += t.o * P.mat(L.wo).transpose();
    add_row_bias<T>(t.x_mid, P.vec(L.bo));
    check_finite(t.x_mid, l, "attention");

    layer_norm<T>(t.x_mid, P.vec(L.ln2_g), P.vec(L.ln2_b), t.b_hat, t.rstd2, t.b);
    t.z.noalias() = t.b * P.mat(L.w1).transpose();
    add_row_bias<T>(t.z, P.vec(L.b1));
    t.r = t.z.cwiseMax(T(0));
    x = t.x_mid;
    x.noalias() += t.r * P.mat(L.w2).transpose();
    add_row_bias<T>(x, P.vec(L.b2));
    check_finite(x, l, "feed-forward");
  }

  tr.final_in = x.row(0).transpose();
  const T mu = tr.final_in.mean();
  const T var = (tr.final_in.array() - mu).square().mean();
  tr.final_rstd = T(1) / std::sqrt(var + T(kLayerNormEps));
  tr.final_hat = (tr.final_in.array() - mu) * tr.final_rstd;
  tr.final_out = tr.final_hat.cwiseProduct(P.vec(ids_.lnf_g)) + P.vec(ids_.lnf_b);
  Vec<T> e = P.mat(ids_.out_w) * tr.final_out + P.vec(ids_.out_b);
  if (!e.allFinite()) throw NumericError("non-finite encoder output (layer " + std::to_string(cfg_.layers) + ")");
  return e;
}

template <typename T>
AttentionMap ImageEncoder<T>::attention_from(const Trace& tr) const {
  const LayerTrace& last = tr.layers.back();
  const int np = cfg_.num_patches();
  AttentionMap map;
  map.grid = cfg_.grid();
  map.scores.assign(np, 0.0);
  for (const auto& p : last.probs) {
    for (int i = 0; i < np; ++i) map.scores[i] += static_cast<double>(p(0, i + 1));
  }
  double total = 0.0;
  for (double s : map.scores) total += s;
  for (double& s : map.scores) s /= total;
  return map;
}

template <typename T>
void ImageEncoder<T>::backward(const Trace& tr, const Vec<T>& d_embedding, ParamPack<T>& grad) const {
  const int np = cfg_.num_patches(), n = cfg_.tokens();
  const int d = cfg_.embed_dim, dh = cfg_.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto& P = params_;

  grad.mat(ids_.out_w).noalias() += d_embedding * tr.final_out.transpose();
  grad.vec(ids_.out_b) += d_embedding;
  const Vec<T> d_final_out = P.mat(ids_.out_w).transpose() * d_embedding;
  grad.vec(ids_.lnf_g) += d_final_out.cwiseProduct(tr.final_hat);
  grad.vec(ids_.lnf_b) += d_final_out;
  const Vec<T> dxh = d_final_out.cwiseProduct(P.vec(ids_.lnf_g));
  const T m1 = dxh.mean();
  const T m2 = dxh.cwiseProduct(tr.final_hat).mean();

  RowMat<T> dx = RowMat<T>::Zero(n, d);
  dx.row(0) = (tr.final_rstd * (dxh.array() - m1 - tr.final_hat.array() * m2)).matrix().transpose();

  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const Layer& L = ids_.layers[l];
    const LayerTrace& t = tr.layers[l];

    // feed-forward branch
    grad.mat(L.w2).noalias() += dx.transpose() * t.r;
    add_column_sums<T>(dx, grad.vec(L.b2));
    RowMat<T> dz = dx * P.mat(L.w2);
    dz.array() *= (t.z.array() > T(0)).template cast<T>();
    grad.mat(L.w1).noalias() += dz.transpose() * t.b;
    add_column_sums<T>(dz, grad.vec(L.b1));
    const RowMat<T> db = dz * P.mat(L.w1);
    RowMat<T> d_mid = dx + layer_norm_backward<T>(db, t.b_hat, t.rstd2, P.vec(L.ln2_g), grad.vec(L.ln2_g), grad.vec(L.ln2_b));

    // attention branch
    grad.mat(L.wo).noalias() += d_mid.transpose() * t.o;
    add_column_sums<T>(d_mid, grad.vec(L.bo));
    const RowMat<T> d_o = d_mid * P.mat(L.wo);
    RowMat<T> dq(n, d), dk(n, d), dv(n, d);
    for (int h = 0; h < cfg_.heads; ++h) {
      const RowMat<T>& p = t.probs[h];
      const auto d_oh = d_o.middleCols(h * dh, dh);
      RowMat<T> dp = d_oh * t.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh).noalias() = p.transpose() * d_oh;
      const Vec<T> row_dot = dp.cwiseProduct(p).rowwise().sum();
      dp.colwise() -= row_dot;
      const RowMat<T> ds = p.cwiseProduct(dp) * scale;
      dq.middleCols(h * dh, dh).noalias() = ds * t.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = ds.transpose() * t.q.middleCols(h * dh, dh);
    }
    grad.mat(L.wq).noalias() += dq.transpose() * t.a;
    add_column_sums<T>(dq, grad.vec(L.bq));
    grad.mat(L.wk).noalias() += dk.transpose() * t.a;
    add_column_sums<T>(dk, grad.vec(L.bk));
    grad.mat(L.wv).noalias() += dv.transpose() * t.a;
    add_column_sums<T>(dv, grad.vec(L.bv));
    RowMat<T> da = dq * P.mat(L.wq);
    da.noalias() += dk * P.mat(L.wk);
    da.noalias() += dv * P.mat(L.wv);
    dx = d_mid + layer_norm_backward<T>(da, t.a_hat, t.rstd1, P.vec(L.ln1_g), grad.vec(L.ln1_g), grad.vec(L.ln1_b));
  }

  grad.mat(ids_.pos) += dx;
  grad.vec(ids_.summary) += dx.row(0).transpose();
  const auto d_patch = dx.bottomRows(np);
  grad.mat(ids_.patch_w).noalias() += d_patch.transpose() * tr.patches;
  add_column_sums<T>(d_patch, grad.vec(ids_.patch_b));
}

template <typename T>
PoiEncoder<T>::PoiEncoder(int input_dim, int hidden_dim, int output_dim)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), output_dim_(output_dim) {
  if (input_dim <= 0 || hidden_dim <= 0 || output_dim <= 0) throw DomainError("POI encoder dims must be positive");
  w1_ = params_.add("poi.w1", hidden_dim, input_dim, true);
  b1_ = params_.add("poi.b1", hidden_dim, 1, false);
  w2_ = params_.add("poi.w2", output_dim, hidden_dim, true);
  b2_ = params_.add("poi.b2", output_dim, 1, false);
}

template <typename T>
PoiEncoder<T> PoiEncoder<T>::init(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed) {
  PoiEncoder enc(input_dim, hidden_dim, output_dim);
  Rng rng(derive_seed(seed, "poi.init"));
  fill_uniform<T>(enc.params_.mat(enc.w1_), rng, 1.0 / std::sqrt(static_cast<double>(input_dim)));
  fill_uniform<T>(enc.params_.mat(enc.w2_), rng, 1.0 / std::sqrt(static_cast<double>(hidden_dim)));
  return enc;
}

template <typename T>
Vec<T> PoiEncoder<T>::encode(const Vec<T>& gravity) const {
  Trace t;
  return forward(gravity, t);
}

template <typename T>
Vec<T> PoiEncoder<T>::forward(const Vec<T>& gravity, Trace& t) const {
  if (gravity.size() != input_dim_) throw DomainError("POI encoder: input dimension mismatch");
  if (!gravity.allFinite()) throw NumericError("POI encoder: non-finite input");
  t.input = gravity;
  t.z = params_.mat(w1_) * gravity + params_.vec(b1_);
  t.h = t.z.cwiseMax(T(0));
  Vec<T> out = params_.mat(w2_) * t.h + params_.vec(b2_);
  if (!out.allFinite()) throw NumericError("POI encoder: non-finite output");
  return out;
}

template <typename T>
Vec<T> PoiEncoder<T>::backward(const Trace& t, const Vec<T>& d_out, ParamPack<T>& grad) const {
  grad.mat(w2_).noalias() += d_out * t.h.transpose();
  grad.vec(b2_) += d_out;
  Vec<T> dz = params_.mat(w2_).transpose() * d_out;
  dz.array() *= (t.z.array() > T(0)).template cast<T>();
  grad.mat(w1_).noalias() += dz * t.input.transpose();
  grad.vec(b1_) += dz;
  return params_.mat(w1_).transpose() * dz;
}

template <typename T>
Vec<T> project(const Eigen::Ref<const RowMat<T>>& w, const Vec<T>& embedding) {
  if (w.cols() != embedding.size()) {
    throw DomainError("project: head has " + std::to_string(w.cols()) + " columns, embedding has " +
                      std::to_string(embedding.size()));
  }
  return w * embedding;
}

template void extract_patch<float>(std::span<const float>, int, int, int, int, float*);
template void extract_patch<double>(std::span<const double>, int, int, int, int, double*);
template class ImageEncoder<float>;
template class ImageEncoder<double>;
template class PoiEncoder<float>;
template class PoiEncoder<double>;
template Vec<float> project<float>(const Eigen::Ref<const RowMat<float>>&, const Vec<float>&);
template Vec<double> project<double>(const Eigen::Ref<const RowMat<double>>&, const Vec<double>&);

}  // namespace povmap
