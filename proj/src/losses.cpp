#include "povmap/losses.hpp"

#include <algorithm>
#include <string>

#include "povmap/error.hpp"

namespace povmap {

ContrastiveResult contrastive_loss(const RowMat<double>& image, const RowMat<double>& poi, double log_tau) {
  const Eigen::Index b = image.rows();
  if (b == 0) throw DomainError("contrastive_loss: empty batch");
  if (poi.rows() != b || poi.cols() != image.cols()) throw DomainError("contrastive_loss: shape mismatch");
  const double tau = std::exp(clamp_log_temperature(log_tau));

  Vec<double> img_norm = image.rowwise().norm();
  Vec<double> poi_norm = poi.rowwise().norm();
  for (Eigen::Index i = 0; i < b; ++i) {
    if (!(img_norm(i) > 0.0) || !(poi_norm(i) > 0.0)) {
      throw NumericError("contrastive_loss: zero-norm embedding at row " + std::to_string(i));
    }
  }
  const RowMat<double> u = img_norm.cwiseInverse().asDiagonal() * image;
  const RowMat<double> v = poi_norm.cwiseInverse().asDiagonal() * poi;
  const RowMat<double> logits = (u * v.transpose()) / tau;

  ContrastiveResult res;
  res.row_loss.resize(b);
  RowMat<double> d_logits(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double mx = logits.row(i).maxCoeff();
    double denom = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) denom += std::exp(logits(i, j) - mx);
    const double lse = mx + std::log(denom);
    res.row_loss[i] = lse - logits(i, i);
    for (Eigen::Index j = 0; j < b; ++j) {
      d_logits(i, j) = (std::exp(logits(i, j) - lse) - (i == j ? 1.0 : 0.0)) / static_cast<double>(b);
    }
  }
  for (double l : res.row_loss) res.loss += l;
  res.loss /= static_cast<double>(b);

  res.d_log_tau = -(d_logits.cwiseProduct(logits)).sum();
  const RowMat<double> d_sim = d_logits / tau;
  const RowMat<double> du = d_sim * v;
  const RowMat<double> dv = d_sim.transpose() * u;
  res.d_image.resize(b, image.cols());
  res.d_poi.resize(b, poi.cols());
  for (Eigen::Index i = 0; i < b; ++i) {
    res.d_image.row(i) = (du.row(i) - u.row(i) * u.row(i).dot(du.row(i))) / img_norm(i);
    res.d_poi.row(i) = (dv.row(i) - v.row(i) * v.row(i).dot(dv.row(i))) / poi_norm(i);
  }
  return res;
}

PreconditionResult precondition_loss(const RowMat<double>& logits, const RowMat<double>& labels) {
  if (logits.rows() == 0) throw DomainError("precondition_loss: empty batch");
  if (labels.rows() != logits.rows() || labels.cols() != logits.cols()) {
    throw DomainError("precondition_loss: shape mismatch");
  }
  const double count = static_cast<double>(logits.size());
  PreconditionResult res;
  res.d_logits.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      const double y = labels(i, k);
      if (y != 0.0 && y != 1.0) throw DomainError("precondition_loss: labels must be 0 or 1");
      const double x = logits(i, k);
      res.loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
      const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      res.d_logits(i, k) = (sig - y) / count;
    }
  }
  res.loss /= count;
  return res;
}

CombinedAccessLoss combined_access_loss(double contrastive, double precondition, double lambda) {
  if (!std::isfinite(contrastive) || !std::isfinite(precondition) || !std::isfinite(lambda)) {
    throw NumericError("combined_access_loss: non-finite input");
  }
  return {contrastive + lambda * precondition, contrastive, precondition, lambda};
}

PearsonResult pearson_loss(std::span<const double> pred, std::span<const double> target) {
  const std::size_t n = pred.size();
  if (n < 2 || target.size() != n) throw DomainError("pearson_loss: need matched batches of at least 2");
  const double bn = static_cast<double>(n);
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += pred[i];
    mt += target[i];
  }
  mp /= bn;
  mt /= bn;
  double spp = 0.0, stt = 0.0, spt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = pred[i] - mp, c = target[i] - mt;
    spp += a * a;
    stt += c * c;
    spt += a * c;
  }
  PearsonResult res;
  res.d_pred = Vec<double>::Zero(static_cast<Eigen::Index>(n));
  const double sd_p = std::sqrt(spp / bn), sd_t = std::sqrt(stt / bn);
  if (sd_p < kDegenerateStd || sd_t < kDegenerateStd) {
    res.degenerate = true;
    return res;
  }
  res.r = spt / std::sqrt(spp * stt);
  res.loss = -res.r;
  // d(-R)/dp_i = -(t_hat_i - R p_hat_i) / (B sd_p), hats standardised with population sd.
  for (std::size_t i = 0; i < n; ++i) {
    const double p_hat = (pred[i] - mp) / sd_p;
    const double t_hat = (target[i] - mt) / sd_t;
    res.d_pred(static_cast<Eigen::Index>(i)) = -(t_hat - res.r * p_hat) / (bn * sd_p);
  }
  return res;
}

}  // namespace povmap
