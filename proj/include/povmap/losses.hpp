#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "povmap/params.hpp"

namespace povmap {

inline constexpr double kInitTemperature = 0.07;
inline constexpr double kMinTemperature = 0.01;
inline constexpr double kMaxTemperature = 100.0;

inline double clamp_log_temperature(double log_tau) {
  return std::clamp(log_tau, std::log(kMinTemperature), std::log(kMaxTemperature));
}

struct ContrastiveResult {
  double loss = 0.0;
  std::vector<double> row_loss;
  RowMat<double> d_image;  // B x D
  RowMat<double> d_poi;    // B x D
  double d_log_tau = 0.0;
};

// Image -> POI InfoNCE over in-batch candidates. Rows are L2-normalised
// internally; temperature is exp(log_tau) after clamping to [0.01, 100].
ContrastiveResult contrastive_loss(const RowMat<double>& image, const RowMat<double>& poi, double log_tau);

struct PreconditionResult {
  double loss = 0.0;
  RowMat<double> d_logits;  // B x K
};

// Mean binary cross-entropy over all B x K entries.
PreconditionResult precondition_loss(const RowMat<double>& logits, const RowMat<double>& labels);

struct CombinedAccessLoss {
  double value = 0.0;
  double contrastive = 0.0;
  double precondition = 0.0;
  double weight = 0.0;
};

// L_c + lambda * L_p. Gradients combine with the same weights.
CombinedAccessLoss combined_access_loss(double contrastive, double precondition, double lambda);

struct PearsonResult {
  double loss = 0.0;  // -R
  double r = 0.0;
  Vec<double> d_pred;
  bool degenerate = false;  // prediction or target spread < 1e-12; loss and gradient are zero
};

inline constexpr double kDegenerateStd = 1e-12;

PearsonResult pearson_loss(std::span<const double> pred, std::span<const double> target);

}  // namespace povmap
