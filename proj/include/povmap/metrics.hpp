#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace povmap {

// Sample Pearson correlation. Throws UndefinedMetricError for n < 2 or a
// constant input.
double pearson(std::span<const double> x, std::span<const double> y);
// 1-based ranks; tied values share the average of their positions.
std::vector<double> average_ranks(std::span<const double> x);
double spearman(std::span<const double> x, std::span<const double> y);
// 1 - SS_res / SS_tot, with SS_tot taken about the mean of y_true.
double r_squared(std::span<const double> y_true, std::span<const double> y_pred);

// I_x(a, b) by continued fraction.
double regularized_incomplete_beta(double a, double b, double x);
// P(|T| >= |t|) for Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
  double mean_diff = 0.0;
  bool degenerate = false;  // differences have zero spread; t and p are NaN
};

// Two-sided paired t-test on a - b.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

// Eigenvalues of the column-centred covariance, descending, normalised to sum 1.
std::vector<double> pca_explained(const Eigen::MatrixXd& features);

}  // namespace povmap
