// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics: factor-recovery scores (MCC with max-weight matching,
// principal-angle subspace distance, trajectory smoothness, Trace R^2),
// impulse-response comparison metrics, and quantile-forecast scores.

#pragma once

#include <cstddef>
#include <vector>

#include "ivdfm/tensor.hpp"

namespace ivdfm {

// Result of the max-weight |Pearson| matching between factor sets.
struct MatchResult {
  std::vector<std::size_t> permutation;  // column of F_hat matched to column i of F_true
  std::vector<double> matched_corr;      // |corr| of each matched pair
  std::vector<double> matched_sign;      // sign of each matched correlation
  double mcc = 0.0;                      // mean of matched |corr|
};

// Max-weight assignment maximizing total weight; O(n^3) shortest augmenting
// path. Returns, for each row, the assigned column.
std::vector<std::size_t> max_weight_assignment(const Tensor& weights);

// Pearson correlation between two equally sized series; 0 with a warning when
// either side has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Mean |Pearson| under the best bijective column matching.
MatchResult mcc(const Tensor& f_true, const Tensor& f_hat);

// Mean principal angle (radians) between column spans; orthonormal bases via
// QR, singular values of the cross-projection clamped to [0, 1].
double subspace_distance(const Tensor& f_true, const Tensor& f_hat);

// Average l2 step size of the trajectory after per-column standardization
// (zero-variance columns pass through unstandardized).
double smoothness(const Tensor& f_hat);

// Fraction of true-factor variance explained by regressing centered F_true on
// centered F_hat; clamped to [0, 1]. Singular designs fall back to a small
// ridge with a warning.
double trace_r2(const Tensor& f_true, const Tensor& f_hat);

struct IrfMetrics {
  double mse = 0.0;
  double mae = 0.0;
  double sign_accuracy = 0.0;
  double correlation = 0.0;
};

// Elementwise comparison over the (horizon x variable) grid. sign(x) is 0 for
// |x| < 1e-12 and a zero sign matches only a zero sign.
IrfMetrics irf_metrics(const Tensor& irf_true, const Tensor& irf_hat);

// Quantile forecasts at levels (0.1, 0.5, 0.9); each grid is {H, N}.
struct QuantileGrid {
  Tensor q10, q50, q90;
};

// CRPS approximated by twice the mean pinball loss over the three levels,
// averaged over all (h, n) cells. Throws if quantiles are not monotone.
double crps_quantile(const QuantileGrid& forecast, const Tensor& target);

// Grid-mean squared error between the median forecast and targets.
double mse_standardized(const Tensor& median_forecast, const Tensor& target);

double pinball_loss(double level, double quantile, double target);

}  // namespace ivdfm
