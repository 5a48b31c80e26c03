// SPDX-License-Identifier: Apache-2.0
//
// Classical PCA-based dynamic factor model baseline: principal-component
// factors with per-factor least-squares AR fits. Identifiable only up to
// orthogonal rotations of the factor space, which is the indeterminacy the
// conditional innovation prior removes.

#pragma once

#include <cstddef>

#include "ivdfm/tensor.hpp"

namespace ivdfm {

struct PcaDfm {
  Tensor loadings;     // {N, r}, orthonormal columns
  Tensor ar_coeffs;    // {p, r}, lag-major
  Tensor mean;         // {1, N} training means
  Tensor stddev;       // {1, N} training standard deviations
  Tensor fit_factors;  // {T, r} factor scores of the training window

  std::size_t num_series() const { return loadings.rows(); }
  std::size_t num_factors() const { return loadings.cols(); }
};

// Standardizes Y, extracts the top-r principal components as factor scores,
// and fits AR(p) per factor by ordinary least squares.
PcaDfm fit_pca_dfm(const Tensor& y, std::size_t num_factors, std::size_t ar_order);

// Projects (standardized with the stored statistics) observations onto the
// loadings.
Tensor baseline_factors(const PcaDfm& model, const Tensor& y);

// One-step-ahead in-sample forecast of the factor path, for reference.
Tensor baseline_factor_forecast(const PcaDfm& model, const Tensor& factors);

}  // namespace ivdfm
