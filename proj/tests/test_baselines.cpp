// SPDX-License-Identifier: Apache-2.0
//
// PCA-based factor baseline: exact low-rank recovery, AR coefficient
// estimation, span recovery, and the executable statement of rotational
// indeterminacy.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ivdfm/baselines.hpp"
#include "ivdfm/common.hpp"
#include "ivdfm/metrics.hpp"
#include "ivdfm/tensor.hpp"

using namespace ivdfm;

namespace {

// Noiseless linear mixing with orthonormal loadings.
std::pair<Tensor, Tensor> linear_mix(std::size_t t_len, std::size_t n, std::size_t r,
                                     std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd g(n, r);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, r);
  Tensor f({t_len, r});
  for (std::size_t j = 0; j < r; ++j) {
    double x = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
      x = 0.6 * x + rng.laplace(0.0, 1.0);
      f.at(t, j) = x * (1.0 + 0.3 * static_cast<double>(j));
    }
    // exactly centered columns: the principal-component scores span the
    // centered factor space, so a mean offset would blur the comparison
    double mean = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) mean += f.at(t, j);
    mean /= static_cast<double>(t_len);
    for (std::size_t t = 0; t < t_len; ++t) f.at(t, j) -= mean;
  }
  Tensor y({t_len, n});
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < r; ++j) s += q(i, j) * f.at(t, j);
      y.at(t, i) = s;
    }
  return {y, f};
}

}  // namespace

TEST_CASE("noiseless low-rank data: top components explain all the variance") {
  auto [y, f] = linear_mix(300, 12, 4, 1);
  PcaDfm model = fit_pca_dfm(y, 4, 2);
  // residual after projecting standardized data on the loadings is ~0
  Tensor scores = baseline_factors(model, y);
  Eigen::MatrixXd e(300, 12), l(12, 4), s(300, 4);
  for (std::size_t i = 0; i < 300; ++i)
    for (std::size_t j = 0; j < 12; ++j)
      e(i, j) = (y.at(i, j) - model.mean.at(0, j)) / model.stddev.at(0, j);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 4; ++j) l(i, j) = model.loadings.at(i, j);
  for (std::size_t i = 0; i < 300; ++i)
    for (std::size_t j = 0; j < 4; ++j) s(i, j) = scores.at(i, j);
  double explained = 1.0 - (e - s * l.transpose()).squaredNorm() / e.squaredNorm();
  CHECK(explained > 0.9999);
}

TEST_CASE("AR(1) coefficient recovered within 0.03 at T=5000") {
  Rng rng(2);
  std::size_t t_len = 5000;
  Tensor y({t_len, 2});
  double f = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    f = 0.7 * f + rng.normal();
    y.at(t, 0) = f + 0.01 * rng.normal();
    y.at(t, 1) = -0.5 * f + 0.01 * rng.normal();
  }
  PcaDfm model = fit_pca_dfm(y, 1, 1);
  CHECK(std::abs(std::abs(model.ar_coeffs.at(0, 0)) - 0.7) < 0.03);
}

TEST_CASE("span recovered on noiseless linear data even though rotation is not") {
  auto [y, f] = linear_mix(400, 10, 3, 3);
  PcaDfm model = fit_pca_dfm(y, 3, 1);
  CHECK(subspace_distance(f, model.fit_factors) < 1e-6);
}

TEST_CASE("rotational indeterminacy: rotation drops per-column matching, not the span") {
  auto [y, f] = linear_mix(400, 10, 4, 4);
  PcaDfm model = fit_pca_dfm(y, 4, 1);
  double sub_orig = subspace_distance(f, model.fit_factors);

  // rotate the recovered factors by a random non-axis-aligned rotation
  Rng rr(5);
  Eigen::MatrixXd g(4, 4);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) g(i, j) = rr.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Tensor rotated({400, 4});
  for (std::size_t t = 0; t < 400; ++t)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += model.fit_factors.at(t, k) * q(k, j);
      rotated.at(t, j) = s;
    }
  double sub_rot = subspace_distance(f, rotated);
  CHECK(sub_rot == doctest::Approx(sub_orig).epsilon(1e-8));

  double mcc_self = mcc(model.fit_factors, model.fit_factors).mcc;
  double mcc_rot = mcc(model.fit_factors, rotated).mcc;
  CHECK(mcc_self == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mcc_rot < 0.99);
}

TEST_CASE("projection is idempotent on the training window") {
  auto [y, f] = linear_mix(200, 8, 3, 6);
  PcaDfm model = fit_pca_dfm(y, 3, 2);
  Tensor again = baseline_factors(model, y);
  for (std::size_t i = 0; i < again.size(); ++i)
    CHECK(again[i] == doctest::Approx(model.fit_factors[i]).epsilon(1e-12));
}

TEST_CASE("zero input projects to zero factors, mismatched width throws") {
  auto [y, f] = linear_mix(100, 6, 2, 7);
  PcaDfm model = fit_pca_dfm(y, 2, 1);
  Tensor zeros({5, 6});
  Tensor projected = baseline_factors(model, zeros);
  // standardization shifts by the mean, so project the mean row instead
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 2; ++j) {
      double want = 0.0;
      for (std::size_t i = 0; i < 6; ++i)
        want += (0.0 - model.mean.at(0, i)) / model.stddev.at(0, i) * model.loadings.at(i, j);
      CHECK(projected.at(t, j) == doctest::Approx(want).epsilon(1e-12));
    }
  CHECK_THROWS_AS(baseline_factors(model, Tensor({5, 4})), std::invalid_argument);
}

TEST_CASE("degenerate inputs are rejected") {
  Tensor constant = Tensor::full({50, 3}, 1.0);
  CHECK_THROWS_AS(fit_pca_dfm(constant, 2, 1), std::invalid_argument);
  auto [y, f] = linear_mix(30, 5, 2, 8);
  CHECK_THROWS_AS(fit_pca_dfm(y, 6, 1), std::invalid_argument);
}
