// SPDX-License-Identifier: Apache-2.0

#include "ivdfm/baselines.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "ivdfm/common.hpp"

namespace ivdfm {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  return m;
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      t.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
  return t;
}

}  // namespace

PcaDfm fit_pca_dfm(const Tensor& y, std::size_t num_factors, std::size_t ar_order) {
  std::size_t t_len = y.rows(), n = y.cols();
  if (num_factors == 0 || num_factors > n) {
    throw std::invalid_argument(cat("fit_pca_dfm: factor count ", num_factors,
                                    " out of range for ", n, " series"));
  }
  if (t_len <= ar_order + 1) {
    throw std::invalid_argument("fit_pca_dfm: window too short for the AR order");
  }
  PcaDfm model;
  model.mean = Tensor({1, n});
  model.stddev = Tensor({1, n});
  Eigen::MatrixXd m = to_eigen(y);
  for (std::size_t j = 0; j < n; ++j) {
    double mu = m.col(j).mean();
    double sd = std::sqrt((m.col(j).array() - mu).square().sum() / static_cast<double>(t_len));
    if (sd <= 0.0) {
      log_warning(cat("fit_pca_dfm: series ", j, " is constant; scale set to 1"));
      sd = 1.0;
    }
    model.mean.at(0, j) = mu;
    model.stddev.at(0, j) = sd;
    m.col(j) = (m.col(j).array() - mu) / sd;
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues()(0) <= 0.0 ||
      svd.singularValues()(static_cast<Eigen::Index>(num_factors) - 1) <
          1e-12 * svd.singularValues()(0)) {
    throw std::invalid_argument("fit_pca_dfm: degenerate covariance, too few independent series");
  }
  Eigen::MatrixXd v = svd.matrixV().leftCols(static_cast<Eigen::Index>(num_factors));
  // deterministic sign convention per loading column
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    Eigen::Index imax = 0;
    v.col(j).cwiseAbs().maxCoeff(&imax);
    if (v(imax, j) < 0.0) v.col(j) = -v.col(j);
  }
  model.loadings = from_eigen(v);
  Eigen::MatrixXd scores = m * v;
  model.fit_factors = from_eigen(scores);

  model.ar_coeffs = Tensor({ar_order, num_factors});
  for (std::size_t j = 0; j < num_factors; ++j) {
    std::size_t rows = t_len - ar_order;
    Eigen::MatrixXd x(rows, ar_order);
    Eigen::VectorXd target(rows);
    for (std::size_t t = ar_order; t < t_len; ++t) {
      target(t - ar_order) = scores(t, j);
      for (std::size_t l = 0; l < ar_order; ++l) x(t - ar_order, l) = scores(t - 1 - l, j);
    }
    Eigen::VectorXd a = (x.transpose() * x).ldlt().solve(x.transpose() * target);
    if (!a.allFinite()) {
      throw std::invalid_argument(cat("fit_pca_dfm: AR fit failed for factor ", j));
    }
    for (std::size_t l = 0; l < ar_order; ++l) model.ar_coeffs.at(l, j) = a(l);
  }
  return model;
}

Tensor baseline_factors(const PcaDfm& model, const Tensor& y) {
  if (y.cols() != model.num_series()) {
    throw std::invalid_argument(cat("baseline_factors: series count ", y.cols(),
                                    " does not match the fitted model (", model.num_series(),
                                    ")"));
  }
  Eigen::MatrixXd m = to_eigen(y);
  for (std::size_t j = 0; j < model.num_series(); ++j) {
    m.col(j) = (m.col(j).array() - model.mean.at(0, j)) / model.stddev.at(0, j);
  }
  return from_eigen(m * to_eigen(model.loadings));
}

Tensor baseline_factor_forecast(const PcaDfm& model, const Tensor& factors) {
  std::size_t t_len = factors.rows(), r = model.num_factors();
  std::size_t p = model.ar_coeffs.rows();
  Tensor out({t_len, r});
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < p && t > l; ++l)
        s += model.ar_coeffs.at(l, j) * factors.at(t - 1 - l, j);
      out.at(t, j) = s;
    }
  return out;
}

}  // namespace ivdfm
