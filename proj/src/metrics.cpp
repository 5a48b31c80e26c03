// SPDX-License-Identifier: Apache-2.0

#include "ivdfm/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
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

std::vector<double> column(const Tensor& t, std::size_t j) {
  std::vector<double> c(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) c[i] = t.at(i, j);
  return c;
}

double column_std(const std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(x.size()));
}

double sign_with_tol(double x) {
  if (std::abs(x) < 1e-12) return 0.0;
  return x > 0.0 ? 1.0 : -1.0;
}

}  // namespace

std::vector<std::size_t> max_weight_assignment(const Tensor& weights) {
  if (weights.rows() != weights.cols()) {
    throw std::invalid_argument(
        cat("max_weight_assignment: square matrix required, got ", weights.shape_str()));
  }
  // Shortest-augmenting-path assignment on costs = -weights (minimization).
  const int n = static_cast<int>(weights.rows());
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> way(n + 1, 0), match(n + 1, 0);
  auto cost = [&](int i, int j) { return -weights.at(static_cast<std::size_t>(i - 1),
                                                     static_cast<std::size_t>(j - 1)); };
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = match[j0], j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (int j = 1; j <= n; ++j) {
    if (match[j] > 0) row_to_col[static_cast<std::size_t>(match[j] - 1)] = static_cast<std::size_t>(j - 1);
  }
  return row_to_col;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty()) {
    throw std::invalid_argument("pearson: size mismatch");
  }
  double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    log_warning("pearson: zero-variance series; correlation set to 0");
    return 0.0;
  }
  return sxy / std::sqrt(sxx * syy);
}

MatchResult mcc(const Tensor& f_true, const Tensor& f_hat) {
  if (f_true.rows() != f_hat.rows() || f_true.cols() != f_hat.cols()) {
    throw std::invalid_argument(cat("mcc: shape mismatch ", f_true.shape_str(), " vs ",
                                    f_hat.shape_str()));
  }
  std::size_t r = f_true.cols();
  Tensor corr({r, r});
  Tensor weights({r, r});
  for (std::size_t i = 0; i < r; ++i) {
    std::vector<double> ci = column(f_true, i);
    for (std::size_t j = 0; j < r; ++j) {
      double c = pearson(ci, column(f_hat, j));
      corr.at(i, j) = c;
      weights.at(i, j) = std::abs(c);
    }
  }
  MatchResult res;
  res.permutation = max_weight_assignment(weights);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    double c = corr.at(i, res.permutation[i]);
    res.matched_corr.push_back(std::abs(c));
    res.matched_sign.push_back(sign_with_tol(c));
    total += std::abs(c);
  }
  res.mcc = total / static_cast<double>(r);
  return res;
}

double subspace_distance(const Tensor& f_true, const Tensor& f_hat) {
  Eigen::MatrixXd a = to_eigen(f_true);
  Eigen::MatrixXd b = to_eigen(f_hat);
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("subspace_distance: row count mismatch");
  }
  // Orthonormal range bases via rank-revealing QR.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qra(a);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qrb(b);
  qra.setThreshold(1e-12);
  qrb.setThreshold(1e-12);
  Eigen::Index ra = qra.rank(), rb = qrb.rank();
  if (ra == 0 || rb == 0) {
    throw std::invalid_argument("subspace_distance: rank-zero input");
  }
  Eigen::Index r = std::min(ra, rb);
  if (r < static_cast<Eigen::Index>(std::min(f_true.cols(), f_hat.cols()))) {
    log_warning(cat("subspace_distance: rank-deficient input, using rank ", r));
  }
  Eigen::MatrixXd qa = qra.householderQ() * Eigen::MatrixXd::Identity(a.rows(), ra);
  Eigen::MatrixXd qb = qrb.householderQ() * Eigen::MatrixXd::Identity(b.rows(), rb);
  Eigen::MatrixXd cross = qa.transpose() * qb;
  Eigen::JacobiSVD<Eigen::MatrixXd> cos_svd(cross);
  // arccos of the cross-projection singular values loses ~8 digits near 1;
  // recover small angles from the sine residual instead (Knyazev-Argentati).
  Eigen::JacobiSVD<Eigen::MatrixXd> sin_svd(qb - qa * cross);
  Eigen::Index n_sin = sin_svd.singularValues().size();
  double total = 0.0;
  for (Eigen::Index i = 0; i < r; ++i) {
    double c = std::clamp(cos_svd.singularValues()(i), 0.0, 1.0);
    // cosines descend, sines ascend; index i from the back pairs the same angle
    double s = std::clamp(sin_svd.singularValues()(n_sin - 1 - i), 0.0, 1.0);
    total += (c * c > 0.5) ? std::asin(s) : std::acos(c);
  }
  return total / static_cast<double>(r);
}

double smoothness(const Tensor& f_hat) {
  if (f_hat.rows() < 2) {
    throw std::invalid_argument("smoothness: need at least two steps");
  }
  std::size_t t_len = f_hat.rows(), r = f_hat.cols();
  Tensor z = f_hat;
  for (std::size_t j = 0; j < r; ++j) {
    std::vector<double> c = column(f_hat, j);
    double sd = column_std(c);
    if (sd <= 0.0) continue;  // constant column passes through
    double mean = 0.0;
    for (double v : c) mean += v;
    mean /= static_cast<double>(t_len);
    for (std::size_t i = 0; i < t_len; ++i) z.at(i, j) = (f_hat.at(i, j) - mean) / sd;
  }
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < t_len; ++i) {
    double step = 0.0;
    for (std::size_t j = 0; j < r; ++j) {
      double d = z.at(i + 1, j) - z.at(i, j);
      step += d * d;
    }
    total += std::sqrt(step);
  }
  return total / static_cast<double>(t_len - 1);
}

double trace_r2(const Tensor& f_true, const Tensor& f_hat) {
  if (f_true.rows() != f_hat.rows()) {
    throw std::invalid_argument("trace_r2: row count mismatch");
  }
  if (f_true.rows() <= f_hat.cols()) {
    throw std::invalid_argument("trace_r2: need more rows than regressors");
  }
  Eigen::MatrixXd y = to_eigen(f_true);
  Eigen::MatrixXd x = to_eigen(f_hat);
  y.rowwise() -= y.colwise().mean();
  x.rowwise() -= x.colwise().mean();
  double total = y.squaredNorm();
  if (total <= 0.0) return 1.0;  // constant truth is trivially explained
  Eigen::MatrixXd gram = x.transpose() * x;
  Eigen::MatrixXd beta;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (lu.isInvertible()) {
    beta = lu.solve(x.transpose() * y);
  } else {
    log_warning("trace_r2: singular design, using ridge fallback");
    Eigen::MatrixXd ridge = gram + 1e-8 * Eigen::MatrixXd::Identity(gram.rows(), gram.cols());
    beta = ridge.llt().solve(x.transpose() * y);
  }
  double residual = (y - x * beta).squaredNorm();
  return std::clamp(1.0 - residual / total, 0.0, 1.0);
}

IrfMetrics irf_metrics(const Tensor& irf_true, const Tensor& irf_hat) {
  if (!irf_true.same_shape(irf_hat)) {
    throw std::invalid_argument(cat("irf_metrics: shape mismatch ", irf_true.shape_str(), " vs ",
                                    irf_hat.shape_str()));
  }
  IrfMetrics m;
  std::size_t n = irf_true.size();
  double sign_hits = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = irf_hat[i] - irf_true[i];
    m.mse += d * d;
    m.mae += std::abs(d);
    if (sign_with_tol(irf_hat[i]) == sign_with_tol(irf_true[i])) sign_hits += 1.0;
  }
  m.mse /= static_cast<double>(n);
  m.mae /= static_cast<double>(n);
  m.sign_accuracy = sign_hits / static_cast<double>(n);
  std::vector<double> a(irf_true.values());
  std::vector<double> b(irf_hat.values());
  m.correlation = pearson(a, b);  // constant grids warn inside pearson and give 0
  return m;
}

double pinball_loss(double level, double quantile, double target) {
  double d = target - quantile;
  return std::max(level * d, (level - 1.0) * d);
}

double crps_quantile(const QuantileGrid& forecast, const Tensor& target) {
  const Tensor& q10 = forecast.q10;
  const Tensor& q50 = forecast.q50;
  const Tensor& q90 = forecast.q90;
  if (!q10.same_shape(target) || !q50.same_shape(target) || !q90.same_shape(target)) {
    throw std::invalid_argument("crps_quantile: grid shape mismatch");
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (q10[i] > q50[i] || q50[i] > q90[i]) {
      throw std::invalid_argument(
          cat("crps_quantile: non-monotone quantiles at cell ", i, " (", q10[i], ", ", q50[i],
              ", ", q90[i], ")"));
    }
  }
  // Twice the mean pinball loss over the three levels; with dense levels this
  // converges to the integral form of the CRPS.
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    double cell = pinball_loss(0.1, q10[i], target[i]) + pinball_loss(0.5, q50[i], target[i]) +
                  pinball_loss(0.9, q90[i], target[i]);
    total += 2.0 * cell / 3.0;
  }
  return total / static_cast<double>(target.size());
}

double mse_standardized(const Tensor& median_forecast, const Tensor& target) {
  if (!median_forecast.same_shape(target)) {
    throw std::invalid_argument("mse_standardized: shape mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    double d = median_forecast[i] - target[i];
    total += d * d;
  }
  return total / static_cast<double>(target.size());
}

}  // namespace ivdfm
