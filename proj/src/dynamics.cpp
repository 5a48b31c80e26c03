// SPDX-License-Identifier: Apache-2.0

#include "ivdfm/dynamics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace ivdfm {

namespace {

void check_simplex(const Tensor& pi) {
  double total = 0.0;
  for (double p : pi.values()) total += p;
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(cat("dynamics: mixture weights sum to ", total, ", not 1"));
  }
}

double clamped_atanh(double x) {
  double c = std::clamp(x, -0.95, 0.95);
  return 0.5 * std::log((1.0 + c) / (1.0 - c));
}

}  // namespace

DiagonalDynamics::DiagonalDynamics(std::size_t num_factors, std::size_t num_regimes,
                                   std::size_t order, Rng& rng)
    : num_factors_(num_factors), num_regimes_(num_regimes), order_(order) {
  if (order == 0) throw std::invalid_argument("DiagonalDynamics: order must be >= 1");
  raw_coeffs_ = Param{"dynamics.raw_coeffs", Tensor({num_regimes, order * num_factors})};
  input_scale_ = Param{"dynamics.input_scale", Tensor({num_regimes, num_factors})};
  init_state_ = Param{"dynamics.init_state", Tensor({order, num_factors})};
  // mildly persistent start: lag-1 coefficient ~0.5, higher lags near zero
  for (std::size_t k = 0; k < num_regimes; ++k) {
    for (std::size_t j = 0; j < num_factors; ++j) {
      raw_coeffs_.value.at(k, j) = clamped_atanh(0.5) + 0.01 * rng.normal();
      for (std::size_t l = 1; l < order; ++l)
        raw_coeffs_.value.at(k, l * num_factors + j) = 0.01 * rng.normal();
      input_scale_.value.at(k, j) = 0.5 + 0.01 * rng.normal();
    }
  }
}

void DiagonalDynamics::init_from_reference(const Tensor& factors) {
  std::size_t t_len = factors.rows();
  if (factors.cols() != num_factors_ || t_len < order_ + 2) {
    throw std::invalid_argument("init_from_reference: reference factor path too short");
  }
  std::size_t p = order_;
  for (std::size_t j = 0; j < num_factors_; ++j) {
    // OLS of f_t on its own p lags
    std::size_t rows = t_len - p;
    Eigen::MatrixXd x(rows, p);
    Eigen::VectorXd y(rows);
    for (std::size_t t = p; t < t_len; ++t) {
      y(t - p) = factors.at(t, j);
      for (std::size_t l = 0; l < p; ++l) x(t - p, l) = factors.at(t - 1 - l, j);
    }
    Eigen::MatrixXd gram = x.transpose() * x;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    Eigen::VectorXd a;
    if (lu.isInvertible()) {
      a = lu.solve(x.transpose() * y);
    } else {
      log_warning("init_from_reference: singular AR design, using default coefficients");
      a = Eigen::VectorXd::Zero(p);
      a(0) = 0.5;
    }
    double residual = std::sqrt((y - x * a).squaredNorm() / static_cast<double>(rows));
    for (std::size_t k = 0; k < num_regimes_; ++k) {
      for (std::size_t l = 0; l < p; ++l)
        raw_coeffs_.value.at(k, l * num_factors_ + j) = clamped_atanh(a(l));
      input_scale_.value.at(k, j) = std::max(0.1, residual);
    }
    // initial lags from the first rows: row l = the lag-(l+1) state before t=0
    for (std::size_t l = 0; l < p; ++l) init_state_.value.at(l, j) = factors.at(p - 1 - l, j);
  }
}

Tensor DiagonalDynamics::mixed_coefficients(const Tensor& pi) const {
  check_simplex(pi);
  Tensor out({order_, num_factors_});
  for (std::size_t k = 0; k < num_regimes_; ++k) {
    double w = pi[k];
    for (std::size_t l = 0; l < order_; ++l)
      for (std::size_t j = 0; j < num_factors_; ++j)
        out.at(l, j) += w * std::tanh(raw_coeffs_.value.at(k, l * num_factors_ + j));
  }
  return out;
}

Tensor DiagonalDynamics::mixed_input_scale(const Tensor& pi) const {
  check_simplex(pi);
  Tensor out({1, num_factors_});
  for (std::size_t k = 0; k < num_regimes_; ++k)
    for (std::size_t j = 0; j < num_factors_; ++j)
      out.at(0, j) += pi[k] * input_scale_.value.at(k, j);
  return out;
}

Tensor DiagonalDynamics::step(const Tensor& f, const Tensor& eta, const Tensor& pi) const {
  if (order_ != 1) {
    throw std::invalid_argument("step: single transition defined for order 1; use rollout");
  }
  if (f.size() != num_factors_ || eta.size() != num_factors_) {
    throw std::invalid_argument(cat("step: dimension mismatch ", f.shape_str(), " vs factors ",
                                    num_factors_));
  }
  Tensor a = mixed_coefficients(pi);
  Tensor b = mixed_input_scale(pi);
  Tensor out({1, num_factors_});
  for (std::size_t j = 0; j < num_factors_; ++j)
    out.at(0, j) = a.at(0, j) * f[j] + b.at(0, j) * eta[j];
  return out;
}

Value DiagonalDynamics::rollout_on_tape(Tape& tape, Value etas, Value pi_frozen) const {
  const Tensor& ev = etas.val();
  std::size_t t_len = ev.rows();
  if (ev.cols() != num_factors_) {
    throw std::invalid_argument(cat("rollout: innovation dim ", ev.cols(), " vs factors ",
                                    num_factors_));
  }
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (!std::isfinite(ev[i])) {
      throw std::invalid_argument(cat("rollout: non-finite innovation at flat index ", i));
    }
  }
  check_simplex(pi_frozen.val());

  // Effective coefficients under the frozen mixture: one {1, r} node per lag.
  Value raw = tape.leaf(const_cast<Param&>(raw_coeffs_));       // {K, p*r}
  Value scale_all = tape.leaf(const_cast<Param&>(input_scale_));  // {K, r}
  Value coeff_mix = tape.matmul(pi_frozen, tape.tanh_(raw));    // {1, p*r}
  Value scale_mix = tape.matmul(pi_frozen, scale_all);          // {1, r}
  std::vector<Value> lag_coeff(order_);
  for (std::size_t l = 0; l < order_; ++l)
    lag_coeff[l] = tape.slice_cols(coeff_mix, l * num_factors_, (l + 1) * num_factors_);

  Value init = tape.leaf(const_cast<Param&>(init_state_));      // {p, r}
  std::vector<Value> lags(order_);
  for (std::size_t l = 0; l < order_; ++l) lags[l] = tape.row(init, l);

  std::vector<Value> rows;
  rows.reserve(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    Value next = tape.mul(scale_mix, tape.row(etas, t));
    for (std::size_t l = 0; l < order_; ++l)
      next = tape.add(next, tape.mul(lag_coeff[l], lags[l]));
    for (std::size_t l = order_; l-- > 1;) lags[l] = lags[l - 1];
    lags[0] = next;
    rows.push_back(next);
  }
  return tape.concat_rows(rows);
}

Tensor DiagonalDynamics::rollout(const Tensor& etas, const Tensor& pi_frozen) const {
  Tape tape;
  Value out = rollout_on_tape(tape, tape.constant(etas),
                              tape.constant(pi_frozen.reshaped({1, pi_frozen.size()})));
  return tape.value(out);
}

void DiagonalDynamics::collect_params(std::vector<Param*>& out) {
  out.push_back(&raw_coeffs_);
  out.push_back(&input_scale_);
  out.push_back(&init_state_);
}

CompanionSystem build_companion(const Tensor& ar_coeffs, const Tensor& input_scale,
                                const Tensor* init) {
  std::size_t p = ar_coeffs.rows(), r = ar_coeffs.cols();
  if (p == 0 || r == 0) {
    throw std::invalid_argument("build_companion: AR order and factor count must be >= 1");
  }
  if (input_scale.size() != r) {
    throw std::invalid_argument(cat("build_companion: input scale size ", input_scale.size(),
                                    " vs factor count ", r));
  }
  CompanionSystem sys;
  sys.num_factors = r;
  sys.order = p;
  sys.transition = Tensor({r * p, r * p});
  sys.input_map = Tensor({r * p, r});
  sys.selector = Tensor({r, r * p});
  sys.init_state = Tensor({r * p});
  for (std::size_t j = 0; j < r; ++j) {
    std::size_t base = j * p;
    for (std::size_t l = 0; l < p; ++l) sys.transition.at(base, base + l) = ar_coeffs.at(l, j);
    for (std::size_t l = 1; l < p; ++l) sys.transition.at(base + l, base + l - 1) = 1.0;
    sys.input_map.at(base, j) = input_scale[j];
    sys.selector.at(j, base) = 1.0;
    if (init != nullptr) {
      for (std::size_t l = 0; l < p; ++l) sys.init_state[base + l] = init->at(l, j);
    }
  }
  double rho = companion_spectral_radius(sys);
  if (rho >= 1.0) {
    log_warning(cat("build_companion: spectral radius ", rho, " >= 1, system is unstable"));
  }
  return sys;
}

Tensor unroll_companion(const CompanionSystem& sys, const Tensor& etas) {
  std::size_t r = sys.num_factors, p = sys.order, t_len = etas.rows();
  if (etas.cols() != r) {
    throw std::invalid_argument(cat("unroll_companion: innovation dim ", etas.cols(),
                                    " vs factor count ", r));
  }
  std::vector<double> state(sys.init_state.values());
  std::vector<double> next(r * p);
  Tensor out({t_len, r});
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t i = 0; i < r * p; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < r * p; ++j) s += sys.transition.at(i, j) * state[j];
      for (std::size_t j = 0; j < r; ++j) s += sys.input_map.at(i, j) * etas.at(t, j);
      next[i] = s;
    }
    state = next;
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < r * p; ++k) s += sys.selector.at(j, k) * state[k];
      out.at(t, j) = s;
    }
  }
  return out;
}

Tensor impulse_response(const CompanionSystem& sys, std::size_t lag) {
  std::size_t n = sys.num_factors * sys.order, r = sys.num_factors;
  // power = transition^lag acting on input_map columns
  Tensor acc = sys.input_map;
  for (std::size_t step = 0; step < lag; ++step) {
    Tensor nxt({n, r});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < r; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += sys.transition.at(i, k) * acc.at(k, j);
        nxt.at(i, j) = s;
      }
    acc = std::move(nxt);
  }
  Tensor out({r, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += sys.selector.at(i, k) * acc.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

double companion_spectral_radius(const CompanionSystem& sys) {
  std::size_t p = sys.order;
  double worst = 0.0;
  for (std::size_t f = 0; f < sys.num_factors; ++f) {
    std::size_t base = f * p;
    if (p == 1) {
      worst = std::max(worst, std::abs(sys.transition.at(base, base)));
      continue;
    }
    // Normalized power iteration; the Cesaro mean of log growth converges for
    // complex dominant pairs where the plain ratio oscillates.
    std::vector<double> x(p, 1.0 / std::sqrt(static_cast<double>(p)));
    std::vector<double> y(p);
    double log_sum = 0.0;
    std::size_t burn = 128, iters = 4096;
    for (std::size_t it = 0; it < burn + iters; ++it) {
      y[0] = 0.0;
      for (std::size_t l = 0; l < p; ++l) y[0] += sys.transition.at(base, base + l) * x[l];
      for (std::size_t l = 1; l < p; ++l) y[l] = x[l - 1];
      double norm = 0.0;
      for (double v : y) norm += v * v;
      norm = std::sqrt(norm);
      if (norm == 0.0) {
        log_sum = -1e300;
        break;
      }
      for (std::size_t l = 0; l < p; ++l) x[l] = y[l] / norm;
      if (it >= burn) log_sum += std::log(norm);
    }
    double rho = std::exp(log_sum / static_cast<double>(iters));
    worst = std::max(worst, rho);
  }
  return worst;
}

}  // namespace ivdfm
