// SPDX-License-Identifier: Apache-2.0

#include "ivdfm/vimodel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ivdfm/synthdata.hpp"

namespace ivdfm {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  return m;
}

double empirical_quantile(std::vector<double>& sorted, double level) {
  double pos = level * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace

Tensor pca_scores(const Tensor& y, std::size_t rank) {
  Eigen::MatrixXd m = to_eigen(y);
  Eigen::RowVectorXd mean = m.colwise().mean();
  m.rowwise() -= mean;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    double sd = std::sqrt(m.col(j).squaredNorm() / static_cast<double>(m.rows()));
    if (sd > 0.0) m.col(j) /= sd;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  std::size_t r = std::min<std::size_t>(rank, static_cast<std::size_t>(svd.singularValues().size()));
  if (r < rank) {
    throw std::invalid_argument(cat("pca_scores: window supports rank ", r, " < ", rank));
  }
  Eigen::MatrixXd v = svd.matrixV().leftCols(rank);
  // Deterministic sign convention: largest-magnitude loading positive.
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    Eigen::Index imax = 0;
    v.col(j).cwiseAbs().maxCoeff(&imax);
    if (v(imax, j) < 0.0) v.col(j) = -v.col(j);
  }
  Eigen::MatrixXd scores = m * v;
  Tensor out({y.rows(), rank});
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < rank; ++j) out.at(i, j) = scores(i, j);
  return out;
}

VIModel::VIModel(const TrainConfig& config, std::size_t num_series, Rng& rng)
    : cfg_(config), num_series_(num_series) {
  if (cfg_.obs_var <= 0.0) throw std::invalid_argument("VIModel: observation variance must be > 0");
  if (cfg_.num_factors == 0 || num_series == 0) {
    throw std::invalid_argument("VIModel: factor and series counts must be >= 1");
  }
  RegimeBank bank(cfg_.num_regimes, cfg_.embed_dim, aux_dim(), cfg_.temperature, rng);
  prior_ = InnovationPrior(cfg_.family, cfg_.num_factors, aux_dim(), bank, rng,
                           cfg_.mixture_prior, cfg_.student_dof);
  dynamics_ = DiagonalDynamics(cfg_.num_factors, cfg_.num_regimes, cfg_.factor_order, rng);

  // per-step encoder input: [y_t, factor_order past lags, two future leads,
  // u_t, e_t, window mean of y]. Innovations under AR(p) dynamics are a
  // function of p+1 consecutive factor states, and the posterior may use the
  // full sequence, so future observations sharpen the per-step estimate the
  // way a smoother improves on a filter.
  std::size_t enc_in = (cfg_.factor_order + 4) * num_series + aux_dim() + cfg_.embed_dim;
  encoder_.init("encoder", enc_in, {cfg_.encoder_hidden, cfg_.encoder_hidden},
                2 * cfg_.num_factors, rng, Activation::Relu, true);
  decoder_.init("decoder", cfg_.num_factors, {cfg_.decoder_hidden}, num_series, rng,
                Activation::Relu, false);

  collect_all_params();
}

void VIModel::collect_all_params() {
  params_.clear();
  prior_.collect_params(params_);
  dynamics_.collect_params(params_);
  encoder_.collect_params(params_);
  decoder_.collect_params(params_);
}

VIModel::VIModel(const VIModel& other)
    : cfg_(other.cfg_),
      num_series_(other.num_series_),
      prior_(other.prior_),
      dynamics_(other.dynamics_),
      encoder_(other.encoder_),
      decoder_(other.decoder_),
      initialized_(other.initialized_) {
  collect_all_params();
}

VIModel& VIModel::operator=(const VIModel& other) {
  if (this == &other) return *this;
  cfg_ = other.cfg_;
  num_series_ = other.num_series_;
  prior_ = other.prior_;
  dynamics_ = other.dynamics_;
  encoder_ = other.encoder_;
  decoder_ = other.decoder_;
  initialized_ = other.initialized_;
  collect_all_params();
  return *this;
}

VIModel::VIModel(VIModel&& other) noexcept
    : cfg_(std::move(other.cfg_)),
      num_series_(other.num_series_),
      prior_(std::move(other.prior_)),
      dynamics_(std::move(other.dynamics_)),
      encoder_(std::move(other.encoder_)),
      decoder_(std::move(other.decoder_)),
      initialized_(other.initialized_) {
  collect_all_params();
}

VIModel& VIModel::operator=(VIModel&& other) noexcept {
  if (this == &other) return *this;
  cfg_ = std::move(other.cfg_);
  num_series_ = other.num_series_;
  prior_ = std::move(other.prior_);
  dynamics_ = std::move(other.dynamics_);
  encoder_ = std::move(other.encoder_);
  decoder_ = std::move(other.decoder_);
  initialized_ = other.initialized_;
  collect_all_params();
  return *this;
}

Tensor VIModel::aux_features(std::size_t rows, std::size_t span, std::size_t offset) const {
  if (cfg_.constant_context) return constant_features(rows);
  return timestep_features(rows, span, offset);
}

void VIModel::init_from_data(const Tensor& y_window) {
  std::size_t t_len = y_window.rows(), r = cfg_.num_factors, p = cfg_.factor_order;
  Tensor scores = pca_scores(y_window, r);
  dynamics_.init_from_reference(scores);

  // Spectral warm start: pre-fit the decoder to reproduce the window from the
  // principal-component factor path, and the encoder posterior mean to the
  // innovations implied by the AR fit on that path. Training then refines a
  // solution that already spans the data instead of growing one from noise.
  Tensor pi_uniform({1, cfg_.num_regimes});
  for (std::size_t k = 0; k < cfg_.num_regimes; ++k)
    pi_uniform.at(0, k) = 1.0 / static_cast<double>(cfg_.num_regimes);
  Tensor coeff = dynamics_.mixed_coefficients(pi_uniform);
  Tensor scale = dynamics_.mixed_input_scale(pi_uniform);
  Tensor implied({t_len, r});
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t j = 0; j < r; ++j) {
      double pred = 0.0;
      for (std::size_t l = 0; l < p; ++l) {
        double lagged = (t > l) ? scores.at(t - 1 - l, j)
                                : dynamics_.initial_lags().at(l - t, j);
        pred += coeff.at(l, j) * lagged;
      }
      implied.at(t, j) = (scores.at(t, j) - pred) / scale.at(0, j);
    }

  initialized_ = true;
  if (!cfg_.spectral_warm_start) return;
  Tensor u = aux_features(t_len, t_len);
  const std::size_t warm_steps = 250;
  {
    std::vector<Param*> dec_params;
    decoder_.collect_params(dec_params);
    AdamOptimizer opt(dec_params, 0.01);
    for (std::size_t step = 0; step < warm_steps; ++step) {
      Tape tape;
      Value out = decoder_.forward(tape, tape.constant(scores));
      Value loss = tape.mean_all(tape.square(tape.sub(out, tape.constant(y_window))));
      tape.backward(loss);
      opt.step(tape);
    }
  }
  {
    std::vector<Param*> enc_params;
    encoder_.collect_params(enc_params);
    AdamOptimizer opt(enc_params, 0.005);
    Tensor target_sigma = Tensor::full({t_len, r}, std::log(0.1));
    for (std::size_t step = 0; step < warm_steps; ++step) {
      Tape tape;
      RegimeBank::TapeOut reg = prior_.bank().embed_on_tape(tape, tape.constant(u));
      Value heads = encoder_.forward(tape, encoder_inputs(tape, y_window, u, reg.embed));
      Value mu_err = tape.square(tape.sub(tape.slice_cols(heads, 0, r), tape.constant(implied)));
      Value sg_err = tape.square(tape.sub(tape.slice_cols(heads, r, 2 * r),
                                          tape.constant(target_sigma)));
      Value loss = tape.add(tape.mean_all(mu_err), tape.mul_scalar(tape.mean_all(sg_err), 0.1));
      tape.backward(loss);
      opt.step(tape);
    }
  }
}

Value VIModel::encoder_inputs(Tape& tape, const Tensor& y, const Tensor& u, Value embed) const {
  std::size_t t_len = y.rows(), n = y.cols();
  std::vector<Value> parts;
  parts.push_back(tape.constant(y));
  for (std::size_t lag = 1; lag <= cfg_.factor_order; ++lag) {
    Tensor lagged({t_len, n});
    for (std::size_t t = lag; t < t_len; ++t)
      for (std::size_t j = 0; j < n; ++j) lagged.at(t, j) = y.at(t - lag, j);
    parts.push_back(tape.constant(std::move(lagged)));
  }
  for (std::size_t lead = 1; lead <= 2; ++lead) {
    Tensor led({t_len, n});
    for (std::size_t t = 0; t + lead < t_len; ++t)
      for (std::size_t j = 0; j < n; ++j) led.at(t, j) = y.at(t + lead, j);
    parts.push_back(tape.constant(std::move(led)));
  }
  parts.push_back(tape.constant(u));
  parts.push_back(embed);
  Tensor mean_rows({t_len, n});
  for (std::size_t j = 0; j < n; ++j) {
    double m = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) m += y.at(t, j);
    m /= static_cast<double>(t_len);
    for (std::size_t t = 0; t < t_len; ++t) mean_rows.at(t, j) = m;
  }
  parts.push_back(tape.constant(std::move(mean_rows)));
  return tape.concat_cols(parts);
}

Tensor VIModel::frozen_weights(const Tensor& u) const {
  Tensor first({1, u.cols()});
  for (std::size_t c = 0; c < u.cols(); ++c) first.at(0, c) = u.at(0, c);
  auto [pi, embed] = prior_.bank().embed(first);
  return pi;
}

Value VIModel::build_elbo(Tape& tape, const Tensor& y, const Tensor& u, const Tensor& eps,
                          const std::vector<Tensor>* encoder_masks, ElboParts* parts,
                          double obs_var_override) const {
  double obs_var = obs_var_override > 0.0 ? obs_var_override : cfg_.obs_var;
  std::size_t t_len = y.rows(), n = y.cols(), r = cfg_.num_factors;
  if (!y.all_finite()) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (!std::isfinite(y[i])) {
        throw std::invalid_argument(cat("elbo: non-finite observation at flat index ", i));
      }
    }
  }
  if (u.rows() != t_len) throw std::invalid_argument("elbo: auxiliary rows mismatch");
  if (eps.rows() != t_len || eps.cols() != r) {
    throw std::invalid_argument("elbo: noise shape mismatch");
  }

  Value aux = tape.constant(u);
  RegimeBank::TapeOut reg = prior_.bank().embed_on_tape(tape, aux);

  Value heads = encoder_.forward(tape, encoder_inputs(tape, y, u, reg.embed), encoder_masks);
  Value mu = tape.slice_cols(heads, 0, r);
  Value log_sigma = tape.slice_cols(heads, r, 2 * r);
  Value sigma = tape.exp_(log_sigma);
  Value eta = tape.add(mu, tape.mul(sigma, tape.constant(eps)));

  // dynamics use the window's first-step mixture, held fixed across t
  Value pi_frozen = tape.slice_rows(reg.weights, 0, 1);
  Value factors = dynamics_.rollout_on_tape(tape, eta, pi_frozen);
  Value decoded = decoder_.forward(tape, factors);

  double log_norm = -0.5 * static_cast<double>(t_len * n) * std::log(2.0 * kPi * obs_var);
  Value sq_err = tape.sum_all(tape.square(tape.sub(tape.constant(y), decoded)));
  Value recon = tape.add_scalar(tape.mul_scalar(sq_err, -0.5 / obs_var), log_norm);

  // entropy-style term of the Gaussian posterior at the shared sample
  double q_norm = -0.5 * static_cast<double>(t_len * r) * std::log(2.0 * kPi);
  Value z = tape.div(tape.sub(eta, mu), sigma);
  Value log_q = tape.add_scalar(
      tape.sub(tape.neg(tape.sum_all(log_sigma)), tape.mul_scalar(tape.sum_all(tape.square(z)), 0.5)),
      q_norm);
  Value log_p = tape.sum_all(prior_.log_prob_rows(tape, eta, aux));
  Value kl = tape.sub(log_q, log_p);

  Value loss = tape.add(tape.neg(recon), tape.mul_scalar(kl, cfg_.beta_kl));
  if (parts != nullptr) {
    parts->loss = tape.scalar(loss);
    parts->reconstruction = tape.scalar(recon);
    parts->kl = tape.scalar(kl);
  }
  return loss;
}

ElboParts VIModel::elbo(const Tensor& y, const Tensor& u, Rng& rng) const {
  Tensor eps({y.rows(), cfg_.num_factors});
  for (double& e : eps.values()) e = rng.normal();
  Tape tape;
  ElboParts parts;
  build_elbo(tape, y, u, eps, nullptr, &parts);
  return parts;
}

std::vector<double> VIModel::train_window(const Tensor& y, const Tensor& u, Rng& rng) {
  std::size_t t_len = y.rows();
  if (t_len < cfg_.factor_order + 1) {
    throw std::invalid_argument(cat("train_window: window of ", t_len,
                                    " rows cannot support AR order ", cfg_.factor_order));
  }
  if (!initialized_) init_from_data(y);
  AdamOptimizer opt(params_, cfg_.learning_rate, 0.9, 0.999, 1e-8, cfg_.weight_decay);
  std::vector<double> trace;
  trace.reserve(cfg_.max_epochs);
  for (std::size_t epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
    Tensor eps({t_len, cfg_.num_factors});
    for (double& e : eps.values()) e = rng.normal();
    std::vector<Tensor> masks = draw_dropout_masks(encoder_, t_len, cfg_.dropout, rng);
    Tape tape;
    ElboParts parts;
    Value loss = build_elbo(tape, y, u, eps, &masks, &parts);
    if (!std::isfinite(parts.loss)) {
      double last = trace.empty() ? parts.loss : trace.back();
      throw std::runtime_error(cat("train_window: loss diverged at epoch ", epoch,
                                   "; last finite loss ", last));
    }
    tape.backward(loss);
    opt.step(tape);
    trace.push_back(parts.loss);
  }
  return trace;
}

std::pair<Tensor, Tensor> VIModel::encode(const Tensor& y, const Tensor& u) const {
  Tape tape;
  Value aux = tape.constant(u);
  RegimeBank::TapeOut reg = prior_.bank().embed_on_tape(tape, aux);
  Value heads = encoder_.forward(tape, encoder_inputs(tape, y, u, reg.embed));
  std::size_t r = cfg_.num_factors;
  Tensor mu = tape.value(tape.slice_cols(heads, 0, r));
  Tensor sigma = tape.value(tape.slice_cols(heads, r, 2 * r));
  for (double& s : sigma.values()) s = std::exp(s);
  return {mu, sigma};
}

Tensor VIModel::posterior_mean_innovations(const Tensor& y, const Tensor& u) const {
  return encode(y, u).first;
}

Tensor VIModel::posterior_factors(const Tensor& y, const Tensor& u) const {
  Tensor mu = posterior_mean_innovations(y, u);
  return dynamics_.rollout(mu, frozen_weights(u));
}

Tensor VIModel::decode(const Tensor& factors) const {
  Tape tape;
  return tape.value(decoder_.forward(tape, tape.constant(factors)));
}

Tensor VIModel::reconstruct(const Tensor& y, const Tensor& u) const {
  return decode(posterior_factors(y, u));
}

Tensor VIModel::reparameterize(const Tensor& mu, const Tensor& sigma, const Tensor& eps) {
  if (!mu.same_shape(sigma) || !mu.same_shape(eps)) {
    throw std::invalid_argument("reparameterize: shape mismatch");
  }
  Tensor eta = mu;
  for (std::size_t i = 0; i < eta.size(); ++i) eta[i] += sigma[i] * eps[i];
  return eta;
}

QuantileGrid VIModel::predict_quantiles(const Tensor& context_y, std::size_t horizon,
                                        std::size_t n_paths, Rng& rng) const {
  if (horizon == 0) throw std::invalid_argument("predict_quantiles: horizon must be >= 1");
  if (n_paths < 2) throw std::invalid_argument("predict_quantiles: need at least two paths");
  std::size_t w = context_y.rows(), r = cfg_.num_factors, p = cfg_.factor_order;
  std::size_t n = context_y.cols();
  if (w < p) throw std::invalid_argument("predict_quantiles: context shorter than the AR order");

  Tensor u_ctx = aux_features(w, w);
  Tensor factors_ctx = posterior_factors(context_y, u_ctx);
  Tensor pi = frozen_weights(u_ctx);
  Tensor coeff = dynamics_.mixed_coefficients(pi);   // {p, r}
  Tensor scale = dynamics_.mixed_input_scale(pi);    // {1, r}
  Tensor lags({p, r});
  for (std::size_t l = 0; l < p; ++l)
    for (std::size_t j = 0; j < r; ++j) lags.at(l, j) = factors_ctx.at(w - 1 - l, j);

  // Conditional prior moments at the extrapolated clock.
  Tensor u_fut = aux_features(horizon, w, w);
  auto [loc, pscale] = prior_.conditional_moments(u_fut);

  double obs_sd = std::sqrt(cfg_.obs_var);
  Tensor all_factors({n_paths * horizon, r});
  for (std::size_t s = 0; s < n_paths; ++s) {
    std::vector<double> lag_buf(p * r);
    for (std::size_t i = 0; i < p * r; ++i) lag_buf[i] = lags[i];
    for (std::size_t h = 0; h < horizon; ++h) {
      for (std::size_t j = 0; j < r; ++j) {
        double m = loc.at(h, j), b = pscale.at(h, j);
        double draw = 0.0;
        switch (cfg_.family) {
          case Family::Laplace: draw = rng.laplace(m, b); break;
          case Family::Gaussian: draw = rng.normal(m, b); break;
          case Family::StudentT:
            draw = m + b * rng.student_t(static_cast<int>(cfg_.student_dof));
            break;
        }
        double next = scale.at(0, j) * draw;
        for (std::size_t l = 0; l < p; ++l) next += coeff.at(l, j) * lag_buf[l * r + j];
        for (std::size_t l = p; l-- > 1;)
          lag_buf[l * r + j] = lag_buf[(l - 1) * r + j];
        lag_buf[j] = next;
        all_factors.at(s * horizon + h, j) = next;
      }
    }
  }

  Tensor decoded = decode(all_factors);  // {S*H, N}
  for (double& x : decoded.values()) x += obs_sd * rng.normal();

  QuantileGrid grid;
  grid.q10 = Tensor({horizon, n});
  grid.q50 = Tensor({horizon, n});
  grid.q90 = Tensor({horizon, n});
  std::vector<double> cell(n_paths);
  for (std::size_t h = 0; h < horizon; ++h) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t s = 0; s < n_paths; ++s) cell[s] = decoded.at(s * horizon + h, j);
      std::sort(cell.begin(), cell.end());
      grid.q10.at(h, j) = empirical_quantile(cell, 0.1);
      grid.q50.at(h, j) = empirical_quantile(cell, 0.5);
      grid.q90.at(h, j) = empirical_quantile(cell, 0.9);
    }
  }
  return grid;
}

}  // namespace ivdfm
