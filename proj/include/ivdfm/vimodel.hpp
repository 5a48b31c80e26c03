// SPDX-License-Identifier: Apache-2.0
//
// Variational model: a per-step Gaussian posterior over innovations
// (encoder), deterministic diagonal dynamics mapping innovations to factors,
// a decoder with fixed observation variance, and the evidence-lower-bound
// training loop. Prediction samples future innovations from the conditional
// prior and propagates them through the dynamics.

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ivdfm/autodiff.hpp"
#include "ivdfm/common.hpp"
#include "ivdfm/dynamics.hpp"
#include "ivdfm/metrics.hpp"
#include "ivdfm/mlp.hpp"
#include "ivdfm/prior.hpp"
#include "ivdfm/tensor.hpp"

namespace ivdfm {

struct TrainConfig {
  double learning_rate = 0.002;
  double weight_decay = 0.0;
  std::size_t max_epochs = 200;
  std::size_t window = 200;
  double beta_kl = 1.0;
  std::uint64_t seed = 0;
  Family family = Family::Laplace;
  std::size_t num_regimes = 7;
  double temperature = 0.2;
  std::size_t factor_order = 3;
  std::size_t num_factors = 5;
  double obs_var = 0.03;  // fixed, never learned
  double dropout = 0.08;
  std::size_t embed_dim = 8;
  std::size_t encoder_hidden = 128;
  std::size_t decoder_hidden = 128;
  double student_dof = 4.0;
  bool mixture_prior = false;
  bool constant_context = false;  // ablation: u_t == u_0
  bool spectral_warm_start = false;  // pre-fit decoder/encoder to the PCA solution
};

struct ElboParts {
  double loss = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

class VIModel {
 public:
  VIModel(const TrainConfig& config, std::size_t num_series, Rng& rng);

  // The parameter registry points into this object's own members, so copies
  // and moves re-collect it.
  VIModel(const VIModel& other);
  VIModel& operator=(const VIModel& other);
  VIModel(VIModel&& other) noexcept;
  VIModel& operator=(VIModel&& other) noexcept;

  const TrainConfig& config() const { return cfg_; }
  std::size_t num_series() const { return num_series_; }
  std::size_t aux_dim() const { return 3; }

  // Auxiliary features for a window of the given length (offset shifts the
  // clock for forecasting continuations); honors the constant-context flag.
  Tensor aux_features(std::size_t rows, std::size_t span, std::size_t offset = 0) const;

  // PCA factor scores of the window drive the AR coefficient initialization
  // and the initial lag state.
  void init_from_data(const Tensor& y_window);
  bool initialized() const { return initialized_; }
  void mark_initialized() { initialized_ = true; }

  // Full ELBO graph with externally drawn reparameterization noise and
  // dropout masks; returns the minimized loss node. obs_var_override, when
  // positive, replaces the configured observation variance (the training
  // loop anneals it toward the configured value).
  Value build_elbo(Tape& tape, const Tensor& y, const Tensor& u, const Tensor& eps,
                   const std::vector<Tensor>* encoder_masks, ElboParts* parts,
                   double obs_var_override = 0.0) const;

  // One stochastic evaluation (fresh noise, no dropout).
  ElboParts elbo(const Tensor& y, const Tensor& u, Rng& rng) const;

  // Adam over all parameters for max_epochs; returns the per-epoch loss
  // trace. Throws on divergence, reporting the last finite epoch.
  std::vector<double> train_window(const Tensor& y, const Tensor& u, Rng& rng);

  // Deterministic evaluation paths (dropout off).
  std::pair<Tensor, Tensor> encode(const Tensor& y, const Tensor& u) const;  // mu, sigma {T, r}
  Tensor posterior_mean_innovations(const Tensor& y, const Tensor& u) const;
  Tensor posterior_factors(const Tensor& y, const Tensor& u) const;          // {T, r}
  Tensor decode(const Tensor& factors) const;                                // {T, N}
  Tensor reconstruct(const Tensor& y, const Tensor& u) const;                // decode(factors)

  // eta = mu + sigma * eps with externally drawn standard normal eps.
  static Tensor reparameterize(const Tensor& mu, const Tensor& sigma, const Tensor& eps);

  // Simulate n_paths futures over the horizon: sample innovations from the
  // conditional prior at the extrapolated auxiliary features, roll the
  // dynamics from the context's posterior state, decode, add observation
  // noise, and report empirical (0.1, 0.5, 0.9) quantiles per cell.
  QuantileGrid predict_quantiles(const Tensor& context_y, std::size_t horizon,
                                 std::size_t n_paths, Rng& rng) const;

  const std::vector<Param*>& parameters() const { return params_; }
  std::vector<Param*>& parameters() { return params_; }
  InnovationPrior& prior() { return prior_; }
  const InnovationPrior& prior() const { return prior_; }
  DiagonalDynamics& dynamics() { return dynamics_; }
  const DiagonalDynamics& dynamics() const { return dynamics_; }
  Mlp& encoder() { return encoder_; }
  Mlp& decoder() { return decoder_; }

 private:
  Value encoder_inputs(Tape& tape, const Tensor& y, const Tensor& u, Value embed) const;
  Tensor frozen_weights(const Tensor& u) const;  // {1, K} from the window's first row
  void collect_all_params();

  TrainConfig cfg_;
  std::size_t num_series_ = 0;
  InnovationPrior prior_;
  DiagonalDynamics dynamics_;
  Mlp encoder_;
  Mlp decoder_;
  std::vector<Param*> params_;
  bool initialized_ = false;
};

// Top-r principal-component scores of a (column-standardized) window.
Tensor pca_scores(const Tensor& y, std::size_t rank);

}  // namespace ivdfm
