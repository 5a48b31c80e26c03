// SPDX-License-Identifier: Apache-2.0
//
// Synthetic data generators: static and dynamic factor-recovery suites with
// nonlinear mixing, and the structural-system variants with analytic impulse
// responses for intervention experiments. Every generator is a pure function
// of its arguments and seed.

#pragma once

#include <cstdint>
#include <string>

#include "ivdfm/tensor.hpp"

namespace ivdfm {

struct SyntheticDataset {
  Tensor observations;  // {T, N}
  Tensor true_factors;  // {T, r}
  Tensor aux;           // {T, 3} timestep features
  Tensor innovations;   // {T, r}; empty for the static suite
  std::uint64_t seed = 0;
  std::string kind;     // "static" | "dynamic"
};

// Latents drawn independently per step from a Laplace law whose location and
// scale depend on a contiguous time segment; observations via a two-layer
// leaky-ReLU random mixing plus Gaussian noise.
SyntheticDataset gen_static_dgp(std::size_t t_len, std::size_t n_series, std::size_t n_factors,
                                std::uint64_t seed);

// Factors follow stable diagonal AR(p) dynamics driven by segment-dependent
// Laplace innovations; same mixing family as the static suite.
SyntheticDataset gen_dynamic_dgp(std::size_t t_len, std::size_t n_series, std::size_t n_factors,
                                 std::size_t ar_order, std::uint64_t seed);

// Structural system: f_t = A_t f_{t-1} + shock_t, f_0 = 0, y_t = C f_t.
struct ScmSpec {
  enum class Variant { Base, Regime, Chain };
  Variant variant = Variant::Base;
  std::size_t state_dim = 3;
  std::size_t obs_dim = 10;
  double base_rho = 0.7;
  double regime_rho_low = 0.4;
  double regime_rho_high = 0.8;
  std::size_t regime_period = 50;
  double chain_diag = 0.6;
  double chain_coupling = 0.3;  // influence of factor i on factor i+1
  double shock_scale = 1.0;     // Laplace scale of the exogenous shocks
  bool nonlinear_obs = false;   // leaky-ReLU mixing instead of linear C
  std::uint64_t seed = 0;       // fixes the observation map C

  // Transition matrix in force when producing the state at (0-based) row t.
  Tensor transition_at(std::size_t t) const;
  Tensor loading() const;  // {N, r}, unit-norm columns, fixed by seed
  double spectral_radius() const;
};

struct ScmData {
  Tensor observations;  // {T, N}
  Tensor states;        // {T, r}
  Tensor shocks;        // {T, r}, stored for counterfactual replay
};

ScmData gen_scm(const ScmSpec& spec, std::size_t t_len, std::uint64_t seed);

// Analytic impulse response of a magnitude-c shock to component k applied at
// row t0: row h = c * C * (product of transitions over h steps) * e_k.
// Defined only for the linear observation map.
Tensor true_irf(const ScmSpec& spec, std::size_t shocked, double magnitude, std::size_t horizon,
                std::size_t t0 = 0);

// Paired replay: re-simulate with the stored shocks, once with the shock at
// (t0, k) set to `magnitude` and once with it set to its mean (zero); returns
// the observation difference over offsets 0..H. Works for nonlinear maps too.
Tensor simulated_irf(const ScmSpec& spec, const ScmData& data, std::size_t t0, std::size_t shocked,
                     double magnitude, std::size_t horizon);

// Re-simulates states and observations from stored shocks.
ScmData replay_scm(const ScmSpec& spec, const Tensor& shocks);

// Default auxiliary featurization: [t/T, sin(2 pi t/T), cos(2 pi t/T)] for
// t = offset .. offset+rows-1, with period `span`.
Tensor timestep_features(std::size_t rows, std::size_t span, std::size_t offset = 0);

// Constant-context ablation: every row equals the t=0 feature row.
Tensor constant_features(std::size_t rows);

}  // namespace ivdfm
