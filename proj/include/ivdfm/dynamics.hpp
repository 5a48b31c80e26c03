// SPDX-License-Identifier: Apache-2.0
//
// Linear diagonal factor dynamics with per-regime coefficients, and the
// companion-form state space with impulse responses for AR(p) analysis.
//
// Each factor evolves from its own lags and its own innovation component
// only; regime mixing blends per-regime diagonal coefficient sets with
// weights frozen per window. Stability of the learnable transition is
// induced by tanh on the raw coefficients and checked (not clamped) at the
// companion level.

#pragma once

#include <cstddef>
#include <vector>

#include "ivdfm/autodiff.hpp"
#include "ivdfm/common.hpp"
#include "ivdfm/tensor.hpp"

namespace ivdfm {

class DiagonalDynamics {
 public:
  DiagonalDynamics() = default;
  DiagonalDynamics(std::size_t num_factors, std::size_t num_regimes, std::size_t order, Rng& rng);

  std::size_t num_factors() const { return num_factors_; }
  std::size_t num_regimes() const { return num_regimes_; }
  std::size_t order() const { return order_; }

  // OLS AR(order) fit per factor on reference factor paths (e.g. PCA scores);
  // also sets the initial lag state from the leading rows. Falls back to a
  // mild default when the normal equations are singular.
  void init_from_reference(const Tensor& factors);

  // One transition f_next = A_bar f + B_bar eta with A_bar, B_bar mixed by pi.
  // Defined for order 1 (the general-order path is rollout). Throws when pi
  // is off the simplex by more than 1e-9.
  Tensor step(const Tensor& f, const Tensor& eta, const Tensor& pi) const;

  // Factor path from the stored initial lags: out[t] consumes etas rows 0..t.
  // pi_frozen: {1, K} mixture weights held fixed for the whole window.
  Value rollout_on_tape(Tape& tape, Value etas, Value pi_frozen) const;
  Tensor rollout(const Tensor& etas, const Tensor& pi_frozen) const;

  // Effective per-lag coefficients {order, r} and input scale {1, r} under pi.
  Tensor mixed_coefficients(const Tensor& pi) const;
  Tensor mixed_input_scale(const Tensor& pi) const;
  Tensor initial_lags() const { return init_state_.value; }

  Param& raw_coefficients() { return raw_coeffs_; }
  Param& input_scale() { return input_scale_; }
  Param& initial_state() { return init_state_; }
  void collect_params(std::vector<Param*>& out);

 private:
  std::size_t num_factors_ = 0, num_regimes_ = 1, order_ = 1;
  Param raw_coeffs_;   // {K, order*r}, lag-major per regime; tanh on use
  Param input_scale_;  // {K, r}
  Param init_state_;   // {order, r}; row l holds the lag-(l+1) factor vector
};

// Companion-form state space: one order x order companion block per factor,
// stacked block-diagonally. State layout groups factor i's current and lagged
// values at indices [i*order, (i+1)*order).
struct CompanionSystem {
  std::size_t num_factors = 0;
  std::size_t order = 0;
  Tensor transition;  // {r*p, r*p}
  Tensor input_map;   // {r*p, r}
  Tensor selector;    // {r, r*p}
  Tensor init_state;  // {r*p}
};

// Assemble from per-factor AR coefficients {order, r} (lag-major) and input
// scales {r} (or {1, r}); init {order, r} optional (zeros otherwise). Warns
// when a block's spectral radius reaches 1.
CompanionSystem build_companion(const Tensor& ar_coeffs, const Tensor& input_scale,
                                const Tensor* init = nullptr);

// Direct recurrence: out[t] = selector * s_{t+1} where s evolves by the
// companion dynamics consuming etas rows 0..t.
Tensor unroll_companion(const CompanionSystem& sys, const Tensor& etas);

// Impulse response at the given lag: selector * transition^lag * input_map.
Tensor impulse_response(const CompanionSystem& sys, std::size_t lag);

// Largest block spectral radius, estimated by normalized power iteration with
// averaged log growth (robust to complex dominant pairs).
double companion_spectral_radius(const CompanionSystem& sys);

}  // namespace ivdfm
