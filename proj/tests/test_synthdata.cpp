// SPDX-License-Identifier: Apache-2.0
//
// Synthetic generators: determinism, latent decorrelation, stability, scalar
// replay oracles, structural-system nulls, and analytic impulse responses
// against paired simulation.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "ivdfm/common.hpp"
#include "ivdfm/synthdata.hpp"
#include "ivdfm/tensor.hpp"
#include "test_oracles.hpp"

using namespace ivdfm;

TEST_CASE("static suite: paper-sized shapes and determinism") {
  SyntheticDataset a = gen_static_dgp(200, 20, 5, 3);
  CHECK(a.observations.rows() == 200);
  CHECK(a.observations.cols() == 20);
  CHECK(a.true_factors.rows() == 200);
  CHECK(a.true_factors.cols() == 5);
  CHECK(a.aux.rows() == 200);
  CHECK(a.kind == "static");

  SyntheticDataset b = gen_static_dgp(200, 20, 5, 3);
  for (std::size_t i = 0; i < a.observations.size(); ++i)
    CHECK(a.observations[i] == b.observations[i]);
  for (std::size_t i = 0; i < a.true_factors.size(); ++i)
    CHECK(a.true_factors[i] == b.true_factors[i]);
}

TEST_CASE("static suite rejects more factors than series") {
  CHECK_THROWS_AS(gen_static_dgp(50, 3, 5, 0), std::invalid_argument);
}

TEST_CASE("static suite: latent columns are nearly uncorrelated at T=2000") {
  SyntheticDataset ds = gen_static_dgp(2000, 8, 5, 1);
  double worst = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<double> a(2000), b(2000);
    for (std::size_t t = 0; t < 2000; ++t) a[t] = ds.true_factors.at(t, i);
    for (std::size_t j = i + 1; j < 5; ++j) {
      for (std::size_t t = 0; t < 2000; ++t) b[t] = ds.true_factors.at(t, j);
      double m_a = 0, m_b = 0;
      for (std::size_t t = 0; t < 2000; ++t) {
        m_a += a[t];
        m_b += b[t];
      }
      m_a /= 2000;
      m_b /= 2000;
      double sxy = 0, sxx = 0, syy = 0;
      for (std::size_t t = 0; t < 2000; ++t) {
        sxy += (a[t] - m_a) * (b[t] - m_b);
        sxx += (a[t] - m_a) * (a[t] - m_a);
        syy += (b[t] - m_b) * (b[t] - m_b);
      }
      worst = std::max(worst, std::abs(sxy / std::sqrt(sxx * syy)));
    }
  }
  CHECK(worst < 0.2);
}

TEST_CASE("dynamic suite: factors replay exactly on a scalar reference simulator") {
  SyntheticDataset ds = gen_dynamic_dgp(120, 10, 4, 3, 7);
  REQUIRE(!ds.innovations.empty());
  // re-fit the AR coefficients implied by the stored factors and innovations:
  // the recursion must reproduce the factor path exactly once the (unknown)
  // coefficients are recovered, so solve for them from the first steps.
  // Instead of recovering coefficients, verify the affine recursion property:
  // f_t - eta_t must be a fixed linear function of the previous p factors.
  std::size_t p = 3, r = 4, t_len = 120;
  for (std::size_t j = 0; j < r; ++j) {
    // solve the p coefficients from p consecutive equations, then check all t
    Tensor lhs({p, p});
    std::vector<double> rhs(p);
    for (std::size_t row = 0; row < p; ++row) {
      std::size_t t = p + row;
      for (std::size_t l = 0; l < p; ++l) lhs.at(row, l) = ds.true_factors.at(t - 1 - l, j);
      rhs[row] = ds.true_factors.at(t, j) - ds.innovations.at(t, j);
    }
    // Gaussian elimination (3x3)
    std::vector<double> a(p);
    {
      double m[3][4];
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t c = 0; c < p; ++c) m[i][c] = lhs.at(i, c);
        m[i][p] = rhs[i];
      }
      for (std::size_t col = 0; col < p; ++col) {
        std::size_t piv = col;
        for (std::size_t i = col + 1; i < p; ++i)
          if (std::abs(m[i][col]) > std::abs(m[piv][col])) piv = i;
        std::swap(m[col], m[piv]);
        for (std::size_t i = col + 1; i < p; ++i) {
          double f = m[i][col] / m[col][col];
          for (std::size_t c = col; c <= p; ++c) m[i][c] -= f * m[col][c];
        }
      }
      for (std::size_t i = p; i-- > 0;) {
        double s = m[i][p];
        for (std::size_t c = i + 1; c < p; ++c) s -= m[i][c] * a[c];
        a[i] = s / m[i][i];
      }
    }
    for (double coeff : a) CHECK(std::abs(coeff) < 1.0);  // post-tanh construction
    // replay the whole factor path with the recovered coefficients
    Tensor coeffs({p, 1});
    for (std::size_t l = 0; l < p; ++l) coeffs.at(l, 0) = a[l];
    Tensor init({p, 1});  // zero initial lags
    Tensor etas({t_len, 1});
    for (std::size_t t = 0; t < t_len; ++t) etas.at(t, 0) = ds.innovations.at(t, j);
    Tensor replay = testing::scalar_ar_reference(coeffs, {1.0}, init, etas);
    for (std::size_t t = 0; t < t_len; ++t)
      CHECK(replay.at(t, 0) == doctest::Approx(ds.true_factors.at(t, j)).epsilon(1e-9));
  }
}

TEST_CASE("dynamic suite: determinism and generation speed") {
  auto start = std::chrono::steady_clock::now();
  SyntheticDataset a = gen_dynamic_dgp(200, 20, 5, 3, 11);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs < 1.0);
  SyntheticDataset b = gen_dynamic_dgp(200, 20, 5, 3, 11);
  for (std::size_t i = 0; i < a.observations.size(); ++i)
    CHECK(a.observations[i] == b.observations[i]);
}

TEST_CASE("timestep features and the constant-context ablation") {
  Tensor u = timestep_features(4, 4);
  CHECK(u.at(0, 0) == 0.0);
  CHECK(u.at(0, 2) == 1.0);
  CHECK(u.at(2, 0) == doctest::Approx(0.5));
  CHECK(u.at(2, 1) == doctest::Approx(std::sin(kPi)).epsilon(1e-12));
  Tensor ext = timestep_features(2, 4, 4);  // extrapolated clock
  CHECK(ext.at(0, 0) == doctest::Approx(1.0));
  Tensor c = constant_features(3);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(c.at(t, 0) == 0.0);
    CHECK(c.at(t, 2) == 1.0);
  }
}

TEST_CASE("structural system: null shocks give null everything") {
  ScmSpec spec;
  spec.seed = 5;
  ScmData data = replay_scm(spec, Tensor({30, 3}));
  for (double x : data.states.values()) CHECK(x == 0.0);
  for (double x : data.observations.values()) CHECK(x == 0.0);
}

TEST_CASE("structural system: zero persistence makes states equal shocks") {
  ScmSpec spec;
  spec.base_rho = 0.0;
  spec.seed = 6;
  ScmData data = gen_scm(spec, 50, 1);
  for (std::size_t i = 0; i < data.states.size(); ++i)
    CHECK(data.states[i] == data.shocks[i]);
}

TEST_CASE("structural system: replaying stored shocks reproduces observations") {
  for (auto variant : {ScmSpec::Variant::Base, ScmSpec::Variant::Regime, ScmSpec::Variant::Chain}) {
    ScmSpec spec;
    spec.variant = variant;
    spec.seed = 9;
    ScmData data = gen_scm(spec, 120, 2);
    ScmData again = replay_scm(spec, data.shocks);
    for (std::size_t i = 0; i < data.observations.size(); ++i)
      CHECK(data.observations[i] == doctest::Approx(again.observations[i]).epsilon(1e-12));
  }
}

TEST_CASE("chain system: shocking the last factor never moves the earlier ones") {
  ScmSpec spec;
  spec.variant = ScmSpec::Variant::Chain;
  spec.state_dim = 3;
  spec.seed = 12;
  ScmData data = gen_scm(spec, 80, 3);
  std::size_t t0 = 20;
  Tensor bumped = data.shocks;
  bumped.at(t0, 2) += 5.0;
  ScmData b = replay_scm(spec, bumped);
  for (std::size_t t = 0; t < 80; ++t) {
    CHECK(b.states.at(t, 0) == data.states.at(t, 0));
    CHECK(b.states.at(t, 1) == data.states.at(t, 1));
  }
  // and the first factor propagates forward
  Tensor bumped0 = data.shocks;
  bumped0.at(t0, 0) += 5.0;
  ScmData c = replay_scm(spec, bumped0);
  CHECK(std::abs(c.states.at(t0 + 1, 1) - data.states.at(t0 + 1, 1)) > 1e-12);
  CHECK(std::abs(c.states.at(t0 + 2, 2) - data.states.at(t0 + 2, 2)) > 1e-12);
}

TEST_CASE("unstable transition is rejected") {
  ScmSpec spec;
  spec.base_rho = 1.01;
  CHECK_THROWS_AS(gen_scm(spec, 10, 0), std::invalid_argument);
}

TEST_CASE("analytic impulse response: immediate impact and geometric decay") {
  ScmSpec spec;
  spec.seed = 21;
  Tensor c = spec.loading();
  double magnitude = 2.0;
  Tensor irf = true_irf(spec, 1, magnitude, 6);
  for (std::size_t i = 0; i < spec.obs_dim; ++i)
    CHECK(irf.at(0, i) == doctest::Approx(magnitude * c.at(i, 1)).epsilon(1e-12));
  for (std::size_t h = 0; h <= 6; ++h)
    for (std::size_t i = 0; i < spec.obs_dim; ++i)
      CHECK(irf.at(h, i) ==
            doctest::Approx(magnitude * std::pow(spec.base_rho, h) * c.at(i, 1)).epsilon(1e-10));
}

TEST_CASE("analytic impulse response equals paired simulation for every variant") {
  for (auto variant : {ScmSpec::Variant::Base, ScmSpec::Variant::Regime, ScmSpec::Variant::Chain}) {
    ScmSpec spec;
    spec.variant = variant;
    spec.seed = 31;
    ScmData data = gen_scm(spec, 150, 4);
    std::size_t t0 = 60, k = 1, horizon = 12;
    Tensor analytic = true_irf(spec, k, 2.0, horizon, t0);
    Tensor simulated = simulated_irf(spec, data, t0, k, 2.0, horizon);
    for (std::size_t i = 0; i < analytic.size(); ++i)
      CHECK(analytic[i] == doctest::Approx(simulated[i]).epsilon(1e-10));
  }
}

TEST_CASE("analytic impulse response refuses the nonlinear observation map") {
  ScmSpec spec;
  spec.nonlinear_obs = true;
  CHECK_THROWS_AS(true_irf(spec, 0, 1.0, 5), std::invalid_argument);
  // the paired simulation still works
  ScmData data = gen_scm(spec, 60, 7);
  Tensor irf = simulated_irf(spec, data, 20, 0, 1.0, 5);
  CHECK(irf.rows() == 6);
  CHECK(irf.cols() == spec.obs_dim);
}

TEST_CASE("regime schedule switches the transition by period") {
  ScmSpec spec;
  spec.variant = ScmSpec::Variant::Regime;
  CHECK(spec.transition_at(0).at(0, 0) == spec.regime_rho_low);
  CHECK(spec.transition_at(49).at(0, 0) == spec.regime_rho_low);
  CHECK(spec.transition_at(50).at(0, 0) == spec.regime_rho_high);
  CHECK(spec.transition_at(100).at(0, 0) == spec.regime_rho_low);
}
