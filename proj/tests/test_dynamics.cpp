// SPDX-License-Identifier: Apache-2.0
//
// Dynamics oracles: scalar reference loops, convolution-form identity,
// simulated-shock impulse responses, and the equivalence-class propagation
// property for diagonal systems.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "ivdfm/common.hpp"
#include "ivdfm/dynamics.hpp"
#include "ivdfm/tensor.hpp"
#include "test_oracles.hpp"

using namespace ivdfm;

namespace {

Tensor random_matrix(std::size_t m, std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t({m, n});
  for (double& x : t.values()) x = rng.uniform(lo, hi);
  return t;
}

// Dynamics with a single regime whose post-tanh coefficients equal `coeffs`
// ({p, r}) and input scale `scale` ({1, r}); zero initial lags.
DiagonalDynamics make_dynamics(const Tensor& coeffs, const Tensor& scale) {
  Rng rng(0);
  std::size_t p = coeffs.rows(), r = coeffs.cols();
  DiagonalDynamics dyn(r, 1, p, rng);
  for (std::size_t l = 0; l < p; ++l)
    for (std::size_t j = 0; j < r; ++j) {
      double a = std::clamp(coeffs.at(l, j), -0.999, 0.999);
      dyn.raw_coefficients().value.at(0, l * r + j) = 0.5 * std::log((1.0 + a) / (1.0 - a));
    }
  for (std::size_t j = 0; j < r; ++j) dyn.input_scale().value.at(0, j) = scale.at(0, j);
  for (double& x : dyn.initial_state().value.values()) x = 0.0;
  return dyn;
}

Tensor pi1() { return Tensor({1, 1}, {1.0}); }

}  // namespace

TEST_CASE("step: pure innovation and persistence limits") {
  Rng rng(1);
  Tensor zero_a({1, 2}, {0.0, 0.0});
  Tensor one_b({1, 2}, {1.0, 1.0});
  DiagonalDynamics pure = make_dynamics(zero_a, one_b);
  Tensor f({1, 2}, {3.0, -2.0});
  Tensor eta({1, 2}, {0.7, 0.1});
  Tensor out = pure.step(f, eta, pi1());
  CHECK(out.at(0, 0) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(out.at(0, 1) == doctest::Approx(0.1).epsilon(1e-12));

  // raw coefficient large -> tanh ~ 1, scale 0 -> f persists
  DiagonalDynamics persist = make_dynamics(Tensor({1, 2}, {0.9999, 0.9999}),
                                           Tensor({1, 2}, {0.0, 0.0}));
  persist.raw_coefficients().value.at(0, 0) = 20.0;
  persist.raw_coefficients().value.at(0, 1) = 20.0;
  Tensor kept = persist.step(f, eta, pi1());
  CHECK(kept.at(0, 0) == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(kept.at(0, 1) == doctest::Approx(-2.0).epsilon(1e-8));
}

TEST_CASE("step: direct arithmetic") {
  DiagonalDynamics dyn = make_dynamics(Tensor({1, 2}, {0.5, 0.9}), Tensor({1, 2}, {1.0, 1.0}));
  Tensor out = dyn.step(Tensor({1, 2}, {1.0, 1.0}), Tensor({1, 2}, {1.0, 0.0}), pi1());
  CHECK(out.at(0, 0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(out.at(0, 1) == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("step rejects weights off the simplex") {
  DiagonalDynamics dyn = make_dynamics(Tensor({1, 1}, {0.5}), Tensor({1, 1}, {1.0}));
  CHECK_THROWS_AS(dyn.step(Tensor({1, 1}, {0.0}), Tensor({1, 1}, {0.0}),
                           Tensor({1, 1}, {0.9})),
                  std::invalid_argument);
}

TEST_CASE("rollout: zero innovations stay at zero, impulses decay geometrically") {
  DiagonalDynamics dyn = make_dynamics(Tensor({1, 1}, {0.5}), Tensor({1, 1}, {1.0}));
  Tensor zeros({8, 1});
  Tensor f = dyn.rollout(zeros, pi1());
  for (std::size_t t = 0; t < 8; ++t) CHECK(f.at(t, 0) == 0.0);

  Tensor impulse({6, 1});
  impulse.at(0, 0) = 1.0;
  Tensor g = dyn.rollout(impulse, pi1());
  for (std::size_t t = 0; t < 6; ++t)
    CHECK(g.at(t, 0) == doctest::Approx(std::pow(0.5, t)).epsilon(1e-12));
}

TEST_CASE("rollout matches an independent scalar loop on random systems") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(100, seed));
    std::size_t r = 1 + seed % 4, p = 1 + seed % 3;
    Tensor coeffs = random_matrix(p, r, rng, -0.6, 0.6);
    Tensor scale = random_matrix(1, r, rng, 0.5, 1.5);
    DiagonalDynamics dyn = make_dynamics(coeffs, scale);
    Tensor init = random_matrix(p, r, rng);
    dyn.initial_state().value = init;
    Tensor etas = random_matrix(50, r, rng);

    Tensor got = dyn.rollout(etas, pi1());
    Tensor eff = dyn.mixed_coefficients(pi1());
    std::vector<double> sc(r);
    for (std::size_t j = 0; j < r; ++j) sc[j] = dyn.mixed_input_scale(pi1()).at(0, j);
    Tensor want = testing::scalar_ar_reference(eff, sc, init, etas);
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("rollout reports the offending index for non-finite innovations") {
  DiagonalDynamics dyn = make_dynamics(Tensor({1, 1}, {0.5}), Tensor({1, 1}, {1.0}));
  Tensor etas({3, 1});
  etas.at(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(dyn.rollout(etas, pi1()),
                       "rollout: non-finite innovation at flat index 1", std::invalid_argument);
}

TEST_CASE("build_companion: order-1 reduction and the textbook block") {
  Tensor a1({1, 2}, {0.3, -0.4});
  Tensor b1({1, 2}, {1.5, 0.7});
  CompanionSystem sys = build_companion(a1, b1);
  CHECK(sys.transition.at(0, 0) == 0.3);
  CHECK(sys.transition.at(1, 1) == -0.4);
  CHECK(sys.transition.at(0, 1) == 0.0);
  CHECK(sys.input_map.at(0, 0) == 1.5);
  CHECK(sys.input_map.at(1, 1) == 0.7);
  CHECK(sys.selector.at(0, 0) == 1.0);
  CHECK(sys.selector.at(1, 1) == 1.0);

  Tensor a2({2, 1}, {0.5, 0.25});
  Tensor b2({1, 1}, {2.0});
  CompanionSystem c2 = build_companion(a2, b2);
  CHECK(c2.transition.at(0, 0) == 0.5);
  CHECK(c2.transition.at(0, 1) == 0.25);
  CHECK(c2.transition.at(1, 0) == 1.0);
  CHECK(c2.transition.at(1, 1) == 0.0);
  CHECK(c2.input_map.at(0, 0) == 2.0);
  CHECK(c2.input_map.at(1, 0) == 0.0);
  CHECK(c2.selector.at(0, 0) == 1.0);
  CHECK(c2.selector.at(0, 1) == 0.0);
}

TEST_CASE("build_companion rejects order 0") {
  CHECK_THROWS_AS(build_companion(Tensor({0, 1}), Tensor({1, 1}, {1.0})), std::invalid_argument);
}

TEST_CASE("power-iteration spectral radius matches the eigenvalue oracle") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(derive_seed(200, seed));
    // |a1|+|a2|+|a3| < 0.9 keeps every draw stable
    Tensor coeffs = random_matrix(3, 1, rng, -0.3, 0.3);
    CompanionSystem sys = build_companion(coeffs, Tensor({1, 1}, {1.0}));
    double got = companion_spectral_radius(sys);
    Eigen::Matrix3d block;
    block << coeffs.at(0, 0), coeffs.at(1, 0), coeffs.at(2, 0), 1, 0, 0, 0, 1, 0;
    double want = block.eigenvalues().cwiseAbs().maxCoeff();
    CHECK(got == doctest::Approx(want).epsilon(5e-3));
    CHECK(want < 1.0);
  }
}

TEST_CASE("unroll_companion: hand-unrolled AR(2) case") {
  Tensor coeffs({2, 1}, {0.5, 0.25});
  CompanionSystem sys = build_companion(coeffs, Tensor({1, 1}, {1.0}));
  Tensor etas({3, 1}, {1.0, 0.0, 0.0});
  Tensor f = unroll_companion(sys, etas);
  CHECK(f.at(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(f.at(1, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(f.at(2, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("unroll_companion reduces to rollout for order 1 on 100 random systems") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(300, seed));
    std::size_t r = 1 + seed % 5;
    Tensor coeffs = random_matrix(1, r, rng, -0.9, 0.9);
    Tensor scale = random_matrix(1, r, rng, 0.3, 2.0);
    Tensor init = random_matrix(1, r, rng);
    DiagonalDynamics dyn = make_dynamics(coeffs, scale);
    dyn.initial_state().value = init;
    Tensor etas = random_matrix(40, r, rng);

    CompanionSystem sys = build_companion(dyn.mixed_coefficients(pi1()),
                                          dyn.mixed_input_scale(pi1()), &init);
    Tensor a = dyn.rollout(etas, pi1());
    Tensor b = unroll_companion(sys, etas);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("companion recurrence equals the explicit impulse-response convolution") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(400, seed));
    std::size_t r = 2, p = 1 + seed % 3, t_len = 64;
    Tensor coeffs = random_matrix(p, r, rng, -0.55, 0.55);
    Tensor scale = random_matrix(1, r, rng, 0.5, 1.5);
    CompanionSystem sys = build_companion(coeffs, scale);  // zero initial state
    Tensor etas = random_matrix(t_len, r, rng);
    Tensor f = unroll_companion(sys, etas);

    std::vector<Tensor> h;
    for (std::size_t j = 0; j < t_len; ++j) h.push_back(impulse_response(sys, j));
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j <= t; ++j)
          for (std::size_t k = 0; k < r; ++k) s += h[j].at(i, k) * etas.at(t - j, k);
        CHECK(f.at(t, i) == doctest::Approx(s).epsilon(1e-10));
      }
  }
}

TEST_CASE("impulse response: closed forms for order 1") {
  CompanionSystem sys = build_companion(Tensor({1, 2}, {0.5, -0.3}), Tensor({1, 2}, {2.0, 1.0}));
  Tensor h0 = impulse_response(sys, 0);
  CHECK(h0.at(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(h0.at(1, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(h0.at(0, 1) == 0.0);

  CompanionSystem scalar = build_companion(Tensor({1, 1}, {0.5}), Tensor({1, 1}, {1.0}));
  Tensor h3 = impulse_response(scalar, 3);
  CHECK(h3.at(0, 0) == doctest::Approx(0.125).epsilon(1e-14));
}

TEST_CASE("impulse response equals a simulated unit-shock difference") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(500, seed));
    std::size_t r = 3, p = 2, t_len = 30;
    Tensor coeffs = random_matrix(p, r, rng, -0.55, 0.55);
    Tensor scale = random_matrix(1, r, rng, 0.5, 1.5);
    CompanionSystem sys = build_companion(coeffs, scale);
    Tensor etas = random_matrix(t_len, r, rng);
    std::size_t t0 = 5, k = seed % r;
    Tensor shocked = etas;
    shocked.at(t0, k) += 1.0;
    Tensor base = unroll_companion(sys, etas);
    Tensor bumped = unroll_companion(sys, shocked);
    for (std::size_t j = 0; t0 + j < t_len; ++j) {
      Tensor h = impulse_response(sys, j);
      for (std::size_t i = 0; i < r; ++i) {
        CHECK(bumped.at(t0 + j, i) - base.at(t0 + j, i) == doctest::Approx(h.at(i, k)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("all impulse responses are diagonal and decay geometrically") {
  Rng rng(600);
  Tensor coeffs = random_matrix(2, 4, rng, -0.35, 0.35);
  Tensor scale = random_matrix(1, 4, rng, 0.5, 1.5);
  CompanionSystem sys = build_companion(coeffs, scale);
  double prev_norm = 1e300;
  for (std::size_t j = 0; j < 40; ++j) {
    Tensor h = impulse_response(sys, j);
    double norm = 0.0;
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) {
        if (a != b) CHECK(h.at(a, b) == 0.0);
        norm += h.at(a, b) * h.at(a, b);
      }
    if (j >= 20) CHECK(norm < prev_norm + 1e-12);
    if (j >= 20) prev_norm = norm;
  }
  Tensor h39 = impulse_response(sys, 39);
  for (std::size_t a = 0; a < 4; ++a) CHECK(std::abs(h39.at(a, a)) < 1e-3);
}

TEST_CASE("superposition: rollout is affine in the innovations") {
  Rng rng(700);
  Tensor coeffs = random_matrix(2, 3, rng, -0.5, 0.5);
  Tensor scale = random_matrix(1, 3, rng, 0.5, 1.5);
  DiagonalDynamics dyn = make_dynamics(coeffs, scale);
  dyn.initial_state().value = random_matrix(2, 3, rng);
  Tensor e1 = random_matrix(25, 3, rng);
  Tensor e2 = random_matrix(25, 3, rng);
  Tensor esum = e1;
  for (std::size_t i = 0; i < esum.size(); ++i) esum[i] += e2[i];
  Tensor zero({25, 3});

  Tensor f1 = dyn.rollout(e1, pi1());
  Tensor f2 = dyn.rollout(e2, pi1());
  Tensor fs = dyn.rollout(esum, pi1());
  Tensor f0 = dyn.rollout(zero, pi1());
  for (std::size_t i = 0; i < fs.size(); ++i)
    CHECK(fs[i] == doctest::Approx(f1[i] + f2[i] - f0[i]).epsilon(1e-10));
}

TEST_CASE("component decoupling: perturbing one innovation column moves only that factor") {
  Rng rng(800);
  Tensor coeffs = random_matrix(3, 4, rng, -0.5, 0.5);
  Tensor scale = random_matrix(1, 4, rng, 0.5, 1.5);
  DiagonalDynamics dyn = make_dynamics(coeffs, scale);
  Tensor etas = random_matrix(30, 4, rng);
  Tensor base = dyn.rollout(etas, pi1());
  Tensor bumped_etas = etas;
  for (std::size_t t = 0; t < 30; ++t) bumped_etas.at(t, 2) += rng.uniform(-1, 1);
  Tensor bumped = dyn.rollout(bumped_etas, pi1());
  for (std::size_t t = 0; t < 30; ++t)
    for (std::size_t j = 0; j < 4; ++j) {
      if (j == 2) continue;
      CHECK(bumped.at(t, j) == base.at(t, j));
    }
}

TEST_CASE("equivalence class: permuted and scaled innovations yield permuted scaled factors") {
  Rng rng(900);
  std::size_t r = 5, p = 2, t_len = 40;
  Tensor coeffs = random_matrix(p, r, rng, -0.6, 0.6);
  Tensor scale = random_matrix(1, r, rng, 0.5, 1.5);
  Tensor init = random_matrix(p, r, rng);
  DiagonalDynamics dyn = make_dynamics(coeffs, scale);
  dyn.initial_state().value = init;
  Tensor etas = random_matrix(t_len, r, rng);
  Tensor f = dyn.rollout(etas, pi1());

  std::vector<std::size_t> perm = {2, 0, 4, 1, 3};
  std::vector<double> d = {1.7, -0.6, 2.3, 0.4, -1.1};

  // relabeled system: component j <- component perm[j], input scale absorbs d
  Tensor coeffs2({p, r}), scale2({1, r}), init2({p, r}), etas2({t_len, r});
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t l = 0; l < p; ++l) {
      coeffs2.at(l, j) = coeffs.at(l, perm[j]);
      init2.at(l, j) = d[j] * init.at(l, perm[j]);
    }
    scale2.at(0, j) = d[j] * scale.at(0, perm[j]);
    for (std::size_t t = 0; t < t_len; ++t) etas2.at(t, j) = etas.at(t, perm[j]);
  }
  DiagonalDynamics dyn2 = make_dynamics(coeffs2, scale2);
  dyn2.initial_state().value = init2;
  Tensor f2 = dyn2.rollout(etas2, pi1());
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t j = 0; j < r; ++j)
      CHECK(f2.at(t, j) == doctest::Approx(d[j] * f.at(t, perm[j])).epsilon(1e-10));
}

TEST_CASE("rollout gradients flow to coefficients, scales, and initial state") {
  Rng rng(1000);
  DiagonalDynamics dyn(3, 2, 2, rng);
  Tensor etas = random_matrix(12, 3, rng);
  Tensor pi({1, 2}, {0.3, 0.7});
  std::vector<Param*> params;
  dyn.collect_params(params);
  auto build = [&](Tape& t) {
    Value f = dyn.rollout_on_tape(t, t.constant(etas), t.constant(pi));
    return t.sum_all(t.square(f));
  };
  GradCheckResult r = check_gradients(build, params, 1e-5);
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error < 1e-6);
}
