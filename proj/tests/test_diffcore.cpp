// SPDX-License-Identifier: Apache-2.0
//
// Forward-op examples, per-op finite-difference checks, and backward-pass
// properties for the autodiff tape.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ivdfm/autodiff.hpp"
#include "ivdfm/common.hpp"
#include "ivdfm/mlp.hpp"
#include "ivdfm/tensor.hpp"

using namespace ivdfm;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.5, double hi = 1.5) {
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul identity returns the other operand") {
  Tape tape;
  Rng rng(7);
  Tensor m = random_tensor({3, 4}, rng);
  Value out = tape.matmul(tape.constant(Tensor::identity(3)), tape.constant(m));
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(out.val()[i] == doctest::Approx(m[i]).epsilon(1e-15));
}

TEST_CASE("relu clamps negatives") {
  Tape tape;
  Value out = tape.relu(tape.constant(Tensor::row({-1.0, 0.0, 2.0})));
  CHECK(out.val()[0] == 0.0);
  CHECK(out.val()[1] == 0.0);
  CHECK(out.val()[2] == 2.0);
}

TEST_CASE("softmax closed form") {
  // softmax([5, 0]) = [1/(1+e^-5), e^-5/(1+e^-5)]
  Tape tape;
  Value out = tape.softmax_rows(tape.constant(Tensor::row({5.0, 0.0})));
  CHECK(out.val()[0] == doctest::Approx(0.993307).epsilon(1e-6));
  CHECK(out.val()[1] == doctest::Approx(0.006693).epsilon(1e-4));
  CHECK(out.val()[0] + out.val()[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("shape mismatch errors name the op and both shapes") {
  Tape tape;
  Value a = tape.constant(Tensor::zeros({2, 3}));
  Value b = tape.constant(Tensor::zeros({4, 5}));
  CHECK_THROWS_WITH_AS(tape.matmul(a, b), "matmul: shape mismatch (2x3) vs (4x5)",
                       std::invalid_argument);
  CHECK_THROWS_AS(tape.add(a, b), std::invalid_argument);
}

TEST_CASE("backward of a linear sum is ones") {
  Tape tape;
  Param c{"c", Tensor::row({1.0, -2.0, 3.0})};
  Value loss = tape.sum_all(tape.leaf(c));
  tape.backward(loss);
  Tensor g = tape.grad_of(c);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 1.0);
}

TEST_CASE("backward of x^2 at x=3 is 6") {
  Tape tape;
  Param x{"x", Tensor::scalar(3.0)};
  Value loss = tape.sum_all(tape.square(tape.leaf(x)));
  tape.backward(loss);
  CHECK(tape.grad_of(x)[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("non-scalar loss is rejected") {
  Tape tape;
  Value v = tape.constant(Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(tape.backward(v), std::invalid_argument);
}

TEST_CASE("unreachable leaves get zero gradient") {
  Tape tape;
  Param used{"used", Tensor::scalar(2.0)};
  Param unused{"unused", Tensor::row({1.0, 1.0})};
  Value lu = tape.leaf(unused);
  (void)lu;
  Value loss = tape.sum_all(tape.square(tape.leaf(used)));
  tape.backward(loss);
  Tensor g = tape.grad_of(unused);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("gradient linearity: sum of independent subgraphs") {
  Rng rng(11);
  Param a{"a", random_tensor({2, 3}, rng)};
  Param b{"b", random_tensor({2, 3}, rng)};

  // loss = f(a) + g(b) in one graph
  Tape joint;
  Value la = joint.sum_all(joint.square(joint.leaf(a)));
  Value lb = joint.sum_all(joint.tanh_(joint.leaf(b)));
  joint.backward(joint.add(la, lb));
  Tensor ga_joint = joint.grad_of(a);
  Tensor gb_joint = joint.grad_of(b);

  Tape ta;
  ta.backward(ta.sum_all(ta.square(ta.leaf(a))));
  Tape tb;
  tb.backward(tb.sum_all(tb.tanh_(tb.leaf(b))));

  for (std::size_t i = 0; i < ga_joint.size(); ++i)
    CHECK(ga_joint[i] == doctest::Approx(ta.grad_of(a)[i]).epsilon(1e-15));
  for (std::size_t i = 0; i < gb_joint.size(); ++i)
    CHECK(gb_joint[i] == doctest::Approx(tb.grad_of(b)[i]).epsilon(1e-15));
}

TEST_CASE("deterministic replay: identical graphs give bit-identical values") {
  auto run = [] {
    Rng rng(123);
    Tape tape;
    Value x = tape.constant(random_tensor({4, 4}, rng));
    Value y = tape.softmax_rows(tape.tanh_(tape.matmul(x, x)), 0.7);
    return tape.value(y);
  };
  Tensor a = run();
  Tensor b = run();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("check_gradients: linear map is exact to ~1e-10") {
  Rng rng(5);
  Param w{"w", random_tensor({3, 2}, rng)};
  Tensor x = random_tensor({4, 3}, rng);
  auto build = [&](Tape& t) { return t.sum_all(t.matmul(t.constant(x), t.leaf(w))); };
  GradCheckResult r = check_gradients(build, {&w}, 1e-5);
  CHECK(r.checked == 6);
  CHECK(r.max_rel_error < 1e-9);
}

TEST_CASE("check_gradients: every op composes to < 1e-4") {
  // One graph exercising each differentiable op away from kinks.
  Rng rng(31);
  Param w1{"w1", random_tensor({5, 4}, rng)};
  Param b1{"b1", random_tensor({1, 4}, rng)};
  Param w2{"w2", random_tensor({4, 4}, rng)};
  Param s{"s", random_tensor({1, 4}, rng, 0.5, 1.5)};
  Tensor x = random_tensor({6, 5}, rng);
  Tensor mask({6, 4});
  Rng mrng(77);
  for (double& m : mask.values()) m = mrng.uniform() < 0.75 ? 1.0 / 0.75 : 0.0;

  auto build = [&](Tape& t) {
    Value h = t.add_rowvec(t.matmul(t.constant(x), t.leaf(w1)), t.leaf(b1));
    h = t.layer_norm_rows(h);
    h = t.mul_rowvec(h, t.leaf(s));
    Value hr = t.relu(h);
    Value ht = t.tanh_(t.matmul(hr, t.leaf(w2)));
    ht = t.dropout_mask(ht, mask);
    Value sm = t.softmax_rows(ht, 0.5);
    Value lg = t.log_(t.add_scalar(t.square(sm), 0.1));
    Value ab = t.abs_(t.sub(lg, t.mul_scalar(sm, 0.3)));
    Value dv = t.div(ab, t.add_scalar(t.exp_(t.mul_scalar(sm, 0.2)), 0.5));
    Value lse = t.logsumexp_cols(t.concat_cols({dv, sm}));
    Value sl = t.slice_rows(t.concat_rows({lse, lse}), 1, 7);
    Value ms = t.mul(sl, sl);
    return t.add(t.mean_all(t.row_sum(t.slice_cols(ms, 0, 1))), t.sum_all(ms));
  };
  GradCheckResult r = check_gradients(build, {&w1, &b1, &w2, &s}, 1e-5);
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("check_gradients: random 2-layer MLP matches finite differences") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Rng rng(seed);
    Mlp net;
    net.init("mlp", 6, {16, 16}, 3, rng, Activation::Relu, true);
    Tensor x = random_tensor({5, 6}, rng);
    std::vector<Param*> params;
    net.collect_params(params);
    auto build = [&](Tape& t) {
      Value out = net.forward(t, t.constant(x));
      return t.sum_all(t.square(out));
    };
    GradCheckResult r = check_gradients(build, params, 1e-5);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("finite differences per elementary op at random points") {
  Rng rng(99);
  auto check_unary = [&](const char* name, auto make_op, double lo, double hi) {
    Param p{name, random_tensor({3, 3}, rng, lo, hi)};
    auto build = [&](Tape& t) { return t.sum_all(make_op(t, t.leaf(p))); };
    GradCheckResult r = check_gradients(build, {&p}, 1e-6);
    INFO(name);
    CHECK(r.max_rel_error < 1e-4);
  };
  check_unary("tanh", [](Tape& t, Value v) { return t.tanh_(v); }, -2, 2);
  check_unary("exp", [](Tape& t, Value v) { return t.exp_(v); }, -2, 2);
  check_unary("log", [](Tape& t, Value v) { return t.log_(v); }, 0.2, 3);
  check_unary("abs", [](Tape& t, Value v) { return t.abs_(v); }, 0.3, 2);
  check_unary("square", [](Tape& t, Value v) { return t.square(v); }, -2, 2);
  check_unary("softmax", [](Tape& t, Value v) { return t.square(t.softmax_rows(v, 0.4)); }, -2, 2);
  // Plain sum-of-squares of a layer-norm output is nearly constant (the row
  // norm is pinned), which starves finite differences; weight the rows first.
  Tensor lw = random_tensor({1, 3}, rng);
  check_unary("layernorm",
              [&](Tape& t, Value v) {
                return t.square(t.mul_rowvec(t.layer_norm_rows(v), t.constant(lw)));
              },
              -2, 2);
  check_unary("lse", [](Tape& t, Value v) { return t.square(t.logsumexp_cols(v)); }, -2, 2);

  Param a{"a", random_tensor({3, 4}, rng)};
  Param b{"b", random_tensor({4, 2}, rng)};
  auto build2 = [&](Tape& t) { return t.sum_all(t.square(t.matmul(t.leaf(a), t.leaf(b)))); };
  CHECK(check_gradients(build2, {&a, &b}, 1e-6).max_rel_error < 1e-4);

  Param num{"num", random_tensor({2, 3}, rng)};
  Param den{"den", random_tensor({2, 3}, rng, 0.5, 2.0)};
  auto build3 = [&](Tape& t) { return t.sum_all(t.div(t.leaf(num), t.leaf(den))); };
  CHECK(check_gradients(build3, {&num, &den}, 1e-6).max_rel_error < 1e-4);
}

TEST_CASE("non-finite forward values are reported with the op name") {
  Tape tape;
  Value x = tape.constant(Tensor::row({-1.0}));
  Value bad = tape.log_(x);
  (void)bad;
  CHECK_THROWS_WITH_AS(tape.assert_finite(),
                       "non-finite value in op 'log' with shape (1x1)", std::runtime_error);
}

TEST_CASE("adam takes a descent step on a quadratic") {
  Param x{"x", Tensor::row({4.0, -3.0})};
  AdamOptimizer opt({&x}, 0.1);
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 200; ++it) {
    Tape tape;
    Value loss = tape.sum_all(tape.square(tape.leaf(x)));
    if (it == 0) first = tape.scalar(loss);
    last = tape.scalar(loss);
    tape.backward(loss);
    opt.step(tape);
  }
  CHECK(last < 0.05 * first);
}
