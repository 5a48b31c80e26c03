// SPDX-License-Identifier: Apache-2.0

#include "ivdfm/synthdata.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "ivdfm/common.hpp"

namespace ivdfm {

namespace {

constexpr std::size_t kSegments = 6;       // distinct prior regimes across time
constexpr double kLeakySlope = 0.2;
constexpr double kObsNoiseRatio = 1.2;  // noise std per series, relative to its clean std

// Semi-orthogonal {rows, cols} matrix (orthonormal columns) from a seeded
// Gaussian draw, via Householder QR.
Tensor orthogonal_init(std::size_t rows, std::size_t cols, Rng& rng) {
  Eigen::MatrixXd g(rows, cols);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  // Fix the QR sign ambiguity so the map is a pure function of the seed.
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (q(0, j) < 0.0) q.col(j) = -q.col(j);
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t.at(i, j) = q(i, j);
  return t;
}

// Equalizes latent channel scales before mixing. With comparable variances
// the observation covariance has near-degenerate leading eigenvalues, so a
// principal-component fit recovers the span but not the axes: the classical
// rotational indeterminacy the conditional prior is meant to resolve.
Tensor standardize_columns(const Tensor& f) {
  Tensor z = f;
  std::size_t t_len = f.rows(), r = f.cols();
  for (std::size_t j = 0; j < r; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) mean += f.at(t, j);
    mean /= static_cast<double>(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      double d = f.at(t, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(t_len);
    double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (std::size_t t = 0; t < t_len; ++t) z.at(t, j) = (f.at(t, j) - mean) / sd;
  }
  return z;
}

// Per-component monotone curvature followed by a two-layer leaky-ReLU random
// network with orthogonally initialized weights and biased hidden units.
//
// The curvature stage bends each latent channel through a strictly increasing
// piecewise-linear map (a sum of shifted leaky-ReLU ramps), which destroys
// linear recoverability of the latents while staying trivially invertible;
// the network stage then entangles channels. Principal components of the
// output recover neither the axes nor the span well, matching the observed
// failure of linear factor analysis on this data family, while a small
// nonlinear encoder can still invert the map.
struct Mixing {
  static constexpr std::size_t kBendKnots = 4;

  Tensor bend_base;    // {1, r} base slopes
  Tensor bend_knot;    // {r, knots}
  Tensor bend_gain;    // {r, knots} nonnegative ramp gains
  Tensor w1;           // {r, H}
  Tensor hidden_bias;  // {1, H}
  Tensor wm;           // {H, H}
  Tensor mid_bias;     // {1, H}
  Tensor wm2;          // {H, H}
  Tensor mid_bias2;    // {1, H}
  Tensor w2;           // {H, N}

  static Mixing draw(std::size_t n_series, std::size_t n_factors, Rng& rng) {
    std::size_t hidden = 2 * n_series;
    Mixing m;
    m.bend_base = Tensor({1, n_factors});
    m.bend_knot = Tensor({n_factors, kBendKnots});
    m.bend_gain = Tensor({n_factors, kBendKnots});
    for (std::size_t j = 0; j < n_factors; ++j) {
      m.bend_base.at(0, j) = rng.uniform(0.05, 0.15);
      for (std::size_t k = 0; k < kBendKnots; ++k) {
        m.bend_knot.at(j, k) = rng.uniform(-1.6, 1.6);
        m.bend_gain.at(j, k) = rng.uniform(0.3, 1.6);
      }
    }
    Tensor w1t = orthogonal_init(hidden, n_factors, rng);
    m.w1 = Tensor({n_factors, hidden});
    for (std::size_t i = 0; i < n_factors; ++i)
      for (std::size_t j = 0; j < hidden; ++j) m.w1.at(i, j) = w1t.at(j, i);
    m.hidden_bias = Tensor({1, hidden});
    for (double& x : m.hidden_bias.values()) x = rng.uniform(-0.8, 0.8);
    m.wm = orthogonal_init(hidden, hidden, rng);
    m.mid_bias = Tensor({1, hidden});
    for (double& x : m.mid_bias.values()) x = rng.uniform(-0.8, 0.8);
    m.wm2 = orthogonal_init(hidden, hidden, rng);
    m.mid_bias2 = Tensor({1, hidden});
    for (double& x : m.mid_bias2.values()) x = rng.uniform(-0.8, 0.8);
    m.w2 = orthogonal_init(hidden, n_series, rng);
    return m;
  }

  double bend(std::size_t j, double x) const {
    double out = bend_base.at(0, j) * x;
    for (std::size_t k = 0; k < kBendKnots; ++k) {
      double v = x - bend_knot.at(j, k);
      out += bend_gain.at(j, k) * (v > 0.0 ? v : kLeakySlope * v);
    }
    return out;
  }

  // standardize_bent rescales the curved channels to a common variance so no
  // channel dominates the principal axes of the output; the factor-recovery
  // suites enable it, the structural-system map keeps a fixed (stateless)
  // transformation so paired replays share the identical observation map.
  Tensor apply(const Tensor& factors, bool standardize_bent = true) const {
    std::size_t t_len = factors.rows(), r = factors.cols();
    std::size_t hidden = w1.cols(), n = w2.cols();
    Tensor bent({t_len, r});
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t j = 0; j < r; ++j) bent.at(t, j) = bend(j, factors.at(t, j));
    if (standardize_bent) bent = standardize_columns(bent);
    Tensor out({t_len, n});
    std::vector<double> h(hidden), h2(hidden);
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t j = 0; j < hidden; ++j) {
        double s = hidden_bias.at(0, j);
        for (std::size_t k = 0; k < r; ++k) s += bent.at(t, k) * w1.at(k, j);
        h[j] = s > 0.0 ? s : kLeakySlope * s;
      }
      for (std::size_t j = 0; j < hidden; ++j) {
        double s = mid_bias.at(0, j);
        for (std::size_t k = 0; k < hidden; ++k) s += h[k] * wm.at(k, j);
        h2[j] = s > 0.0 ? s : kLeakySlope * s;
      }
      for (std::size_t j = 0; j < hidden; ++j) {
        double s = mid_bias2.at(0, j);
        for (std::size_t k = 0; k < hidden; ++k) s += h2[k] * wm2.at(k, j);
        h[j] = s > 0.0 ? s : kLeakySlope * s;
      }
      h2 = h;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < hidden; ++k) s += h2[k] * w2.at(k, j);
        out.at(t, j) = s > 0.0 ? s : kLeakySlope * s;
      }
    }
    return out;
  }
};


// Additive Gaussian noise scaled to each series' clean standard deviation.
void add_relative_noise(Tensor& y, double ratio, Rng& rng) {
  std::size_t t_len = y.rows(), n = y.cols();
  for (std::size_t j = 0; j < n; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) mean += y.at(t, j);
    mean /= static_cast<double>(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      double d = y.at(t, j) - mean;
      var += d * d;
    }
    double sd = std::sqrt(var / static_cast<double>(t_len));
    for (std::size_t t = 0; t < t_len; ++t) y.at(t, j) += ratio * sd * rng.normal();
  }
}

std::size_t segment_of(std::size_t t, std::size_t t_len) {
  return std::min(kSegments - 1, t * kSegments / t_len);
}

// Per-(segment, component) Laplace parameters; locations and scales spread
// widely enough that the conditional prior varies across segments.
struct SegmentLaw {
  Tensor loc;    // {segments, r}
  Tensor scale;  // {segments, r}

  static SegmentLaw draw(std::size_t n_factors, Rng& rng) {
    SegmentLaw law;
    law.loc = Tensor({kSegments, n_factors});
    law.scale = Tensor({kSegments, n_factors});
    for (std::size_t s = 0; s < kSegments; ++s)
      for (std::size_t j = 0; j < n_factors; ++j) {
        law.loc.at(s, j) = rng.uniform(-1.5, 1.5);
        law.scale.at(s, j) = rng.uniform(0.15, 1.8);
      }
    return law;
  }
};

void check_sizes(std::size_t n_series, std::size_t n_factors) {
  if (n_factors > n_series) {
    throw std::invalid_argument(cat("synthetic DGP: factor count ", n_factors,
                                    " exceeds series count ", n_series));
  }
}

Eigen::MatrixXd tensor_to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  return m;
}

}  // namespace

Tensor timestep_features(std::size_t rows, std::size_t span, std::size_t offset) {
  Tensor u({rows, 3});
  double denom = static_cast<double>(span);
  for (std::size_t i = 0; i < rows; ++i) {
    double t = static_cast<double>(offset + i) / denom;
    u.at(i, 0) = t;
    u.at(i, 1) = std::sin(2.0 * kPi * t);
    u.at(i, 2) = std::cos(2.0 * kPi * t);
  }
  return u;
}

Tensor constant_features(std::size_t rows) {
  Tensor u({rows, 3});
  for (std::size_t i = 0; i < rows; ++i) {
    u.at(i, 0) = 0.0;
    u.at(i, 1) = 0.0;
    u.at(i, 2) = 1.0;
  }
  return u;
}

SyntheticDataset gen_static_dgp(std::size_t t_len, std::size_t n_series, std::size_t n_factors,
                                std::uint64_t seed) {
  check_sizes(n_series, n_factors);
  Rng rng(derive_seed(seed, 0x5741));
  SegmentLaw law = SegmentLaw::draw(n_factors, rng);
  Mixing mix = Mixing::draw(n_series, n_factors, rng);

  SyntheticDataset ds;
  ds.seed = seed;
  ds.kind = "static";
  ds.true_factors = Tensor({t_len, n_factors});
  for (std::size_t t = 0; t < t_len; ++t) {
    std::size_t s = segment_of(t, t_len);
    for (std::size_t j = 0; j < n_factors; ++j) {
      ds.true_factors.at(t, j) = rng.laplace(law.loc.at(s, j), law.scale.at(s, j));
    }
  }
  ds.observations = mix.apply(standardize_columns(ds.true_factors));
  add_relative_noise(ds.observations, kObsNoiseRatio, rng);
  ds.aux = timestep_features(t_len, t_len);
  return ds;
}

SyntheticDataset gen_dynamic_dgp(std::size_t t_len, std::size_t n_series, std::size_t n_factors,
                                 std::size_t ar_order, std::uint64_t seed) {
  check_sizes(n_series, n_factors);
  if (ar_order == 0) throw std::invalid_argument("gen_dynamic_dgp: AR order must be >= 1");
  Rng rng(derive_seed(seed, 0xD119));
  SegmentLaw law = SegmentLaw::draw(n_factors, rng);
  Mixing mix = Mixing::draw(n_series, n_factors, rng);

  // Stable per-factor AR coefficients: tanh keeps each lag in (-1, 1); the
  // companion-block spectral radius is the stability criterion, so resample
  // any factor whose block is (near-)unstable.
  Tensor coeffs({ar_order, n_factors});
  for (std::size_t j = 0; j < n_factors; ++j) {
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      std::vector<double> a(ar_order);
      // persistent lag-1 behavior with mild higher-order structure
      a[0] = std::tanh(rng.normal(1.4, 0.25));
      for (std::size_t l = 1; l < ar_order; ++l) a[l] = std::tanh(rng.normal(0.0, 0.2));
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(ar_order, ar_order);
      for (std::size_t l = 0; l < ar_order; ++l) block(0, l) = a[l];
      for (std::size_t l = 1; l < ar_order; ++l) block(l, l - 1) = 1.0;
      double rho = block.eigenvalues().cwiseAbs().maxCoeff();
      if (rho < 0.97) {
        for (std::size_t l = 0; l < ar_order; ++l) coeffs.at(l, j) = a[l];
        ok = true;
      }
    }
    if (!ok) {
      throw std::runtime_error("gen_dynamic_dgp: failed to sample a stable AR block");
    }
  }

  SyntheticDataset ds;
  ds.seed = seed;
  ds.kind = "dynamic";
  ds.innovations = Tensor({t_len, n_factors});
  for (std::size_t t = 0; t < t_len; ++t) {
    std::size_t s = segment_of(t, t_len);
    for (std::size_t j = 0; j < n_factors; ++j) {
      ds.innovations.at(t, j) = rng.laplace(law.loc.at(s, j), law.scale.at(s, j));
    }
  }

  // Diagonal AR(p) recursion from zero initial lags.
  ds.true_factors = Tensor({t_len, n_factors});
  for (std::size_t j = 0; j < n_factors; ++j) {
    std::vector<double> lags(ar_order, 0.0);
    for (std::size_t t = 0; t < t_len; ++t) {
      double next = ds.innovations.at(t, j);
      for (std::size_t l = 0; l < ar_order; ++l) next += coeffs.at(l, j) * lags[l];
      for (std::size_t l = ar_order; l-- > 1;) lags[l] = lags[l - 1];
      lags[0] = next;
      ds.true_factors.at(t, j) = next;
    }
  }

  ds.observations = mix.apply(standardize_columns(ds.true_factors));
  add_relative_noise(ds.observations, kObsNoiseRatio, rng);
  ds.aux = timestep_features(t_len, t_len);
  return ds;
}

Tensor ScmSpec::transition_at(std::size_t t) const {
  std::size_t r = state_dim;
  Tensor a({r, r});
  switch (variant) {
    case Variant::Base:
      for (std::size_t i = 0; i < r; ++i) a.at(i, i) = base_rho;
      break;
    case Variant::Regime: {
      double rho = ((t / regime_period) % 2 == 0) ? regime_rho_low : regime_rho_high;
      for (std::size_t i = 0; i < r; ++i) a.at(i, i) = rho;
      break;
    }
    case Variant::Chain:
      // factor i feeds factor i+1, never backward
      for (std::size_t i = 0; i < r; ++i) a.at(i, i) = chain_diag;
      for (std::size_t i = 0; i + 1 < r; ++i) a.at(i + 1, i) = chain_coupling;
      break;
  }
  return a;
}

Tensor ScmSpec::loading() const {
  Rng rng(derive_seed(seed, 0xC0AD));
  Tensor c({obs_dim, state_dim});
  for (double& x : c.values()) x = rng.normal();
  for (std::size_t j = 0; j < state_dim; ++j) {
    double norm = 0.0;
    for (std::size_t i = 0; i < obs_dim; ++i) norm += c.at(i, j) * c.at(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < obs_dim; ++i) c.at(i, j) /= norm;
  }
  return c;
}

double ScmSpec::spectral_radius() const {
  double rho = 0.0;
  for (std::size_t t : {std::size_t{0}, regime_period}) {
    Eigen::MatrixXd a = tensor_to_eigen(transition_at(t));
    rho = std::max(rho, a.eigenvalues().cwiseAbs().maxCoeff());
  }
  return rho;
}

namespace {

Tensor nonlinear_obs_map(const ScmSpec& spec, const Tensor& states) {
  Rng rng(derive_seed(spec.seed, 0x90B5));
  Mixing mix = Mixing::draw(spec.obs_dim, spec.state_dim, rng);
  return mix.apply(states, /*standardize_bent=*/false);
}

Tensor observe(const ScmSpec& spec, const Tensor& states) {
  if (spec.nonlinear_obs) return nonlinear_obs_map(spec, states);
  Tensor c = spec.loading();
  std::size_t t_len = states.rows();
  Tensor y({t_len, spec.obs_dim});
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t i = 0; i < spec.obs_dim; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < spec.state_dim; ++j) s += c.at(i, j) * states.at(t, j);
      y.at(t, i) = s;
    }
  return y;
}

}  // namespace

ScmData replay_scm(const ScmSpec& spec, const Tensor& shocks) {
  std::size_t t_len = shocks.rows(), r = spec.state_dim;
  if (shocks.cols() != r) {
    throw std::invalid_argument("replay_scm: shock dimension mismatch");
  }
  ScmData data;
  data.shocks = shocks;
  data.states = Tensor({t_len, r});
  std::vector<double> prev(r, 0.0), next(r, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    Tensor a = spec.transition_at(t);
    for (std::size_t i = 0; i < r; ++i) {
      double s = shocks.at(t, i);
      for (std::size_t j = 0; j < r; ++j) s += a.at(i, j) * prev[j];
      next[i] = s;
    }
    for (std::size_t i = 0; i < r; ++i) {
      prev[i] = next[i];
      data.states.at(t, i) = next[i];
    }
  }
  data.observations = observe(spec, data.states);
  return data;
}

ScmData gen_scm(const ScmSpec& spec, std::size_t t_len, std::uint64_t seed) {
  if (spec.spectral_radius() >= 1.0) {
    throw std::invalid_argument(
        cat("gen_scm: unstable transition, spectral radius ", spec.spectral_radius()));
  }
  Rng rng(derive_seed(seed, 0x5C11));
  Tensor shocks({t_len, spec.state_dim});
  for (double& e : shocks.values()) e = rng.laplace(0.0, spec.shock_scale);
  return replay_scm(spec, shocks);
}

Tensor true_irf(const ScmSpec& spec, std::size_t shocked, double magnitude, std::size_t horizon,
                std::size_t t0) {
  if (spec.nonlinear_obs) {
    throw std::invalid_argument(
        "true_irf: analytic IRF undefined for a nonlinear observation map; use simulated_irf");
  }
  if (shocked >= spec.state_dim) {
    throw std::invalid_argument(cat("true_irf: component ", shocked, " out of range"));
  }
  Tensor c = spec.loading();
  std::size_t r = spec.state_dim, n = spec.obs_dim;
  std::vector<double> state(r, 0.0);
  state[shocked] = magnitude;
  Tensor irf({horizon + 1, n});
  for (std::size_t h = 0; h <= horizon; ++h) {
    if (h > 0) {
      // ordered product of the transitions in force along the schedule
      Tensor a = spec.transition_at(t0 + h);
      std::vector<double> nxt(r, 0.0);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) nxt[i] += a.at(i, j) * state[j];
      state = nxt;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < r; ++j) s += c.at(i, j) * state[j];
      irf.at(h, i) = s;
    }
  }
  return irf;
}

Tensor simulated_irf(const ScmSpec& spec, const ScmData& data, std::size_t t0, std::size_t shocked,
                     double magnitude, std::size_t horizon) {
  std::size_t t_len = data.shocks.rows();
  if (t0 + horizon >= t_len) {
    throw std::invalid_argument("simulated_irf: horizon runs past the sample");
  }
  if (shocked >= spec.state_dim) {
    throw std::invalid_argument(cat("simulated_irf: component ", shocked, " out of range"));
  }
  Tensor do_shocks = data.shocks;
  Tensor null_shocks = data.shocks;
  do_shocks.at(t0, shocked) = magnitude;
  null_shocks.at(t0, shocked) = 0.0;  // baseline pins the shock at its mean
  ScmData did = replay_scm(spec, do_shocks);
  ScmData base = replay_scm(spec, null_shocks);
  Tensor irf({horizon + 1, spec.obs_dim});
  for (std::size_t h = 0; h <= horizon; ++h)
    for (std::size_t i = 0; i < spec.obs_dim; ++i)
      irf.at(h, i) = did.observations.at(t0 + h, i) - base.observations.at(t0 + h, i);
  return irf;
}

}  // namespace ivdfm
