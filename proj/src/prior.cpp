// SPDX-License-Identifier: Apache-2.0

#include "ivdfm/prior.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace ivdfm {

const char* family_name(Family f) {
  switch (f) {
    case Family::Laplace: return "laplace";
    case Family::Gaussian: return "gaussian";
    case Family::StudentT: return "student_t";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  if (name == "laplace") return Family::Laplace;
  if (name == "gaussian") return Family::Gaussian;
  if (name == "student_t") return Family::StudentT;
  throw std::invalid_argument(cat("unknown innovation family '", name, "'"));
}

RegimeBank::RegimeBank(std::size_t num_regimes, std::size_t embed_dim, std::size_t aux_dim,
                       double temperature, Rng& rng)
    : num_regimes_(num_regimes), embed_dim_(embed_dim), temperature_(temperature) {
  if (num_regimes == 0) throw std::invalid_argument("RegimeBank: need at least one regime");
  if (temperature <= 0.0) throw std::invalid_argument("RegimeBank: temperature must be > 0");
  embeddings_ = Param{"regimes.embeddings", Tensor({num_regimes, embed_dim})};
  for (double& x : embeddings_.value.values()) x = 0.5 * rng.normal();
  net_.init("regimes.net", aux_dim, {32}, num_regimes, rng, Activation::Relu);
}

RegimeBank::TapeOut RegimeBank::embed_on_tape(Tape& tape, Value aux) const {
  Value logits = net_.forward(tape, aux);
  if (!tape.value(logits).all_finite()) {
    throw std::runtime_error("regime_embedding: non-finite logits");
  }
  Value weights = tape.softmax_rows(logits, temperature_);
  Value embed = tape.matmul(weights, tape.leaf(const_cast<Param&>(embeddings_)));
  return {weights, embed};
}

std::pair<Tensor, Tensor> RegimeBank::embed(const Tensor& aux) const {
  Tape tape;
  TapeOut out = embed_on_tape(tape, tape.constant(aux));
  return {tape.value(out.weights), tape.value(out.embed)};
}

void RegimeBank::collect_params(std::vector<Param*>& out) {
  out.push_back(&embeddings_);
  net_.collect_params(out);
}

InnovationPrior::InnovationPrior(Family family, std::size_t dim, std::size_t aux_dim,
                                 const RegimeBank& bank, Rng& rng, bool mixture,
                                 double student_dof)
    : family_(family), dim_(dim), mixture_(mixture), student_dof_(student_dof), bank_(bank) {
  if (family == Family::StudentT && student_dof <= 2.0) {
    throw std::invalid_argument(cat("InnovationPrior: Student-t needs dof > 2, got ", student_dof));
  }
  // tanh hidden layer: a smooth conditional map keeps the natural-parameter
  // variation full-rank for generic auxiliary probes
  net_.init("prior.net", aux_dim + bank_.embed_dim(), {64}, 2 * dim, rng, Activation::Tanh);
}

InnovationPrior::TapeParams InnovationPrior::conditional_params(Tape& tape, Value aux,
                                                                Value embed) const {
  Value in = tape.concat_cols({aux, embed});
  Value heads = net_.forward(tape, in);
  return {tape.slice_cols(heads, 0, dim_), tape.slice_cols(heads, dim_, 2 * dim_)};
}

Value InnovationPrior::family_log_density(Tape& tape, Value eta, Value loc,
                                          Value log_scale) const {
  Value centered = tape.sub(eta, loc);
  Value inv_scale = tape.exp_(tape.neg(log_scale));
  Value z = tape.mul(centered, inv_scale);
  switch (family_) {
    case Family::Laplace:
      // -log 2 - log b - |z|
      return tape.sub(tape.add_scalar(tape.neg(log_scale), -std::log(2.0)), tape.abs_(z));
    case Family::Gaussian:
      return tape.sub(tape.add_scalar(tape.neg(log_scale), -0.5 * std::log(2.0 * kPi)),
                      tape.mul_scalar(tape.square(z), 0.5));
    case Family::StudentT: {
      double v = student_dof_;
      double c = std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v) - 0.5 * std::log(v * kPi);
      Value body = tape.log_(tape.add_scalar(tape.mul_scalar(tape.square(z), 1.0 / v), 1.0));
      return tape.sub(tape.add_scalar(tape.neg(log_scale), c),
                      tape.mul_scalar(body, 0.5 * (v + 1.0)));
    }
  }
  throw std::logic_error("unreachable family");
}

Value InnovationPrior::log_prob_rows(Tape& tape, Value eta, Value aux) const {
  std::size_t t_len = eta.val().rows();
  RegimeBank::TapeOut reg = bank_.embed_on_tape(tape, aux);
  if (!mixture_ || bank_.num_regimes() == 1) {
    TapeParams p = conditional_params(tape, aux, reg.embed);
    return tape.row_sum(family_log_density(tape, eta, p.loc, p.log_scale));
  }
  // log sum_k pi_k p_k(eta | aux, e_k)
  Value log_pi = tape.log_(reg.weights);  // softmax weights are strictly positive
  Value ones = tape.constant(Tensor::full({t_len, 1}, 1.0));
  std::vector<Value> cols;
  for (std::size_t k = 0; k < bank_.num_regimes(); ++k) {
    Value ek = tape.matmul(ones, tape.slice_rows(tape.leaf(const_cast<Param&>(bank_.embeddings())),
                                                 k, k + 1));
    TapeParams p = conditional_params(tape, aux, ek);
    Value lp_k = tape.row_sum(family_log_density(tape, eta, p.loc, p.log_scale));
    cols.push_back(tape.add(lp_k, tape.slice_cols(log_pi, k, k + 1)));
  }
  return tape.logsumexp_cols(tape.concat_cols(cols));
}

double InnovationPrior::log_prob(const Tensor& eta, const Tensor& aux) const {
  Tape tape;
  Value lp = log_prob_rows(tape, tape.constant(eta), tape.constant(aux));
  return tape.scalar(tape.sum_all(lp));
}

std::pair<Tensor, Tensor> InnovationPrior::conditional_moments(const Tensor& aux) const {
  Tape tape;
  Value aux_v = tape.constant(aux);
  RegimeBank::TapeOut reg = bank_.embed_on_tape(tape, aux_v);
  TapeParams p = conditional_params(tape, aux_v, reg.embed);
  Tensor loc = tape.value(p.loc);
  Tensor scale = tape.value(p.log_scale);
  for (double& s : scale.values()) s = std::exp(s);
  return {loc, scale};
}

Tensor InnovationPrior::sample(const Tensor& aux, Rng& rng) const {
  auto [loc, scale] = conditional_moments(aux);
  Tensor eta({aux.rows(), dim_});
  for (std::size_t t = 0; t < aux.rows(); ++t) {
    for (std::size_t i = 0; i < dim_; ++i) {
      double m = loc.at(t, i), b = scale.at(t, i);
      switch (family_) {
        case Family::Laplace: eta.at(t, i) = rng.laplace(m, b); break;
        case Family::Gaussian: eta.at(t, i) = rng.normal(m, b); break;
        case Family::StudentT:
          eta.at(t, i) = m + b * rng.student_t(static_cast<int>(student_dof_));
          break;
      }
    }
  }
  return eta;
}

double InnovationPrior::kl_estimate(const Tensor& q_mu, const Tensor& q_sigma,
                                    const Tensor& aux_row, std::size_t n_samples,
                                    Rng& rng) const {
  if (n_samples == 0) throw std::invalid_argument("kl_estimate: need at least one sample");
  if (q_mu.size() != dim_ || q_sigma.size() != dim_) {
    throw std::invalid_argument("kl_estimate: posterior moment size mismatch");
  }
  for (double s : q_sigma.values()) {
    if (s <= 0.0) throw std::invalid_argument("kl_estimate: posterior scale must be > 0");
  }
  Tensor aux = aux_row.reshaped({1, aux_row.size()});
  double total = 0.0;
  Tensor eta({1, dim_});
  for (std::size_t s = 0; s < n_samples; ++s) {
    double log_q = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      double eps = rng.normal();
      eta.at(0, i) = q_mu[i] + q_sigma[i] * eps;
      log_q += gaussian_log_pdf(eta.at(0, i), q_mu[i], q_sigma[i]);
    }
    total += log_q - log_prob(eta, aux);
  }
  return total / static_cast<double>(n_samples);
}

double InnovationPrior::kl_gaussian_exact(const Tensor& q_mu, const Tensor& q_sigma,
                                          const Tensor& aux_row) const {
  if (family_ != Family::Gaussian || (mixture_ && bank_.num_regimes() > 1)) {
    throw std::invalid_argument("kl_gaussian_exact: defined for the single-regime Gaussian prior");
  }
  auto [loc, scale] = conditional_moments(aux_row.reshaped({1, aux_row.size()}));
  double total = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    double m = loc.at(0, i), b = scale.at(0, i);
    double mu = q_mu[i], s = q_sigma[i];
    total += std::log(b / s) + (s * s + (mu - m) * (mu - m)) / (2.0 * b * b) - 0.5;
  }
  return total;
}

Tensor InnovationPrior::natural_params(const Tensor& aux_row) const {
  auto [loc, scale] = conditional_moments(aux_row.reshaped({1, aux_row.size()}));
  Tensor lambda({1, 2 * dim_});
  for (std::size_t i = 0; i < dim_; ++i) {
    double m = loc.at(0, i), b = scale.at(0, i);
    if (family_ == Family::Laplace) {
      lambda.at(0, 2 * i) = m / b;
      lambda.at(0, 2 * i + 1) = -1.0 / b;
    } else {
      lambda.at(0, 2 * i) = m / (b * b);
      lambda.at(0, 2 * i + 1) = -0.5 / (b * b);
    }
  }
  return lambda;
}

std::size_t InnovationPrior::lambda_rank(const std::vector<Tensor>& aux_rows) const {
  if (aux_rows.size() < 2) {
    throw std::invalid_argument("lambda_rank: need at least two auxiliary points");
  }
  Tensor base = natural_params(aux_rows[0]);
  Eigen::MatrixXd stack(aux_rows.size() - 1, 2 * dim_);
  for (std::size_t j = 1; j < aux_rows.size(); ++j) {
    Tensor lj = natural_params(aux_rows[j]);
    for (std::size_t c = 0; c < 2 * dim_; ++c) stack(j - 1, c) = lj[c] - base[c];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stack);
  double top = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  if (top <= 0.0) return 0;
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    if (svd.singularValues()(i) > 1e-8 * top) ++rank;
  }
  return rank;
}

void InnovationPrior::collect_params(std::vector<Param*>& out) {
  bank_.collect_params(out);
  net_.collect_params(out);
}

double laplace_log_pdf(double x, double loc, double scale) {
  return -std::log(2.0 * scale) - std::abs(x - loc) / scale;
}

double gaussian_log_pdf(double x, double loc, double scale) {
  double z = (x - loc) / scale;
  return -0.5 * std::log(2.0 * kPi) - std::log(scale) - 0.5 * z * z;
}

double student_t_log_pdf(double x, double loc, double scale, double dof) {
  double z = (x - loc) / scale;
  double c = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
             0.5 * std::log(dof * kPi);
  return c - std::log(scale) - 0.5 * (dof + 1.0) * std::log1p(z * z / dof);
}

double family_log_pdf(Family family, double x, double loc, double scale, double dof) {
  switch (family) {
    case Family::Laplace: return laplace_log_pdf(x, loc, scale);
    case Family::Gaussian: return gaussian_log_pdf(x, loc, scale);
    case Family::StudentT: return student_t_log_pdf(x, loc, scale, dof);
  }
  throw std::logic_error("unreachable family");
}

// --- rotation degeneracy demo ------------------------------------------------

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  return m;
}

void check_orthogonal(const Eigen::MatrixXd& r) {
  Eigen::MatrixXd gram = r.transpose() * r;
  double err = (gram - Eigen::MatrixXd::Identity(r.rows(), r.cols())).cwiseAbs().maxCoeff();
  if (err > 1e-10) {
    throw std::invalid_argument(cat("rotation_degeneracy_demo: matrix is not orthogonal, "
                                    "||R^T R - I|| = ", err));
  }
}

double full_gaussian_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                             const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  Eigen::VectorXd d = x - mean;
  Eigen::VectorXd w = llt.matrixL().solve(d);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) log_det += std::log(llt.matrixL()(i, i));
  return -0.5 * static_cast<double>(cov.rows()) * std::log(2.0 * kPi) - log_det -
         0.5 * w.squaredNorm();
}

}  // namespace

Tensor random_rotation(std::size_t dim, Rng& rng) {
  Eigen::MatrixXd g(dim, dim);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  // Normalize the QR sign convention so the draw is Haar-distributed.
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  Tensor out({dim, dim});
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) out.at(i, j) = q(i, j);
  return out;
}

DegeneracyResult rotation_degeneracy_demo(Family family, std::size_t dim, std::size_t t_len,
                                          const Tensor& rotation, std::uint64_t seed) {
  Eigen::MatrixXd rot = to_eigen(rotation);
  check_orthogonal(rot);

  Rng rng(derive_seed(seed, 0xDE6E));

  // Conditional location/scale schedules standing in for lambda(u_t).
  Eigen::MatrixXd loc(t_len, dim), scale(t_len, dim);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t i = 0; i < dim; ++i) {
      loc(t, i) = rng.uniform(-1.0, 1.0);
      scale(t, i) = rng.uniform(0.4, 1.5);
    }

  // Invertible decoder.
  Eigen::MatrixXd dec(dim, dim);
  double det = 0.0;
  do {
    for (Eigen::Index i = 0; i < dec.rows(); ++i)
      for (Eigen::Index j = 0; j < dec.cols(); ++j) dec(i, j) = rng.normal();
    det = dec.determinant();
  } while (std::abs(det) < 0.1);
  double log_abs_det_dec = std::log(std::abs(det));

  // Simulate data from the original model (noiseless decoder).
  Eigen::MatrixXd innov(t_len, dim);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t i = 0; i < dim; ++i) {
      double m = loc(t, i), b = scale(t, i);
      switch (family) {
        case Family::Laplace: innov(t, i) = rng.laplace(m, b); break;
        case Family::Gaussian: innov(t, i) = rng.normal(m, b); break;
        case Family::StudentT: innov(t, i) = m + b * rng.student_t(4); break;
      }
    }

  // With the deterministic decoder the innovations are exactly recoverable,
  // so the data likelihood is the innovation likelihood plus the Jacobian
  // term; the factor path itself drops out of the comparison.
  DegeneracyResult res;
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t i = 0; i < dim; ++i) {
      res.ll_original +=
          family_log_pdf(family, innov(t, i), loc(t, i), scale(t, i), 4.0);
    }
  }
  res.ll_original -= static_cast<double>(t_len) * log_abs_det_dec;

  // Rotated parameterization: innovations R eta, decoder composed with R^-1.
  // The Gaussian family absorbs the rotation exactly (full covariance
  // R diag(b^2) R^T); a factorized non-Gaussian family can only match the
  // per-component variances diag(R diag(b^2) R^T).
  double log_abs_det_rot = std::log(std::abs((dec * rot.transpose()).determinant()));
  for (std::size_t t = 0; t < t_len; ++t) {
    Eigen::VectorXd eta = innov.row(t).transpose();
    Eigen::VectorXd eta_rot = rot * eta;
    Eigen::VectorXd m_rot = rot * loc.row(t).transpose();
    if (family == Family::Gaussian) {
      Eigen::MatrixXd cov = scale.row(t).transpose().array().square().matrix().asDiagonal();
      res.ll_rotated += full_gaussian_log_pdf(eta_rot, m_rot, rot * cov * rot.transpose());
    } else {
      for (std::size_t i = 0; i < dim; ++i) {
        double var = 0.0;
        for (std::size_t j = 0; j < dim; ++j)
          var += rot(i, j) * rot(i, j) * scale(t, j) * scale(t, j);
        res.ll_rotated += family_log_pdf(family, eta_rot(i), m_rot(i), std::sqrt(var), 4.0);
      }
    }
  }
  res.ll_rotated -= static_cast<double>(t_len) * log_abs_det_rot;
  return res;
}

DegeneracyResult rotation_degeneracy_demo(Family family, std::size_t dim, std::size_t t_len,
                                          std::uint64_t seed) {
  Rng rot_rng(derive_seed(seed, 0x207A));
  return rotation_degeneracy_demo(family, dim, t_len, random_rotation(dim, rot_rng), seed);
}

}  // namespace ivdfm
