// SPDX-License-Identifier: Apache-2.0

#include "ivdfm/runners.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ivdfm/baselines.hpp"
#include "ivdfm/common.hpp"
#include "ivdfm/intervene.hpp"
#include "ivdfm/prior.hpp"
#include "ivdfm/synthdata.hpp"
#include "ivdfm/vimodel.hpp"

namespace ivdfm {

namespace {

namespace fs = std::filesystem;

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

struct RecoveryScores {
  double mcc_v = 0.0, subspace = 0.0, smooth = 0.0, r2 = 0.0;
};

RecoveryScores score_factors(const Tensor& f_true, const Tensor& f_hat) {
  RecoveryScores s;
  s.mcc_v = mcc(f_true, f_hat).mcc;
  s.subspace = subspace_distance(f_true, f_hat);
  s.smooth = smoothness(f_hat);
  s.r2 = trace_r2(f_true, f_hat);
  return s;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  double sd = xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0;
  return {m, sd};
}

// Matched recovered factors, sign-corrected and rescaled to the true factor
// scale for side-by-side trajectory plots.
Tensor matched_trajectories(const Tensor& f_true, const Tensor& f_hat) {
  MatchResult match = mcc(f_true, f_hat);
  std::size_t t_len = f_true.rows(), r = f_true.cols();
  Tensor out({t_len, 2 * r});
  for (std::size_t j = 0; j < r; ++j) {
    double mt = 0.0, vt = 0.0, mh = 0.0, vh = 0.0;
    std::size_t src = match.permutation[j];
    for (std::size_t t = 0; t < t_len; ++t) {
      mt += f_true.at(t, j);
      mh += f_hat.at(t, src);
    }
    mt /= static_cast<double>(t_len);
    mh /= static_cast<double>(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      vt += (f_true.at(t, j) - mt) * (f_true.at(t, j) - mt);
      vh += (f_hat.at(t, src) - mh) * (f_hat.at(t, src) - mh);
    }
    double st = std::sqrt(vt / static_cast<double>(t_len));
    double sh = std::sqrt(vh / static_cast<double>(t_len));
    if (sh <= 0.0) sh = 1.0;
    double sign = match.matched_sign[j] >= 0.0 ? 1.0 : -1.0;
    for (std::size_t t = 0; t < t_len; ++t) {
      out.at(t, j) = f_true.at(t, j);
      out.at(t, r + j) = mt + sign * st * (f_hat.at(t, src) - mh) / sh;
    }
  }
  return out;
}

std::string fmt(double x) { return format_double(x); }

}  // namespace

void write_csv_text(const std::string& path, const std::vector<std::string>& columns,
                    const std::vector<std::vector<std::string>>& rows,
                    const std::vector<std::string>& footers) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(cat("write_csv_text: cannot open '", path, "'"));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) out << ",";
    out << columns[c];
  }
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != columns.size()) {
      throw std::invalid_argument("write_csv_text: row width mismatch");
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ",";
      out << row[c];
    }
    out << "\n";
  }
  for (const std::string& f : footers) out << "# " << f << "\n";
}

RunOutputs run_recovery(const ExperimentConfig& config) {
  ensure_dir(config.out_dir);
  std::string hash_footer = cat("config_hash=", config_hash(config));
  RunOutputs outputs;
  std::ofstream log(join_path(config.out_dir, "recovery_log.txt"));
  outputs.files.push_back(join_path(config.out_dir, "recovery_log.txt"));

  std::vector<std::vector<std::string>> rows;
  std::vector<RecoveryScores> model_scores, baseline_scores;

  for (std::uint64_t seed : config.seeds) {
    SyntheticDataset ds =
        config.dgp.kind == "static"
            ? gen_static_dgp(config.dgp.t_len, config.dgp.n_series, config.dgp.n_factors, seed)
            : gen_dynamic_dgp(config.dgp.t_len, config.dgp.n_series, config.dgp.n_factors,
                              config.dgp.ar_order, seed);

    Scaler scaler = Scaler::fit(ds.observations);
    Tensor y = scaler.apply(ds.observations);

    TrainConfig tc = config.train;
    tc.seed = seed;
    Rng model_rng(derive_seed(seed, 0xA11));
    VIModel model(tc, y.cols(), model_rng);
    Tensor u = model.aux_features(y.rows(), y.rows());
    Rng train_rng(derive_seed(seed, 0xB22));
    model.train_window(y, u, train_rng);
    Tensor f_model = model.posterior_factors(y, u);
    RecoveryScores sm = score_factors(ds.true_factors, f_model);
    model_scores.push_back(sm);

    PcaDfm dfm = fit_pca_dfm(ds.observations, tc.num_factors, tc.factor_order);
    RecoveryScores sb = score_factors(ds.true_factors, dfm.fit_factors);
    baseline_scores.push_back(sb);

    rows.push_back({std::to_string(seed), "ivdfm", fmt(sm.mcc_v), fmt(sm.subspace),
                    fmt(sm.smooth), fmt(sm.r2)});
    rows.push_back({std::to_string(seed), "pca_dfm", fmt(sb.mcc_v), fmt(sb.subspace),
                    fmt(sb.smooth), fmt(sb.r2)});

    std::string traj_model = join_path(config.out_dir, cat("trajectory_ivdfm_seed", seed, ".csv"));
    std::string traj_base = join_path(config.out_dir, cat("trajectory_pca_dfm_seed", seed, ".csv"));
    std::vector<std::string> traj_cols;
    for (std::size_t j = 0; j < tc.num_factors; ++j) traj_cols.push_back(cat("true_", j));
    for (std::size_t j = 0; j < tc.num_factors; ++j) traj_cols.push_back(cat("recovered_", j));
    write_csv(traj_model, traj_cols, matched_trajectories(ds.true_factors, f_model),
              {hash_footer});
    write_csv(traj_base, traj_cols, matched_trajectories(ds.true_factors, dfm.fit_factors),
              {hash_footer});
    outputs.files.push_back(traj_model);
    outputs.files.push_back(traj_base);

    // identifiability precondition diagnostic for the run log
    std::vector<Tensor> probes;
    for (std::size_t i = 0; i <= tc.num_factors; ++i) {
      std::size_t t = i * (y.rows() - 1) / tc.num_factors;
      Tensor row({1, u.cols()});
      for (std::size_t c = 0; c < u.cols(); ++c) row.at(0, c) = u.at(t, c);
      probes.push_back(row);
    }
    std::size_t rank = model.prior().lambda_rank(probes);
    log << "seed " << seed << " lambda_rank " << rank << " (context "
        << (tc.constant_context ? "constant" : "timestep") << ")\n";
  }

  std::string metrics_path = join_path(config.out_dir, "recovery_metrics.csv");
  write_csv_text(metrics_path, {"seed", "model", "mcc", "subspace", "smoothness", "trace_r2"},
                 rows, {hash_footer});
  outputs.files.push_back(metrics_path);

  auto collect = [](const std::vector<RecoveryScores>& xs, auto get) {
    std::vector<double> v;
    for (const RecoveryScores& s : xs) v.push_back(get(s));
    return v;
  };
  std::vector<std::vector<std::string>> summary;
  for (const auto& [name, scores] :
       {std::pair<std::string, const std::vector<RecoveryScores>*>{"ivdfm", &model_scores},
        {"pca_dfm", &baseline_scores}}) {
    auto [mcc_m, mcc_s] = mean_std(collect(*scores, [](auto& s) { return s.mcc_v; }));
    auto [sub_m, sub_s] = mean_std(collect(*scores, [](auto& s) { return s.subspace; }));
    auto [smo_m, smo_s] = mean_std(collect(*scores, [](auto& s) { return s.smooth; }));
    auto [r2_m, r2_s] = mean_std(collect(*scores, [](auto& s) { return s.r2; }));
    summary.push_back({name, fmt(mcc_m), fmt(mcc_s), fmt(sub_m), fmt(sub_s), fmt(smo_m),
                       fmt(smo_s), fmt(r2_m), fmt(r2_s)});
  }
  std::string summary_path = join_path(config.out_dir, "recovery_summary.csv");
  write_csv_text(summary_path,
                 {"model", "mcc_mean", "mcc_std", "subspace_mean", "subspace_std",
                  "smoothness_mean", "smoothness_std", "trace_r2_mean", "trace_r2_std"},
                 summary, {hash_footer});
  outputs.files.push_back(summary_path);
  return outputs;
}

namespace {

ScmSpec spec_for(const ScmConfig& sc, const std::string& variant, std::uint64_t seed) {
  ScmSpec spec;
  spec.variant = variant == "regime"  ? ScmSpec::Variant::Regime
                 : variant == "chain" ? ScmSpec::Variant::Chain
                                      : ScmSpec::Variant::Base;
  spec.state_dim = sc.state_dim;
  spec.obs_dim = sc.obs_dim;
  spec.seed = seed;
  return spec;
}

}  // namespace

RunOutputs run_intervention(const ExperimentConfig& config) {
  ensure_dir(config.out_dir);
  std::string hash_footer = cat("config_hash=", config_hash(config));
  RunOutputs outputs;

  struct GridRow {
    std::string section, variant;
    std::size_t t_len, r_fit;
  };
  std::vector<GridRow> grid;
  const std::vector<std::string> variants = {"base", "regime", "chain"};
  bool has_grid = !config.scm.t_grid.empty() || !config.scm.r_fit_grid.empty();
  if (!has_grid) {
    grid.push_back({"single", config.scm.variant, config.scm.t_len, config.scm.state_dim});
  } else {
    for (const std::string& v : variants)
      grid.push_back({"variants", v, config.scm.t_len, config.scm.state_dim});
    for (std::size_t t : config.scm.t_grid)
      for (const std::string& v : variants) grid.push_back({"varying_t", v, t, config.scm.state_dim});
    for (std::size_t r : config.scm.r_fit_grid)
      for (const std::string& v : variants) grid.push_back({"misspecified_r", v, config.scm.t_len, r});
  }

  std::vector<std::vector<std::string>> agg_rows, seed_rows;
  for (const GridRow& row : grid) {
    InterventionConfig ic;
    ic.t0 = config.scm.t0;
    ic.component = config.scm.component;
    ic.magnitude = config.scm.magnitude;
    ic.horizon = config.scm.horizon;
    ic.oracle_model = config.oracle_model;
    ic.train = config.train;
    ic.train.num_factors = row.r_fit;

    // the structural system is fixed per grid row; per-seed randomness drives
    // the shocks and the training
    ScmSpec spec = spec_for(config.scm, row.variant, derive_seed(0xC0FFEE, row.t_len + row.r_fit));
    InterventionSummary s = run_intervention_experiment(spec, row.t_len, config.seeds, ic);

    for (std::size_t i = 0; i < s.per_seed.size(); ++i) {
      const IrfResult& r = s.per_seed[i];
      seed_rows.push_back({row.section, row.variant, std::to_string(row.t_len),
                           std::to_string(row.r_fit), std::to_string(config.seeds[i]),
                           fmt(r.metrics.mse), fmt(r.metrics.mae), fmt(r.metrics.sign_accuracy),
                           fmt(r.metrics.correlation), std::to_string(r.matched_component),
                           fmt(r.matched_sign), fmt(r.alignment_corr)});
    }
    agg_rows.push_back({row.section, row.variant, std::to_string(row.t_len),
                        std::to_string(row.r_fit), fmt(s.mean.mse), fmt(s.stddev.mse),
                        fmt(s.mean.mae), fmt(s.stddev.mae), fmt(s.mean.sign_accuracy),
                        fmt(s.stddev.sign_accuracy), fmt(s.mean.correlation),
                        fmt(s.stddev.correlation), std::to_string(s.failed_seeds.size())});
  }

  std::string seeds_path = join_path(config.out_dir, "intervention_seeds.csv");
  write_csv_text(seeds_path,
                 {"section", "variant", "t_len", "r_fit", "seed", "irf_mse", "irf_mae",
                  "sign_acc", "irf_corr", "matched_component", "matched_sign", "alignment_corr"},
                 seed_rows, {hash_footer});
  outputs.files.push_back(seeds_path);

  std::string agg_path = join_path(config.out_dir, "intervention_summary.csv");
  write_csv_text(agg_path,
                 {"section", "variant", "t_len", "r_fit", "irf_mse_mean", "irf_mse_std",
                  "irf_mae_mean", "irf_mae_std", "sign_acc_mean", "sign_acc_std",
                  "irf_corr_mean", "irf_corr_std", "failed_seeds"},
                 agg_rows, {hash_footer});
  outputs.files.push_back(agg_path);
  return outputs;
}

QuantileGrid naive_quantiles(const QuantileGrid& model_grid, const Tensor& context) {
  std::size_t horizon = model_grid.q50.rows(), n = model_grid.q50.cols();
  QuantileGrid naive;
  naive.q10 = Tensor({horizon, n});
  naive.q50 = Tensor({horizon, n});
  naive.q90 = Tensor({horizon, n});
  for (std::size_t h = 0; h < horizon; ++h) {
    for (std::size_t j = 0; j < n; ++j) {
      double median = context.at(context.rows() - 1, j);
      naive.q50.at(h, j) = median;
      naive.q10.at(h, j) = median - (model_grid.q50.at(h, j) - model_grid.q10.at(h, j));
      naive.q90.at(h, j) = median + (model_grid.q90.at(h, j) - model_grid.q50.at(h, j));
    }
  }
  return naive;
}

RunOutputs run_forecast(const ExperimentConfig& config) {
  ensure_dir(config.out_dir);
  std::string hash_footer = cat("config_hash=", config_hash(config));
  RunOutputs outputs;

  CsvTable table = ingest_csv(config.forecast.dataset_csv, config.forecast.has_header,
                              config.forecast.timestamp_col);
  const Tensor& raw = table.values;
  std::size_t t_total = raw.rows();
  std::size_t train_end = (t_total * 6) / 10;
  std::size_t val_end = (t_total * 8) / 10;
  if (train_end < config.forecast.window + 2) {
    throw std::invalid_argument("run_forecast: training split shorter than the window");
  }

  Tensor train_split({train_end, raw.cols()});
  for (std::size_t t = 0; t < train_end; ++t)
    for (std::size_t j = 0; j < raw.cols(); ++j) train_split.at(t, j) = raw.at(t, j);
  Scaler scaler = Scaler::fit(train_split);
  Tensor scaled = scaler.apply(raw);

  std::size_t w = config.forecast.window;
  std::vector<std::vector<std::string>> rows, summary;
  for (std::size_t horizon : config.forecast.horizons) {
    TrainConfig tc = config.train;
    tc.window = w;
    std::uint64_t run_seed = derive_seed(config.seeds[0], horizon);
    tc.seed = run_seed;
    Rng model_rng(derive_seed(run_seed, 0xA11));
    VIModel model(tc, scaled.cols(), model_rng);

    // train on the most recent full window of the training split
    Tensor y_train({w, scaled.cols()});
    for (std::size_t t = 0; t < w; ++t)
      for (std::size_t j = 0; j < scaled.cols(); ++j)
        y_train.at(t, j) = scaled.at(train_end - w + t, j);
    Tensor u_train = model.aux_features(w, w);
    Rng train_rng(derive_seed(run_seed, 0xB22));
    model.train_window(y_train, u_train, train_rng);

    double crps_total = 0.0, mse_total = 0.0, naive_total = 0.0;
    std::size_t n_origins = 0;
    for (std::size_t origin = val_end;
         origin + horizon <= t_total && n_origins < config.forecast.max_origins;
         origin += horizon) {
      if (origin < w) continue;
      Tensor context({w, scaled.cols()});
      for (std::size_t t = 0; t < w; ++t)
        for (std::size_t j = 0; j < scaled.cols(); ++j)
          context.at(t, j) = scaled.at(origin - w + t, j);
      Tensor target({horizon, scaled.cols()});
      for (std::size_t t = 0; t < horizon; ++t)
        for (std::size_t j = 0; j < scaled.cols(); ++j)
          target.at(t, j) = scaled.at(origin + t, j);

      Rng path_rng(derive_seed(run_seed, 0xF0 + origin));
      QuantileGrid grid =
          model.predict_quantiles(context, horizon, config.forecast.n_paths, path_rng);
      double crps = crps_quantile(grid, target);
      double mse = mse_standardized(grid.q50, target);
      double naive = crps_quantile(naive_quantiles(grid, context), target);
      crps_total += crps;
      mse_total += mse;
      naive_total += naive;
      ++n_origins;
      rows.push_back({std::to_string(horizon), std::to_string(origin), fmt(crps), fmt(mse),
                      fmt(naive)});
    }
    if (n_origins == 0) {
      log_warning(cat("run_forecast: no usable origins for horizon ", horizon));
      continue;
    }
    summary.push_back({std::to_string(horizon), std::to_string(n_origins),
                       fmt(crps_total / static_cast<double>(n_origins)),
                       fmt(mse_total / static_cast<double>(n_origins)),
                       fmt(naive_total / static_cast<double>(n_origins))});
  }

  std::string rows_path = join_path(config.out_dir, "forecast_origins.csv");
  write_csv_text(rows_path, {"horizon", "origin", "crps", "mse_std", "crps_naive"}, rows,
                 {hash_footer});
  outputs.files.push_back(rows_path);
  std::string summary_path = join_path(config.out_dir, "forecast_summary.csv");
  write_csv_text(summary_path, {"horizon", "origins", "crps", "mse_std", "crps_naive"}, summary,
                 {hash_footer});
  outputs.files.push_back(summary_path);
  return outputs;
}

RunOutputs run_degeneracy(const ExperimentConfig& config) {
  ensure_dir(config.out_dir);
  std::string hash_footer = cat("config_hash=", config_hash(config));
  std::vector<std::vector<std::string>> rows;
  for (std::uint64_t seed : config.seeds) {
    DegeneracyResult g = rotation_degeneracy_demo(Family::Gaussian, 2, 40, seed);
    DegeneracyResult l = rotation_degeneracy_demo(Family::Laplace, 2, 40, seed);
    rows.push_back({std::to_string(seed), fmt(g.ll_original), fmt(g.ll_rotated),
                    fmt(std::abs(g.ll_original - g.ll_rotated)),
                    fmt(std::abs(l.ll_original - l.ll_rotated))});
  }
  std::string path = join_path(config.out_dir, "degeneracy.csv");
  write_csv_text(path,
                 {"seed", "gaussian_ll", "gaussian_ll_rotated", "gaussian_abs_delta",
                  "laplace_abs_delta"},
                 rows, {hash_footer});
  return RunOutputs{{path}};
}

double run_gradcheck(const ExperimentConfig& config) {
  double worst = 0.0;
  for (std::uint64_t seed : config.seeds) {
    Rng data_rng(derive_seed(seed, 0xDA7A));
    std::size_t t_len = 6 + data_rng.index(10);
    std::size_t n = 3 + data_rng.index(5);
    TrainConfig tc = config.train;
    tc.seed = seed;
    tc.num_factors = 1 + data_rng.index(3);
    tc.factor_order = 1 + data_rng.index(2);
    tc.encoder_hidden = 8 + data_rng.index(8);
    tc.decoder_hidden = 8 + data_rng.index(8);
    tc.num_regimes = 1 + data_rng.index(3);
    Rng model_rng(derive_seed(seed, 0xA11));
    VIModel model(tc, n, model_rng);
    Tensor y({t_len, n});
    for (double& x : y.values()) x = data_rng.uniform(-1.5, 1.5);
    Tensor u = model.aux_features(t_len, t_len);
    Tensor eps({t_len, tc.num_factors});
    for (double& x : eps.values()) x = data_rng.normal();
    Rng mask_rng(derive_seed(seed, 0x3A5C));
    std::vector<Tensor> masks = draw_dropout_masks(model.encoder(), t_len, tc.dropout, mask_rng);
    auto build = [&](Tape& t) { return model.build_elbo(t, y, u, eps, &masks, nullptr); };
    GradCheckResult r = check_gradients(build, model.parameters(), 1e-5, 4,
                                        derive_seed(seed, 0x9d5c));
    std::cout << "gradcheck seed " << seed << ": max rel error " << r.max_rel_error << " over "
              << r.checked << " coordinates (" << r.skipped_nonsmooth << " kink skips)\n";
    worst = std::max(worst, r.max_rel_error);
  }
  return worst;
}

}  // namespace ivdfm
