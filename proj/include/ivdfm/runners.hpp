// SPDX-License-Identifier: Apache-2.0
//
// Experiment drivers: factor recovery against the linear baseline, the
// structural intervention grid, rolling-origin probabilistic forecasting, the
// rotation-degeneracy demonstration, and a full-model gradient check. Every
// runner is a pure function of (config, seeds) and stamps the config hash
// into its output files.

#pragma once

#include <string>
#include <vector>

#include "ivdfm/io.hpp"
#include "ivdfm/metrics.hpp"
#include "ivdfm/tensor.hpp"

namespace ivdfm {

struct RunOutputs {
  std::vector<std::string> files;
};

RunOutputs run_recovery(const ExperimentConfig& config);
RunOutputs run_intervention(const ExperimentConfig& config);
RunOutputs run_forecast(const ExperimentConfig& config);
RunOutputs run_degeneracy(const ExperimentConfig& config);

// Max relative error of analytic vs finite-difference gradients through the
// full training objective on randomized configurations derived from the
// config seeds.
double run_gradcheck(const ExperimentConfig& config);

// Naive reference forecast: the median freezes at the last context value and
// the quantile spread is borrowed from the model's grid cell by cell.
QuantileGrid naive_quantiles(const QuantileGrid& model_grid, const Tensor& context);

// Text-cell CSV writer shared by the runners (numeric tables use write_csv).
void write_csv_text(const std::string& path, const std::vector<std::string>& columns,
                    const std::vector<std::vector<std::string>>& rows,
                    const std::vector<std::string>& footers = {});

}  // namespace ivdfm
