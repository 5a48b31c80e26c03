// SPDX-License-Identifier: Apache-2.0
//
// File interchange: CSV ingestion and emission (decimal text with 17
// significant digits, lossless for doubles), train-statistics scaling,
// schema-validated experiment configuration, and versioned model archives.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ivdfm/tensor.hpp"
#include "ivdfm/vimodel.hpp"

namespace ivdfm {

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::string> row_labels;  // timestamp column when present
  Tensor values;                        // {T, N}
};

// Parses a numeric CSV. Non-numeric cells and ragged rows raise errors naming
// the 1-based (row, column) location; an optional timestamp column is dropped
// from the values and kept as labels.
CsvTable ingest_csv(const std::string& path, bool has_header,
                    std::optional<std::size_t> timestamp_col = std::nullopt);

// Writes a header row, the matrix in %.17g cells, and trailing comment lines
// (prefixed with '#'), typically the config-hash provenance footer.
void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const Tensor& values, const std::vector<std::string>& footers = {});

std::string format_double(double x);  // %.17g

// Per-column standardization with training-split statistics only.
struct Scaler {
  Tensor mean;    // {1, N}
  Tensor stddev;  // {1, N}

  static Scaler fit(const Tensor& train);
  Tensor apply(const Tensor& data) const;
  Tensor invert(const Tensor& data) const;
};

// --- experiment configuration ------------------------------------------------

struct DgpConfig {
  std::string kind = "dynamic";  // dynamic | static
  std::size_t t_len = 200, n_series = 20, n_factors = 5, ar_order = 3;
};

struct ScmConfig {
  std::string variant = "base";  // base | regime | chain
  std::size_t state_dim = 3, obs_dim = 10, t_len = 200;
  std::size_t component = 0, horizon = 10;
  std::size_t t0 = 0;  // 0 = midpoint
  double magnitude = 2.0;
  std::vector<std::size_t> t_grid;      // optional stress grid over series length
  std::vector<std::size_t> r_fit_grid;  // optional stress grid over fitted factor count
};

struct ForecastConfig {
  std::string dataset_csv;
  bool has_header = true;
  std::optional<std::size_t> timestamp_col;
  std::vector<std::size_t> horizons = {24};
  std::size_t window = 96;
  std::size_t max_origins = 10;
  std::size_t n_paths = 200;
};

struct ExperimentConfig {
  std::string kind;  // recovery | intervention | forecast | degeneracy
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = "out";
  bool oracle_model = false;
  TrainConfig train;
  DgpConfig dgp;
  ScmConfig scm;
  ForecastConfig forecast;
};

// Parses and schema-validates a JSON config; unknown keys anywhere are
// rejected with the offending path.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// FNV-1a over the canonical serialized form; stamped into output footers.
std::string config_hash(const ExperimentConfig& config);
std::string canonical_config(const ExperimentConfig& config);

// --- model persistence ---------------------------------------------------------

inline constexpr const char* kModelFormatVersion = "ivdfm.model.v1";

// Versioned archive holding every parameter tensor by name plus the config
// snapshot; loading reproduces parameters bit-exactly and rejects version or
// shape mismatches naming the offending tensor.
void save_model(const VIModel& model, const std::string& path);
VIModel load_model(const std::string& path);

}  // namespace ivdfm
