// SPDX-License-Identifier: Apache-2.0

#include "ivdfm/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "ivdfm/common.hpp"

namespace ivdfm {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

CsvTable ingest_csv(const std::string& path, bool has_header,
                    std::optional<std::size_t> timestamp_col) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(cat("ingest_csv: cannot open '", path, "'"));
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> flat;
  std::size_t n_cols = 0, n_rows = 0;

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    cells.push_back(cur);
    return cells;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells = split(line);
    if (has_header && table.columns.empty() && n_rows == 0) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (timestamp_col && c == *timestamp_col) continue;
        table.columns.push_back(cells[c]);
      }
      n_cols = table.columns.size();
      continue;
    }
    std::size_t expected = n_cols + (timestamp_col ? 1 : 0);
    if (n_cols == 0) {
      n_cols = cells.size() - (timestamp_col ? 1 : 0);
      expected = cells.size();
      for (std::size_t c = 0; c < n_cols; ++c) table.columns.push_back(cat("v", c));
    }
    if (cells.size() != expected) {
      throw std::runtime_error(cat("ingest_csv: ragged row ", line_no, " has ", cells.size(),
                                   " cells, expected ", expected));
    }
    std::size_t out_c = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (timestamp_col && c == *timestamp_col) {
        table.row_labels.push_back(cells[c]);
        continue;
      }
      const std::string& cell = cells[c];
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') {
        throw std::runtime_error(
            cat("ingest_csv: non-numeric cell at row ", line_no, ", column ", c + 1, ": '",
                cell, "'"));
      }
      flat.push_back(v);
      ++out_c;
    }
    (void)out_c;
    ++n_rows;
  }
  table.values = Tensor({n_rows, n_cols}, std::move(flat));
  return table;
}

void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const Tensor& values, const std::vector<std::string>& footers) {
  if (values.size() > 0 && columns.size() != values.cols()) {
    throw std::invalid_argument(cat("write_csv: ", columns.size(), " column names for ",
                                    values.cols(), " columns"));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error(cat("write_csv: cannot open '", path, "' for writing"));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) out << ",";
    out << columns[c];
  }
  out << "\n";
  for (std::size_t i = 0; i < values.rows(); ++i) {
    for (std::size_t j = 0; j < values.cols(); ++j) {
      if (j) out << ",";
      out << format_double(values.at(i, j));
    }
    out << "\n";
  }
  for (const std::string& f : footers) out << "# " << f << "\n";
}

Scaler Scaler::fit(const Tensor& train) {
  std::size_t t_len = train.rows(), n = train.cols();
  if (t_len < 2) throw std::invalid_argument("Scaler::fit: need more than one row");
  Scaler s;
  s.mean = Tensor({1, n});
  s.stddev = Tensor({1, n});
  for (std::size_t j = 0; j < n; ++j) {
    double m = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) m += train.at(t, j);
    m /= static_cast<double>(t_len);
    double v = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) v += (train.at(t, j) - m) * (train.at(t, j) - m);
    double sd = std::sqrt(v / static_cast<double>(t_len));
    if (sd <= 0.0) {
      log_warning(cat("Scaler::fit: column ", j, " has zero variance; scale set to 1"));
      sd = 1.0;
    }
    s.mean.at(0, j) = m;
    s.stddev.at(0, j) = sd;
  }
  return s;
}

Tensor Scaler::apply(const Tensor& data) const {
  if (data.cols() != mean.cols()) throw std::invalid_argument("Scaler::apply: column mismatch");
  Tensor out = data;
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t j = 0; j < data.cols(); ++j)
      out.at(i, j) = (data.at(i, j) - mean.at(0, j)) / stddev.at(0, j);
  return out;
}

Tensor Scaler::invert(const Tensor& data) const {
  if (data.cols() != mean.cols()) throw std::invalid_argument("Scaler::invert: column mismatch");
  Tensor out = data;
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t j = 0; j < data.cols(); ++j)
      out.at(i, j) = data.at(i, j) * stddev.at(0, j) + mean.at(0, j);
  return out;
}

// --- configuration -------------------------------------------------------------

namespace {

void check_known_keys(const ordered_json& node, const std::vector<std::string>& known,
                      const std::string& path) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    bool ok = false;
    for (const std::string& k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::invalid_argument(cat("config: unknown key '", path, it.key(), "'"));
    }
  }
}

template <typename T>
void read_if(const ordered_json& node, const char* key, T& out) {
  if (node.contains(key)) out = node.at(key).get<T>();
}

TrainConfig parse_train(const ordered_json& node) {
  TrainConfig t;
  check_known_keys(node,
                   {"learning_rate", "weight_decay", "max_epochs", "window", "beta_kl", "seed",
                    "family", "num_regimes", "temperature", "factor_order", "num_factors",
                    "obs_var", "dropout", "embed_dim", "encoder_hidden", "decoder_hidden",
                    "student_dof", "mixture_prior", "constant_context", "spectral_warm_start"},
                   "train.");
  read_if(node, "learning_rate", t.learning_rate);
  read_if(node, "weight_decay", t.weight_decay);
  read_if(node, "max_epochs", t.max_epochs);
  read_if(node, "window", t.window);
  read_if(node, "beta_kl", t.beta_kl);
  read_if(node, "seed", t.seed);
  if (node.contains("family")) t.family = family_from_name(node.at("family").get<std::string>());
  read_if(node, "num_regimes", t.num_regimes);
  read_if(node, "temperature", t.temperature);
  read_if(node, "factor_order", t.factor_order);
  read_if(node, "num_factors", t.num_factors);
  read_if(node, "obs_var", t.obs_var);
  read_if(node, "dropout", t.dropout);
  read_if(node, "embed_dim", t.embed_dim);
  read_if(node, "encoder_hidden", t.encoder_hidden);
  read_if(node, "decoder_hidden", t.decoder_hidden);
  read_if(node, "student_dof", t.student_dof);
  read_if(node, "mixture_prior", t.mixture_prior);
  read_if(node, "constant_context", t.constant_context);
  read_if(node, "spectral_warm_start", t.spectral_warm_start);
  if (t.learning_rate <= 0.0 || t.temperature <= 0.0 || t.obs_var <= 0.0) {
    throw std::invalid_argument("config: train rates, temperature, and obs_var must be > 0");
  }
  if (t.dropout < 0.0 || t.dropout >= 1.0) {
    throw std::invalid_argument("config: train.dropout must lie in [0, 1)");
  }
  return t;
}

ordered_json train_to_json(const TrainConfig& t) {
  ordered_json node;
  node["learning_rate"] = t.learning_rate;
  node["weight_decay"] = t.weight_decay;
  node["max_epochs"] = t.max_epochs;
  node["window"] = t.window;
  node["beta_kl"] = t.beta_kl;
  node["seed"] = t.seed;
  node["family"] = family_name(t.family);
  node["num_regimes"] = t.num_regimes;
  node["temperature"] = t.temperature;
  node["factor_order"] = t.factor_order;
  node["num_factors"] = t.num_factors;
  node["obs_var"] = t.obs_var;
  node["dropout"] = t.dropout;
  node["embed_dim"] = t.embed_dim;
  node["encoder_hidden"] = t.encoder_hidden;
  node["decoder_hidden"] = t.decoder_hidden;
  node["student_dof"] = t.student_dof;
  node["mixture_prior"] = t.mixture_prior;
  node["constant_context"] = t.constant_context;
  node["spectral_warm_start"] = t.spectral_warm_start;
  return node;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ordered_json root = ordered_json::parse(text);
  check_known_keys(root, {"experiment", "seeds", "out_dir", "oracle_model", "train", "dgp",
                          "scm", "forecast"},
                   "");
  ExperimentConfig cfg;
  if (!root.contains("experiment")) {
    throw std::invalid_argument("config: missing required key 'experiment'");
  }
  cfg.kind = root.at("experiment").get<std::string>();
  if (cfg.kind != "recovery" && cfg.kind != "intervention" && cfg.kind != "forecast" &&
      cfg.kind != "degeneracy") {
    throw std::invalid_argument(cat("config: unknown experiment kind '", cfg.kind, "'"));
  }
  if (root.contains("seeds")) cfg.seeds = root.at("seeds").get<std::vector<std::uint64_t>>();
  if (cfg.seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
  read_if(root, "out_dir", cfg.out_dir);
  read_if(root, "oracle_model", cfg.oracle_model);
  if (root.contains("train")) cfg.train = parse_train(root.at("train"));

  if (root.contains("dgp")) {
    const ordered_json& node = root.at("dgp");
    check_known_keys(node, {"kind", "t_len", "n_series", "n_factors", "ar_order"}, "dgp.");
    read_if(node, "kind", cfg.dgp.kind);
    if (cfg.dgp.kind != "dynamic" && cfg.dgp.kind != "static") {
      throw std::invalid_argument(cat("config: unknown dgp kind '", cfg.dgp.kind, "'"));
    }
    read_if(node, "t_len", cfg.dgp.t_len);
    read_if(node, "n_series", cfg.dgp.n_series);
    read_if(node, "n_factors", cfg.dgp.n_factors);
    read_if(node, "ar_order", cfg.dgp.ar_order);
  }
  if (root.contains("scm")) {
    const ordered_json& node = root.at("scm");
    check_known_keys(node,
                     {"variant", "state_dim", "obs_dim", "t_len", "component", "horizon", "t0",
                      "magnitude", "t_grid", "r_fit_grid"},
                     "scm.");
    read_if(node, "variant", cfg.scm.variant);
    if (cfg.scm.variant != "base" && cfg.scm.variant != "regime" && cfg.scm.variant != "chain") {
      throw std::invalid_argument(cat("config: unknown scm variant '", cfg.scm.variant, "'"));
    }
    read_if(node, "state_dim", cfg.scm.state_dim);
    read_if(node, "obs_dim", cfg.scm.obs_dim);
    read_if(node, "t_len", cfg.scm.t_len);
    read_if(node, "component", cfg.scm.component);
    read_if(node, "horizon", cfg.scm.horizon);
    read_if(node, "t0", cfg.scm.t0);
    read_if(node, "magnitude", cfg.scm.magnitude);
    if (node.contains("t_grid")) cfg.scm.t_grid = node.at("t_grid").get<std::vector<std::size_t>>();
    if (node.contains("r_fit_grid"))
      cfg.scm.r_fit_grid = node.at("r_fit_grid").get<std::vector<std::size_t>>();
  }
  if (root.contains("forecast")) {
    const ordered_json& node = root.at("forecast");
    check_known_keys(node,
                     {"dataset_csv", "has_header", "timestamp_col", "horizons", "window",
                      "max_origins", "n_paths"},
                     "forecast.");
    read_if(node, "dataset_csv", cfg.forecast.dataset_csv);
    read_if(node, "has_header", cfg.forecast.has_header);
    if (node.contains("timestamp_col"))
      cfg.forecast.timestamp_col = node.at("timestamp_col").get<std::size_t>();
    if (node.contains("horizons"))
      cfg.forecast.horizons = node.at("horizons").get<std::vector<std::size_t>>();
    read_if(node, "window", cfg.forecast.window);
    read_if(node, "max_origins", cfg.forecast.max_origins);
    read_if(node, "n_paths", cfg.forecast.n_paths);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(cat("load_config: cannot open '", path, "'"));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string canonical_config(const ExperimentConfig& cfg) {
  ordered_json root;
  root["experiment"] = cfg.kind;
  root["seeds"] = cfg.seeds;
  root["out_dir"] = cfg.out_dir;
  root["oracle_model"] = cfg.oracle_model;
  root["train"] = train_to_json(cfg.train);
  root["dgp"] = {{"kind", cfg.dgp.kind},
                 {"t_len", cfg.dgp.t_len},
                 {"n_series", cfg.dgp.n_series},
                 {"n_factors", cfg.dgp.n_factors},
                 {"ar_order", cfg.dgp.ar_order}};
  root["scm"] = {{"variant", cfg.scm.variant}, {"state_dim", cfg.scm.state_dim},
                 {"obs_dim", cfg.scm.obs_dim}, {"t_len", cfg.scm.t_len},
                 {"component", cfg.scm.component}, {"horizon", cfg.scm.horizon},
                 {"t0", cfg.scm.t0}, {"magnitude", cfg.scm.magnitude},
                 {"t_grid", cfg.scm.t_grid}, {"r_fit_grid", cfg.scm.r_fit_grid}};
  root["forecast"] = {{"dataset_csv", cfg.forecast.dataset_csv},
                      {"has_header", cfg.forecast.has_header},
                      {"horizons", cfg.forecast.horizons},
                      {"window", cfg.forecast.window},
                      {"max_origins", cfg.forecast.max_origins},
                      {"n_paths", cfg.forecast.n_paths}};
  return root.dump();
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::string text = canonical_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- model persistence -----------------------------------------------------------

void save_model(const VIModel& model, const std::string& path) {
  ordered_json root;
  root["format"] = kModelFormatVersion;
  root["num_series"] = model.num_series();
  root["train"] = train_to_json(model.config());
  root["initialized"] = model.initialized();
  ordered_json tensors = ordered_json::array();
  for (const Param* p : model.parameters()) {
    ordered_json t;
    t["name"] = p->name;
    t["shape"] = p->value.shape();
    t["values"] = p->value.values();
    tensors.push_back(std::move(t));
  }
  root["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw std::runtime_error(cat("save_model: cannot open '", path, "' for writing"));
  out << root.dump(1) << "\n";
}

VIModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(cat("load_model: cannot open '", path, "'"));
  ordered_json root = ordered_json::parse(in);
  if (!root.contains("format") || root.at("format").get<std::string>() != kModelFormatVersion) {
    throw std::runtime_error(cat("load_model: format version mismatch, expected '",
                                 kModelFormatVersion, "'"));
  }
  TrainConfig tc = parse_train(root.at("train"));
  std::size_t num_series = root.at("num_series").get<std::size_t>();
  Rng rng(tc.seed);
  VIModel model(tc, num_series, rng);
  if (root.contains("initialized") && root.at("initialized").get<bool>()) {
    model.mark_initialized();
  }

  std::unordered_map<std::string, const ordered_json*> by_name;
  for (const auto& t : root.at("tensors")) {
    by_name[t.at("name").get<std::string>()] = &t;
  }
  for (Param* p : model.parameters()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw std::runtime_error(cat("load_model: archive is missing tensor '", p->name, "'"));
    }
    const ordered_json& t = *it->second;
    std::vector<std::size_t> shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape != p->value.shape()) {
      throw std::runtime_error(cat("load_model: shape mismatch for tensor '", p->name,
                                   "': archive ", shape_str(shape), ", model ",
                                   p->value.shape_str()));
    }
    std::vector<double> values = t.at("values").get<std::vector<double>>();
    if (values.size() != p->value.size()) {
      throw std::runtime_error(cat("load_model: value count mismatch for tensor '", p->name, "'"));
    }
    p->value = Tensor(shape, std::move(values));
  }
  return model;
}

}  // namespace ivdfm
