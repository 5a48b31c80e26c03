// SPDX-License-Identifier: Apache-2.0
//
// File interchange: CSV error contracts and round trips, scaler statistics,
// config schema validation, and bit-exact model persistence.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "ivdfm/common.hpp"
#include "ivdfm/io.hpp"
#include "ivdfm/synthdata.hpp"
#include "ivdfm/vimodel.hpp"

using namespace ivdfm;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("ivdfm_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("csv: header parsing and shapes") {
  TempDir dir;
  std::string path = dir.file("small.csv");
  std::ofstream(path) << "a,b\n1,2\n3,4\n5,6\n";
  CsvTable t = ingest_csv(path, true);
  CHECK(t.columns == std::vector<std::string>{"a", "b"});
  CHECK(t.values.rows() == 3);
  CHECK(t.values.cols() == 2);
  CHECK(t.values.at(2, 1) == 6.0);
}

TEST_CASE("csv: non-numeric cell error names row and column") {
  TempDir dir;
  std::string path = dir.file("bad.csv");
  std::ofstream(path) << "a,b\n1,2\n3,4\n5,6\n7,oops\n";
  CHECK_THROWS_WITH_AS(ingest_csv(path, true),
                       "ingest_csv: non-numeric cell at row 5, column 2: 'oops'",
                       std::runtime_error);
}

TEST_CASE("csv: ragged rows are rejected with the row number") {
  TempDir dir;
  std::string path = dir.file("ragged.csv");
  std::ofstream(path) << "a,b\n1,2\n3\n";
  CHECK_THROWS_AS(ingest_csv(path, true), std::runtime_error);
}

TEST_CASE("csv: timestamp column becomes labels") {
  TempDir dir;
  std::string path = dir.file("ts.csv");
  std::ofstream(path) << "date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n";
  CsvTable t = ingest_csv(path, true, 0);
  CHECK(t.columns == std::vector<std::string>{"a", "b"});
  CHECK(t.row_labels == std::vector<std::string>{"2020-01-01", "2020-01-02"});
  CHECK(t.values.cols() == 2);
}

TEST_CASE("csv: write-read round trip is lossless at 17 significant digits") {
  TempDir dir;
  Rng rng(1);
  Tensor m({20, 4});
  for (double& x : m.values()) x = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
  std::string path = dir.file("round.csv");
  write_csv(path, {"w", "x", "y", "z"}, m, {"config_hash=deadbeef"});
  CsvTable t = ingest_csv(path, true);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(t.values[i] == m[i]);
  // footer comment is ignored on read but present in the file
  CHECK(read_file(path).find("# config_hash=deadbeef") != std::string::npos);
}

TEST_CASE("scaler: train statistics standardize the training split") {
  Rng rng(2);
  Tensor train({100, 3});
  for (double& x : train.values()) x = rng.normal(3.0, 2.5);
  Scaler s = Scaler::fit(train);
  Tensor z = s.apply(train);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0, v = 0;
    for (std::size_t t = 0; t < 100; ++t) m += z.at(t, j);
    m /= 100;
    for (std::size_t t = 0; t < 100; ++t) v += (z.at(t, j) - m) * (z.at(t, j) - m);
    v /= 100;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
  Tensor back = s.invert(z);
  for (std::size_t i = 0; i < train.size(); ++i)
    CHECK(back[i] == doctest::Approx(train[i]).epsilon(1e-12));
}

TEST_CASE("scaler: constant column passes through shifted to zero") {
  Tensor train = Tensor::full({10, 2}, 7.0);
  for (std::size_t t = 0; t < 10; ++t) train.at(t, 0) = static_cast<double>(t);
  Scaler s = Scaler::fit(train);
  Tensor z = s.apply(train);
  for (std::size_t t = 0; t < 10; ++t) CHECK(z.at(t, 1) == 0.0);
}

TEST_CASE("scaler: shifted test split differs from self-standardization") {
  Rng rng(3);
  Tensor train({200, 1}), test({200, 1});
  for (double& x : train.values()) x = rng.normal(0.0, 1.0);
  for (double& x : test.values()) x = rng.normal(2.0, 1.0);  // distribution shift
  Scaler on_train = Scaler::fit(train);
  Scaler on_test = Scaler::fit(test);
  Tensor a = on_train.apply(test);
  Tensor b = on_test.apply(test);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  CHECK(diff > 0.5);
}

TEST_CASE("config: parse, defaults, and unknown-key rejection") {
  ExperimentConfig cfg = parse_config_text(R"({
    "experiment": "recovery",
    "seeds": [0, 1, 2],
    "train": {"learning_rate": 0.002, "max_epochs": 50, "family": "laplace"},
    "dgp": {"kind": "dynamic", "t_len": 100}
  })");
  CHECK(cfg.kind == "recovery");
  CHECK(cfg.seeds.size() == 3);
  CHECK(cfg.train.max_epochs == 50);
  CHECK(cfg.dgp.t_len == 100);
  CHECK(cfg.train.num_regimes == 7);  // untouched default

  CHECK_THROWS_WITH_AS(parse_config_text(R"({"experiment": "recovery", "typo_key": 1})"),
                       "config: unknown key 'typo_key'", std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      parse_config_text(R"({"experiment": "recovery", "train": {"lr": 0.1}})"),
      "config: unknown key 'train.lr'", std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(R"({"experiment": "warp"})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(R"({"seeds": [1]})"), std::invalid_argument);
}

TEST_CASE("config hash is stable and sensitive") {
  ExperimentConfig a = parse_config_text(R"({"experiment": "recovery"})");
  ExperimentConfig b = parse_config_text(R"({"experiment": "recovery"})");
  CHECK(config_hash(a) == config_hash(b));
  b.seeds = {42};
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("model archive: save-load-save produces identical bytes") {
  TempDir dir;
  TrainConfig tc;
  tc.num_factors = 2;
  tc.factor_order = 2;
  tc.encoder_hidden = 12;
  tc.decoder_hidden = 10;
  Rng rng(4);
  VIModel model(tc, 4, rng);
  SyntheticDataset ds = gen_dynamic_dgp(40, 4, 2, 2, 1);
  Rng trng(5);
  tc.max_epochs = 5;
  VIModel trained(tc, 4, rng);
  trained.train_window(ds.observations, ds.aux, trng);

  std::string p1 = dir.file("m1.json");
  std::string p2 = dir.file("m2.json");
  save_model(trained, p1);
  VIModel loaded = load_model(p1);
  save_model(loaded, p2);
  CHECK(read_file(p1) == read_file(p2));

  // parameters are bit-exact
  for (std::size_t i = 0; i < trained.parameters().size(); ++i) {
    const Tensor& a = trained.parameters()[i]->value;
    const Tensor& b = loaded.parameters()[i]->value;
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
  }
}

TEST_CASE("model archive: the objective is unchanged by a round trip") {
  TempDir dir;
  TrainConfig tc;
  tc.num_factors = 2;
  tc.factor_order = 1;
  tc.encoder_hidden = 10;
  tc.decoder_hidden = 8;
  tc.max_epochs = 3;
  Rng rng(6);
  VIModel model(tc, 3, rng);
  SyntheticDataset ds = gen_dynamic_dgp(30, 3, 2, 1, 2);
  Rng trng(7);
  model.train_window(ds.observations, ds.aux, trng);

  std::string path = dir.file("m.json");
  save_model(model, path);
  VIModel loaded = load_model(path);

  Rng e1(99), e2(99);
  ElboParts before = model.elbo(ds.observations, ds.aux, e1);
  ElboParts after = loaded.elbo(ds.observations, ds.aux, e2);
  CHECK(std::abs(before.loss - after.loss) < 1e-12);
}

TEST_CASE("model archive: version and shape tampering are hard errors") {
  TempDir dir;
  TrainConfig tc;
  tc.num_factors = 1;
  tc.factor_order = 1;
  tc.encoder_hidden = 6;
  tc.decoder_hidden = 6;
  Rng rng(8);
  VIModel model(tc, 2, rng);
  std::string path = dir.file("m.json");
  save_model(model, path);

  std::string text = read_file(path);
  std::string tampered_version = text;
  tampered_version.replace(tampered_version.find("ivdfm.model.v1"), 14, "ivdfm.model.v9");
  std::ofstream(dir.file("bad_version.json")) << tampered_version;
  CHECK_THROWS_AS(load_model(dir.file("bad_version.json")), std::runtime_error);

  std::string tampered_shape = text;
  std::size_t pos = tampered_shape.find("\"shape\": [");
  tampered_shape.replace(pos, 11, "\"shape\": [9,");
  std::ofstream(dir.file("bad_shape.json")) << tampered_shape;
  try {
    load_model(dir.file("bad_shape.json"));
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("shape mismatch for tensor") != std::string::npos);
  } catch (const std::exception&) {
    // a mangled shape may also fail json parsing; either way it must throw
    CHECK(true);
  }
}
