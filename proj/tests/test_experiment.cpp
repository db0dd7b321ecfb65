#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cdrop/error.hpp"
#include "cdrop/experiment.hpp"
#include "error_code.hpp"

using namespace cdrop;
using cdrop::testing::code_of;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "cdrop_test_experiment" / name;
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string small_doc(const fs::path& out, std::uint64_t train_seed = 0) {
  return R"({"model": {"d_z": 3, "steps": 5, "drift_hidden": [8, 8], "classifier_hidden": [8],
                       "dropout": {"mode": "continuum", "p": 0.3, "m": 10}},
             "training": {"epochs": 4, "learning_rate": 0.01, "record_wall_time": false, "seed": )" +
         std::to_string(train_seed) + R"(},
             "data": {"generator": "two_spirals", "n_per_class": 30, "seed": 3},
             "output_dir": ")" + out.string() + R"("})";
}

}  // namespace

TEST_CASE("defaults of a minimal document") {
  const auto c = parse_experiment(R"({"data": {"generator": "two_spirals"}})");
  CHECK(c.model.d_z == 4);
  CHECK(c.model.dropout.kind == DropoutKind::None);
  CHECK(c.training.optimizer == OptimizerKind::Adam);
  CHECK(c.data.split == std::array<double, 3>{0.7, 0.15, 0.15});
  CHECK(c.inference.n_mc == 5);
  CHECK(c.hash.size() == 16);
}

TEST_CASE("unknown keys are rejected at every level") {
  const char* docs[] = {
      R"({"data": {"generator": "two_spirals"}, "modle": {}})",
      R"({"data": {"generator": "two_spirals"}, "model": {"depth": 3}})",
      R"({"data": {"generator": "two_spirals"}, "model": {"dropout": {"mode": "none", "rate": 0.1}}})",
      R"({"data": {"generator": "two_spirals"}, "training": {"momentum": 0.9}})",
      R"({"data": {"generator": "two_spirals", "noise": 0.1}})",
      R"({"data": {"generator": "two_spirals"}, "inference": {"samples": 3}})",
  };
  for (const char* d : docs) {
    try {
      (void)parse_experiment(d);
      FAIL("accepted: " << d);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
      CHECK(std::string(e.what()).find("unknown key") != std::string::npos);
    }
  }
}

TEST_CASE("malformed values are configuration errors") {
  auto code = [](const char* d) { return code_of([&] { (void)parse_experiment(d); }); };
  CHECK(code("{") == ErrorCode::ConfigError);
  CHECK(code("[]") == ErrorCode::ConfigError);
  CHECK(code(R"({"model": {}})") == ErrorCode::ConfigError);
  CHECK(code(R"({"data": {}})") == ErrorCode::ConfigError);
  CHECK(code(R"({"data": {"generator": "two_spirals", "csv": "x.csv"}})") == ErrorCode::ConfigError);
  CHECK(code(R"({"data": {"generator": "moons"}})") == ErrorCode::ConfigError);
  CHECK(code(R"({"data": {"generator": "two_spirals", "split": [0.5, 0.5]}})") == ErrorCode::ConfigError);
  CHECK(code(R"({"data": {"generator": "two_spirals", "n_per_class": -3}})") == ErrorCode::ConfigError);
  CHECK(code(R"({"data": {"generator": "two_spirals"}, "model": {"steps": 2.5}})") == ErrorCode::ConfigError);
  CHECK(code(R"({"data": {"generator": "two_spirals"}, "model": {"dropout": {"mode": "continuum", "p": "0.3", "m": 5}}})") ==
        ErrorCode::ConfigError);
  CHECK(code(R"({"data": {"generator": "two_spirals"}, "model": {"dropout": {"mode": "continuum", "p": 0.3}}})") ==
        ErrorCode::ConfigError);
  CHECK(code(R"({"data": {"generator": "two_spirals"}, "model": {"dropout": {"mode": "gaussian"}}})") ==
        ErrorCode::ConfigError);
  CHECK(code(R"({"data": {"generator": "two_spirals"}, "training": {"optimizer": "rmsprop"}})") ==
        ErrorCode::ConfigError);
  CHECK(code(R"({"data": {"generator": "two_spirals"}, "inference": {"n_mc": 0}})") == ErrorCode::ConfigError);
  CHECK(code(R"({"data": {"generator": "two_spirals"}, "model": {"scheme": "midpoint"}})") ==
        ErrorCode::ConfigError);
  CHECK(code_of([] { (void)load_experiment("/nonexistent/cdrop.json"); }) == ErrorCode::IoError);
}

TEST_CASE("configuration hash ignores formatting and key order") {
  const auto a = parse_experiment(R"({"data": {"generator": "two_spirals", "seed": 1}, "output_dir": "x"})");
  const auto b = parse_experiment("{ \"output_dir\" : \"x\",\n  \"data\": {\"seed\": 1, \"generator\": \"two_spirals\"} }");
  const auto c = parse_experiment(R"({"data": {"generator": "two_spirals", "seed": 2}, "output_dir": "x"})");
  CHECK(a.hash == b.hash);
  CHECK(a.canonical_json == b.canonical_json);
  CHECK(a.hash != c.hash);
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("CDROP_OUTPUT_ROOT prefixes relative output directories only") {
  ::setenv("CDROP_OUTPUT_ROOT", "/tmp/cdrop-root", 1);
  const auto rel = parse_experiment(R"({"data": {"generator": "two_spirals"}, "output_dir": "runs/a"})");
  const auto abs = parse_experiment(R"({"data": {"generator": "two_spirals"}, "output_dir": "/srv/b"})");
  ::unsetenv("CDROP_OUTPUT_ROOT");
  const auto plain = parse_experiment(R"({"data": {"generator": "two_spirals"}, "output_dir": "runs/a"})");
  CHECK(rel.output_dir == fs::path("/tmp/cdrop-root/runs/a"));
  CHECK(abs.output_dir == fs::path("/srv/b"));
  CHECK(plain.output_dir == fs::path("runs/a"));
  CHECK(rel.hash == plain.hash);
}

TEST_CASE("training replays byte-identically") {
  const fs::path d1 = scratch("replay1"), d2 = scratch("replay2"), d3 = scratch("replay3");
  Experiment a(parse_experiment(small_doc(d1)));
  Experiment b(parse_experiment(small_doc(d2)));
  Experiment c(parse_experiment(small_doc(d3, 1)));
  const auto ra = a.train();
  const auto rb = b.train();
  c.train();
  // The provenance line embeds output_dir through the hash, so compare bodies.
  auto body = [](const fs::path& p) {
    const std::string s = slurp(p);
    return s.substr(s.find('\n') + 1);
  };
  CHECK(body(d1 / "history.csv") == body(d2 / "history.csv"));
  CHECK(body(d1 / "history.csv") != body(d3 / "history.csv"));
  CHECK(slurp(d1 / "checkpoint.bin") == slurp(d2 / "checkpoint.bin"));
  CHECK(ra.test.accuracy == rb.test.accuracy);
  CHECK(a.evaluate(7).mean_loss == b.evaluate(7).mean_loss);
  CHECK(a.calibrate(7).report.ece == b.calibrate(7).report.ece);
}

TEST_CASE("artifacts carry provenance") {
  const fs::path d = scratch("provenance");
  Experiment e(parse_experiment(small_doc(d)));
  e.train();
  const std::string history = slurp(d / "history.csv");
  CHECK(history.rfind("# config_hash=" + e.config().hash + " mode=continuum lambda1=", 0) == 0);
  CHECK(history.find(" train_seed=0 data_seed=3\n") != std::string::npos);
  CHECK(fs::exists(d / "train_summary.json"));
  CHECK(fs::exists(d / "checkpoint.txt"));
  e.calibrate(0);
  const std::string rel = slurp(d / "reliability.csv");
  CHECK(rel.find("bin_low,bin_high,conf,acc,count\n0,0.1,") != std::string::npos);
  CHECK(fs::exists(d / "calibration.json"));
}

TEST_CASE("experiment over a CSV source") {
  const fs::path d = scratch("csv");
  fs::create_directories(d);
  {
    std::ofstream f(d / "data.csv");
    f << "# hand written\nx0,x1,label\n";
    for (int i = 0; i < 40; ++i) f << (i % 2 ? 1.0 : -1.0) + 0.01 * i << ',' << 0.5 << ',' << i % 2 << '\n';
  }
  const std::string doc = R"({"data": {"csv": ")" + (d / "data.csv").string() +
                          R"(", "split": [0.5, 0.25, 0.25]}, "model": {"steps": 3, "drift_hidden": [4]},
       "training": {"epochs": 30, "learning_rate": 0.05, "early_stop_patience": 0},
       "output_dir": ")" + d.string() + R"("})";
  Experiment e(parse_experiment(doc));
  CHECK(e.data().dims() == 2);
  CHECK(e.model().config().d_x == 2);
  CHECK(e.warnings().size() == 1);  // x1 is constant
  CHECK(e.train().test.accuracy == 1.0);
  const Vec p = e.predict(std::vector<double>{1.2, 0.5}, 0);
  CHECK(p[1] > 0.5);
  CHECK(code_of([&] { (void)e.predict(std::vector<double>{1.0}, 0); }) == ErrorCode::ShapeMismatch);
}
