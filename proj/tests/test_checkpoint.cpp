#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "cdrop/checkpoint.hpp"
#include "cdrop/error.hpp"
#include "error_code.hpp"

using namespace cdrop;
using cdrop::testing::code_of;
namespace fs = std::filesystem;

namespace {

ModelConfig config() {
  ModelConfig c;
  c.d_x = 3;
  c.d_z = 4;
  c.n_classes = 3;
  c.drift_hidden = {5, 7};
  c.classifier_hidden = {6};
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "cdrop_test_checkpoint" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  RandomStream rng(1);
  ModelParams p = init_params(config(), rng);
  for (auto t : p.tensors())
    for (auto& v : t) v = rng.normal() * 1e3;  // exercise full mantissas
  const fs::path d = fresh_dir("round");
  save_checkpoint(d / "ck.txt", config(), p, {42, "0123456789abcdef"});
  CHECK(fs::file_size(d / "ck.bin") == p.size() * 8);

  CheckpointMeta meta;
  const ModelParams q = load_checkpoint(d / "ck.txt", config(), &meta);
  CHECK(meta.seed == 42);
  CHECK(meta.config_hash == "0123456789abcdef");
  const auto a = std::as_const(p).tensors();
  const auto b = q.tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) CHECK(a[i][j] == b[i][j]);

  const auto desc = read_descriptor(d / "ck.txt");
  CHECK(desc.at("format") == "cdrop-checkpoint/1");
  CHECK(desc.at("byte_order") == "little");
  CHECK(desc.at("param_count") == std::to_string(p.size()));
  CHECK(desc.at("tensor.zeta.weight") == "4x3");
}

TEST_CASE("architecture mismatch is rejected") {
  RandomStream rng(2);
  const ModelParams p = init_params(config(), rng);
  const fs::path d = fresh_dir("mismatch");
  save_checkpoint(d / "ck.txt", config(), p, {});
  auto other = config();
  other.drift_hidden = {5, 8};
  CHECK(code_of([&] { load_checkpoint(d / "ck.txt", other); }) == ErrorCode::CheckpointMismatch);
  other = config();
  other.d_z = 5;
  CHECK(code_of([&] { load_checkpoint(d / "ck.txt", other); }) == ErrorCode::CheckpointMismatch);
  other = config();
  other.drift_activation = Activation::Relu;
  CHECK(code_of([&] { load_checkpoint(d / "ck.txt", other); }) == ErrorCode::CheckpointMismatch);
}

TEST_CASE("corrupt or missing files") {
  RandomStream rng(3);
  const ModelParams p = init_params(config(), rng);
  const fs::path d = fresh_dir("corrupt");
  save_checkpoint(d / "ck.txt", config(), p, {});
  fs::resize_file(d / "ck.bin", 16);
  CHECK(code_of([&] { load_checkpoint(d / "ck.txt", config()); }) == ErrorCode::CheckpointMismatch);
  fs::remove(d / "ck.bin");
  CHECK(code_of([&] { load_checkpoint(d / "ck.txt", config()); }) == ErrorCode::IoError);
  CHECK(code_of([&] { load_checkpoint(d / "nothing.txt", config()); }) == ErrorCode::IoError);

  std::ofstream(d / "wrong.txt") << "format = something-else/9\n";
  CHECK(code_of([&] { load_checkpoint(d / "wrong.txt", config()); }) == ErrorCode::CheckpointMismatch);
}
