#include "fixtures.hpp"
#include "samct/checkpoint.hpp"
#include "samct/errors.hpp"

#undef CHECK  // c10 logging macro
#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace samct;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "samct_ckpt_test";
  fs::create_directories(dir);
  return dir / name;
}

void flip_byte(const fs::path& p, std::streamoff from_end) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(-from_end, std::ios::end);
  char c;
  f.get(c);
  f.seekp(-from_end, std::ios::end);
  f.put(static_cast<char>(c ^ 0x5a));
}

}  // namespace

TEST_CASE("sha256 known answers") {
  CHECK(checkpoint::sha256_hex("", 0) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(checkpoint::sha256_hex("abc", 3) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  auto a = torch::zeros({2, 3}), b = torch::zeros({3, 2}), c = torch::zeros({2, 3}, torch::kDouble);
  CHECK(checkpoint::tensor_digest(a) != checkpoint::tensor_digest(b));
  CHECK(checkpoint::tensor_digest(a) != checkpoint::tensor_digest(c));
  CHECK(checkpoint::tensor_digest(a) == checkpoint::tensor_digest(torch::zeros({2, 3})));
}

TEST_CASE("model round trip restores every group exactly") {
  torch::manual_seed(1);
  auto cfg = fixture::tiny_config();
  SamCt model(cfg, AblationSwitches{true, false, true});
  {
    torch::NoGradGuard g;
    for (auto& p : model->parameters()) p.add_(torch::randn_like(p) * 0.01);
  }
  const auto path = scratch("model.ckpt");
  checkpoint::save_model(path, *model, {{"note", "x"}});
  auto back = checkpoint::load_model(path);
  CHECK(back->switches.cnn_branch);
  CHECK_FALSE(back->switches.cross_branch);
  CHECK((back->config == cfg));
  for (auto& [name, tensors] : model->groups()) {
    CAPTURE(name);
    CHECK(checkpoint::group_digest(tensors) == checkpoint::group_digest(back->group(name)));
  }
  auto raw = checkpoint::load(path);
  CHECK(raw.metadata.at("note") == "x");
}

TEST_CASE("corruption and wrong files are data errors") {
  torch::manual_seed(2);
  SamCt model(fixture::tiny_config(), AblationSwitches{});
  const auto path = scratch("corrupt.ckpt");
  checkpoint::save_model(path, *model);
  flip_byte(path, 17);
  CHECK_THROWS_AS(checkpoint::load(path), DataError);
  {
    std::ofstream f(scratch("junk.ckpt"), std::ios::binary);
    f << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(checkpoint::load(scratch("junk.ckpt")), DataError);
  CHECK_THROWS_AS(checkpoint::load(scratch("missing.ckpt")), DataError);
  checkpoint::save_model(path, *model);
  fs::resize_file(path, fs::file_size(path) - 8);
  CHECK_THROWS_AS(checkpoint::load(path), DataError);
}

TEST_CASE("group loading requires matching names and shapes") {
  torch::manual_seed(3);
  auto cfg = fixture::tiny_config();
  SamCt a(cfg, AblationSwitches{}), b(cfg, AblationSwitches{});
  const auto path = scratch("groups.ckpt");
  checkpoint::save_model(path, *a);
  auto ck = checkpoint::load(path);
  checkpoint::load_groups(*b, ck, kFrozenGroups);
  for (const auto& g : kFrozenGroups) CHECK(checkpoint::group_digest(a->group(g)) == checkpoint::group_digest(b->group(g)));
  CHECK(checkpoint::group_digest(a->group("cnn_encoder")) != checkpoint::group_digest(b->group("cnn_encoder")));
  auto wider = cfg;
  wider.cnn_channels = 8;
  SamCt c(wider, AblationSwitches{});
  CHECK_THROWS_AS(checkpoint::load_groups(*c, ck, {"cnn_encoder"}), DataError);
  CHECK_THROWS_AS(checkpoint::load_groups(*b, ck, {"nonexistent"}), DataError);
  CHECK_THROWS_AS(checkpoint::load_indicator(path, cfg), DataError);
}

TEST_CASE("indicator dimensions are checked on load") {
  torch::manual_seed(4);
  auto cfg = fixture::tiny_config();
  prompt::TaskIndicator ind(prompt::IndicatorDims::from_config(cfg), "L10");
  const auto path = scratch("ind.ckpt");
  checkpoint::save_indicator(path, *ind, cfg, {{"epochs", 3}});
  nlohmann::json meta;
  auto back = checkpoint::load_indicator(path, cfg, &meta);
  CHECK(back->task_id == "L10");
  CHECK(meta.at("epochs") == 3);
  auto pa = ind->named_parameters(), pb = back->named_parameters();
  for (auto& p : pa) CHECK(torch::equal(p.value(), pb[p.key()]));
  auto other = cfg;
  other.neck_dim = 32;
  CHECK_THROWS_AS(checkpoint::load_indicator(path, other), DataError);
  CHECK_THROWS_AS(checkpoint::save_indicator(path, *ind, other), InvariantError);
}
