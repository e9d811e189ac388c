#include "oracles.hpp"
#include "samct/errors.hpp"
#include "samct/ingest.hpp"
#include "samct/rng.hpp"
#include "samct/synthetic.hpp"

#undef CHECK  // c10 logging macro
#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>

using namespace samct;
using namespace samct::ingest;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("samct_test_ingest_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Volume ramp(std::array<int64_t, 3> shape) {
  Volume v;
  v.shape = shape;
  v.data.resize(v.voxel_count());
  for (size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(i % 977) - 400.0f;
  return v;
}

}  // namespace

TEST_CASE("preset windows have the documented bounds") {
  CHECK(DensityWindow::bone() == DensityWindow{-400, 1100, "bone"});
  CHECK(DensityWindow::tissue() == DensityWindow{-200, 300, "tissue"});
  CHECK(DensityWindow::lung() == DensityWindow{-1300, 300, "lung"});
  CHECK(DensityWindow::hemorrhage() == DensityWindow{-20, 100, "hemorrhage"});
  CHECK(DensityWindow::parse("lung") == DensityWindow::lung());
  const auto custom = DensityWindow::parse("-50,150");
  CHECK(custom.lower == -50);
  CHECK(custom.upper == 150);
  CHECK_THROWS_AS(DensityWindow::parse("10,10"), ConfigError);
  CHECK_THROWS_AS(DensityWindow::parse("brain"), ConfigError);
}

TEST_CASE("windowing matches the integer oracle for every HU in and around each preset") {
  for (const auto& w : {DensityWindow::bone(), DensityWindow::tissue(), DensityWindow::lung(), DensityWindow::hemorrhage()}) {
    const long lo = static_cast<long>(w.lower), hi = static_cast<long>(w.upper);
    for (long v = lo - 100; v <= hi + 100; ++v) {
      const int got = window_value(static_cast<double>(v), w);
      const int want = oracle::window_int(v, lo, hi);
      if (got != want) FAIL_CHECK(w.name << " HU " << v << ": " << got << " vs " << want);
    }
    CHECK(window_value(w.lower, w) == 0);
    CHECK(window_value(w.upper, w) == 255);
  }
  CHECK(window_value(0.0, DensityWindow::lung()) == 207);
}

TEST_CASE("windowing is monotone and idempotent through the identity window") {
  Rng rng(3);
  for (int t = 0; t < 2000; ++t) {
    const double a = rng.uniform(-2000, 2000), b = rng.uniform(-2000, 2000);
    const auto w = DensityWindow{rng.uniform(-1500, 0), rng.uniform(1, 1500)};
    if (a <= b) CHECK(window_value(a, w) <= window_value(b, w));
  }
  for (int v = 0; v <= 255; ++v) CHECK(window_value(v, DensityWindow::identity()) == v);
}

TEST_CASE("windowing rejects degenerate windows and non-finite input") {
  std::vector<float> v = {1.0f};
  CHECK_THROWS(window_and_rescale(v, DensityWindow{5, 5}));
  v[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS(window_and_rescale(v, DensityWindow::lung()));
}

TEST_CASE("slicing along each axis") {
  const auto vol = ramp({40, 24, 32});
  auto coronal = slice_volume(vol, Plane::kCoronal);
  CHECK(coronal.size() == 24);
  CHECK(coronal[0].height == 40);
  CHECK(coronal[0].width == 32);
  AxisConvention first;
  first.coronal = 0;
  auto slices = slice_volume(vol, Plane::kCoronal, first);
  REQUIRE(slices.size() == 40);
  CHECK(slices[7](3, 5) == vol.at(7, 3, 5));
  for (int axis = 0; axis < 3; ++axis) {
    auto s = slice_volume(vol, axis);
    CHECK(static_cast<int64_t>(s.size()) == vol.shape[static_cast<size_t>(axis)]);
    auto back = restack(s, axis);
    CHECK((back.shape == vol.shape));
    CHECK((back.data == vol.data));
  }
  const auto single = ramp({1, 8, 8});
  auto one = slice_volume(single, 0);
  REQUIRE(one.size() == 1);
  CHECK(std::equal(one[0].data.begin(), one[0].data.end(), single.data.begin()));
  CHECK_THROWS_AS(slice_volume(Volume{}, 0), DataError);
}

TEST_CASE("screening keeps fine labels and removes duplicates") {
  auto rec = [](std::string img, std::string obj) {
    SampleRecord r;
    r.image_path = std::move(img);
    r.object_id = std::move(obj);
    r.has_foreground = true;
    return r;
  };
  ScreeningPolicy policy;
  policy.refinements["adrenal_whole"] = {"adrenal_left", "adrenal_right"};
  std::vector<SampleRecord> in = {rec("a.png", "adrenal_whole"), rec("a.png", "adrenal_left"), rec("a.png", "adrenal_right"),
                                  rec("b.png", "adrenal_whole"), rec("b.png", "liver"),       rec("b.png", "liver")};
  auto out = screen_masks(in, policy);
  std::vector<std::pair<std::string, std::string>> got;
  for (auto& r : out) got.emplace_back(r.image_path, r.object_id);
  std::vector<std::pair<std::string, std::string>> want = {
      {"a.png", "adrenal_left"}, {"a.png", "adrenal_right"}, {"b.png", "adrenal_whole"}, {"b.png", "liver"}};
  CHECK((got == want));
  CHECK(out.size() <= in.size());
  // Dedup oracle: the surviving set equals the distinct pairs minus superseded ones.
  std::set<std::pair<std::string, std::string>> distinct(got.begin(), got.end());
  CHECK(distinct.size() == got.size());

  CHECK(screen_masks({rec("c.png", "x")}, policy).size() == 1);
  ScreeningPolicy bad;
  bad.refinements["a"] = {"b"};
  bad.refinements["b"] = {"c"};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("splits follow the floor partition and are deterministic") {
  auto make = [](int n) {
    std::vector<SampleRecord> rs;
    for (int i = 0; i < n; ++i) {
      SampleRecord r;
      r.image_path = "img" + std::to_string(i) + ".png";
      r.object_id = "o";
      rs.push_back(r);
    }
    return rs;
  };
  auto m = split_dataset(make(10), {}, 5);
  CHECK(m.select(Split::kTrain).size() == 7);
  CHECK(m.select(Split::kVal).size() == 1);
  CHECK(m.select(Split::kTest).size() == 2);
  auto one = split_dataset(make(1), {}, 5);
  CHECK(one.select(Split::kTrain).size() == 1);
  CHECK(split_dataset(make(33), {}, 9).serialize() == split_dataset(make(33), {}, 9).serialize());
  CHECK_THROWS_AS(split_dataset({}, {}, 1), DataError);
  for (int n : {3, 17, 250}) {
    auto s = split_dataset(make(n), {}, 2);
    CHECK(s.select(Split::kTrain).size() + s.select(Split::kVal).size() + s.select(Split::kTest).size() == static_cast<size_t>(n));
    CHECK(s.select(Split::kVal).size() == static_cast<size_t>(n / 10));
  }
}

TEST_CASE("records of one group share a split") {
  std::vector<SampleRecord> rs;
  for (int g = 0; g < 20; ++g)
    for (int s = 0; s < 5; ++s) {
      SampleRecord r;
      r.image_path = "v" + std::to_string(g) + "_" + std::to_string(s);
      r.object_id = "o";
      r.group = "v" + std::to_string(g);
      rs.push_back(r);
    }
  auto m = split_dataset(rs, {}, 11);
  std::map<std::string, std::set<Split>> by_group;
  for (auto& r : m.records) by_group[r.group].insert(r.split);
  for (auto& [g, splits] : by_group) CHECK(splits.size() == 1);
  CHECK(m.select(Split::kTest).size() == 4 * 5);
}

TEST_CASE("manifest round trip and rejection of duplicates") {
  Manifest m;
  m.seed = 4;
  m.provenance = "unit";
  m.window_used["L10"] = DensityWindow::lung();
  SampleRecord r;
  r.image_path = "images/a.png";
  r.mask_path = "masks/a.png";
  r.object_id = "L10";
  r.has_foreground = true;
  r.split = Split::kTest;
  r.group = "a";
  m.records.push_back(r);
  auto back = Manifest::parse(m.serialize());
  CHECK((back.records == m.records));
  CHECK(back.window_used.at("L10") == DensityWindow::lung());
  CHECK(back.serialize() == m.serialize());
  m.records.push_back(r);
  CHECK_THROWS_AS(Manifest::parse(m.serialize()), DataError);
  CHECK_THROWS_AS(Manifest::parse(""), DataError);
}

TEST_CASE("npy and nifti volumes round trip") {
  const auto dir = scratch("formats");
  const auto vol = ramp({3, 5, 7});
  write_npy(dir / "v.npy", vol);
  auto a = read_npy(dir / "v.npy");
  CHECK((a.shape == vol.shape));
  CHECK((a.data == vol.data));
  for (const char* name : {"v.nii", "v.nii.gz"}) {
    write_nifti(dir / name, vol);
    auto b = read_nifti(dir / name);
    CHECK((b.shape == vol.shape));
    CHECK((b.data == vol.data));
  }
  Mask m(4, 6);
  m(1, 2) = 1;
  write_mask_png(dir / "m.png", m);
  CHECK((read_mask_png(dir / "m.png") == m));
}

TEST_CASE("directory ingestion of volumes applies per-object windows and coronal slicing") {
  const auto dir = scratch("volumes");
  fs::create_directories(dir / "raw/images");
  fs::create_directories(dir / "raw/labels");
  Volume img;
  img.shape = {6, 4, 8};
  img.data.assign(img.voxel_count(), -1300.0f);
  Volume lbl = img;
  std::fill(lbl.data.begin(), lbl.data.end(), 0.0f);
  // Label 1 occupies coronal slice 2 only.
  for (int64_t z = 0; z < 6; ++z)
    for (int64_t x = 2; x < 5; ++x) lbl.data[static_cast<size_t>((z * 4 + 2) * 8 + x)] = 1.0f;
  write_npy(dir / "raw/images/case1.npy", img);
  write_npy(dir / "raw/labels/case1.npy", lbl);
  std::ofstream(dir / "raw/dataset.json") << R"({"name": "unit", "labels": {"1": "L1"}, "windows": {"L1": "lung"}})";
  IngestOptions o;
  o.input = dir / "raw";
  o.output = dir / "out";
  auto m = run_ingest(o);
  REQUIRE(m.records.size() == 4);
  CHECK(m.window_used.at("L1") == DensityWindow::lung());
  int fg = 0;
  for (auto& r : m.records) {
    CHECK(r.group == "case1");
    fg += r.has_foreground;
    if (r.has_foreground) {
      CHECK(r.slice_index == 2);
      auto mask = read_mask_png(o.output / *r.mask_path);
      CHECK(mask.height == 6);
      CHECK(mask.width == 8);
      CHECK(count_foreground(mask) == 18);
    }
    auto raster = read_png(o.output / r.image_path);
    CHECK(raster.data[0] == 0);
  }
  CHECK(fg == 1);
  auto loaded = Manifest::load(o.output / "manifest.jsonl");
  CHECK(loaded.serialize() == m.serialize());
}

TEST_CASE("2D datasets pass through without windowing") {
  const auto dir = scratch("flat");
  synthetic::write_ct_like_dataset(dir / "raw", 12, 32, 1);
  IngestOptions o;
  o.input = dir / "raw";
  o.output = dir / "out";
  auto m = run_ingest(o);
  CHECK(m.records.size() == 24);
  for (auto& [obj, w] : m.window_used) CHECK(w == DensityWindow::identity());
  auto again = run_ingest(o);
  CHECK(again.serialize() == m.serialize());
}

TEST_CASE("ingestion errors") {
  const auto dir = scratch("errors");
  IngestOptions o;
  o.input = dir / "nothing";
  o.output = dir / "out";
  CHECK_THROWS_AS(run_ingest(o), DataError);
  CHECK_THROWS_AS(SplitRatios::parse("0.5,0.5"), ConfigError);
  CHECK_THROWS_AS(SplitRatios::parse("0.5,0.4,0.4"), ConfigError);
  CHECK_THROWS_AS(parse_plane("oblique"), ConfigError);
}
