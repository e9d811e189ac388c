#include "samct/ingest.hpp"

#include "samct/errors.hpp"
#include "samct/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace samct::ingest {
namespace fs = std::filesystem;
using nlohmann::json;

DensityWindow DensityWindow::parse(const std::string& spec) {
  if (spec == "bone") return bone();
  if (spec == "tissue") return tissue();
  if (spec == "lung") return lung();
  if (spec == "hemorrhage") return hemorrhage();
  const auto comma = spec.find(',');
  if (comma == std::string::npos) throw ConfigError("window: expected bone|tissue|lung|hemorrhage|L,U, got '" + spec + "'");
  DensityWindow w;
  try {
    size_t used = 0;
    w.lower = std::stod(spec.substr(0, comma), &used);
    w.upper = std::stod(spec.substr(comma + 1));
  } catch (const std::exception&) {
    throw ConfigError("window: cannot parse bounds in '" + spec + "'");
  }
  w.name = "custom";
  if (!(w.lower < w.upper)) throw ConfigError("window: lower must be < upper in '" + spec + "'");
  return w;
}

std::uint8_t window_value(double hu, const DensityWindow& window) {
  const double span = window.upper - window.lower;
  const double clamped = std::clamp(hu, window.lower, window.upper);
  const double scaled = (clamped - window.lower) * 255.0 / span;
  return static_cast<std::uint8_t>(std::floor(scaled + 0.5));
}

std::vector<std::uint8_t> window_and_rescale(std::span<const float> volume, const DensityWindow& window) {
  if (!(window.lower < window.upper))
    throw std::invalid_argument("window_and_rescale: degenerate window [" + std::to_string(window.lower) + ", " +
                                std::to_string(window.upper) + "]");
  std::vector<std::uint8_t> out(volume.size());
  for (size_t i = 0; i < volume.size(); ++i) {
    if (!std::isfinite(volume[i])) throw std::invalid_argument("window_and_rescale: non-finite value at index " + std::to_string(i));
    out[i] = window_value(volume[i], window);
  }
  return out;
}

int AxisConvention::axis_for(Plane plane) const {
  switch (plane) {
    case Plane::kAxial: return axial;
    case Plane::kCoronal: return coronal;
    case Plane::kSagittal: return sagittal;
  }
  return coronal;
}

Plane parse_plane(const std::string& name) {
  if (name == "axial") return Plane::kAxial;
  if (name == "coronal") return Plane::kCoronal;
  if (name == "sagittal") return Plane::kSagittal;
  throw ConfigError("plane: expected axial|coronal|sagittal, got '" + name + "'");
}

std::vector<Grid<float>> slice_volume(const Volume& volume, int axis) {
  if (axis < 0 || axis > 2) throw std::invalid_argument("slice_volume: axis must be 0, 1 or 2");
  if (volume.voxel_count() == 0) throw DataError("slice_volume: empty volume");
  if (volume.data.size() != volume.voxel_count()) throw DataError("slice_volume: data size does not match shape");
  const auto& s = volume.shape;
  const int other_a = axis == 0 ? 1 : 0;
  const int other_b = axis == 2 ? 1 : 2;
  std::vector<Grid<float>> slices;
  slices.reserve(static_cast<size_t>(s[axis]));
  for (int64_t n = 0; n < s[axis]; ++n) {
    Grid<float> g(static_cast<int>(s[other_a]), static_cast<int>(s[other_b]));
    for (int64_t r = 0; r < s[other_a]; ++r) {
      for (int64_t c = 0; c < s[other_b]; ++c) {
        std::array<int64_t, 3> idx{};
        idx[axis] = n;
        idx[other_a] = r;
        idx[other_b] = c;
        g(static_cast<int>(r), static_cast<int>(c)) = volume.at(idx[0], idx[1], idx[2]);
      }
    }
    slices.push_back(std::move(g));
  }
  return slices;
}

std::vector<Grid<float>> slice_volume(const Volume& volume, Plane plane, const AxisConvention& axes) {
  return slice_volume(volume, axes.axis_for(plane));
}

Volume restack(const std::vector<Grid<float>>& slices, int axis) {
  if (slices.empty()) throw DataError("restack: no slices");
  if (axis < 0 || axis > 2) throw std::invalid_argument("restack: axis must be 0, 1 or 2");
  const int other_a = axis == 0 ? 1 : 0;
  const int other_b = axis == 2 ? 1 : 2;
  Volume v;
  v.shape[axis] = static_cast<int64_t>(slices.size());
  v.shape[other_a] = slices.front().height;
  v.shape[other_b] = slices.front().width;
  v.data.resize(v.voxel_count());
  for (size_t n = 0; n < slices.size(); ++n) {
    const auto& g = slices[n];
    if (g.height != slices.front().height || g.width != slices.front().width) throw DataError("restack: ragged slices");
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        std::array<int64_t, 3> idx{};
        idx[axis] = static_cast<int64_t>(n);
        idx[other_a] = r;
        idx[other_b] = c;
        v.data[static_cast<size_t>((idx[0] * v.shape[1] + idx[1]) * v.shape[2] + idx[2])] = g(r, c);
      }
    }
  }
  return v;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw DataError("split: expected train|val|test, got '" + s + "'");
}

void ScreeningPolicy::validate() const {
  std::set<std::string> kept;
  for (const auto& [coarse, fine] : refinements) {
    for (const auto& f : fine) {
      if (f == coarse) throw ConfigError("screening: label '" + coarse + "' refines itself");
      kept.insert(f);
    }
  }
  for (const auto& [coarse, fine] : refinements)
    if (kept.contains(coarse)) throw ConfigError("screening: label '" + coarse + "' is both kept as a refinement and dropped as coarse");
}

std::vector<SampleRecord> screen_masks(const std::vector<SampleRecord>& records, const ScreeningPolicy& policy) {
  policy.validate();
  // Labels present per image, foreground-only: an empty fine mask does not
  // supersede a coarse annotation.
  std::map<std::string, std::set<std::string>> labels_by_image;
  for (const auto& r : records)
    if (r.has_foreground) labels_by_image[r.image_path].insert(r.object_id);

  auto superseded = [&](const SampleRecord& r) {
    const auto it = policy.refinements.find(r.object_id);
    if (it == policy.refinements.end()) return false;
    const auto& present = labels_by_image[r.image_path];
    return std::any_of(it->second.begin(), it->second.end(), [&](const std::string& f) { return present.contains(f); });
  };

  std::vector<SampleRecord> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : records) {
    if (superseded(r)) continue;
    if (!seen.emplace(r.image_path, r.object_id).second) continue;
    out.push_back(r);
  }
  return out;
}

SplitRatios SplitRatios::parse(const std::string& csv) {
  std::vector<double> v;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("ratios: cannot parse '" + csv + "'");
    }
  }
  if (v.size() != 3) throw ConfigError("ratios: expected three comma-separated values, got '" + csv + "'");
  SplitRatios r{v[0], v[1], v[2]};
  if (std::any_of(v.begin(), v.end(), [](double x) { return x < 0.0; })) throw ConfigError("ratios: negative ratio");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw ConfigError("ratios: must sum to 1, got '" + csv + "'");
  return r;
}

Manifest split_dataset(std::vector<SampleRecord> records, const SplitRatios& ratios, std::uint64_t seed) {
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) throw ConfigError("split_dataset: ratios must sum to 1");
  if (records.empty()) throw DataError("split_dataset: no records to split");

  // Units are groups in first-appearance order; ungrouped records are units
  // of their own.
  std::vector<std::string> unit_keys;
  std::map<std::string, size_t> unit_of_key;
  std::vector<size_t> unit_of_record(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    const std::string key = records[i].group.empty() ? "\x01record:" + std::to_string(i) : records[i].group;
    auto [it, inserted] = unit_of_key.emplace(key, unit_keys.size());
    if (inserted) unit_keys.push_back(key);
    unit_of_record[i] = it->second;
  }
  const size_t n = unit_keys.size();
  const auto n_val = static_cast<size_t>(std::floor(static_cast<double>(n) * ratios.val + 1e-9));
  const auto n_test = static_cast<size_t>(std::floor(static_cast<double>(n) * ratios.test + 1e-9));

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<Split> unit_split(n, Split::kTrain);
  for (size_t i = 0; i < n_val; ++i) unit_split[order[i]] = Split::kVal;
  for (size_t i = n_val; i < n_val + n_test; ++i) unit_split[order[i]] = Split::kTest;
  for (size_t i = 0; i < records.size(); ++i) records[i].split = unit_split[unit_of_record[i]];

  Manifest m;
  m.records = std::move(records);
  m.seed = seed;
  return m;
}

// ---------------------------------------------------------------------------
// Manifest serialization

namespace {

json window_json(const DensityWindow& w) { return {{"lower", w.lower}, {"upper", w.upper}, {"name", w.name}}; }

json record_json(const SampleRecord& r) {
  json j = {{"image", r.image_path},
            {"object_id", r.object_id},
            {"has_foreground", r.has_foreground},
            {"split", to_string(r.split)},
            {"group", r.group},
            {"slice_index", r.slice_index}};
  j["mask"] = r.mask_path ? json(*r.mask_path) : json(nullptr);
  return j;
}

SampleRecord record_from_json(const json& j, size_t line) {
  try {
    SampleRecord r;
    r.image_path = j.at("image").get<std::string>();
    if (j.contains("mask") && !j.at("mask").is_null()) r.mask_path = j.at("mask").get<std::string>();
    r.object_id = j.at("object_id").get<std::string>();
    r.has_foreground = j.at("has_foreground").get<bool>();
    r.split = parse_split(j.at("split").get<std::string>());
    r.group = j.value("group", std::string());
    r.slice_index = j.value("slice_index", -1);
    if (r.has_foreground && !r.mask_path) throw DataError("foreground record without a mask");
    return r;
  } catch (const json::exception& e) {
    throw DataError("manifest line " + std::to_string(line) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("manifest line " + std::to_string(line) + ": " + e.what());
  }
}

}  // namespace

std::string Manifest::serialize() const {
  json header = {{"schema_version", kSchemaVersion}, {"kind", "samct.manifest"}, {"seed", seed}, {"provenance", provenance}};
  json windows = json::object();
  for (const auto& [obj, w] : window_used) windows[obj] = window_json(w);
  header["windows"] = windows;
  header["record_count"] = records.size();
  std::string out = header.dump() + "\n";
  for (const auto& r : records) out += record_json(r).dump() + "\n";
  return out;
}

Manifest Manifest::parse(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line)) throw DataError("manifest: empty file");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest header: ") + e.what());
  }
  if (header.value("schema_version", -1) != kSchemaVersion)
    throw DataError("manifest: unsupported schema_version " + header.value("schema_version", json(nullptr)).dump());
  Manifest m;
  m.seed = header.value("seed", std::uint64_t{0});
  m.provenance = header.value("provenance", std::string());
  if (header.contains("windows")) {
    for (const auto& [obj, w] : header.at("windows").items())
      m.window_used[obj] = DensityWindow{w.at("lower").get<double>(), w.at("upper").get<double>(), w.value("name", std::string("custom"))};
  }
  size_t line_no = 1;
  while (std::getline(ss, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      m.records.push_back(record_from_json(json::parse(line), line_no));
    } catch (const json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : m.records)
    if (!seen.emplace(r.image_path, r.object_id).second)
      throw DataError("manifest: duplicate record (" + r.image_path + ", " + r.object_id + ")");
  return m;
}

void Manifest::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("manifest: cannot write " + path.string());
  out << serialize();
}

Manifest Manifest::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("manifest: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<SampleRecord> Manifest::select(Split split) const {
  std::vector<SampleRecord> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// Directory ingestion

namespace {

struct DatasetSpec {
  std::string name;
  std::map<int, std::string> labels;  // label value -> object id
  std::map<std::string, DensityWindow> windows;
  ScreeningPolicy screening;
};

DatasetSpec read_dataset_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("ingest: missing " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("ingest: " + path.string() + ": " + e.what());
  }
  DatasetSpec spec;
  spec.name = j.value("name", path.parent_path().filename().string());
  if (!j.contains("labels") || !j.at("labels").is_object()) throw ConfigError("dataset.labels: expected an object of value -> object id");
  for (const auto& [value, obj] : j.at("labels").items()) spec.labels[std::stoi(value)] = obj.get<std::string>();
  if (j.contains("windows"))
    for (const auto& [obj, w] : j.at("windows").items()) spec.windows[obj] = DensityWindow::parse(w.get<std::string>());
  if (j.contains("screening"))
    for (const auto& [coarse, fine] : j.at("screening").items())
      spec.screening.refinements[coarse] = fine.get<std::vector<std::string>>();
  spec.screening.validate();
  return spec;
}

bool is_volume_file(const fs::path& p) {
  const auto name = p.filename().string();
  return name.ends_with(".nii") || name.ends_with(".nii.gz") || name.ends_with(".npy");
}

std::string case_stem(const fs::path& p) {
  auto name = p.filename().string();
  for (const char* ext : {".nii.gz", ".nii", ".npy", ".png"})
    if (name.ends_with(ext)) return name.substr(0, name.size() - std::string(ext).size());
  return name;
}

fs::path find_label(const fs::path& labels_dir, const std::string& stem) {
  for (const char* ext : {".nii.gz", ".nii", ".npy", ".png"}) {
    auto p = labels_dir / (stem + ext);
    if (fs::exists(p)) return p;
  }
  throw DataError("ingest: no label file for case '" + stem + "' in " + labels_dir.string());
}

std::string slice_tag(const std::string& stem, int slice) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", slice);
  return stem + "_s" + buf;
}

}  // namespace

Manifest run_ingest(const IngestOptions& options) {
  const DatasetSpec spec = read_dataset_spec(options.input / "dataset.json");
  const fs::path images_dir = options.input / "images";
  const fs::path labels_dir = options.input / "labels";
  if (!fs::is_directory(images_dir)) throw DataError("ingest: missing directory " + images_dir.string());
  fs::create_directories(options.output / "images");
  fs::create_directories(options.output / "masks");

  std::vector<fs::path> inputs;
  for (const auto& e : fs::directory_iterator(images_dir))
    if (e.is_regular_file()) inputs.push_back(e.path());
  std::sort(inputs.begin(), inputs.end());

  std::map<std::string, DensityWindow> window_used;
  auto window_for = [&](const std::string& obj) {
    auto it = spec.windows.find(obj);
    return it != spec.windows.end() ? it->second : options.default_window;
  };

  std::vector<SampleRecord> records;
  for (const auto& path : inputs) {
    const std::string stem = case_stem(path);
    const fs::path label_path = find_label(labels_dir, stem);
    std::vector<Grid<float>> image_slices;
    std::vector<Grid<float>> label_slices;
    const bool volumetric = is_volume_file(path);
    if (volumetric) {
      const Volume image = read_volume(path);
      const Volume labels = read_volume(label_path);
      if (image.shape != labels.shape) throw DataError("ingest: image/label shape mismatch for case '" + stem + "'");
      const int axis = options.axes.axis_for(options.plane);
      image_slices = slice_volume(image, axis);
      label_slices = slice_volume(labels, axis);
    } else if (path.extension() == ".png") {
      // 2D-native data is assumed display-ranged already and passes through.
      const Image8 img = read_png(path);
      const Image8 lbl = read_png(label_path);
      if (img.height != lbl.height || img.width != lbl.width) throw DataError("ingest: image/label shape mismatch for '" + stem + "'");
      Grid<float> g(img.height, img.width), l(lbl.height, lbl.width);
      std::transform(img.data.begin(), img.data.end(), g.data.begin(), [](auto v) { return static_cast<float>(v); });
      std::transform(lbl.data.begin(), lbl.data.end(), l.data.begin(), [](auto v) { return static_cast<float>(v); });
      image_slices.push_back(std::move(g));
      label_slices.push_back(std::move(l));
    } else {
      continue;
    }

    for (size_t s = 0; s < image_slices.size(); ++s) {
      const std::string tag = volumetric ? slice_tag(stem, static_cast<int>(s)) : stem;
      std::map<std::string, std::string> image_by_window;
      for (const auto& [value, obj] : spec.labels) {
        const DensityWindow window = volumetric ? window_for(obj) : DensityWindow::identity();
        window_used[obj] = window;
        auto& rel_image = image_by_window[window.name + std::to_string(window.lower) + "," + std::to_string(window.upper)];
        if (rel_image.empty()) {
          Image8 out(image_slices[s].height, image_slices[s].width);
          out.data = window_and_rescale(image_slices[s].data, window);
          rel_image = "images/" + tag + "_" + window.name + ".png";
          write_png(options.output / rel_image, out);
        }
        Mask mask(label_slices[s].height, label_slices[s].width);
        for (size_t i = 0; i < mask.data.size(); ++i) mask.data[i] = std::lround(label_slices[s].data[i]) == value ? 1 : 0;
        SampleRecord r;
        r.image_path = rel_image;
        r.object_id = obj;
        r.group = stem;
        r.slice_index = volumetric ? static_cast<int>(s) : -1;
        r.has_foreground = count_foreground(mask) > 0;
        if (r.has_foreground) {
          r.mask_path = "masks/" + tag + "_" + obj + ".png";
          write_mask_png(options.output / *r.mask_path, mask);
        }
        records.push_back(std::move(r));
      }
    }
  }
  if (records.empty()) throw DataError("ingest: no images found under " + images_dir.string());

  Manifest m = split_dataset(screen_masks(records, spec.screening), options.ratios, options.seed);
  m.window_used = window_used;
  m.provenance = spec.name;
  m.save(options.output / "manifest.jsonl");
  return m;
}

}  // namespace samct::ingest
