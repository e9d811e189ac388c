#include "samct/dataset.hpp"

#include "samct/errors.hpp"
#include "samct/rng.hpp"
#include "samct/synthetic.hpp"

#include <algorithm>
#include <map>

namespace samct::data {

std::vector<Sample> load(const ingest::Manifest& manifest, const std::filesystem::path& root, std::optional<ingest::Split> split,
                         const std::vector<std::string>& objects) {
  std::map<std::string, Image8> images;
  std::vector<Sample> out;
  for (const auto& r : manifest.records) {
    if (split && r.split != *split) continue;
    if (!objects.empty() && std::find(objects.begin(), objects.end(), r.object_id) == objects.end()) continue;
    auto it = images.find(r.image_path);
    if (it == images.end()) it = images.emplace(r.image_path, ingest::read_png(root / r.image_path)).first;
    Sample s;
    s.image = it->second;
    if (r.mask_path) {
      s.mask = ingest::read_mask_png(root / *r.mask_path);
      if (s.mask.height != s.image.height || s.mask.width != s.image.width)
        throw DataError("dataset: mask " + *r.mask_path + " does not match image " + r.image_path);
    } else {
      s.mask = Mask(s.image.height, s.image.width);
    }
    if ((count_foreground(s.mask) > 0) != r.has_foreground)
      throw DataError("dataset: has_foreground disagrees with the mask for " + r.image_path + " / " + r.object_id);
    s.record = r;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> natural_set(int count, int size, std::uint64_t seed, double empty_fraction) {
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(i)));
    auto scene = synthetic::natural_sample(size, rng);
    Sample s;
    s.image = scene.image;
    s.record.group = "scene" + std::to_string(i);
    s.record.object_id = "shape";
    const bool empty = scene.objects.empty() || rng.bernoulli(empty_fraction);
    if (empty) {
      s.mask = Mask(size, size);
    } else {
      const auto pick = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(scene.objects.size()) - 1));
      s.mask = scene.objects[pick].second;
    }
    s.record.has_foreground = count_foreground(s.mask) > 0;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> ct_like_set(int count, int size, std::uint64_t seed) {
  std::vector<Sample> out;
  std::vector<ingest::SampleRecord> records;
  for (int i = 0; i < count; ++i) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(i)));
    auto scene = synthetic::ct_like_sample(size, rng);
    for (auto& [obj, mask] : scene.objects) {
      Sample s;
      s.image = scene.image;
      s.mask = mask;
      s.record.image_path = "case_" + std::to_string(i);
      s.record.object_id = obj;
      s.record.group = s.record.image_path;
      s.record.has_foreground = count_foreground(mask) > 0;
      records.push_back(s.record);
      out.push_back(std::move(s));
    }
  }
  const auto manifest = ingest::split_dataset(records, ingest::SplitRatios{}, seed);
  std::map<std::pair<std::string, std::string>, ingest::Split> split_of;
  for (const auto& r : manifest.records) split_of[{r.image_path, r.object_id}] = r.split;
  for (auto& s : out) s.record.split = split_of.at({s.record.image_path, s.record.object_id});
  return out;
}

std::vector<ingest::SampleRecord> records_of(const std::vector<Sample>& samples) {
  std::vector<ingest::SampleRecord> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.record);
  return out;
}

}  // namespace samct::data
