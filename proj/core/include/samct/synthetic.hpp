#pragma once

#include "samct/grid.hpp"
#include "samct/rng.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace samct::synthetic {

struct ShapeSample {
  Image8 image;
  /// object id -> mask; absent objects have an empty mask.
  std::vector<std::pair<std::string, Mask>> objects;
};

/// High-contrast scenes of one to three overlapping shapes (ellipses,
/// rectangles, triangles) on a smooth background. Object ids are "shape0"...
/// in paint order; occluded pixels belong to the shape painted last.
ShapeSample natural_sample(int size, Rng& rng);

struct CtLikeOptions {
  double presence = 0.6;   // per-object probability of appearing
  double contrast = 22.0;  // mean intensity offset of the objects
  double noise = 12.0;     // per-pixel gaussian noise
  std::string ellipse_id = "L10";
  std::string rectangle_id = "B15";
};

/// Low-contrast noisy slice. An ellipse may appear in the left half
/// (brighter than the background) and an axis-aligned rectangle in the right
/// half (darker). Both objects are always listed.
ShapeSample ct_like_sample(int size, Rng& rng, const CtLikeOptions& options = {});

/// Writes `count` ct-like slices as a raw dataset: images/case_NNNNN.png,
/// labels/case_NNNNN.png (1 = ellipse, 2 = rectangle) and dataset.json.
void write_ct_like_dataset(const std::filesystem::path& dir, int count, int size, std::uint64_t seed, const CtLikeOptions& options = {});

/// id -> name from the bundled object vocabulary (tab-separated, with a
/// header line).
std::map<std::string, std::string> load_vocabulary(const std::filesystem::path& path);
std::filesystem::path default_vocabulary_path();

}  // namespace samct::synthetic
