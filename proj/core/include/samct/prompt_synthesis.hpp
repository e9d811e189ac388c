#pragma once

#include "samct/grid.hpp"
#include "samct/ingest.hpp"
#include "samct/prompt.hpp"
#include "samct/rng.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace samct::synthesis {

enum class PromptMode { kRandomPoint, kCenterPoint, kRandomBox, kBoundingBox, kCenterPointPlusBox, kTaskIndicator };

std::string to_string(PromptMode m);
/// Throws ConfigError for unknown names.
PromptMode parse_mode(const std::string& name);
const std::vector<PromptMode>& all_modes();

struct PromptSpec {
  PromptMode mode = PromptMode::kCenterPointPlusBox;
  double shift_fraction = 0.05;
  std::uint64_t rng_seed = 0;

  /// Throws ConfigError unless shift_fraction is in [0, 0.5).
  void validate() const;
  bool operator==(const PromptSpec&) const = default;
};

void to_json(nlohmann::json& j, const PromptSpec& s);
void from_json(const nlohmann::json& j, PromptSpec& s);

enum class PointMode { kRandom, kCenter };

/// Random: uniform over foreground pixels. Center: the foreground pixel
/// farthest from the background (pixels outside the image count as
/// background); ties go to the pixel nearest the foreground centroid, then
/// to the smallest (y, x).
Point sample_positive_point(const Mask& mask, PointMode mode, Rng& rng);
Point sample_negative_point(const Mask& mask, Rng& rng);

Box tight_bbox(const Mask& mask);
/// Each edge of the tight box moves by an independent offset drawn from
/// [-s * extent, +s * extent] of the image, then the box is clamped to the
/// image and reordered if needed.
Box shifted_bbox(const Mask& mask, double shift_fraction, Rng& rng);

/// Foreground: one positive point, one negative point, one shifted box.
/// Background: two negative points.
prompt::PromptSet build_training_prompts(const Mask& mask, double shift_fraction, Rng& rng);

/// Manual prompts for an evaluation mode; the mask must have foreground.
prompt::PromptSet prompts_for_mode(const Mask& mask, const PromptSpec& spec, Rng& rng);

/// min(ceil(0.1 * n), 1000).
size_t background_keep_count(size_t n, double fraction = 0.1, size_t cap = 1000);

/// Per object id, keeps background_keep_count of the full-background records
/// (drawn without replacement) and every foreground record. Input order is
/// preserved. Returns indices into `records`.
std::vector<size_t> subsample_background(const std::vector<ingest::SampleRecord>& records, Rng& rng, double fraction = 0.1,
                                         size_t cap = 1000);

}  // namespace samct::synthesis
