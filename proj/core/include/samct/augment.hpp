#pragma once

#include "samct/grid.hpp"
#include "samct/rng.hpp"

#include <nlohmann/json.hpp>

#include <utility>

namespace samct::augment {

/// Ranges for the random draws. Angles in degrees.
struct AugmentConfig {
  bool enabled = true;
  double rotation_deg = 25.0;
  double scale_min = 0.9, scale_max = 1.1;
  double crop_min = 0.9, crop_max = 1.0;
  double contrast_min = 0.8, contrast_max = 1.2;
  double gamma_min = 0.7, gamma_max = 1.5;

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

void to_json(nlohmann::json& j, const AugmentConfig& c);
void from_json(const nlohmann::json& j, AugmentConfig& c);

/// One concrete draw. The crop keeps a square of side `crop` times the image
/// side, its centre offset by (crop_dx, crop_dy) pixels, and resamples it to
/// the full image.
struct AugmentParams {
  double angle_deg = 0.0;
  double scale = 1.0;
  double crop = 1.0;
  double crop_dx = 0.0, crop_dy = 0.0;
  double contrast = 1.0;
  double gamma = 1.0;

  static AugmentParams identity() { return {}; }
  static AugmentParams draw(const AugmentConfig& c, int height, int width, Rng& rng);
};

/// Maps an output pixel centre to its source location.
std::pair<double, double> source_of(const AugmentParams& p, int height, int width, double y, double x);

/// Geometry is shared; the image is resampled bilinearly (zero outside), the
/// mask by nearest neighbour. Contrast and gamma touch the image only.
std::pair<Image8, Mask> apply(const Image8& image, const Mask& mask, const AugmentParams& p);

}  // namespace samct::augment
