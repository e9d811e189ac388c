#include "samct/augment.hpp"

#include "samct/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace samct::augment {

void AugmentConfig::validate() const {
  auto range = [](double lo, double hi, const char* name) {
    if (!(lo <= hi)) throw ConfigError(std::string("augment.") + name + ": min exceeds max");
  };
  range(scale_min, scale_max, "scale");
  range(crop_min, crop_max, "crop");
  range(contrast_min, contrast_max, "contrast");
  range(gamma_min, gamma_max, "gamma");
  if (rotation_deg < 0) throw ConfigError("augment.rotation_deg: must be non-negative");
  if (scale_min <= 0 || crop_min <= 0 || crop_max > 1 || gamma_min <= 0) throw ConfigError("augment: scale, crop and gamma must be positive, crop <= 1");
}

void to_json(nlohmann::json& j, const AugmentConfig& c) {
  j = {{"enabled", c.enabled},         {"rotation_deg", c.rotation_deg}, {"scale_min", c.scale_min},
       {"scale_max", c.scale_max},     {"crop_min", c.crop_min},         {"crop_max", c.crop_max},
       {"contrast_min", c.contrast_min}, {"contrast_max", c.contrast_max}, {"gamma_min", c.gamma_min},
       {"gamma_max", c.gamma_max}};
}

void from_json(const nlohmann::json& j, AugmentConfig& c) {
  AugmentConfig d;
  c.enabled = j.value("enabled", d.enabled);
  c.rotation_deg = j.value("rotation_deg", d.rotation_deg);
  c.scale_min = j.value("scale_min", d.scale_min);
  c.scale_max = j.value("scale_max", d.scale_max);
  c.crop_min = j.value("crop_min", d.crop_min);
  c.crop_max = j.value("crop_max", d.crop_max);
  c.contrast_min = j.value("contrast_min", d.contrast_min);
  c.contrast_max = j.value("contrast_max", d.contrast_max);
  c.gamma_min = j.value("gamma_min", d.gamma_min);
  c.gamma_max = j.value("gamma_max", d.gamma_max);
  c.validate();
}

AugmentParams AugmentParams::draw(const AugmentConfig& c, int height, int width, Rng& rng) {
  AugmentParams p;
  p.angle_deg = rng.uniform(-c.rotation_deg, c.rotation_deg);
  p.scale = rng.uniform(c.scale_min, c.scale_max);
  p.crop = rng.uniform(c.crop_min, c.crop_max);
  const double slack_x = 0.5 * (1.0 - p.crop) * width, slack_y = 0.5 * (1.0 - p.crop) * height;
  p.crop_dx = rng.uniform(-slack_x, slack_x);
  p.crop_dy = rng.uniform(-slack_y, slack_y);
  p.contrast = rng.uniform(c.contrast_min, c.contrast_max);
  p.gamma = rng.uniform(c.gamma_min, c.gamma_max);
  return p;
}

std::pair<double, double> source_of(const AugmentParams& p, int height, int width, double y, double x) {
  const double cy = 0.5 * (height - 1), cx = 0.5 * (width - 1);
  const double zoom = p.scale / p.crop;
  const double t = p.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const double u = (x - cx) / zoom, v = (y - cy) / zoom;
  // Inverse rotation of the output offset.
  const double sx = c * u + s * v, sy = -s * u + c * v;
  return {cy + p.crop_dy + sy, cx + p.crop_dx + sx};
}

std::pair<Image8, Mask> apply(const Image8& image, const Mask& mask, const AugmentParams& p) {
  require_same_shape(image, mask, "augment");
  const int h = image.height, w = image.width;
  const bool geometric = p.angle_deg != 0.0 || p.scale != 1.0 || p.crop != 1.0 || p.crop_dx != 0.0 || p.crop_dy != 0.0;
  Grid<double> warped(h, w);
  Mask out_mask = mask;
  if (geometric) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto [sy, sx] = source_of(p, h, w, y, x);
        const int ny = static_cast<int>(std::lround(sy)), nx = static_cast<int>(std::lround(sx));
        out_mask(y, x) = mask.contains(ny, nx) ? mask(ny, nx) : 0;
        const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
        const double fy = sy - y0, fx = sx - x0;
        auto at = [&](int yy, int xx) { return image.contains(yy, xx) ? static_cast<double>(image(yy, xx)) : 0.0; };
        warped(y, x) = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) + fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
      }
  } else {
    for (size_t i = 0; i < image.data.size(); ++i) warped.data[i] = image.data[i];
  }
  if (p.contrast != 1.0) {
    double mean = 0;
    for (double v : warped.data) mean += v;
    mean /= static_cast<double>(warped.data.size());
    for (double& v : warped.data) v = mean + p.contrast * (v - mean);
  }
  if (p.gamma != 1.0)
    for (double& v : warped.data) v = 255.0 * std::pow(std::clamp(v, 0.0, 255.0) / 255.0, p.gamma);
  Image8 out_image(h, w);
  for (size_t i = 0; i < out_image.data.size(); ++i)
    out_image.data[i] = static_cast<uint8_t>(std::clamp(std::floor(warped.data[i] + 0.5), 0.0, 255.0));
  return {out_image, out_mask};
}

}  // namespace samct::augment
