#include "samct/prompt_synthesis.hpp"

#include "samct/errors.hpp"
#include "samct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace samct::synthesis {

std::string to_string(PromptMode m) {
  switch (m) {
    case PromptMode::kRandomPoint: return "random_point";
    case PromptMode::kCenterPoint: return "center_point";
    case PromptMode::kRandomBox: return "random_box";
    case PromptMode::kBoundingBox: return "bounding_box";
    case PromptMode::kCenterPointPlusBox: return "center_point_plus_box";
    case PromptMode::kTaskIndicator: return "task_indicator";
  }
  return "?";
}

const std::vector<PromptMode>& all_modes() {
  static const std::vector<PromptMode> modes = {PromptMode::kRandomPoint, PromptMode::kCenterPoint,        PromptMode::kRandomBox,
                                                PromptMode::kBoundingBox, PromptMode::kCenterPointPlusBox, PromptMode::kTaskIndicator};
  return modes;
}

PromptMode parse_mode(const std::string& name) {
  for (auto m : all_modes())
    if (to_string(m) == name) return m;
  throw ConfigError("prompt.mode: unknown prompt mode '" + name +
                    "' (expected random_point|center_point|random_box|bounding_box|center_point_plus_box|task_indicator)");
}

void PromptSpec::validate() const {
  if (!(shift_fraction >= 0.0 && shift_fraction < 0.5)) throw ConfigError("prompt.shift_fraction: must be in [0, 0.5)");
}

void to_json(nlohmann::json& j, const PromptSpec& s) {
  j = {{"mode", to_string(s.mode)}, {"shift_fraction", s.shift_fraction}, {"rng_seed", s.rng_seed}};
}

void from_json(const nlohmann::json& j, PromptSpec& s) {
  PromptSpec d;
  s.mode = parse_mode(j.value("mode", to_string(d.mode)));
  s.shift_fraction = j.value("shift_fraction", d.shift_fraction);
  s.rng_seed = j.value("rng_seed", d.rng_seed);
  s.validate();
}

namespace {

std::vector<Point> pixels_with(const Mask& m, bool value) {
  std::vector<Point> out;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if ((m(y, x) != 0) == value) out.push_back({x, y});
  return out;
}

Point center_point(const Mask& mask) {
  // Background seeds, with a one-pixel background frame around the image.
  Mask seeds(mask.height + 2, mask.width + 2, 1);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) seeds(y + 1, x + 1) = mask(y, x) ? 0 : 1;
  const auto dist = metrics::squared_distance_to(seeds);
  double cy = 0, cx = 0, n = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask(y, x)) {
        cy += y;
        cx += x;
        n += 1;
      }
  cy /= n;
  cx /= n;
  Point best{-1, -1};
  double best_d = -1, best_c = std::numeric_limits<double>::infinity();
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask(y, x)) continue;
      const double d = dist(y + 1, x + 1);
      const double c = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      if (d > best_d || (d == best_d && c < best_c)) {
        best = {x, y};
        best_d = d;
        best_c = c;
      }
    }
  return best;
}

}  // namespace

Point sample_positive_point(const Mask& mask, PointMode mode, Rng& rng) {
  if (count_foreground(mask) == 0) throw std::invalid_argument("sample_positive_point: mask has no foreground");
  if (mode == PointMode::kCenter) return center_point(mask);
  const auto fg = pixels_with(mask, true);
  return fg[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(fg.size()) - 1))];
}

Point sample_negative_point(const Mask& mask, Rng& rng) {
  const auto bg = pixels_with(mask, false);
  if (bg.empty()) throw std::invalid_argument("sample_negative_point: mask has no background");
  return bg[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(bg.size()) - 1))];
}

Box tight_bbox(const Mask& mask) {
  Box b{mask.width, mask.height, -1, -1};
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask(y, x)) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x);
        b.y1 = std::max(b.y1, y);
      }
  if (b.x1 < 0) throw std::invalid_argument("tight_bbox: mask has no foreground");
  return b;
}

Box shifted_bbox(const Mask& mask, double s, Rng& rng) {
  Box b = tight_bbox(mask);
  if (s <= 0.0) return b;
  const double dx = s * mask.width, dy = s * mask.height;
  auto shift = [&](int v, double range, int hi) {
    const int moved = static_cast<int>(std::lround(v + rng.uniform(-range, range)));
    return std::clamp(moved, 0, hi);
  };
  b.x0 = shift(b.x0, dx, mask.width - 1);
  b.y0 = shift(b.y0, dy, mask.height - 1);
  b.x1 = shift(b.x1, dx, mask.width - 1);
  b.y1 = shift(b.y1, dy, mask.height - 1);
  if (b.x0 > b.x1) std::swap(b.x0, b.x1);
  if (b.y0 > b.y1) std::swap(b.y0, b.y1);
  return b;
}

namespace {

// The box encoder needs x0 < x1 and y0 < y1; widen degenerate boxes.
Box widen(Box b, int w, int h) {
  if (b.x0 == b.x1) b.x1 < w - 1 ? ++b.x1 : --b.x0;
  if (b.y0 == b.y1) b.y1 < h - 1 ? ++b.y1 : --b.y0;
  return b;
}

}  // namespace

prompt::PromptSet build_training_prompts(const Mask& mask, double shift_fraction, Rng& rng) {
  prompt::PromptSet s;
  if (count_foreground(mask) == 0) {
    s.negative = {sample_negative_point(mask, rng), sample_negative_point(mask, rng)};
    return s;
  }
  s.positive = {sample_positive_point(mask, PointMode::kRandom, rng)};
  s.negative = {sample_negative_point(mask, rng)};
  s.box = widen(shifted_bbox(mask, shift_fraction, rng), mask.width, mask.height);
  return s;
}

prompt::PromptSet prompts_for_mode(const Mask& mask, const PromptSpec& spec, Rng& rng) {
  prompt::PromptSet s;
  switch (spec.mode) {
    case PromptMode::kRandomPoint: s.positive = {sample_positive_point(mask, PointMode::kRandom, rng)}; break;
    case PromptMode::kCenterPoint: s.positive = {sample_positive_point(mask, PointMode::kCenter, rng)}; break;
    case PromptMode::kRandomBox: s.box = widen(shifted_bbox(mask, spec.shift_fraction, rng), mask.width, mask.height); break;
    case PromptMode::kBoundingBox: s.box = widen(tight_bbox(mask), mask.width, mask.height); break;
    case PromptMode::kCenterPointPlusBox:
      s.positive = {sample_positive_point(mask, PointMode::kCenter, rng)};
      s.box = widen(tight_bbox(mask), mask.width, mask.height);
      break;
    case PromptMode::kTaskIndicator: throw std::invalid_argument("prompts_for_mode: task_indicator mode has no manual prompts");
  }
  return s;
}

size_t background_keep_count(size_t n, double fraction, size_t cap) {
  return std::min(static_cast<size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12)), cap);
}

std::vector<size_t> subsample_background(const std::vector<ingest::SampleRecord>& records, Rng& rng, double fraction, size_t cap) {
  std::map<std::string, std::vector<size_t>> background;
  for (size_t i = 0; i < records.size(); ++i)
    if (!records[i].has_foreground) background[records[i].object_id].push_back(i);
  std::vector<bool> keep(records.size(), true);
  for (auto& [obj, idx] : background) {
    const size_t k = background_keep_count(idx.size(), fraction, cap);
    rng.shuffle(idx);
    for (size_t j = k; j < idx.size(); ++j) keep[idx[j]] = false;
  }
  std::vector<size_t> out;
  for (size_t i = 0; i < records.size(); ++i)
    if (keep[i]) out.push_back(i);
  return out;
}

}  // namespace samct::synthesis
