#include "samct/synthetic.hpp"

#include "samct/errors.hpp"
#include "samct/ingest.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace samct::synthetic {
namespace fs = std::filesystem;

namespace {

// Sum of a few random low-frequency waves, zero mean, amplitude `amp`.
Grid<double> smooth_field(int size, double amp, Rng& rng) {
  Grid<double> f(size, size, 0.0);
  for (int k = 0; k < 3; ++k) {
    const double fx = rng.uniform(0.5, 2.0) / size, fy = rng.uniform(0.5, 2.0) / size;
    const double phase = rng.uniform(0, 2 * std::numbers::pi);
    const double a = amp * rng.uniform(0.3, 1.0) / 3.0;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) f(y, x) += a * std::sin(2 * std::numbers::pi * (fx * x + fy * y) + phase);
  }
  return f;
}

Mask ellipse_mask(int size, double cy, double cx, double ry, double rx, double angle) {
  Mask m(size, size);
  const double c = std::cos(angle), s = std::sin(angle);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = c * (x - cx) + s * (y - cy), v = -s * (x - cx) + c * (y - cy);
      m(y, x) = (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0 ? 1 : 0;
    }
  return m;
}

Mask rectangle_mask(int size, int y0, int x0, int y1, int x1) {
  Mask m(size, size);
  for (int y = std::max(0, y0); y <= std::min(size - 1, y1); ++y)
    for (int x = std::max(0, x0); x <= std::min(size - 1, x1); ++x) m(y, x) = 1;
  return m;
}

Mask triangle_mask(int size, const std::array<std::pair<double, double>, 3>& p) {
  Mask m(size, size);
  auto edge = [](std::pair<double, double> a, std::pair<double, double> b, double x, double y) {
    return (b.first - a.first) * (y - a.second) - (b.second - a.second) * (x - a.first);
  };
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double e0 = edge(p[0], p[1], x, y), e1 = edge(p[1], p[2], x, y), e2 = edge(p[2], p[0], x, y);
      m(y, x) = ((e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0)) ? 1 : 0;
    }
  return m;
}

Image8 quantize(const Grid<double>& g) {
  Image8 out(g.height, g.width);
  for (size_t i = 0; i < g.data.size(); ++i) out.data[i] = static_cast<uint8_t>(std::clamp(std::floor(g.data[i] + 0.5), 0.0, 255.0));
  return out;
}

}  // namespace

ShapeSample natural_sample(int size, Rng& rng) {
  const double base = rng.uniform(40, 215);
  Grid<double> img = smooth_field(size, 30, rng);
  for (double& v : img.data) v += base;
  const int n = static_cast<int>(rng.uniform_int(1, 3));
  std::vector<Mask> masks;
  for (int i = 0; i < n; ++i) {
    Mask m;
    const int kind = static_cast<int>(rng.uniform_int(0, 2));
    const double cy = rng.uniform(0.2, 0.8) * size, cx = rng.uniform(0.2, 0.8) * size;
    if (kind == 0) {
      m = ellipse_mask(size, cy, cx, rng.uniform(0.06, 0.25) * size, rng.uniform(0.06, 0.25) * size, rng.uniform(0, std::numbers::pi));
    } else if (kind == 1) {
      const int hh = static_cast<int>(rng.uniform(0.06, 0.22) * size), hw = static_cast<int>(rng.uniform(0.06, 0.22) * size);
      m = rectangle_mask(size, static_cast<int>(cy) - hh, static_cast<int>(cx) - hw, static_cast<int>(cy) + hh, static_cast<int>(cx) + hw);
    } else {
      std::array<std::pair<double, double>, 3> p;
      const double r = rng.uniform(0.12, 0.3) * size, a0 = rng.uniform(0, 2 * std::numbers::pi);
      for (int k = 0; k < 3; ++k) {
        const double a = a0 + k * 2 * std::numbers::pi / 3 + rng.uniform(-0.4, 0.4);
        p[k] = {cx + r * std::cos(a), cy + r * std::sin(a)};
      }
      m = triangle_mask(size, p);
    }
    if (count_foreground(m) < 6) continue;
    // Intensity far from the local background.
    double level = base + (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(60, 110);
    if (level < 0 || level > 255) level = base > 128 ? base - rng.uniform(70, 110) : base + rng.uniform(70, 110);
    for (size_t k = 0; k < m.data.size(); ++k)
      if (m.data[k]) img.data[k] = level;
    for (auto& prev : masks)
      for (size_t k = 0; k < m.data.size(); ++k)
        if (m.data[k]) prev.data[k] = 0;
    masks.push_back(std::move(m));
  }
  for (double& v : img.data) v += rng.normal(0, 3);
  ShapeSample s;
  s.image = quantize(img);
  for (size_t i = 0; i < masks.size(); ++i) s.objects.emplace_back("shape" + std::to_string(i), std::move(masks[i]));
  return s;
}

ShapeSample ct_like_sample(int size, Rng& rng, const CtLikeOptions& o) {
  Grid<double> img = smooth_field(size, 16, rng);
  const double base = rng.uniform(95, 125);
  for (double& v : img.data) v += base;
  const double half = 0.5 * size;

  Mask ellipse(size, size), rect(size, size);
  if (rng.bernoulli(o.presence)) {
    const double ry = rng.uniform(0.09, 0.2) * size, rx = rng.uniform(0.08, 0.17) * size;
    const double cx = rng.uniform(rx + 2, half - rx - 2), cy = rng.uniform(ry + 2, size - ry - 2);
    ellipse = ellipse_mask(size, cy, cx, ry, rx, rng.uniform(-0.5, 0.5));
    const double level = o.contrast * rng.uniform(0.8, 1.2);
    for (size_t k = 0; k < ellipse.data.size(); ++k)
      if (ellipse.data[k]) img.data[k] += level;
  }
  if (rng.bernoulli(o.presence)) {
    const int hh = static_cast<int>(rng.uniform(0.07, 0.2) * size), hw = static_cast<int>(rng.uniform(0.06, 0.16) * size);
    const int cx = static_cast<int>(rng.uniform(half + hw + 2, size - hw - 2)), cy = static_cast<int>(rng.uniform(hh + 2, size - hh - 2));
    rect = rectangle_mask(size, cy - hh, cx - hw, cy + hh, cx + hw);
    const double level = o.contrast * rng.uniform(0.8, 1.2);
    for (size_t k = 0; k < rect.data.size(); ++k)
      if (rect.data[k]) img.data[k] -= level;
  }
  for (double& v : img.data) v += rng.normal(0, o.noise);
  ShapeSample s;
  s.image = quantize(img);
  s.objects.emplace_back(o.ellipse_id, std::move(ellipse));
  s.objects.emplace_back(o.rectangle_id, std::move(rect));
  return s;
}

void write_ct_like_dataset(const fs::path& dir, int count, int size, std::uint64_t seed, const CtLikeOptions& options) {
  if (count <= 0) throw ConfigError("synth.count: must be positive");
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  for (int i = 0; i < count; ++i) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(i)));
    const auto s = ct_like_sample(size, rng, options);
    Image8 labels(size, size);
    for (size_t k = 0; k < labels.data.size(); ++k) {
      if (s.objects[0].second.data[k]) labels.data[k] = 1;
      if (s.objects[1].second.data[k]) labels.data[k] = 2;
    }
    char name[32];
    std::snprintf(name, sizeof name, "case_%05d.png", i);
    ingest::write_png(dir / "images" / name, s.image);
    ingest::write_png(dir / "labels" / name, labels);
  }
  nlohmann::json spec = {{"name", "synthetic-ct"},
                         {"labels", {{"1", options.ellipse_id}, {"2", options.rectangle_id}}},
                         {"windows", nlohmann::json::object()},
                         {"screening", nlohmann::json::object()}};
  std::ofstream(dir / "dataset.json") << spec.dump(2) << "\n";
}

std::map<std::string, std::string> load_vocabulary(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("vocabulary: cannot open " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

fs::path default_vocabulary_path() {
#ifdef SAMCT_DATA_DIR
  return fs::path(SAMCT_DATA_DIR) / "object_vocabulary.tsv";
#else
  return "object_vocabulary.tsv";
#endif
}

}  // namespace samct::synthetic
