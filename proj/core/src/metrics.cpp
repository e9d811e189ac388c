#include "samct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace samct::metrics {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One-dimensional lower envelope of parabolas (Felzenszwalb and Huttenlocher).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    while (k >= 0) {
      const double s = ((f[q] + q * double(q)) - (f[v[k]] + v[k] * double(v[k]))) / (2.0 * q - 2.0 * v[k]);
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : ((f[q] + q * double(q)) - (f[v[k - 1]] + v[k - 1] * double(v[k - 1]))) / (2.0 * q - 2.0 * v[k - 1]);
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

}  // namespace

Grid<double> squared_distance_to(const Mask& features) {
  const int h = features.height, w = features.width;
  Grid<double> out(h, w, kInf);
  for (size_t i = 0; i < out.data.size(); ++i)
    if (features.data[i]) out.data[i] = 0.0;
  const int n = std::max(h, w);
  std::vector<double> f, d;
  std::vector<int> v(n + 1);
  std::vector<double> z(n + 2);
  f.resize(h);
  d.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = out(y, x);
    edt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) out(y, x) = d[y];
  }
  f.resize(w);
  d.resize(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = out(y, x);
    edt_1d(f, d, v, z);
    for (int x = 0; x < w; ++x) out(y, x) = d[x];
  }
  return out;
}

Mask boundary(const Mask& m) {
  Mask b(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m(y, x)) continue;
      const bool edge = !m.contains(y - 1, x) || !m(y - 1, x) || !m.contains(y + 1, x) || !m(y + 1, x) || !m.contains(y, x - 1) ||
                        !m(y, x - 1) || !m.contains(y, x + 1) || !m(y, x + 1);
      b(y, x) = edge ? 1 : 0;
    }
  return b;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile: no values");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

MetricReport evaluate(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "metrics");
  size_t np = 0, ng = 0, inter = 0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    np += p;
    ng += g;
    inter += p && g;
  }
  MetricReport r;
  if (np == 0 && ng == 0) return {100.0, 100.0, 0.0};
  if (np == 0 || ng == 0) {
    r.hd95 = std::hypot(static_cast<double>(pred.height), static_cast<double>(pred.width));
    return r;
  }
  r.dice = 200.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
  r.iou = 100.0 * static_cast<double>(inter) / static_cast<double>(np + ng - inter);

  const Mask bp = boundary(pred), bg = boundary(gt);
  const auto dp = squared_distance_to(bp), dg = squared_distance_to(bg);
  std::vector<double> distances;
  for (size_t i = 0; i < bp.data.size(); ++i) {
    if (bp.data[i]) distances.push_back(std::sqrt(dg.data[i]));
    if (bg.data[i]) distances.push_back(std::sqrt(dp.data[i]));
  }
  r.hd95 = percentile(std::move(distances), 95.0);
  return r;
}

Summary summarize(const std::vector<MetricReport>& reports, const std::vector<std::string>& object_ids) {
  if (reports.size() != object_ids.size()) throw std::invalid_argument("summarize: one object id per report required");
  Summary s;
  for (size_t i = 0; i < reports.size(); ++i) {
    s.dice += reports[i].dice;
    s.iou += reports[i].iou;
    s.hd95 += reports[i].hd95;
    auto& o = s.per_object[object_ids[i]];
    o.dice += reports[i].dice;
    o.iou += reports[i].iou;
    o.hd95 += reports[i].hd95;
    ++s.per_object_count[object_ids[i]];
  }
  s.count = reports.size();
  if (s.count) {
    s.dice /= static_cast<double>(s.count);
    s.iou /= static_cast<double>(s.count);
    s.hd95 /= static_cast<double>(s.count);
  }
  for (auto& [id, o] : s.per_object) {
    const auto n = static_cast<double>(s.per_object_count[id]);
    o.dice /= n;
    o.iou /= n;
    o.hd95 /= n;
  }
  return s;
}

}  // namespace samct::metrics
