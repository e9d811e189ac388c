#pragma once

// Brute-force reference implementations. Each one recomputes a library
// result from first principles with plain loops so the vectorized code can be
// checked against it.

#include "samct/grid.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace oracle {

// ---------------------------------------------------------------------------
// Windowing

/// Exact round-half-up of (clamp(v) - L) * 255 / (U - L) for integer HU and
/// integer bounds, evaluated in integer arithmetic.
inline int window_int(long v, long lower, long upper) {
  const long c = std::clamp(v, lower, upper);
  const long span = upper - lower;
  // floor(x + 1/2) with x = (c - L) * 255 / span  ->  floor((2(c-L)*255 + span) / (2 span))
  return static_cast<int>((2 * (c - lower) * 255 + span) / (2 * span));
}

// ---------------------------------------------------------------------------
// Masks and metrics

struct SetMetrics {
  double dice, iou, hd95;
};

inline std::vector<std::pair<int, int>> pixels(const samct::Mask& m) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m(y, x)) out.emplace_back(y, x);
  return out;
}

inline std::vector<std::pair<int, int>> boundary_pixels(const samct::Mask& m) {
  std::vector<std::pair<int, int>> out;
  const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
  for (auto [y, x] : pixels(m)) {
    bool edge = false;
    for (int d = 0; d < 4; ++d) {
      const int yy = y + dy[d], xx = x + dx[d];
      if (yy < 0 || yy >= m.height || xx < 0 || xx >= m.width || !m(yy, xx)) edge = true;
    }
    if (edge) out.emplace_back(y, x);
  }
  return out;
}

/// numpy-style linear percentile.
inline double linear_percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double rank = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(rank));
  const auto hi = static_cast<size_t>(std::ceil(rank));
  return v[lo] + (v[hi] - v[lo]) * (rank - static_cast<double>(lo));
}

/// Set arithmetic for Dice and IoU; all pairs of boundary pixels for HD95.
inline SetMetrics set_metrics(const samct::Mask& p, const samct::Mask& g) {
  const auto pp = pixels(p), gp = pixels(g);
  if (pp.empty() && gp.empty()) return {100.0, 100.0, 0.0};
  if (pp.empty() || gp.empty()) return {0.0, 0.0, std::hypot(static_cast<double>(p.height), static_cast<double>(p.width))};
  size_t inter = 0;
  for (auto a : pp)
    if (std::find(gp.begin(), gp.end(), a) != gp.end()) ++inter;
  const size_t uni = pp.size() + gp.size() - inter;
  SetMetrics m;
  m.dice = 100.0 * 2.0 * static_cast<double>(inter) / static_cast<double>(pp.size() + gp.size());
  m.iou = 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
  const auto bp = boundary_pixels(p), bg = boundary_pixels(g);
  std::vector<double> d;
  auto directed = [&d](const auto& from, const auto& to) {
    for (auto [y, x] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (auto [yy, xx] : to) best = std::min(best, std::hypot(static_cast<double>(y - yy), static_cast<double>(x - xx)));
      d.push_back(best);
    }
  };
  directed(bp, bg);
  directed(bg, bp);
  m.hd95 = linear_percentile(d, 95.0);
  return m;
}

inline samct::Box scanline_box(const samct::Mask& m) {
  int x0 = m.width, y0 = m.height, x1 = -1, y1 = -1;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m(y, x)) {
        x0 = std::min(x0, x), x1 = std::max(x1, x);
        y0 = std::min(y0, y), y1 = std::max(y1, y);
      }
  return {x0, y0, x1, y1};
}

// ---------------------------------------------------------------------------
// Dense algebra on double tensors, element by element.

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

using Vec = std::vector<double>;

inline Vec row(const torch::Tensor& t) {
  auto c = t.to(torch::kDouble).contiguous();
  return Vec(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
}

/// y = W x (+ b) for a weight stored out x in.
inline Vec affine(const torch::Tensor& w, const Vec& x, const torch::Tensor& b = {}) {
  auto wc = w.to(torch::kDouble).contiguous();
  const auto out = wc.size(0), in = wc.size(1);
  auto a = wc.accessor<double, 2>();
  Vec y(static_cast<size_t>(out), 0.0);
  for (int64_t i = 0; i < out; ++i) {
    double s = 0;
    for (int64_t j = 0; j < in; ++j) s += a[i][j] * x[static_cast<size_t>(j)];
    y[static_cast<size_t>(i)] = s;
  }
  if (b.defined()) {
    const auto bv = row(b);
    for (size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  }
  return y;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec softmax(const Vec& s) {
  const double m = *std::max_element(s.begin(), s.end());
  Vec e(s.size());
  double z = 0;
  for (size_t i = 0; i < s.size(); ++i) z += (e[i] = std::exp(s[i] - m));
  for (auto& v : e) v /= z;
  return e;
}

inline Vec weighted_sum(const std::vector<Vec>& rows, const Vec& w) {
  Vec out(rows[0].size(), 0.0);
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < out.size(); ++j) out[j] += w[i] * rows[i][j];
  return out;
}

/// The k*k CNN pixels owned by patch (gy, gx), row-major within the window.
inline std::vector<Vec> window_rows(const torch::Tensor& f_cnn, int64_t n, int gy, int gx, int k) {
  auto a = f_cnn.accessor<double, 4>();
  std::vector<Vec> rows;
  for (int wy = 0; wy < k; ++wy)
    for (int wx = 0; wx < k; ++wx) {
      Vec r(static_cast<size_t>(f_cnn.size(1)));
      for (int64_t c = 0; c < f_cnn.size(1); ++c) r[static_cast<size_t>(c)] = a[n][c][gy * k + wy][gx * k + wx];
      rows.push_back(r);
    }
  return rows;
}

inline Vec patch_row(const torch::Tensor& f_trans, int64_t n, int gy, int gx) {
  auto a = f_trans.accessor<double, 4>();
  Vec r(static_cast<size_t>(f_trans.size(3)));
  for (int64_t c = 0; c < f_trans.size(3); ++c) r[static_cast<size_t>(c)] = a[n][gy][gx][c];
  return r;
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;
  size_t checked = 0;
};

/// Compares autograd against central differences for every element of every
/// leaf. `loss` must rebuild its graph on each call. Relative error uses
/// max(|analytic|, |numeric|, floor) as the denominator.
inline GradCheck finite_difference(const std::vector<std::pair<std::string, torch::Tensor>>& leaves, const std::function<torch::Tensor()>& loss,
                                   double h = 1e-5, double floor = 1e-7) {
  std::vector<torch::Tensor> tensors;
  for (const auto& [_, t] : leaves) tensors.push_back(t);
  auto value = loss();
  auto grads = torch::autograd::grad({value}, tensors, {}, false, false, true);
  GradCheck r;
  torch::NoGradGuard no_grad;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto t = leaves[li].second;
    auto flat = t.view(-1);
    auto g = grads[li].defined() ? grads[li].reshape(-1) : torch::zeros_like(flat);
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = loss().item<double>();
      flat[i] = orig - h;
      const double down = loss().item<double>();
      flat[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = g[i].item<double>();
      const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), floor});
      ++r.checked;
      if (rel > r.max_rel) {
        r.max_rel = rel;
        r.worst = leaves[li].first + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return r;
}

/// Named parameters of a module, converted in place to double precision with
/// standard-normal values so that zero-initialized paths carry gradient.
inline std::vector<std::pair<std::string, torch::Tensor>> randomized_parameters(torch::nn::Module& m, double scale = 0.5) {
  m.to(torch::kDouble);
  std::vector<std::pair<std::string, torch::Tensor>> out;
  torch::NoGradGuard no_grad;
  for (auto& p : m.named_parameters()) {
    p.value().copy_(torch::randn_like(p.value()) * scale);
    out.emplace_back(p.key(), p.value());
  }
  return out;
}

}  // namespace oracle
