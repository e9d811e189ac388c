#pragma once

#include "samct/grid.hpp"

#include <map>
#include <string>
#include <vector>

namespace samct::metrics {

/// Exact squared Euclidean distance from every pixel to the nearest pixel
/// with features(y, x) != 0. Infinity everywhere when there are no features.
Grid<double> squared_distance_to(const Mask& features);

/// Foreground pixels with at least one 4-neighbour that is background or
/// outside the image.
Mask boundary(const Mask& mask);

/// Linear-interpolation percentile of unsorted values, q in [0, 100].
double percentile(std::vector<double> values, double q);

struct MetricReport {
  double dice = 0;  // percent
  double iou = 0;   // percent
  double hd95 = 0;  // pixels
};

/// Dice and IoU in percent; HD95 over the pooled boundary-to-boundary
/// distances in both directions. Empty vs empty scores 100/100/0, empty vs
/// non-empty 0/0/image diagonal.
MetricReport evaluate(const Mask& pred, const Mask& gt);

struct Summary {
  double dice = 0;
  double iou = 0;
  double hd95 = 0;
  size_t count = 0;
  std::map<std::string, MetricReport> per_object;   // means per object id
  std::map<std::string, size_t> per_object_count;
};

/// Means in input order, overall and per object id.
Summary summarize(const std::vector<MetricReport>& reports, const std::vector<std::string>& object_ids);

}  // namespace samct::metrics
