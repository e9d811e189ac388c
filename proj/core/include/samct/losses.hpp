#pragma once

#include <torch/torch.h>

#include <optional>

namespace samct::losses {

struct LossWeights {
  double dice = 1.0;
  double bce = 1.0;
  double classifier = 1.0;
};

struct LossTerms {
  torch::Tensor dice;
  torch::Tensor bce;
  torch::Tensor classifier;  // undefined outside indicator training
  torch::Tensor total;
};

struct LossReport {
  double dice_loss = 0;
  double bce_loss = 0;
  std::optional<double> classifier_ce;
  double total = 0;
};

/// Soft Dice with smoothing eps over sigmoid(logits), per sample then
/// averaged, plus mean binary cross-entropy on the logits.
LossTerms seg_loss(const torch::Tensor& logits, const torch::Tensor& target, const LossWeights& w = {}, double eps = 1.0);

/// Adds cross-entropy on (foreground, background) logits; labels are 0 for
/// foreground and 1 for background.
LossTerms with_classifier(LossTerms terms, const torch::Tensor& class_logits, const torch::Tensor& labels, const LossWeights& w = {});

LossReport report(const LossTerms& terms);

}  // namespace samct::losses
