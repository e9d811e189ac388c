#include "samct/losses.hpp"

#include <stdexcept>

namespace samct::losses {

LossTerms seg_loss(const torch::Tensor& logits, const torch::Tensor& target, const LossWeights& w, double eps) {
  if (logits.sizes() != target.sizes())
    throw std::invalid_argument("seg_loss: logits " + c10::str(logits.sizes()) + " and target " + c10::str(target.sizes()) + " differ");
  if (logits.dim() < 2) throw std::invalid_argument("seg_loss: expected a batch dimension");
  auto t = target.to(logits.dtype());
  auto p = torch::sigmoid(logits).flatten(1);
  auto g = t.flatten(1);
  auto dice = 1.0 - (2.0 * (p * g).sum(1) + eps) / (p.sum(1) + g.sum(1) + eps);
  LossTerms out;
  out.dice = dice.mean();
  out.bce = torch::binary_cross_entropy_with_logits(logits, t);
  out.total = w.dice * out.dice + w.bce * out.bce;
  return out;
}

LossTerms with_classifier(LossTerms terms, const torch::Tensor& class_logits, const torch::Tensor& labels, const LossWeights& w) {
  terms.classifier = torch::cross_entropy_loss(class_logits, labels);
  terms.total = terms.total + w.classifier * terms.classifier;
  return terms;
}

LossReport report(const LossTerms& t) {
  LossReport r;
  r.dice_loss = t.dice.item<double>();
  r.bce_loss = t.bce.item<double>();
  if (t.classifier.defined()) r.classifier_ce = t.classifier.item<double>();
  r.total = t.total.item<double>();
  return r;
}

}  // namespace samct::losses
