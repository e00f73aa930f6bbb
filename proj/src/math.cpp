#include "afrec/math.hpp"

#include <cmath>
#include <limits>

namespace afrec {

Vector softmax(const Vector& scores) {
  const double peak = scores.maxCoeff();
  if (std::isinf(peak) && peak > 0) {
    Vector out = (scores.array() == peak).cast<double>();
    return out / out.sum();
  }
  Vector out = (scores.array() - peak).exp();
  return out / out.sum();
}

double softmax_cross_entropy(const Vector& logits, int target, Vector* grad) {
  const Vector probs = softmax(logits);
  if (grad) {
    *grad = probs;
    (*grad)(target) -= 1.0;
  }
  const double peak = logits.maxCoeff();
  if (std::isinf(peak) && peak > 0) {
    if (logits(target) != peak) return std::numeric_limits<double>::infinity();
    return -std::log(probs(target));
  }
  const double log_norm = peak + std::log((logits.array() - peak).exp().sum());
  return log_norm - logits(target);
}

double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace afrec
