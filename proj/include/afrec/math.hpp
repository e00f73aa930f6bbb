#pragma once

#include "afrec/tensor.hpp"

namespace afrec {

// Max-subtracted softmax.
Vector softmax(const Vector& scores);

// -log softmax(logits)[target]. When grad is non-null it receives
// softmax(logits) - onehot(target). Handles +inf logits.
double softmax_cross_entropy(const Vector& logits, int target, Vector* grad = nullptr);

// log(1 + exp(x)) without overflow.
double softplus(double x);

double sigmoid(double x);

}  // namespace afrec
