#pragma once

#include <random>

#include "afrec/tensor.hpp"

namespace afrec {

struct AttentionParams {
  Vector w;   // D
  Matrix W1;  // D x D, applied to each attribute row
  Matrix W2;  // D x D, applied to the partner's global embedding

  static AttentionParams init(int dim, std::mt19937_64& rng);
  static AttentionParams zeros(int dim);
};

// s_k = w . tanh(W1 a_k + W2 partner_global) for every attribute row a_k.
Vector attention_scores(const Matrix& attrs, const Vector& partner_global, const AttentionParams& params);

// Softmax over attributes.
Vector normalise(const Vector& scores);

struct AttentionPair {
  Vector top;
  Vector bottom;
};

// The top's attention is conditioned on the bottom's global embedding and vice
// versa. bottom_params differs from top_params only in the untied setting.
AttentionPair reciprocal_attention(const Matrix& top_attrs, const Vector& top_global, const Matrix& bottom_attrs,
                                   const Vector& bottom_global, const AttentionParams& top_params,
                                   const AttentionParams& bottom_params);

inline AttentionPair reciprocal_attention(const Matrix& top_attrs, const Vector& top_global,
                                          const Matrix& bottom_attrs, const Vector& bottom_global,
                                          const AttentionParams& params) {
  return reciprocal_attention(top_attrs, top_global, bottom_attrs, bottom_global, params, params);
}

// Backpropagates dL/dalpha through softmax and the score network. Accumulates
// into grads, grad_attrs and grad_partner.
void attention_backward(const Matrix& attrs, const Vector& partner_global, const AttentionParams& params,
                        const Vector& alpha, const Vector& grad_alpha, AttentionParams& grads, Matrix& grad_attrs,
                        Vector& grad_partner);

}  // namespace afrec
