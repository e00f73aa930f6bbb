#include "afrec/attention.hpp"

#include <cmath>

#include "afrec/errors.hpp"
#include "afrec/math.hpp"

namespace afrec {

AttentionParams AttentionParams::init(int dim, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  AttentionParams p;
  p.w = Vector::NullaryExpr(dim, [&]() { return u(rng); });
  p.W1 = Matrix::NullaryExpr(dim, dim, [&]() { return u(rng); });
  p.W2 = Matrix::NullaryExpr(dim, dim, [&]() { return u(rng); });
  return p;
}

AttentionParams AttentionParams::zeros(int dim) {
  return {Vector::Zero(dim), Matrix::Zero(dim, dim), Matrix::Zero(dim, dim)};
}

namespace {

void check_shapes(const Matrix& attrs, const Vector& partner, const AttentionParams& p) {
  const Eigen::Index d = p.w.size();
  if (attrs.cols() != d || partner.size() != d || p.W1.rows() != d || p.W1.cols() != d || p.W2.rows() != d ||
      p.W2.cols() != d) {
    throw ShapeMismatch("attention parameters do not match representation size");
  }
}

// Column k holds tanh(W1 a_k + W2 partner).
Matrix hidden(const Matrix& attrs, const Vector& partner, const AttentionParams& p) {
  Matrix h = p.W1 * attrs.transpose();
  h.colwise() += p.W2 * partner;
  return h.array().tanh().matrix();
}

}  // namespace

Vector attention_scores(const Matrix& attrs, const Vector& partner_global, const AttentionParams& params) {
  check_shapes(attrs, partner_global, params);
  return hidden(attrs, partner_global, params).transpose() * params.w;
}

Vector normalise(const Vector& scores) { return softmax(scores); }

AttentionPair reciprocal_attention(const Matrix& top_attrs, const Vector& top_global, const Matrix& bottom_attrs,
                                   const Vector& bottom_global, const AttentionParams& top_params,
                                   const AttentionParams& bottom_params) {
  return {normalise(attention_scores(top_attrs, bottom_global, top_params)),
          normalise(attention_scores(bottom_attrs, top_global, bottom_params))};
}

void attention_backward(const Matrix& attrs, const Vector& partner_global, const AttentionParams& params,
                        const Vector& alpha, const Vector& grad_alpha, AttentionParams& grads, Matrix& grad_attrs,
                        Vector& grad_partner) {
  const Vector grad_scores = alpha.cwiseProduct((grad_alpha.array() - alpha.dot(grad_alpha)).matrix());
  const Matrix u = hidden(attrs, partner_global, params);
  grads.w += u * grad_scores;
  // dL/dh_k = (dL/ds_k) w * (1 - u_k^2)
  Matrix grad_h = params.w * grad_scores.transpose();
  grad_h.array() *= (1.0 - u.array().square());
  grads.W1.noalias() += grad_h * attrs;
  const Vector grad_h_sum = grad_h.rowwise().sum();
  grads.W2.noalias() += grad_h_sum * partner_global.transpose();
  grad_attrs.noalias() += grad_h.transpose() * params.W1;
  grad_partner.noalias() += params.W2.transpose() * grad_h_sum;
}

}  // namespace afrec
