#include <cmath>

#include "afrec/attention.hpp"
#include "afrec/errors.hpp"
#include "afrec/math.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace afrec;
using afrec::testing::random_matrix;
using afrec::testing::random_vector;

TEST_CASE("zero projections give zero scores") {
  std::mt19937_64 rng(1);
  AttentionParams p = AttentionParams::zeros(5);
  p.w = random_vector(5, rng);
  CHECK(attention_scores(random_matrix(3, 5, rng), random_vector(5, rng), p).isZero(0.0));
}

TEST_CASE("scores match scalar arithmetic") {
  AttentionParams p = AttentionParams::zeros(2);
  p.w << 0.5, -1.0;
  p.W1 << 1.0, 0.2, -0.3, 0.8;
  p.W2 << 0.1, 0.0, 0.4, -0.6;
  Matrix attrs(2, 2);
  attrs << 0.3, -0.7, 1.1, 0.4;
  Vector partner(2);
  partner << 0.9, -0.2;
  const Vector s = attention_scores(attrs, partner, p);
  for (int k = 0; k < 2; ++k) {
    const double a0 = attrs(k, 0), a1 = attrs(k, 1);
    const double h0 = std::tanh(1.0 * a0 + 0.2 * a1 + 0.1 * 0.9 + 0.0 * -0.2);
    const double h1 = std::tanh(-0.3 * a0 + 0.8 * a1 + 0.4 * 0.9 - 0.6 * -0.2);
    CHECK(std::abs(s[k] - (0.5 * h0 - 1.0 * h1)) < 1e-12);
  }
  CHECK_THROWS_AS(attention_scores(Matrix::Zero(2, 3), partner, p), ShapeMismatch);
}

TEST_CASE("normalise") {
  CHECK((normalise(Vector::Constant(4, 2.5)) - Vector::Constant(4, 0.25)).cwiseAbs().maxCoeff() < 1e-15);
  Vector s(2);
  s << std::log(1.0), std::log(3.0);
  const Vector a = normalise(s);
  CHECK(a[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(a[1] == doctest::Approx(0.75).epsilon(1e-14));

  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Vector z = random_vector(6, rng, 50.0);
    const Vector base = normalise(z);
    CHECK((normalise((z.array() + 123.25).matrix()) - base).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(base.sum() - 1.0) < 1e-6);
    CHECK(base.minCoeff() >= 0.0);
  }
  Vector huge(3);
  huge << 1e300, -1e300, 0.0;
  const Vector h = normalise(huge);
  CHECK(h.allFinite());
  CHECK(h[0] == 1.0);
}

TEST_CASE("reciprocal attention") {
  std::mt19937_64 rng(3);
  const AttentionParams p = AttentionParams::init(6, rng);
  const Matrix A = random_matrix(4, 6, rng), B = random_matrix(4, 6, rng);
  const Vector va = random_vector(6, rng), vb = random_vector(6, rng);

  const AttentionPair same = reciprocal_attention(A, va, A, va, p);
  CHECK(same.top == same.bottom);

  const AttentionPair forward = reciprocal_attention(A, va, B, vb, p);
  const AttentionPair swapped = reciprocal_attention(B, vb, A, va, p);
  CHECK(forward.top == swapped.bottom);
  CHECK(forward.bottom == swapped.top);

  const Vector top_oracle = softmax(attention_scores(A, vb, p));
  const Vector bottom_oracle = softmax(attention_scores(B, va, p));
  CHECK((forward.top - top_oracle).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((forward.bottom - bottom_oracle).cwiseAbs().maxCoeff() < 1e-15);

  // Only the partner's global embedding enters the scores.
  const Matrix other = random_matrix(4, 6, rng);
  CHECK(reciprocal_attention(A, va, other, vb, p).top == forward.top);

  // Changing the partner embedding moves the distribution.
  Vector shifted = vb;
  shifted[2] += 0.1;
  CHECK((reciprocal_attention(A, va, B, shifted, p).top - forward.top).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("attention backward matches central differences") {
  std::mt19937_64 rng(4);
  const int d = 5, k = 3;
  AttentionParams p = AttentionParams::init(d, rng);
  Matrix attrs = random_matrix(k, d, rng);
  Vector partner = random_vector(d, rng);
  const Vector upstream = random_vector(k, rng);
  auto objective = [&] { return normalise(attention_scores(attrs, partner, p)).dot(upstream); };

  AttentionParams grads = AttentionParams::zeros(d);
  Matrix grad_attrs = Matrix::Zero(k, d);
  Vector grad_partner = Vector::Zero(d);
  const Vector alpha = normalise(attention_scores(attrs, partner, p));
  attention_backward(attrs, partner, p, alpha, upstream, grads, grad_attrs, grad_partner);

  double worst = 0.0;
  auto check = [&](double* x, double exact) {
    const double h = 1e-6, saved = *x;
    *x = saved + h;
    const double up = objective();
    *x = saved - h;
    const double down = objective();
    *x = saved;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(numeric - exact) / std::max({std::abs(numeric), std::abs(exact), 1e-4}));
  };
  for (int i = 0; i < d; ++i) check(&p.w[i], grads.w[i]);
  for (int i = 0; i < d * d; ++i) check(p.W1.data() + i, grads.W1.data()[i]);
  for (int i = 0; i < d * d; ++i) check(p.W2.data() + i, grads.W2.data()[i]);
  for (int i = 0; i < k * d; ++i) check(attrs.data() + i, grad_attrs.data()[i]);
  for (int i = 0; i < d; ++i) check(&partner[i], grad_partner[i]);
  CHECK(worst < 1e-4);
  CHECK(grads.w.cwiseAbs().maxCoeff() > 0.0);
  CHECK(grads.W1.cwiseAbs().maxCoeff() > 0.0);
  CHECK(grads.W2.cwiseAbs().maxCoeff() > 0.0);
}
