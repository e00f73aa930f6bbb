#include "afrec/attribute_extractor.hpp"

#include <cmath>

#include "afrec/errors.hpp"
#include "afrec/math.hpp"

namespace afrec {

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  return Matrix::NullaryExpr(rows, cols, [&]() { return u(rng); });
}

}  // namespace

AttributeBlockParams AttributeBlockParams::init(int dim, const std::vector<int>& value_counts, bool bias,
                                                std::mt19937_64& rng) {
  AttributeBlockParams p;
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int n : value_counts) {
    p.conv_weight.push_back(uniform_matrix(dim, dim, bound, rng));
    if (bias) p.conv_bias.push_back(Vector::Zero(dim));
    p.head_weight.push_back(uniform_matrix(n, dim, bound, rng));
    p.head_bias.push_back(Vector::Zero(n));
  }
  return p;
}

AttributeBlockParams AttributeBlockParams::zeros(int dim, const std::vector<int>& value_counts, bool bias) {
  AttributeBlockParams p;
  for (int n : value_counts) {
    p.conv_weight.push_back(Matrix::Zero(dim, dim));
    if (bias) p.conv_bias.push_back(Vector::Zero(dim));
    p.head_weight.push_back(Matrix::Zero(n, dim));
    p.head_bias.push_back(Vector::Zero(n));
  }
  return p;
}

AttributeMatrix attributes_from_pooled(const Vector& pooled, const AttributeBlockParams& params) {
  const auto k_count = static_cast<Eigen::Index>(params.size());
  const Eigen::Index dim = pooled.size();
  AttributeMatrix attrs(k_count, dim);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const Matrix& w = params.conv_weight[static_cast<std::size_t>(k)];
    if (w.cols() != dim || w.rows() != dim) throw ShapeMismatch("attribute block kernel must be D x D");
    Vector row = w * pooled;
    if (params.has_bias()) row += params.conv_bias[static_cast<std::size_t>(k)];
    attrs.row(k) = row.transpose();
  }
  return attrs;
}

AttributeMatrix extract_attributes(const Tensor3& map, const AttributeBlockParams& params) {
  return attributes_from_pooled(map.data.rowwise().mean(), params);
}

std::vector<Vector> attribute_value_logits(const AttributeMatrix& attrs, const AttributeBlockParams& params) {
  if (static_cast<std::size_t>(attrs.rows()) != params.size()) throw ShapeMismatch("attribute count mismatch");
  std::vector<Vector> logits;
  logits.reserve(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix& w = params.head_weight[k];
    if (w.cols() != attrs.cols() || w.rows() != params.head_bias[k].size()) {
      throw ShapeMismatch("attribute classifier does not match representation");
    }
    logits.push_back(w * attrs.row(static_cast<Eigen::Index>(k)).transpose() + params.head_bias[k]);
  }
  return logits;
}

double attribute_loss(std::span<const ItemAttributeLogits> batch) {
  if (batch.empty()) throw EmptyBatch("attribute_loss needs a non-empty batch");
  double total = 0.0;
  for (const auto& item : batch) {
    if (item.targets.size() != item.logits.size()) throw ShapeMismatch("label count does not match logits");
    for (std::size_t k = 0; k < item.logits.size(); ++k) {
      if (item.targets[k]) total += softmax_cross_entropy(item.logits[k], *item.targets[k]);
    }
  }
  return total;
}

}  // namespace afrec
