#pragma once

#include <random>
#include <span>
#include <vector>

#include "afrec/data_model.hpp"
#include "afrec/tensor.hpp"

namespace afrec {

// K attribute blocks. Block k holds a D x D positionwise (1x1) convolution and
// an N_k x D value classifier.
struct AttributeBlockParams {
  std::vector<Matrix> conv_weight;
  std::vector<Vector> conv_bias;  // empty when the blocks are bias-free
  std::vector<Matrix> head_weight;
  std::vector<Vector> head_bias;

  std::size_t size() const { return conv_weight.size(); }
  bool has_bias() const { return !conv_bias.empty(); }

  static AttributeBlockParams init(int dim, const std::vector<int>& value_counts, bool bias, std::mt19937_64& rng);
  static AttributeBlockParams zeros(int dim, const std::vector<int>& value_counts, bool bias);
};

// K x D matrix, row k = a_k.
using AttributeMatrix = Matrix;

// Row k = global average pool of (W_k F + b_k). Computed in pooled form,
// W_k pool(F) + b_k, which is the same quantity.
AttributeMatrix extract_attributes(const Tensor3& map, const AttributeBlockParams& params);

// Same as extract_attributes given the already pooled embedding.
AttributeMatrix attributes_from_pooled(const Vector& pooled, const AttributeBlockParams& params);

std::vector<Vector> attribute_value_logits(const AttributeMatrix& attrs, const AttributeBlockParams& params);

struct ItemAttributeLogits {
  std::vector<Vector> logits;
  AttributeLabels targets;
};

// Sum over items and attributes of the cross-entropy of each present label.
double attribute_loss(std::span<const ItemAttributeLogits> batch);

}  // namespace afrec
