#pragma once

#include <map>
#include <string>
#include <utility>

#include "afrec/tensor.hpp"

namespace afrec {

// Model variants used for ablation.
enum class AblationVariant {
  Full,
  NoAttrLoss,        // drop the attribute prediction loss
  NoCateLoss,        // drop the category classification loss
  NoAttention,       // affinity matrix replaced by all ones
  SelfAttention,     // each item attends using its own global embedding
  NoCateProjection,  // category projections fixed to identity
  AttrAvg,           // attribute rows averaged into one row per item
};

const char* to_string(AblationVariant variant);
AblationVariant variant_from_string(const std::string& name);

// D x D projection per ordered (top category, bottom category) pair, plus the
// shared alignment matrix.
struct CategoryPairProjections {
  std::map<std::pair<int, int>, Matrix> pairs;
  Matrix compat;

  const Matrix* find(int top_category, int bottom_category) const;
};

// (A_top W_cc) W_compat (A_bottom W_cc)^T
Matrix compat_matrix(const Matrix& top_attrs, const Matrix& bottom_attrs, const Matrix& pair_projection,
                     const Matrix& compat_projection);

// Looks up the pair projection; pairs without an entry use the identity.
Matrix compat_matrix(const Matrix& top_attrs, const Matrix& bottom_attrs, std::pair<int, int> categories,
                     const CategoryPairProjections& projections);

// Outer product alpha_top alpha_bottom^T.
Matrix affinity_matrix(const Vector& alpha_top, const Vector& alpha_bottom);

Matrix weighted_compat(const Matrix& compat, const Matrix& affinity);

// Sum of all entries of the weighted matrix.
double score(const Matrix& weighted);

// alpha_top^T M alpha_bottom; equal to score(weighted_compat(M, affinity)).
double bilinear_score(const Vector& alpha_top, const Matrix& compat, const Vector& alpha_bottom);

struct CompatibilityBundle {
  Matrix compat;
  Matrix affinity;
  Matrix weighted;
  double score = 0.0;
  Vector alpha_top;
  Vector alpha_bottom;
};

}  // namespace afrec
