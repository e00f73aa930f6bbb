#include "afrec/compatibility.hpp"

#include "afrec/errors.hpp"

namespace afrec {

namespace {

struct VariantName {
  AblationVariant variant;
  const char* name;
};

constexpr VariantName kVariantNames[] = {
    {AblationVariant::Full, "full"},
    {AblationVariant::NoAttrLoss, "no-attr-loss"},
    {AblationVariant::NoCateLoss, "no-cate-loss"},
    {AblationVariant::NoAttention, "no-attention"},
    {AblationVariant::SelfAttention, "self-attention"},
    {AblationVariant::NoCateProjection, "no-cate-projection"},
    {AblationVariant::AttrAvg, "attr-avg"},
};

}  // namespace

const char* to_string(AblationVariant variant) {
  for (const auto& entry : kVariantNames) {
    if (entry.variant == variant) return entry.name;
  }
  return "full";
}

AblationVariant variant_from_string(const std::string& name) {
  for (const auto& entry : kVariantNames) {
    if (name == entry.name) return entry.variant;
  }
  throw ConfigInvalid("unknown variant '" + name + "'");
}

const Matrix* CategoryPairProjections::find(int top_category, int bottom_category) const {
  auto it = pairs.find({top_category, bottom_category});
  return it == pairs.end() ? nullptr : &it->second;
}

Matrix compat_matrix(const Matrix& top_attrs, const Matrix& bottom_attrs, const Matrix& pair_projection,
                     const Matrix& compat_projection) {
  const Eigen::Index d = compat_projection.rows();
  if (compat_projection.cols() != d || pair_projection.rows() != d || pair_projection.cols() != d ||
      top_attrs.cols() != d || bottom_attrs.cols() != d) {
    throw ShapeMismatch("compatibility projections do not match representation size");
  }
  const Matrix top = top_attrs * pair_projection;
  const Matrix bottom = bottom_attrs * pair_projection;
  return top * compat_projection * bottom.transpose();
}

Matrix compat_matrix(const Matrix& top_attrs, const Matrix& bottom_attrs, std::pair<int, int> categories,
                     const CategoryPairProjections& projections) {
  if (const Matrix* w = projections.find(categories.first, categories.second)) {
    return compat_matrix(top_attrs, bottom_attrs, *w, projections.compat);
  }
  const Eigen::Index d = projections.compat.rows();
  return compat_matrix(top_attrs, bottom_attrs, Matrix::Identity(d, d), projections.compat);
}

Matrix affinity_matrix(const Vector& alpha_top, const Vector& alpha_bottom) {
  return alpha_top * alpha_bottom.transpose();
}

Matrix weighted_compat(const Matrix& compat, const Matrix& affinity) {
  if (compat.rows() != affinity.rows() || compat.cols() != affinity.cols()) {
    throw ShapeMismatch("weighted_compat needs equal shapes");
  }
  return compat.cwiseProduct(affinity);
}

double score(const Matrix& weighted) { return weighted.sum(); }

double bilinear_score(const Vector& alpha_top, const Matrix& compat, const Vector& alpha_bottom) {
  return alpha_top.dot(compat * alpha_bottom);
}

}  // namespace afrec
