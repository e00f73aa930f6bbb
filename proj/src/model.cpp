#include "afrec/model.hpp"

#include <cstdio>

#include "afrec/errors.hpp"

namespace afrec {

const char* to_string(Profile profile) {
  switch (profile) {
    case Profile::Desk: return "desk";
    case Profile::Paper: return "paper";
    case Profile::Micro: return "micro";
  }
  return "desk";
}

Profile profile_from_string(const std::string& name) {
  if (name == "desk") return Profile::Desk;
  if (name == "paper") return Profile::Paper;
  if (name == "micro") return Profile::Micro;
  throw ConfigInvalid("unknown profile '" + name + "'");
}

ModelConfig ModelConfig::for_profile(Profile profile) {
  ModelConfig config;
  switch (profile) {
    case Profile::Desk:
      config.backbone = {BackboneKind::Desk, 64, 64, 7};
      break;
    case Profile::Paper:
      config.backbone = {BackboneKind::ResNet18, 224, 512, 7};
      break;
    case Profile::Micro:
      config.backbone = {BackboneKind::Micro, 8, 4, 2};
      break;
  }
  return config;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z;
  for (const auto& conv : params.backbone.convs) {
    z.backbone.convs.push_back({Matrix::Zero(conv.weight.rows(), conv.weight.cols()), Vector::Zero(conv.bias.size())});
  }
  z.category_head = {Matrix::Zero(params.category_head.weight.rows(), params.category_head.weight.cols()),
                     Vector::Zero(params.category_head.bias.size())};
  for (std::size_t k = 0; k < params.sae.size(); ++k) {
    z.sae.conv_weight.push_back(Matrix::Zero(params.sae.conv_weight[k].rows(), params.sae.conv_weight[k].cols()));
    if (params.sae.has_bias()) z.sae.conv_bias.push_back(Vector::Zero(params.sae.conv_bias[k].size()));
    z.sae.head_weight.push_back(Matrix::Zero(params.sae.head_weight[k].rows(), params.sae.head_weight[k].cols()));
    z.sae.head_bias.push_back(Vector::Zero(params.sae.head_bias[k].size()));
  }
  const auto d = static_cast<int>(params.attention.w.size());
  z.attention = AttentionParams::zeros(d);
  if (params.bottom_attention) z.bottom_attention = AttentionParams::zeros(d);
  for (const auto& [key, w] : params.projections.pairs) z.projections.pairs[key] = Matrix::Zero(w.rows(), w.cols());
  z.projections.compat = Matrix::Zero(params.projections.compat.rows(), params.projections.compat.cols());
  return z;
}

std::string schema_fingerprint(const AttributeSchema& schema, const CategorySet& categories) {
  std::string canonical;
  for (const auto& a : schema.attributes()) {
    canonical += "a:" + a.name + "=";
    for (const auto& v : a.values) canonical += v + ",";
    canonical += ";";
  }
  for (const auto& c : categories.names()) canonical += "c:" + c + ";";
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char ch : canonical) {
    hash ^= ch;
    hash *= 1099511628211ULL;
  }
  char text[17];
  std::snprintf(text, sizeof text, "%016llx", static_cast<unsigned long long>(hash));
  return text;
}

Model::Model(const ModelConfig& config, AttributeSchema schema, CategorySet categories)
    : config_(config), schema_(std::move(schema)), categories_(std::move(categories)), backbone_(config.backbone) {
  if (schema_.size() == 0 || categories_.size() == 0) throw ConfigInvalid("model needs attributes and categories");
  std::mt19937_64 rng(config.seed);
  const int d = config.backbone.dim;
  params_.backbone = backbone_.init(rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> u(-bound, bound);
  params_.category_head.weight = Matrix::NullaryExpr(static_cast<Eigen::Index>(categories_.size()), d, [&]() { return u(rng); });
  params_.category_head.bias = Vector::Zero(static_cast<Eigen::Index>(categories_.size()));
  params_.sae = AttributeBlockParams::init(d, schema_.value_counts(), config.sae_bias, rng);
  params_.attention = AttentionParams::init(d, rng);
  if (config.untied_attention) params_.bottom_attention = AttentionParams::init(d, rng);
  params_.projections.compat = Matrix::NullaryExpr(d, d, [&]() { return u(rng); });
}

std::string Model::projection_name(int top_category, int bottom_category) const {
  return "proj.cc." + categories_[static_cast<std::size_t>(top_category)] + "__" +
         categories_[static_cast<std::size_t>(bottom_category)];
}

std::vector<ParamRef> Model::parameters(ModelParams& p) const {
  std::vector<ParamRef> refs;
  auto add_matrix = [&](std::string name, Matrix& m) { refs.push_back({std::move(name), m.data(), m.rows(), m.cols(), false}); };
  auto add_vector = [&](std::string name, Vector& v) { refs.push_back({std::move(name), v.data(), v.size(), 1, true}); };
  for (std::size_t i = 0; i < p.backbone.convs.size(); ++i) {
    add_matrix("backbone.conv" + std::to_string(i) + ".weight", p.backbone.convs[i].weight);
    add_vector("backbone.conv" + std::to_string(i) + ".bias", p.backbone.convs[i].bias);
  }
  add_matrix("category_head.W", p.category_head.weight);
  add_vector("category_head.b", p.category_head.bias);
  for (std::size_t k = 0; k < p.sae.size(); ++k) {
    const std::string block = "sae.block." + std::to_string(k);
    add_matrix(block + ".W", p.sae.conv_weight[k]);
    if (p.sae.has_bias()) add_vector(block + ".b", p.sae.conv_bias[k]);
  }
  for (std::size_t k = 0; k < p.sae.size(); ++k) {
    const std::string head = "sae.head." + std::to_string(k);
    add_matrix(head + ".W", p.sae.head_weight[k]);
    add_vector(head + ".b", p.sae.head_bias[k]);
  }
  add_vector("attn.w", p.attention.w);
  add_matrix("attn.W1", p.attention.W1);
  add_matrix("attn.W2", p.attention.W2);
  if (p.bottom_attention) {
    add_vector("attn.bottom.w", p.bottom_attention->w);
    add_matrix("attn.bottom.W1", p.bottom_attention->W1);
    add_matrix("attn.bottom.W2", p.bottom_attention->W2);
  }
  for (auto& [key, w] : p.projections.pairs) add_matrix(projection_name(key.first, key.second), w);
  add_matrix("proj.compat", p.projections.compat);
  return refs;
}

const Matrix& Model::ensure_projection(int top_category, int bottom_category) {
  auto& pairs = params_.projections.pairs;
  auto it = pairs.find({top_category, bottom_category});
  if (it != pairs.end()) return it->second;
  if (top_category < 0 || bottom_category < 0 || static_cast<std::size_t>(top_category) >= categories_.size() ||
      static_cast<std::size_t>(bottom_category) >= categories_.size()) {
    throw ShapeMismatch("category index out of range");
  }
  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                    static_cast<std::uint32_t>(top_category), static_cast<std::uint32_t>(bottom_category)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(-config_.projection_noise, config_.projection_noise);
  const int d = dim();
  Matrix w = Matrix::Identity(d, d) + Matrix::NullaryExpr(d, d, [&]() { return u(rng); });
  return pairs.emplace(std::make_pair(top_category, bottom_category), std::move(w)).first->second;
}

std::string Model::fingerprint() const { return schema_fingerprint(schema_, categories_); }

ItemEncoding encode_item(const Model& model, const Image& image, bool keep_trace) {
  const ModelParams& p = model.params();
  ItemEncoding enc;
  enc.map = model.backbone().forward(p.backbone, image, keep_trace ? &enc.trace : nullptr);
  enc.global = global_average_pool(enc.map);
  enc.attrs = attributes_from_pooled(enc.global, p.sae);
  enc.category_logits = category_logits(enc.global, p.category_head);
  enc.attribute_logits = attribute_value_logits(enc.attrs, p.sae);
  return enc;
}

namespace {

struct PairGeometry {
  Matrix top_attrs;
  Matrix bottom_attrs;
  const Vector* top_partner;
  const Vector* bottom_partner;
  Matrix projection;
  bool projection_trainable;
};

PairGeometry geometry(const Model& model, const ItemEncoding& top, int top_category, const ItemEncoding& bottom,
                      int bottom_category, AblationVariant variant) {
  PairGeometry g;
  if (variant == AblationVariant::AttrAvg) {
    g.top_attrs = top.attrs.colwise().mean();
    g.bottom_attrs = bottom.attrs.colwise().mean();
  } else {
    g.top_attrs = top.attrs;
    g.bottom_attrs = bottom.attrs;
  }
  const bool self = variant == AblationVariant::SelfAttention;
  g.top_partner = self ? &top.global : &bottom.global;
  g.bottom_partner = self ? &bottom.global : &top.global;
  const Matrix* w = variant == AblationVariant::NoCateProjection
                        ? nullptr
                        : model.params().projections.find(top_category, bottom_category);
  g.projection_trainable = w != nullptr;
  g.projection = w ? *w : Matrix::Identity(model.dim(), model.dim());
  return g;
}

const AttentionParams& bottom_attention(const ModelParams& p) {
  return p.bottom_attention ? *p.bottom_attention : p.attention;
}

}  // namespace

CompatibilityBundle score_encoded(const Model& model, const ItemEncoding& top, int top_category,
                                  const ItemEncoding& bottom, int bottom_category, AblationVariant variant) {
  const ModelParams& p = model.params();
  const PairGeometry g = geometry(model, top, top_category, bottom, bottom_category, variant);
  CompatibilityBundle bundle;
  bundle.compat = compat_matrix(g.top_attrs, g.bottom_attrs, g.projection, p.projections.compat);
  const Eigen::Index k = g.top_attrs.rows();
  if (variant == AblationVariant::NoAttention) {
    bundle.alpha_top = Vector::Constant(k, 1.0 / static_cast<double>(k));
    bundle.alpha_bottom = bundle.alpha_top;
    bundle.affinity = Matrix::Ones(k, k);
  } else {
    // The top attends using *top_partner and the bottom using *bottom_partner.
    const AttentionPair alphas =
        reciprocal_attention(g.top_attrs, *g.bottom_partner, g.bottom_attrs, *g.top_partner, p.attention,
                             bottom_attention(p));
    bundle.alpha_top = alphas.top;
    bundle.alpha_bottom = alphas.bottom;
    bundle.affinity = affinity_matrix(bundle.alpha_top, bundle.alpha_bottom);
  }
  bundle.weighted = weighted_compat(bundle.compat, bundle.affinity);
  bundle.score = score(bundle.weighted);
  return bundle;
}

CompatibilityBundle score_pair(const Model& model, const Item& top, const Item& bottom, AblationVariant variant) {
  const ItemEncoding t = encode_item(model, top.image);
  const ItemEncoding b = encode_item(model, bottom.image);
  return score_encoded(model, t, top.category, b, bottom.category, variant);
}

ItemGradient zero_item_gradient(const Model& model) {
  ItemGradient g;
  const auto d = model.dim();
  const auto k = static_cast<Eigen::Index>(model.num_attributes());
  g.global = Vector::Zero(d);
  g.attrs = Matrix::Zero(k, d);
  g.category_logits = Vector::Zero(static_cast<Eigen::Index>(model.categories().size()));
  for (int n : model.schema().value_counts()) g.attribute_logits.push_back(Vector::Zero(n));
  return g;
}

void score_backward(const Model& model, const ItemEncoding& top, int top_category, const ItemEncoding& bottom,
                    int bottom_category, AblationVariant variant, const CompatibilityBundle& bundle, double grad_score,
                    ModelParams& grads, ItemGradient& top_grad, ItemGradient& bottom_grad) {
  const ModelParams& p = model.params();
  const PairGeometry g = geometry(model, top, top_category, bottom, bottom_category, variant);
  const Matrix& wc = p.projections.compat;
  const Matrix grad_m = grad_score * bundle.affinity;
  const Matrix top_proj = g.top_attrs * g.projection;
  const Matrix bottom_proj = g.bottom_attrs * g.projection;
  const Matrix grad_top_proj = grad_m * bottom_proj * wc.transpose();
  const Matrix grad_bottom_proj = grad_m.transpose() * top_proj * wc;
  grads.projections.compat.noalias() += top_proj.transpose() * grad_m * bottom_proj;
  Matrix grad_top_attrs = grad_top_proj * g.projection.transpose();
  Matrix grad_bottom_attrs = grad_bottom_proj * g.projection.transpose();
  if (g.projection_trainable) {
    Matrix& gw = grads.projections.pairs[{top_category, bottom_category}];
    if (gw.size() == 0) gw = Matrix::Zero(model.dim(), model.dim());
    gw.noalias() += g.top_attrs.transpose() * grad_top_proj + g.bottom_attrs.transpose() * grad_bottom_proj;
  }

  if (variant != AblationVariant::NoAttention) {
    const Vector grad_alpha_top = grad_score * (bundle.compat * bundle.alpha_bottom);
    const Vector grad_alpha_bottom = grad_score * (bundle.compat.transpose() * bundle.alpha_top);
    const bool self = variant == AblationVariant::SelfAttention;
    Vector& top_partner_grad = self ? top_grad.global : bottom_grad.global;
    Vector& bottom_partner_grad = self ? bottom_grad.global : top_grad.global;
    attention_backward(g.top_attrs, *g.top_partner,
                       p.attention, bundle.alpha_top, grad_alpha_top, grads.attention, grad_top_attrs,
                       top_partner_grad);
    AttentionParams& bottom_grads = grads.bottom_attention ? *grads.bottom_attention : grads.attention;
    attention_backward(g.bottom_attrs, *g.bottom_partner, bottom_attention(p), bundle.alpha_bottom,
                       grad_alpha_bottom, bottom_grads, grad_bottom_attrs, bottom_partner_grad);
  }

  if (variant == AblationVariant::AttrAvg) {
    const double k = static_cast<double>(top.attrs.rows());
    top_grad.attrs.rowwise() += grad_top_attrs.row(0) / k;
    bottom_grad.attrs.rowwise() += grad_bottom_attrs.row(0) / k;
  } else {
    top_grad.attrs += grad_top_attrs;
    bottom_grad.attrs += grad_bottom_attrs;
  }
}

void item_backward(const Model& model, const ItemEncoding& enc, const ItemGradient& grad, ModelParams& grads,
                   bool through_backbone) {
  const ModelParams& p = model.params();
  Vector grad_global = grad.global;
  grads.category_head.weight.noalias() += grad.category_logits * enc.global.transpose();
  grads.category_head.bias += grad.category_logits;
  grad_global.noalias() += p.category_head.weight.transpose() * grad.category_logits;
  for (std::size_t k = 0; k < p.sae.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    const Vector a = enc.attrs.row(row).transpose();
    const Vector& gz = grad.attribute_logits[k];
    grads.sae.head_weight[k].noalias() += gz * a.transpose();
    grads.sae.head_bias[k] += gz;
    const Vector grad_a = grad.attrs.row(row).transpose() + p.sae.head_weight[k].transpose() * gz;
    grads.sae.conv_weight[k].noalias() += grad_a * enc.global.transpose();
    if (p.sae.has_bias()) grads.sae.conv_bias[k] += grad_a;
    grad_global.noalias() += p.sae.conv_weight[k].transpose() * grad_a;
  }
  if (!through_backbone) return;
  FeatureMap grad_map(enc.map.channels, enc.map.height, enc.map.width);
  grad_map.data.colwise() = grad_global / static_cast<double>(enc.map.positions());
  model.backbone().backward(p.backbone, enc.trace, grad_map, grads.backbone);
}

}  // namespace afrec
