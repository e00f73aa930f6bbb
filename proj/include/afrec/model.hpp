#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "afrec/attention.hpp"
#include "afrec/attribute_extractor.hpp"
#include "afrec/backbone.hpp"
#include "afrec/compatibility.hpp"
#include "afrec/data_model.hpp"

namespace afrec {

enum class Profile { Desk, Paper, Micro };

const char* to_string(Profile profile);
Profile profile_from_string(const std::string& name);

struct ModelConfig {
  BackboneConfig backbone;
  bool sae_bias = true;
  bool untied_attention = false;
  std::uint64_t seed = 0;
  // Scale of the uniform noise added to identity when a category pair
  // projection is created.
  double projection_noise = 0.01;

  static ModelConfig for_profile(Profile profile);
};

struct ModelParams {
  BackboneParams backbone;
  CategoryHead category_head;
  AttributeBlockParams sae;
  AttentionParams attention;
  std::optional<AttentionParams> bottom_attention;  // untied setting only
  CategoryPairProjections projections;
};

// Zero-valued parameters with the same shapes and projection keys.
ModelParams zeros_like(const ModelParams& params);

// Flat view of one named parameter array. Vectors have cols == 1 and
// is_vector set.
struct ParamRef {
  std::string name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;
  bool is_vector;

  Eigen::Index size() const { return rows * cols; }
};

class Model {
 public:
  Model(const ModelConfig& config, AttributeSchema schema, CategorySet categories);

  const ModelConfig& config() const { return config_; }
  const AttributeSchema& schema() const { return schema_; }
  const CategorySet& categories() const { return categories_; }
  const Backbone& backbone() const { return backbone_; }
  int dim() const { return config_.backbone.dim; }
  std::size_t num_attributes() const { return schema_.size(); }

  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // Canonical ordering used by checkpoints, optimisers and gradient checks.
  std::vector<ParamRef> parameters(ModelParams& params) const;
  std::vector<ParamRef> parameters() { return parameters(params_); }

  // Creates identity-plus-noise for an unseen category pair. The noise
  // depends only on the seed and the pair, not on creation order.
  const Matrix& ensure_projection(int top_category, int bottom_category);

  // Hash of the attribute schema and category set.
  std::string fingerprint() const;

  std::string projection_name(int top_category, int bottom_category) const;

 private:
  ModelConfig config_;
  AttributeSchema schema_;
  CategorySet categories_;
  Backbone backbone_;
  ModelParams params_;
};

std::string schema_fingerprint(const AttributeSchema& schema, const CategorySet& categories);

struct ItemEncoding {
  FeatureMap map;
  Vector global;
  Matrix attrs;
  Vector category_logits;
  std::vector<Vector> attribute_logits;
  BackboneTrace trace;  // filled only when requested
};

ItemEncoding encode_item(const Model& model, const Image& image, bool keep_trace = false);

// Pair scoring on precomputed encodings, under the given variant.
CompatibilityBundle score_encoded(const Model& model, const ItemEncoding& top, int top_category,
                                  const ItemEncoding& bottom, int bottom_category, AblationVariant variant);

// Full pipeline: backbone, attribute extractor, attention, compatibility.
CompatibilityBundle score_pair(const Model& model, const Item& top, const Item& bottom,
                               AblationVariant variant = AblationVariant::Full);

// Upstream gradients for one item's intermediate outputs.
struct ItemGradient {
  Vector global;
  Matrix attrs;
  Vector category_logits;
  std::vector<Vector> attribute_logits;
};

ItemGradient zero_item_gradient(const Model& model);

// Backpropagates grad_score (dL/dscore) through one scored pair.
void score_backward(const Model& model, const ItemEncoding& top, int top_category, const ItemEncoding& bottom,
                    int bottom_category, AblationVariant variant, const CompatibilityBundle& bundle, double grad_score,
                    ModelParams& grads, ItemGradient& top_grad, ItemGradient& bottom_grad);

// Backpropagates an item's accumulated gradient into the heads, the attribute
// blocks and (optionally) the backbone. The backbone pass needs a trace.
void item_backward(const Model& model, const ItemEncoding& encoding, const ItemGradient& grad, ModelParams& grads,
                   bool through_backbone = true);

}  // namespace afrec
