#include "afrec/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "afrec/errors.hpp"
#include "afrec/evaluation.hpp"
#include "afrec/math.hpp"

namespace afrec {

using json = nlohmann::json;

const char* to_string(NegativeSide side) { return side == NegativeSide::BothSides ? "both" : "bottom"; }

NegativeSide negative_side_from_string(const std::string& name) {
  if (name == "both") return NegativeSide::BothSides;
  if (name == "bottom") return NegativeSide::BottomOnly;
  throw ConfigInvalid("unknown negative side '" + name + "'");
}

TrainConfig TrainConfig::desk_defaults() {
  TrainConfig config;
  config.learning_rate = 1e-3;
  config.sae_learning_rate = 1e-3;
  return config;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigInvalid("batch_size must be positive");
  if (!(learning_rate >= 0.0) || !(sae_learning_rate >= 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigInvalid("learning rates and weight decay must be non-negative");
  }
  if (epochs < 0 || sae_epochs < 0) throw ConfigInvalid("epoch counts must be non-negative");
  if (!(loss_weights.bpr >= 0.0) || !(loss_weights.category >= 0.0) || !(loss_weights.attribute >= 0.0)) {
    throw ConfigInvalid("loss weights must be non-negative");
  }
}

json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"epochs", epochs},
          {"seed", seed},
          {"variant", afrec::to_string(variant)},
          {"loss_weights", {{"bpr", loss_weights.bpr}, {"category", loss_weights.category}, {"attribute", loss_weights.attribute}}},
          {"two_phase", two_phase},
          {"sae_epochs", sae_epochs},
          {"sae_learning_rate", sae_learning_rate},
          {"negatives", afrec::to_string(negatives)},
          {"freeze_sae", freeze_sae},
          {"category_loss_mean", category_loss_mean},
          {"profile", afrec::to_string(profile)},
          {"untied_attention", untied_attention},
          {"validation_negatives", validation_negatives}};
}

double bpr_loss(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  if (pos_scores.size() != neg_scores.size()) throw ShapeMismatch("bpr_loss needs equal-length score lists");
  if (pos_scores.empty()) throw EmptyBatch("bpr_loss needs a non-empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < pos_scores.size(); ++i) total += softplus(neg_scores[i] - pos_scores[i]);
  return total;
}

LossWeights effective_weights(const TrainConfig& config) {
  LossWeights w = config.loss_weights;
  if (config.variant == AblationVariant::NoAttrLoss) w.attribute = 0.0;
  if (config.variant == AblationVariant::NoCateLoss) w.category = 0.0;
  return w;
}

namespace {

bool uses_projection(AblationVariant variant) { return variant != AblationVariant::NoCateProjection; }

bool is_sae_parameter(const std::string& name) {
  return name.rfind("backbone.", 0) == 0 || name.rfind("category_head.", 0) == 0 || name.rfind("sae.", 0) == 0;
}

// Adds the category and attribute cross-entropy terms for one item and their
// logit gradients (scaled by the weights) into grad.
void auxiliary_terms(const ItemEncoding& enc, const Item& item, const LossWeights& weights, double category_scale,
                     LossBreakdown& loss, ItemGradient* grad) {
  Vector g;
  if (weights.category > 0.0) {
    loss.category += category_scale * softmax_cross_entropy(enc.category_logits, item.category, grad ? &g : nullptr);
    if (grad) grad->category_logits += weights.category * category_scale * g;
  }
  if (weights.attribute > 0.0) {
    for (std::size_t k = 0; k < enc.attribute_logits.size(); ++k) {
      const auto& label = item.attribute_labels[k];
      if (!label) continue;
      loss.attribute += softmax_cross_entropy(enc.attribute_logits[k], *label, grad ? &g : nullptr);
      if (grad) grad->attribute_logits[k] += weights.attribute * g;
    }
  }
}

LossBreakdown batch_loss(std::span<const TrainingTriple> batch, Model& model, const Corpus& corpus,
                         const TrainConfig& config, ModelParams* grads,
                         const std::vector<ItemEncoding>* frozen_encodings) {
  if (batch.empty()) throw EmptyBatch("training batch is empty");
  const LossWeights weights = effective_weights(config);
  const bool both_sides = config.negatives == NegativeSide::BothSides;
  if (uses_projection(config.variant)) {
    for (const auto& t : batch) {
      const int top_cat = corpus.item(t.top).category;
      const int pos_cat = corpus.item(t.pos_bottom).category;
      model.ensure_projection(top_cat, pos_cat);
      model.ensure_projection(top_cat, corpus.item(t.neg_bottom).category);
      if (both_sides) model.ensure_projection(corpus.item(t.neg_top).category, pos_cat);
    }
  }

  std::vector<std::size_t> items;
  for (const auto& t : batch) {
    items.insert(items.end(), {t.top, t.pos_bottom, t.neg_bottom});
    if (both_sides) items.push_back(t.neg_top);
  }
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  std::unordered_map<std::size_t, std::size_t> slot;
  for (std::size_t i = 0; i < items.size(); ++i) slot[items[i]] = i;

  const bool backprop_items = grads && !frozen_encodings;
  std::vector<ItemEncoding> local;
  if (!frozen_encodings) {
    local.reserve(items.size());
    for (std::size_t index : items) local.push_back(encode_item(model, corpus.item(index).image, backprop_items));
  }
  auto encoding = [&](std::size_t index) -> const ItemEncoding& {
    return frozen_encodings ? (*frozen_encodings)[index] : local[slot.at(index)];
  };

  if (grads) *grads = zeros_like(model.params());
  std::vector<ItemGradient> item_grads;
  if (grads) item_grads.assign(items.size(), zero_item_gradient(model));

  LossBreakdown loss;
  auto pair_term = [&](std::size_t top, std::size_t bottom, double grad_score, const CompatibilityBundle& bundle) {
    if (!grads) return;
    score_backward(model, encoding(top), corpus.item(top).category, encoding(bottom), corpus.item(bottom).category,
                   config.variant, bundle, grad_score, *grads, item_grads[slot.at(top)], item_grads[slot.at(bottom)]);
  };
  auto bundle_of = [&](std::size_t top, std::size_t bottom) {
    return score_encoded(model, encoding(top), corpus.item(top).category, encoding(bottom),
                         corpus.item(bottom).category, config.variant);
  };
  for (const auto& t : batch) {
    const CompatibilityBundle positive = bundle_of(t.top, t.pos_bottom);
    double grad_positive = 0.0;
    auto corrupted = [&](std::size_t top, std::size_t bottom) {
      const CompatibilityBundle negative = bundle_of(top, bottom);
      const double margin = positive.score - negative.score;
      loss.bpr += softplus(-margin);
      // d softplus(-m) / dm = -sigmoid(-m)
      const double g = -sigmoid(-margin) * weights.bpr;
      grad_positive += g;
      pair_term(top, bottom, -g, negative);
    };
    corrupted(t.top, t.neg_bottom);
    if (both_sides) corrupted(t.neg_top, t.pos_bottom);
    pair_term(t.top, t.pos_bottom, grad_positive, positive);
  }

  const double category_scale = config.category_loss_mean ? 1.0 / static_cast<double>(items.size()) : 1.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auxiliary_terms(encoding(items[i]), corpus.item(items[i]), weights, category_scale, loss,
                    grads ? &item_grads[i] : nullptr);
  }
  loss.total = weights.bpr * loss.bpr + weights.category * loss.category + weights.attribute * loss.attribute;

  if (backprop_items) {
    for (std::size_t i = 0; i < items.size(); ++i) item_backward(model, encoding(items[i]), item_grads[i], *grads, true);
  }
  return loss;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

}  // namespace

LossBreakdown total_loss(std::span<const TrainingTriple> batch, Model& model, const Corpus& corpus,
                         const TrainConfig& config, ModelParams* grads) {
  return batch_loss(batch, model, corpus, config, grads, nullptr);
}

Adam::Adam(double learning_rate, double weight_decay, double beta1, double beta2, double epsilon)
    : learning_rate_(learning_rate), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Adam::step(std::span<const ParamRef> params, std::span<const ParamRef> grads,
                const std::function<bool(const std::string&)>& trainable) {
  if (params.size() != grads.size()) throw ShapeMismatch("parameter and gradient lists differ");
  ++steps_;
  const double correction1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamRef& p = params[i];
    const ParamRef& g = grads[i];
    if (p.name != g.name || p.size() != g.size()) throw ShapeMismatch("gradient for '" + p.name + "' does not align");
    if (trainable && !trainable(p.name)) continue;
    auto& [m, v] = moments_[p.name];
    if (m.size() != p.size()) {
      m = Vector::Zero(p.size());
      v = Vector::Zero(p.size());
    }
    Eigen::Map<Vector> value(p.data, p.size());
    const Vector grad = Eigen::Map<const Vector>(g.data, g.size()) + weight_decay_ * value;
    m = beta1_ * m + (1.0 - beta1_) * grad;
    v = beta2_ * v + (1.0 - beta2_) * grad.cwiseAbs2();
    value.array() -= learning_rate_ * (m.array() / correction1) / ((v.array() / correction2).sqrt() + epsilon_);
  }
}

json PretrainReport::to_json() const {
  json accuracy = json::object();
  for (const auto& [name, value] : attribute_accuracy) accuracy[name] = value;
  return {{"attribute_accuracy", accuracy},
          {"category_accuracy", category_accuracy},
          {"train_loss", train_loss},
          {"validation_loss", validation_loss},
          {"best_epoch", best_epoch}};
}

PretrainReport attribute_accuracy(const Model& model, const Corpus& corpus, const std::vector<std::size_t>& items) {
  const std::size_t k_count = model.num_attributes();
  std::vector<std::size_t> correct(k_count, 0), seen(k_count, 0);
  std::size_t category_correct = 0;
  for (std::size_t index : items) {
    const Item& item = corpus.item(index);
    const ItemEncoding enc = encode_item(model, item.image);
    Eigen::Index best = 0;
    enc.category_logits.maxCoeff(&best);
    category_correct += best == item.category;
    for (std::size_t k = 0; k < k_count; ++k) {
      if (!item.attribute_labels[k]) continue;
      enc.attribute_logits[k].maxCoeff(&best);
      ++seen[k];
      correct[k] += best == *item.attribute_labels[k];
    }
  }
  PretrainReport report;
  for (std::size_t k = 0; k < k_count; ++k) {
    report.attribute_accuracy[model.schema()[k].name] =
        seen[k] == 0 ? 0.0 : static_cast<double>(correct[k]) / static_cast<double>(seen[k]);
  }
  report.category_accuracy = items.empty() ? 0.0 : static_cast<double>(category_correct) / static_cast<double>(items.size());
  return report;
}

PretrainReport pretrain_sae(const Corpus& corpus, Model& model, const TrainConfig& config) {
  config.validate();
  const std::vector<std::size_t> train_items = corpus.split_items(corpus.splits().train);
  const std::vector<std::size_t> valid_items = corpus.split_items(corpus.splits().valid);
  if (train_items.empty()) throw EmptyCorpus("training split is empty");
  const LossWeights weights = effective_weights(config);
  std::mt19937_64 rng(config.seed ^ 0x5AE5AE5AE5AE5AEULL);
  Adam adam(config.sae_learning_rate, config.weight_decay);
  const auto trainable = [](const std::string& name) { return is_sae_parameter(name); };

  auto items_loss = [&](const std::vector<std::size_t>& items, ModelParams* grads) {
    LossBreakdown loss;
    const double scale = config.category_loss_mean && !items.empty() ? 1.0 / static_cast<double>(items.size()) : 1.0;
    for (std::size_t index : items) {
      const Item& item = corpus.item(index);
      const ItemEncoding enc = encode_item(model, item.image, grads != nullptr);
      if (!grads) {
        auxiliary_terms(enc, item, weights, scale, loss, nullptr);
        continue;
      }
      ItemGradient g = zero_item_gradient(model);
      auxiliary_terms(enc, item, weights, scale, loss, &g);
      item_backward(model, enc, g, *grads, true);
    }
    return weights.category * loss.category + weights.attribute * loss.attribute;
  };

  PretrainReport report;
  ModelParams best = model.params();
  double best_validation = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = train_items;
  for (int epoch = 1; epoch <= config.sae_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + config.batch_size)));
      ModelParams grads = zeros_like(model.params());
      epoch_loss += items_loss(batch, &grads);
      const auto param_refs = model.parameters();
      const auto grad_refs = model.parameters(grads);
      adam.step(param_refs, grad_refs, trainable);
    }
    report.train_loss.push_back(epoch_loss);
    const double validation = valid_items.empty() ? epoch_loss : items_loss(valid_items, nullptr);
    report.validation_loss.push_back(validation);
    if (validation < best_validation) {
      best_validation = validation;
      best = model.params();
      report.best_epoch = epoch;
    }
  }
  if (config.sae_epochs > 0) {
    // Only the pretrained groups are restored; nothing else has moved.
    model.params().backbone = best.backbone;
    model.params().category_head = best.category_head;
    model.params().sae = best.sae;
  }
  PretrainReport accuracy = attribute_accuracy(model, corpus, corpus.split_items(corpus.splits().test));
  report.attribute_accuracy = std::move(accuracy.attribute_accuracy);
  report.category_accuracy = accuracy.category_accuracy;
  return report;
}

json EpochMetrics::to_json() const {
  json out = {{"epoch", epoch},
              {"loss", {{"bpr", loss.bpr}, {"category", loss.category}, {"attribute", loss.attribute}, {"total", loss.total}}}};
  out["val_auc"] = validation_auc ? json(*validation_auc) : json(nullptr);
  return out;
}

Checkpoint TrainResult::checkpoint() const {
  json extra = {{"train", config.to_json()}, {"epoch", best_epoch}, {"rng_state", rng_state}};
  return make_checkpoint(model, extra);
}

ModelConfig model_config_for(const Corpus& corpus, const TrainConfig& config) {
  ModelConfig model_config = ModelConfig::for_profile(config.profile);
  model_config.backbone.image_size = corpus.image_size();
  model_config.seed = config.seed;
  model_config.untied_attention = config.untied_attention;
  return model_config;
}

TrainResult train(const Corpus& corpus, const TrainConfig& config,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  config.validate();
  TrainResult result{Model(model_config_for(corpus, config), corpus.schema(), corpus.categories()), {}, std::nullopt,
                     0, {}, config};
  Model& model = result.model;
  if (config.two_phase && config.sae_epochs > 0) result.pretrain = pretrain_sae(corpus, model, config);

  std::mt19937_64 rng(config.seed ^ 0x7A11ED5EEDULL);
  const TripleSampler sampler(corpus);
  Adam adam(config.learning_rate, config.weight_decay);
  const auto trainable = [&](const std::string& name) { return !(config.freeze_sae && is_sae_parameter(name)); };

  std::optional<std::vector<ItemEncoding>> frozen;
  if (config.freeze_sae) {
    frozen.emplace();
    frozen->reserve(corpus.items().size());
    for (const Item& item : corpus.items()) frozen->push_back(encode_item(model, item.image));
  }

  const auto& valid = corpus.splits().valid;
  std::vector<RankedCase> validation_cases;
  if (!valid.empty()) {
    const std::size_t n_neg = feasible_negatives(corpus, valid, config.validation_negatives);
    if (n_neg > 0) validation_cases = build_cases(corpus, valid, n_neg, config.seed + 17);
  }

  ModelParams best = model.params();
  double best_auc = -std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<TrainingTriple> triples = sampler.epoch(rng);
    EpochMetrics metrics;
    metrics.epoch = epoch;
    for (std::size_t start = 0; start < triples.size(); start += config.batch_size) {
      const std::size_t end = std::min(triples.size(), start + config.batch_size);
      const std::span<const TrainingTriple> batch(triples.data() + start, end - start);
      ModelParams grads;
      const LossBreakdown loss =
          batch_loss(batch, model, corpus, config, &grads, frozen ? &*frozen : nullptr);
      metrics.loss.bpr += loss.bpr;
      metrics.loss.category += loss.category;
      metrics.loss.attribute += loss.attribute;
      metrics.loss.total += loss.total;
      const auto param_refs = model.parameters();
      const auto grad_refs = model.parameters(grads);
      adam.step(param_refs, grad_refs, trainable);
    }
    if (!validation_cases.empty()) {
      score_cases(model, corpus, validation_cases, config.variant);
      metrics.validation_auc = auc(validation_cases);
    }
    const double current = metrics.validation_auc.value_or(static_cast<double>(epoch));
    if (current > best_auc) {
      best_auc = current;
      best = model.params();
      result.best_epoch = epoch;
    }
    result.log.push_back(metrics);
    if (on_epoch) on_epoch(metrics);
  }
  model.params() = std::move(best);
  result.rng_state = rng_state(rng);
  return result;
}

}  // namespace afrec
