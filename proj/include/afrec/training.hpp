#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "afrec/checkpoint.hpp"
#include "afrec/data_model.hpp"
#include "afrec/model.hpp"

namespace afrec {

enum class NegativeSide { BottomOnly, BothSides };

const char* to_string(NegativeSide side);
NegativeSide negative_side_from_string(const std::string& name);

struct LossWeights {
  double bpr = 1.0;
  double category = 1.0;
  double attribute = 1.0;
};

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  double weight_decay = 1e-5;
  int epochs = 30;
  std::uint64_t seed = 0;
  AblationVariant variant = AblationVariant::Full;
  LossWeights loss_weights;
  bool two_phase = true;
  int sae_epochs = 20;
  double sae_learning_rate = 1e-4;
  NegativeSide negatives = NegativeSide::BothSides;
  bool freeze_sae = false;
  bool category_loss_mean = false;
  Profile profile = Profile::Desk;
  bool untied_attention = false;
  std::size_t validation_negatives = 100;

  // Full-scale hyperparameters with learning rates raised for training from scratch.
  static TrainConfig desk_defaults();

  void validate() const;
  nlohmann::json to_json() const;
};

// -sum ln sigmoid(pos - neg), evaluated as sum softplus(neg - pos).
double bpr_loss(std::span<const double> pos_scores, std::span<const double> neg_scores);

struct LossBreakdown {
  double bpr = 0.0;
  double category = 0.0;
  double attribute = 0.0;
  double total = 0.0;
};

// Loss weights after applying the variant (no-attr-loss and no-cate-loss zero
// the matching term).
LossWeights effective_weights(const TrainConfig& config);

// Joint objective on one batch. The category and attribute terms cover the
// distinct items in the batch. When grads is non-null it receives the
// gradient of the total with respect to every parameter; it is reset to the
// model's shapes first. Missing category-pair projections are created.
LossBreakdown total_loss(std::span<const TrainingTriple> batch, Model& model, const Corpus& corpus,
                         const TrainConfig& config, ModelParams* grads = nullptr);

// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam(double learning_rate, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  // Updates every parameter whose name passes the filter.
  void step(std::span<const ParamRef> params, std::span<const ParamRef> grads,
            const std::function<bool(const std::string&)>& trainable = {});

  long steps() const { return steps_; }

 private:
  double learning_rate_;
  double weight_decay_;
  double beta1_;
  double beta2_;
  double epsilon_;
  long steps_ = 0;
  std::map<std::string, std::pair<Vector, Vector>> moments_;
};

struct PretrainReport {
  std::map<std::string, double> attribute_accuracy;  // test split, schema names
  double category_accuracy = 0.0;
  std::vector<double> train_loss;       // per epoch
  std::vector<double> validation_loss;  // per epoch
  int best_epoch = 0;

  nlohmann::json to_json() const;
};

// Per-attribute and category accuracy over the given items.
PretrainReport attribute_accuracy(const Model& model, const Corpus& corpus, const std::vector<std::size_t>& items);

// Minimises the category and attribute losses over training-split items,
// keeping the parameters with the lowest validation loss. Reports accuracy
// on test-split items.
PretrainReport pretrain_sae(const Corpus& corpus, Model& model, const TrainConfig& config);

struct EpochMetrics {
  int epoch = 0;
  LossBreakdown loss;
  std::optional<double> validation_auc;

  nlohmann::json to_json() const;
};

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> log;
  std::optional<PretrainReport> pretrain;
  int best_epoch = 0;
  std::string rng_state;
  TrainConfig config;

  Checkpoint checkpoint() const;
};

ModelConfig model_config_for(const Corpus& corpus, const TrainConfig& config);

TrainResult train(const Corpus& corpus, const TrainConfig& config,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace afrec
